use std::ops::Range;

use crate::error::{Error, Result};
use crate::model::{DeviceType, KernelKind, KindTimes, SystemSpec, Workload};

use super::ModelSet;

/// Time of one kernel on one row partition, plus its all-gather share.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelCost {
    pub kind: KernelKind,
    pub compute: f64,
    pub gather: f64,
}

/// Execution side of a stage: kernel time plus intra-stage gather/scatter.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageExec {
    pub t_exec: f64,
    pub t_gather: f64,
    pub kernel_seconds: KindTimes,
}

impl StageExec {
    /// Folds kernel costs in chain order. Every stage time in the crate goes
    /// through this one accumulation so that equal stages give equal bits.
    pub fn accumulate(costs: impl IntoIterator<Item = KernelCost>) -> Self {
        let mut out = StageExec::default();
        for c in costs {
            out.push(c);
        }
        out
    }

    /// Appends one kernel at the end of the stage.
    pub fn push(&mut self, c: KernelCost) {
        self.t_exec = self.t_exec + c.compute + c.gather;
        self.t_gather += c.gather;
        self.kernel_seconds.add(c.kind, c.compute);
    }
}

/// All-gather of a row-partitioned operand across `parts` devices:
/// `(n-1)/n * bytes / (n * bandwidth * scale)`.
pub fn allgather_time(operand_bytes: u64, parts: u32, link_bandwidth: f64, scale: f64) -> f64 {
    if parts <= 1 {
        return 0.0;
    }
    let n = parts as f64;
    (n - 1.0) / n * operand_bytes as f64 / (n * link_bandwidth * scale)
}

pub fn kernel_cost(
    wl: &Workload,
    index: usize,
    dtype: &DeviceType,
    parts: u32,
    sys: &SystemSpec,
    models: &ModelSet,
) -> Result<KernelCost> {
    let kernel = &wl.kernels[index];
    if !dtype.is_eligible(kernel.kind) {
        return Err(Error::Ineligible {
            kernel: kernel.label.clone(),
            device: dtype.name.clone(),
        });
    }
    let model = models.lookup(&dtype.perf_model_id, kernel.kind).ok_or_else(|| {
        Error::Config(format!(
            "no {} model registered under `{}` for device type `{}`",
            kernel.kind, dtype.perf_model_id, dtype.name
        ))
    })?;
    let raw = model.predict_partitioned(kernel, parts);
    let compute = if raw >= models.floor_s {
        raw
    } else {
        log::warn!(
            "{} on {}x{}: predicted {raw:e} s, clamped to {:e} s",
            kernel.label,
            parts,
            dtype.name,
            models.floor_s
        );
        models.floor_s
    };
    let gather = if parts > 1 && wl.replication_input.get(index).copied().unwrap_or(false) {
        allgather_time(
            kernel.replicated_operand_bytes(),
            parts,
            dtype.link_bandwidth,
            sys.interconnect.scale(),
        )
    } else {
        0.0
    };
    Ok(KernelCost {
        kind: kernel.kind,
        compute,
        gather,
    })
}

/// Stage execution time of `wl[range]` on `parts` devices of `dtype`, with
/// rows (and nonzeros, and query rows for attention) split evenly.
pub fn f_perf(
    wl: &Workload,
    range: Range<usize>,
    dtype: &DeviceType,
    parts: u32,
    sys: &SystemSpec,
    models: &ModelSet,
) -> Result<StageExec> {
    if parts == 0 {
        return Err(Error::Config("a stage needs at least one device".into()));
    }
    let costs = range
        .map(|i| kernel_cost(wl, i, dtype, parts, sys, models))
        .collect::<Result<Vec<_>>>()?;
    Ok(StageExec::accumulate(costs))
}

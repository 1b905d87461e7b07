use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{KernelKind, ParetoPoint, SystemSpec, Workload};
use crate::perf::ModelSet;

use super::{dype_schedule_with, CostModel, Objective, ScheduleResult, StageSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "baseline", rename_all = "snake_case")]
pub enum BaselineMode {
    Dype,
    /// Evaluate the given stage list as is.
    Static { stages: Vec<StageSpec> },
    /// Kernel index to device-type name; unpinned kernels may go anywhere.
    FleetRec { pin: BTreeMap<usize, String> },
    GpuOnly,
    FpgaOnly,
}

fn find_type<'s>(sys: &'s SystemSpec, name: &str) -> Option<&'s str> {
    sys.device_types
        .iter()
        .find(|d| d.name.eq_ignore_ascii_case(name))
        .map(|d| d.name.as_str())
}

/// Sparse and windowed kernels on FPGA, dense GEMM on GPU.
pub fn default_fleetrec_pins(wl: &Workload, sys: &SystemSpec) -> BTreeMap<usize, String> {
    wl.kernels
        .iter()
        .enumerate()
        .filter_map(|(i, k)| {
            let want = match k.kind {
                KernelKind::SpMM | KernelKind::WindowAttention => "FPGA",
                KernelKind::Gemm => "GPU",
            };
            find_type(sys, want).map(|t| (i, t.to_string()))
        })
        .collect()
}

/// Hand-written style static schedule: each run of kernels with the same
/// preferred type becomes one stage and each type's devices are split evenly
/// over its runs. Falls back to one stage on every GPU when there are more
/// runs than devices.
pub fn default_static_stages(wl: &Workload, sys: &SystemSpec) -> Result<Vec<StageSpec>> {
    let pins = default_fleetrec_pins(wl, sys);
    let gpu = find_type(sys, "GPU");
    let mut runs: Vec<(std::ops::Range<usize>, String)> = Vec::new();
    for i in 0..wl.len() {
        let Some(want) = pins.get(&i).map(String::as_str).or(gpu) else {
            return Err(Error::Config("static baseline needs a GPU or FPGA device type".into()));
        };
        match runs.last_mut() {
            Some((r, t)) if t == want => r.end = i + 1,
            _ => runs.push((i..i + 1, want.to_string())),
        }
    }
    let fits = sys.device_types.iter().all(|d| {
        let n = runs.iter().filter(|(_, t)| *t == d.name).count() as u32;
        n <= d.count_available
    });
    let eligible = runs.iter().all(|(r, t)| {
        let d = sys.device(t).expect("pinned type exists");
        wl.kernels[r.clone()].iter().all(|k| d.is_eligible(k.kind))
    });
    if !fits || !eligible {
        let Some(g) = gpu.and_then(|g| sys.device(g)).filter(|d| d.count_available > 0) else {
            return Err(Error::Config("static baseline fallback needs GPUs".into()));
        };
        return Ok(vec![StageSpec {
            kernels: 0..wl.len(),
            device_type: g.name.clone(),
            device_count: g.count_available,
        }]);
    }
    let mut seen: BTreeMap<&str, u32> = BTreeMap::new();
    let mut out = Vec::with_capacity(runs.len());
    for (r, t) in &runs {
        let d = sys.device(t).expect("pinned type exists");
        let total = runs.iter().filter(|(_, u)| u == t).count() as u32;
        let nth = seen.entry(d.name.as_str()).or_insert(0);
        let count = d.count_available / total + u32::from(*nth < d.count_available % total);
        *nth += 1;
        out.push(StageSpec {
            kernels: r.clone(),
            device_type: t.clone(),
            device_count: count,
        });
    }
    Ok(out)
}

fn single(cost: &CostModel<'_>, stages: &[StageSpec], objective: Objective) -> Result<ScheduleResult> {
    let schedule = cost.assemble(stages)?;
    Ok(ScheduleResult {
        objective,
        selected: schedule.clone(),
        perf_opt: schedule.clone(),
        energy_opt: schedule.clone(),
        pareto: vec![ParetoPoint::from_schedule(schedule)],
    })
}

pub fn baseline_schedule(
    wl: &Workload,
    sys: &SystemSpec,
    models: &ModelSet,
    base: &BaselineMode,
    objective: Objective,
) -> Result<ScheduleResult> {
    objective.validate()?;
    match base {
        BaselineMode::Dype => dype_schedule_with(&CostModel::new(wl, sys, models)?, objective),
        BaselineMode::Static { stages } => single(&CostModel::new(wl, sys, models)?, stages, objective),
        BaselineMode::FleetRec { pin } => {
            for (&k, name) in pin {
                let kernel = wl
                    .kernels
                    .get(k)
                    .ok_or_else(|| Error::validation("pin", format!("kernel index {k} out of range")))?;
                let d = sys
                    .device(name)
                    .ok_or_else(|| Error::validation("pin", format!("unknown device type `{name}`")))?;
                if !d.is_eligible(kernel.kind) {
                    return Err(Error::Ineligible {
                        kernel: kernel.label.clone(),
                        device: name.clone(),
                    });
                }
            }
            let cost = CostModel::with_filter(wl, sys, models, |k, t| {
                pin.get(&k).is_none_or(|name| sys.device_types[t].name == *name)
            })?;
            dype_schedule_with(&cost, objective)
        }
        BaselineMode::GpuOnly | BaselineMode::FpgaOnly => {
            let want = if *base == BaselineMode::GpuOnly { "GPU" } else { "FPGA" };
            let name = find_type(sys, want).ok_or_else(|| Error::Config(format!("system has no {want} type")))?;
            let restricted = sys.restricted_to(name);
            dype_schedule_with(&CostModel::new(wl, &restricted, models)?, objective)
        }
    }
}

/// "One plus one" reference: summed throughput and mean efficiency of the
/// two homogeneous systems.
pub fn theoretical_additive(gpu_only: &ParetoPoint, fpga_only: &ParetoPoint) -> (f64, f64) {
    let eff = |p: &ParetoPoint| {
        if p.throughput > 0.0 {
            p.efficiency()
        } else {
            0.0
        }
    };
    (
        gpu_only.throughput + fpga_only.throughput,
        (eff(gpu_only) + eff(fpga_only)) / 2.0,
    )
}

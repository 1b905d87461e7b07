use crate::comm::transfer_time;
use crate::energy::{exec_energy, f_eng, static_power, transfer_energy};
use crate::error::{Error, Issue, Result};
use crate::model::{mnemonic, DeviceType, PipelineSchedule, Stage, SystemSpec, Workload};
use crate::perf::{kernel_cost, KernelCost, ModelSet, StageExec};

use super::{devices_map, StageSpec};

/// `count` devices of the type at `type_idx` in the system catalog.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Alloc {
    pub type_idx: usize,
    pub count: u32,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ExecEntry {
    pub exec: StageExec,
    /// Dynamic execution energy of the stage.
    pub energy: f64,
}

/// Per-allocation kernel costs and stage-time cache for one workload on one
/// system. Every scorer in the crate reads stage times from here.
#[derive(Debug)]
pub struct CostModel<'a> {
    pub wl: &'a Workload,
    pub sys: &'a SystemSpec,
    allocs: Vec<Alloc>,
    alloc_ids: Vec<Vec<usize>>,
    kernel_costs: Vec<Vec<Option<KernelCost>>>,
    /// `exec[a][s][len - 1]` for stages starting at `s`; cut at the first ineligible kernel.
    exec: Vec<Vec<Vec<ExecEntry>>>,
    link_bw: Vec<f64>,
    host_bw: f64,
}

impl<'a> CostModel<'a> {
    pub fn new(wl: &'a Workload, sys: &'a SystemSpec, models: &ModelSet) -> Result<Self> {
        Self::with_filter(wl, sys, models, |_, _| true)
    }

    /// Like [`CostModel::new`], but kernel `k` may only run on type `t` when `allow(k, t)`.
    pub fn with_filter(
        wl: &'a Workload,
        sys: &'a SystemSpec,
        models: &ModelSet,
        allow: impl Fn(usize, usize) -> bool,
    ) -> Result<Self> {
        models.validate()?;
        Self::build(wl, sys, |alloc, k| {
            let dtype = &sys.device_types[alloc.type_idx];
            if !allow(k, alloc.type_idx) || !dtype.is_eligible(wl.kernels[k].kind) {
                return Ok(None);
            }
            kernel_cost(wl, k, dtype, alloc.count, sys, models).map(Some)
        })
    }

    /// Cost model over caller-supplied kernel costs; `None` marks an ineligible pair.
    pub fn from_kernel_costs(
        wl: &'a Workload,
        sys: &'a SystemSpec,
        costs: impl Fn(Alloc, usize) -> Option<KernelCost>,
    ) -> Result<Self> {
        Self::build(wl, sys, |a, k| Ok(costs(a, k)))
    }

    fn build(
        wl: &'a Workload,
        sys: &'a SystemSpec,
        cost: impl Fn(Alloc, usize) -> Result<Option<KernelCost>>,
    ) -> Result<Self> {
        wl.validate()?;
        sys.validate()?;
        let scale = sys.interconnect.scale();
        let mut allocs = Vec::new();
        let mut alloc_ids = Vec::new();
        for (t, d) in sys.device_types.iter().enumerate() {
            let mut ids = Vec::new();
            for count in 1..=d.count_available {
                ids.push(allocs.len());
                allocs.push(Alloc { type_idx: t, count });
            }
            alloc_ids.push(ids);
        }
        let n = wl.len();
        let mut kernel_costs = Vec::with_capacity(allocs.len());
        for &a in &allocs {
            kernel_costs.push((0..n).map(|k| cost(a, k)).collect::<Result<Vec<_>>>()?);
        }
        let exec = allocs
            .iter()
            .zip(&kernel_costs)
            .map(|(a, costs)| {
                let dtype = &sys.device_types[a.type_idx];
                (0..n)
                    .map(|s| {
                        let mut acc = StageExec::default();
                        let mut row = Vec::new();
                        for c in costs[s..].iter().map_while(|c| *c) {
                            acc.push(c);
                            row.push(ExecEntry {
                                exec: acc,
                                energy: exec_energy(dtype, a.count, &acc.kernel_seconds, acc.t_gather),
                            });
                        }
                        row
                    })
                    .collect()
            })
            .collect();
        let link_bw = allocs
            .iter()
            .map(|a| a.count as f64 * sys.device_types[a.type_idx].link_bandwidth * scale)
            .collect();
        Ok(CostModel {
            wl,
            sys,
            allocs,
            alloc_ids,
            kernel_costs,
            exec,
            link_bw,
            host_bw: sys.host_bandwidth() * scale,
        })
    }

    pub fn allocs(&self) -> &[Alloc] {
        &self.allocs
    }

    pub fn alloc_id(&self, type_idx: usize, count: u32) -> Option<usize> {
        self.alloc_ids.get(type_idx)?.get(count.checked_sub(1)? as usize).copied()
    }

    pub fn n_types(&self) -> usize {
        self.sys.device_types.len()
    }

    pub fn dtype(&self, alloc: usize) -> &DeviceType {
        &self.sys.device_types[self.allocs[alloc].type_idx]
    }

    /// Per-kernel cost on an allocation; `None` when ineligible.
    pub fn kernel_cost(&self, alloc: usize, kernel: usize) -> Option<KernelCost> {
        self.kernel_costs[alloc][kernel]
    }

    pub(crate) fn exec(&self, alloc: usize, start: usize, end: usize) -> Option<&ExecEntry> {
        self.exec[alloc][start].get(end.checked_sub(start + 1)?)
    }

    /// Inter-stage transfer occupancy from allocation `src` to `dst`.
    pub fn xfer(&self, src: usize, dst: usize, bytes: u64) -> f64 {
        transfer_time(bytes, self.link_bw[src], self.link_bw[dst], false, &self.sys.interconnect)
    }

    /// Host ingest or egress occupancy of an allocation.
    pub fn host_xfer(&self, alloc: usize, bytes: u64) -> f64 {
        transfer_time(bytes, self.host_bw, self.link_bw[alloc], true, &self.sys.interconnect)
    }

    pub fn xfer_energy(&self, alloc: usize, seconds: f64) -> f64 {
        transfer_energy(self.dtype(alloc), self.allocs[alloc].count, seconds)
    }

    pub fn static_watts(&self, used: &[u32]) -> f64 {
        static_power(self.sys, |t| used[t])
    }

    /// Kernels that no allocation can run.
    pub fn blocking_kernels(&self) -> Vec<String> {
        (0..self.wl.len())
            .filter(|&k| self.kernel_costs.iter().all(|c| c[k].is_none()))
            .map(|k| self.wl.kernels[k].label.clone())
            .collect()
    }

    /// Resolves stage specs to `(start, end, alloc)` after structural checks.
    pub fn resolve(&self, stages: &[StageSpec]) -> Result<Vec<(usize, usize, usize)>> {
        let mut issues = Vec::new();
        let mut cursor = 0;
        let mut used = vec![0u32; self.n_types()];
        let mut out = Vec::with_capacity(stages.len());
        for (i, s) in stages.iter().enumerate() {
            let subject = format!("stage {i}");
            if s.kernels.start != cursor || s.kernels.is_empty() || s.kernels.end > self.wl.len() {
                issues.push(Issue::new(&subject, "kernel ranges must be non-empty, contiguous and in bounds"));
                break;
            }
            cursor = s.kernels.end;
            let Some(t) = self.sys.type_index(&s.device_type) else {
                issues.push(Issue::new(&subject, format!("unknown device type `{}`", s.device_type)));
                continue;
            };
            used[t] += s.device_count;
            let Some(a) = self.alloc_id(t, s.device_count) else {
                issues.push(Issue::new(
                    &subject,
                    format!("{} x {} exceeds availability", s.device_count, s.device_type),
                ));
                continue;
            };
            if self.exec(a, s.kernels.start, s.kernels.end).is_none() {
                let bad = s
                    .kernels
                    .clone()
                    .find(|&k| self.kernel_costs[a][k].is_none())
                    .unwrap_or(s.kernels.start);
                return Err(Error::Ineligible {
                    kernel: self.wl.kernels[bad].label.clone(),
                    device: s.device_type.clone(),
                });
            }
            out.push((s.kernels.start, s.kernels.end, a));
        }
        if issues.is_empty() && cursor != self.wl.len() {
            issues.push(Issue::new("stages", format!("cover {cursor} of {} kernels", self.wl.len())));
        }
        for (t, &n) in used.iter().enumerate() {
            let d = &self.sys.device_types[t];
            if n > d.count_available {
                issues.push(Issue::new(&d.name, format!("{n} devices used, {} available", d.count_available)));
            }
        }
        if issues.is_empty() {
            Ok(out)
        } else {
            Err(Error::Validation(issues))
        }
    }

    fn stage_times(&self, resolved: &[(usize, usize, usize)]) -> Vec<(f64, f64)> {
        let last = resolved.len() - 1;
        resolved
            .iter()
            .enumerate()
            .map(|(i, &(start, end, a))| {
                let t_in = if i == 0 {
                    self.host_xfer(a, self.wl.input_bytes)
                } else {
                    self.xfer(resolved[i - 1].2, a, self.wl.edge_bytes[start - 1])
                };
                let t_out = if i == last {
                    self.host_xfer(a, self.wl.output_bytes)
                } else {
                    self.xfer(a, resolved[i + 1].2, self.wl.edge_bytes[end - 1])
                };
                (t_in, t_out)
            })
            .collect()
    }

    /// Full timing and energy breakdown of a stage list.
    pub fn assemble(&self, stages: &[StageSpec]) -> Result<PipelineSchedule> {
        let resolved = self.resolve(stages)?;
        let comm = self.stage_times(&resolved);
        let built: Vec<Stage> = resolved
            .iter()
            .zip(&comm)
            .map(|(&(start, end, a), &(t_in, t_out))| {
                let e = self.exec(a, start, end).expect("resolved stage is eligible").exec;
                Stage {
                    kernel_range: start..end,
                    device_type: self.dtype(a).name.clone(),
                    device_count: self.allocs[a].count,
                    t_exec: e.t_exec,
                    t_gather: e.t_gather,
                    kernel_seconds: e.kernel_seconds,
                    t_comm_in: t_in,
                    t_comm_out: t_out,
                    t_stage: (e.t_exec + t_in) + t_out,
                }
            })
            .collect();
        let period = built.iter().map(|s| s.t_stage).fold(0.0, f64::max);
        let latency = built.iter().map(|s| s.t_stage).sum();
        let mut schedule = PipelineSchedule {
            mnemonic: mnemonic(&built),
            stages: built,
            period,
            latency,
            devices_used: devices_map(self.sys, stages),
            energy_per_period: 0.0,
        };
        schedule.energy_per_period = f_eng(&schedule, period, self.sys)?;
        Ok(schedule)
    }

    /// `(period, energy)` of a stage list without building the schedule.
    pub fn evaluate(&self, stages: &[StageSpec]) -> Result<(f64, f64)> {
        let resolved = self.resolve(stages)?;
        Ok(self.evaluate_resolved(&resolved))
    }

    pub(crate) fn evaluate_resolved(&self, resolved: &[(usize, usize, usize)]) -> (f64, f64) {
        let comm = self.stage_times(resolved);
        let mut period: f64 = 0.0;
        let mut dynamic = 0.0;
        let mut used = vec![0u32; self.n_types()];
        for (&(start, end, a), &(t_in, t_out)) in resolved.iter().zip(&comm) {
            let e = self.exec(a, start, end).expect("resolved stage is eligible");
            period = period.max((e.exec.t_exec + t_in) + t_out);
            dynamic += e.energy;
            dynamic += self.xfer_energy(a, t_in);
            dynamic += self.xfer_energy(a, t_out);
            used[self.allocs[a].type_idx] += self.allocs[a].count;
        }
        (period, crate::energy::energy_from_parts(period, self.static_watts(&used), dynamic))
    }

    pub(crate) fn spec(&self, start: usize, end: usize, alloc: usize) -> StageSpec {
        StageSpec {
            kernels: start..end,
            device_type: self.dtype(alloc).name.clone(),
            device_count: self.allocs[alloc].count,
        }
    }
}

//! Exhaustive reference scheduler for small instances.

use rayon::prelude::*;

use crate::comm::{f_comm, Endpoint, Side, TransferQuery};
use crate::energy::{energy_from_parts, exec_energy, static_power, transfer_energy};
use crate::error::{Error, Result};
use crate::model::{SystemSpec, Workload};
use crate::perf::{ModelSet, StageExec};

use super::{Candidate, CostModel, Objective, ParetoFront, ScheduleResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleLimits {
    pub max_kernels: usize,
    pub max_devices: u32,
}

impl Default for OracleLimits {
    fn default() -> Self {
        OracleLimits {
            max_kernels: 10,
            max_devices: 8,
        }
    }
}

struct Oracle<'c, 'a> {
    cost: &'c CostModel<'a>,
    /// `exec[a][s][e]`, rebuilt from per-kernel costs.
    exec: Vec<Vec<Vec<Option<StageExec>>>>,
}

type Stack = Vec<(usize, usize, usize)>;

impl<'c, 'a> Oracle<'c, 'a> {
    fn new(cost: &'c CostModel<'a>) -> Self {
        let n = cost.wl.len();
        let exec = (0..cost.allocs().len())
            .map(|a| {
                (0..n)
                    .map(|s| {
                        (0..=n)
                            .map(|e| {
                                if e <= s {
                                    return None;
                                }
                                let costs = (s..e).map(|k| cost.kernel_cost(a, k)).collect::<Option<Vec<_>>>()?;
                                Some(StageExec::accumulate(costs))
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Oracle { cost, exec }
    }

    fn endpoint(&self, a: usize) -> Endpoint<'a> {
        Endpoint::devices(&self.cost.sys.device_types[self.cost.allocs()[a].type_idx], self.cost.allocs()[a].count)
    }

    fn comm(&self, src: Endpoint<'_>, dst: Endpoint<'_>, bytes: u64) -> f64 {
        f_comm(
            &TransferQuery {
                bytes,
                src,
                dst,
                side: Side::Destination,
            },
            self.cost.sys,
        )
        .expect("validated system has positive bandwidths")
    }

    /// Scores a complete stage list from first principles.
    fn score(&self, stages: &[(usize, usize, usize)]) -> (f64, f64) {
        let wl = self.cost.wl;
        let sys = self.cost.sys;
        let last = stages.len() - 1;
        let mut period: f64 = 0.0;
        let mut dynamic = 0.0;
        let mut used = vec![0u32; sys.device_types.len()];
        for (i, &(s, e, a)) in stages.iter().enumerate() {
            let alloc = self.cost.allocs()[a];
            let dtype = &sys.device_types[alloc.type_idx];
            let exec = self.exec[a][s][e].expect("enumerated stage is eligible");
            let t_in = if i == 0 {
                self.comm(Endpoint::Host, self.endpoint(a), wl.input_bytes)
            } else {
                self.comm(self.endpoint(stages[i - 1].2), self.endpoint(a), wl.edge_bytes[s - 1])
            };
            let t_out = if i == last {
                self.comm(self.endpoint(a), Endpoint::Host, wl.output_bytes)
            } else {
                self.comm(self.endpoint(a), self.endpoint(stages[i + 1].2), wl.edge_bytes[e - 1])
            };
            period = period.max((exec.t_exec + t_in) + t_out);
            dynamic += exec_energy(dtype, alloc.count, &exec.kernel_seconds, exec.t_gather);
            dynamic += transfer_energy(dtype, alloc.count, t_in);
            dynamic += transfer_energy(dtype, alloc.count, t_out);
            used[alloc.type_idx] += alloc.count;
        }
        (period, energy_from_parts(period, static_power(sys, |t| used[t]), dynamic))
    }

    fn explore(&self, s: usize, remaining: &mut [u32], stack: &mut Stack, front: &mut ParetoFront, count: &mut u64) {
        let n = self.cost.wl.len();
        for e in (s + 1)..=n {
            for (a, alloc) in self.cost.allocs().iter().enumerate() {
                if alloc.count > remaining[alloc.type_idx] || self.exec[a][s][e].is_none() {
                    continue;
                }
                stack.push((s, e, a));
                if e == n {
                    *count += 1;
                    let (period, energy) = self.score(stack);
                    let specs = stack.iter().map(|&(s, e, a)| self.cost.spec(s, e, a)).collect();
                    front.insert(Candidate::new(period, energy, specs));
                } else {
                    remaining[alloc.type_idx] -= alloc.count;
                    self.explore(e, remaining, stack, front, count);
                    remaining[alloc.type_idx] += alloc.count;
                }
                stack.pop();
            }
        }
    }

    fn run(&self) -> (ParetoFront, u64) {
        let n = self.cost.wl.len();
        let avail: Vec<u32> = self.cost.sys.device_types.iter().map(|d| d.count_available).collect();
        let firsts: Vec<(usize, usize)> = (1..=n)
            .flat_map(|e| (0..self.cost.allocs().len()).map(move |a| (e, a)))
            .filter(|&(e, a)| self.exec[a][0][e].is_some())
            .collect();
        let parts: Vec<(ParetoFront, u64)> = firsts
            .par_iter()
            .map(|&(e, a)| {
                let mut front = ParetoFront::new();
                let mut count = 0;
                let mut stack = vec![(0, e, a)];
                if e == n {
                    count += 1;
                    let (period, energy) = self.score(&stack);
                    front.insert(Candidate::new(period, energy, vec![self.cost.spec(0, e, a)]));
                } else {
                    let mut remaining = avail.clone();
                    remaining[self.cost.allocs()[a].type_idx] -= self.cost.allocs()[a].count;
                    self.explore(e, &mut remaining, &mut stack, &mut front, &mut count);
                }
                (front, count)
            })
            .collect();
        let mut front = ParetoFront::new();
        let mut total = 0;
        for (f, c) in parts {
            front.merge(f);
            total += c;
        }
        (front, total)
    }
}

fn check_limits(wl: &Workload, sys: &SystemSpec, limits: OracleLimits) -> Result<()> {
    if wl.len() > limits.max_kernels || sys.total_devices() > limits.max_devices {
        return Err(Error::OracleGuard(format!(
            "{} kernels and {} devices; limits are {} and {}",
            wl.len(),
            sys.total_devices(),
            limits.max_kernels,
            limits.max_devices
        )));
    }
    Ok(())
}

/// Pareto front over every feasible schedule, plus how many were scored.
pub fn oracle_front(cost: &CostModel<'_>, limits: OracleLimits) -> Result<(ParetoFront, u64)> {
    check_limits(cost.wl, cost.sys, limits)?;
    Ok(Oracle::new(cost).run())
}

pub fn oracle_schedule_with(cost: &CostModel<'_>, objective: Objective, limits: OracleLimits) -> Result<ScheduleResult> {
    objective.validate()?;
    let (front, _) = oracle_front(cost, limits)?;
    ScheduleResult::from_front(&front, objective, cost)
}

pub fn oracle_schedule(
    wl: &Workload,
    sys: &SystemSpec,
    models: &ModelSet,
    objective: Objective,
    limits: OracleLimits,
) -> Result<ScheduleResult> {
    check_limits(wl, sys, limits)?;
    let cost = CostModel::new(wl, sys, models)?;
    oracle_schedule_with(&cost, objective, limits)
}

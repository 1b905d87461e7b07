//! The period and energy dynamic programs.
//!
//! A cell `(i, used)` holds partial schedules covering kernels `[0, i)` with
//! `used[t]` devices of each type, the last stage still open (its outgoing
//! transfer unknown). Keeping a single best entry per cell is not exact: a
//! prefix with a worse period can win once the next stage's transfer time is
//! added. Each cell therefore keeps a small frontier of labels per final
//! allocation, pruned only by componentwise dominance, which is exact because
//! every later step is monotone in each label component.

use std::cmp::Ordering;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::Result;
use crate::model::{SystemSpec, Workload};
use crate::perf::ModelSet;

use super::{Candidate, CostModel, Objective, ParetoFront, ScheduleResult, StageSpec};

#[derive(Debug)]
struct Node {
    start: u32,
    end: u32,
    alloc: u32,
    prev: Option<Arc<Node>>,
}

#[derive(Debug, Clone)]
struct Label {
    /// Longest closed stage so far.
    closed: f64,
    /// Execution plus incoming transfer of the open last stage.
    base: f64,
    /// Dynamic energy so far, excluding the last stage's outgoing transfer.
    dynamic: f64,
    nstages: u32,
    /// Stage type ranks as base-`n_types` digits.
    types: u128,
    node: Arc<Node>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Table {
    Perf,
    Energy,
}

/// Work counters of one DP run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DpStats {
    pub cells: usize,
    pub labels_perf: usize,
    pub labels_energy: usize,
    pub final_candidates: usize,
}

type Cell = Vec<Vec<Label>>;

struct Dp<'c, 'a> {
    cost: &'c CostModel<'a>,
    strides: Vec<usize>,
    ncells: usize,
    rank: Vec<u128>,
    radix: u128,
    codes_exact: bool,
}

impl<'c, 'a> Dp<'c, 'a> {
    fn new(cost: &'c CostModel<'a>) -> Self {
        let types = &cost.sys.device_types;
        let mut strides = Vec::with_capacity(types.len());
        let mut ncells = 1usize;
        for d in types {
            strides.push(ncells);
            ncells *= d.count_available as usize + 1;
        }
        let mut order: Vec<usize> = (0..types.len()).collect();
        order.sort_by_key(|&t| (types[t].initial(), t));
        let mut rank = vec![0u128; types.len()];
        for (r, &t) in order.iter().enumerate() {
            rank[t] = r as u128;
        }
        let radix = types.len().max(1) as u128;
        let max_stages = cost.sys.total_devices();
        let codes_exact = (max_stages as f64) * (radix as f64).log2() < 127.0;
        Dp {
            cost,
            strides,
            ncells,
            rank,
            radix,
            codes_exact,
        }
    }

    fn used(&self, cell: usize) -> Vec<u32> {
        self.cost
            .sys
            .device_types
            .iter()
            .zip(&self.strides)
            .map(|(d, &s)| ((cell / s) % (d.count_available as usize + 1)) as u32)
            .collect()
    }

    fn chain(node: &Arc<Node>) -> Vec<&Node> {
        let mut out = Vec::new();
        let mut cur = Some(node.as_ref());
        while let Some(n) = cur {
            out.push(n);
            cur = n.prev.as_deref();
        }
        out.reverse();
        out
    }

    fn coarse_cmp(&self, a: &Label, b: &Label) -> Ordering {
        a.nstages.cmp(&b.nstages).then_with(|| {
            if self.codes_exact {
                a.types.cmp(&b.types)
            } else {
                let ta = Self::chain(&a.node).iter().map(|n| self.type_char(n.alloc)).collect::<Vec<_>>();
                let tb = Self::chain(&b.node).iter().map(|n| self.type_char(n.alloc)).collect::<Vec<_>>();
                ta.cmp(&tb)
            }
        })
    }

    fn type_char(&self, alloc: u32) -> char {
        self.cost.dtype(alloc as usize).initial()
    }

    fn full_cmp(&self, a: &Label, b: &Label) -> Ordering {
        self.coarse_cmp(a, b).then_with(|| {
            let (ca, cb) = (Self::chain(&a.node), Self::chain(&b.node));
            let ends = |c: &[&Node]| c.iter().map(|n| n.end).collect::<Vec<_>>();
            let counts = |c: &[&Node]| {
                c.iter()
                    .map(|n| self.cost.allocs()[n.alloc as usize].count)
                    .collect::<Vec<_>>()
            };
            ends(&ca).cmp(&ends(&cb)).then_with(|| counts(&ca).cmp(&counts(&cb)))
        })
    }

    /// `a` makes `b` redundant: no completion of `b` beats the same completion of `a`.
    fn dominates(&self, a: &Label, b: &Label, table: Table) -> bool {
        let eng = table == Table::Energy;
        if a.closed > b.closed || a.base > b.base || (eng && a.dynamic > b.dynamic) {
            return false;
        }
        let equal = a.closed == b.closed && a.base == b.base && (!eng || a.dynamic == b.dynamic);
        if equal {
            self.full_cmp(a, b) != Ordering::Greater
        } else {
            self.coarse_cmp(a, b) != Ordering::Greater
        }
    }

    fn insert(&self, front: &mut Vec<Label>, c: Label, table: Table) {
        if front.iter().any(|f| self.dominates(f, &c, table)) {
            return;
        }
        front.retain(|f| !self.dominates(&c, f, table));
        front.push(c);
    }

    fn compute_cell(&self, rows: &[Vec<Cell>], i: usize, cell: usize, table: Table) -> Cell {
        let cost = self.cost;
        let wl = cost.wl;
        let nallocs = cost.allocs().len();
        let used = self.used(cell);
        let mut out: Cell = vec![Vec::new(); nallocs];
        for s in 0..i {
            for (a, alloc) in cost.allocs().iter().enumerate() {
                if used[alloc.type_idx] < alloc.count {
                    continue;
                }
                let Some(entry) = cost.exec(a, s, i) else {
                    continue;
                };
                let src = cell - alloc.count as usize * self.strides[alloc.type_idx];
                let digit = self.rank[alloc.type_idx];
                if s == 0 {
                    if src != 0 {
                        continue;
                    }
                    let t_in = cost.host_xfer(a, wl.input_bytes);
                    let label = Label {
                        closed: 0.0,
                        base: entry.exec.t_exec + t_in,
                        dynamic: 0.0 + entry.energy + cost.xfer_energy(a, t_in),
                        nstages: 1,
                        types: digit,
                        node: Arc::new(Node {
                            start: 0,
                            end: i as u32,
                            alloc: a as u32,
                            prev: None,
                        }),
                    };
                    self.insert(&mut out[a], label, table);
                    continue;
                }
                let bytes = wl.edge_bytes[s - 1];
                for (p, group) in rows[s][src].iter().enumerate() {
                    if group.is_empty() {
                        continue;
                    }
                    let t_x = cost.xfer(p, a, bytes);
                    let base = entry.exec.t_exec + t_x;
                    let e_src = cost.xfer_energy(p, t_x);
                    let e_dst = cost.xfer_energy(a, t_x);
                    for l in group {
                        let label = Label {
                            closed: l.closed.max(l.base + t_x),
                            base,
                            dynamic: l.dynamic + e_src + entry.energy + e_dst,
                            nstages: l.nstages + 1,
                            types: l.types.wrapping_mul(self.radix).wrapping_add(digit),
                            node: Arc::new(Node {
                                start: s as u32,
                                end: i as u32,
                                alloc: a as u32,
                                prev: Some(l.node.clone()),
                            }),
                        };
                        self.insert(&mut out[a], label, table);
                    }
                }
            }
        }
        out
    }

    fn run(&self, table: Table) -> Vec<Vec<Cell>> {
        let n = self.cost.wl.len();
        let mut rows: Vec<Vec<Cell>> = vec![Vec::new()];
        for i in 1..=n {
            let row: Vec<Cell> = (0..self.ncells)
                .into_par_iter()
                .map(|c| self.compute_cell(&rows, i, c, table))
                .collect();
            rows.push(row);
        }
        rows
    }

    fn specs(&self, node: &Arc<Node>) -> Vec<StageSpec> {
        Self::chain(node)
            .iter()
            .map(|n| self.cost.spec(n.start as usize, n.end as usize, n.alloc as usize))
            .collect()
    }

    /// Closes every complete label with the host egress and scores it.
    fn finals(&self, last_row: &[Cell]) -> Vec<Candidate> {
        let cost = self.cost;
        let mut out = Vec::new();
        for (cell, groups) in last_row.iter().enumerate() {
            let static_watts = cost.static_watts(&self.used(cell));
            for (a, group) in groups.iter().enumerate() {
                for l in group {
                    let t_out = cost.host_xfer(a, cost.wl.output_bytes);
                    let period = l.closed.max(l.base + t_out);
                    let dynamic = l.dynamic + cost.xfer_energy(a, t_out);
                    let energy = crate::energy::energy_from_parts(period, static_watts, dynamic);
                    let stages = self.specs(&l.node);
                    debug_assert_eq!(
                        cost.evaluate(&stages).ok(),
                        Some((period, energy)),
                        "dp and evaluator disagree"
                    );
                    out.push(Candidate::new(period, energy, stages));
                }
            }
        }
        out
    }
}

fn count_labels(rows: &[Vec<Cell>]) -> usize {
    rows.iter().flatten().flatten().map(Vec::len).sum()
}

/// Runs both tables and returns the Pareto front over their final slices.
pub fn dype_front(cost: &CostModel<'_>) -> Result<(ParetoFront, DpStats)> {
    let dp = Dp::new(cost);
    let (perf_rows, energy_rows) = rayon::join(|| dp.run(Table::Perf), || dp.run(Table::Energy));
    let n = cost.wl.len();
    let perf_finals = dp.finals(&perf_rows[n]);
    let energy_finals = dp.finals(&energy_rows[n]);
    debug_assert_eq!(
        perf_finals.iter().map(|c| c.period).min_by(f64::total_cmp),
        energy_finals.iter().map(|c| c.period).min_by(f64::total_cmp),
        "period table and energy table disagree on the best period"
    );
    let stats = DpStats {
        cells: dp.ncells * (n + 1),
        labels_perf: count_labels(&perf_rows),
        labels_energy: count_labels(&energy_rows),
        final_candidates: perf_finals.len() + energy_finals.len(),
    };
    let mut front = ParetoFront::new();
    for c in perf_finals.into_iter().chain(energy_finals) {
        front.insert(c);
    }
    Ok((front, stats))
}

pub fn dype_schedule_with(cost: &CostModel<'_>, objective: Objective) -> Result<ScheduleResult> {
    objective.validate()?;
    let (front, _) = dype_front(cost)?;
    ScheduleResult::from_front(&front, objective, cost)
}

/// Schedules `wl` on `sys` for `objective`, returning the chosen schedule and the Pareto set.
pub fn dype_schedule(
    wl: &Workload,
    sys: &SystemSpec,
    models: &ModelSet,
    objective: Objective,
) -> Result<ScheduleResult> {
    let cost = CostModel::new(wl, sys, models)?;
    dype_schedule_with(&cost, objective)
}

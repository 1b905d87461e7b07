//! Stage partitioning and device allocation.
//!
//! [`dype_schedule`] runs the two dynamic programs (period and energy),
//! [`oracle_schedule`] enumerates every schedule of a small instance, and
//! [`baseline_schedule`] provides the comparison points. All of them score
//! schedules through [`CostModel`], so equal schedules get equal bits.

mod baseline;
mod cost;
mod dp;
mod oracle;
mod pareto;
mod report;
mod robustness;

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ParetoPoint, PipelineSchedule, SystemSpec};

pub use baseline::{
    baseline_schedule, default_fleetrec_pins, default_static_stages, theoretical_additive, BaselineMode,
};
pub use cost::{Alloc, CostModel};
pub use dp::{dype_front, dype_schedule, dype_schedule_with, DpStats};
pub use oracle::{oracle_front, oracle_schedule, oracle_schedule_with, OracleLimits};
pub use pareto::ParetoFront;
pub use report::{write_pareto_csv, ScheduleReport, StageReport, PARETO_CSV_HEADER};
pub use robustness::{robustness_study, ModeRobustness, RobustnessCase, RobustnessReport};

pub const DEFAULT_BALANCED_FRACTION: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Objective {
    PerfOptimized,
    EnergyOptimized,
    Balanced { min_throughput_fraction: f64 },
}

impl Objective {
    pub fn balanced() -> Self {
        Objective::Balanced {
            min_throughput_fraction: DEFAULT_BALANCED_FRACTION,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Objective::Balanced { min_throughput_fraction: f } = self {
            if !(*f > 0.0 && *f <= 1.0) {
                return Err(Error::validation("fraction", "must be in (0, 1]"));
            }
        }
        Ok(())
    }
}

/// A stage by kernel range and device allocation, without timings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSpec {
    pub kernels: Range<usize>,
    pub device_type: String,
    pub device_count: u32,
}

/// Deterministic tie-break on equal objective values: fewer stages, then the
/// stage-type letter string, then stage end indices, then per-stage counts.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct TieKey {
    pub nstages: usize,
    pub types: Vec<char>,
    pub ends: Vec<usize>,
    pub counts: Vec<u32>,
}

impl TieKey {
    pub fn of(stages: &[StageSpec]) -> Self {
        TieKey {
            nstages: stages.len(),
            types: stages
                .iter()
                .map(|s| s.device_type.chars().next().map(|c| c.to_ascii_uppercase()).unwrap_or('?'))
                .collect(),
            ends: stages.iter().map(|s| s.kernels.end).collect(),
            counts: stages.iter().map(|s| s.device_count).collect(),
        }
    }
}

/// A scored complete schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub period: f64,
    pub energy: f64,
    pub devices: u32,
    pub key: TieKey,
    pub stages: Vec<StageSpec>,
}

impl Candidate {
    pub fn new(period: f64, energy: f64, stages: Vec<StageSpec>) -> Self {
        Candidate {
            period,
            energy,
            devices: stages.iter().map(|s| s.device_count).sum(),
            key: TieKey::of(&stages),
            stages,
        }
    }

    fn tail_cmp(&self, other: &Self) -> Ordering {
        self.devices.cmp(&other.devices).then_with(|| self.key.cmp(&other.key))
    }

    /// Shorter period first; equal periods by lower energy, then the tie key.
    pub fn perf_cmp(&self, other: &Self) -> Ordering {
        self.period
            .total_cmp(&other.period)
            .then(self.energy.total_cmp(&other.energy))
            .then_with(|| self.tail_cmp(other))
    }

    /// Lower energy first; equal energies by shorter period, then the tie key.
    pub fn energy_cmp(&self, other: &Self) -> Ordering {
        self.energy
            .total_cmp(&other.energy)
            .then(self.period.total_cmp(&other.period))
            .then_with(|| self.tail_cmp(other))
    }
}

/// Outcome of a scheduler run: the schedule chosen for the objective plus
/// the trade-off curve it was chosen from.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleResult {
    pub objective: Objective,
    pub selected: PipelineSchedule,
    pub perf_opt: PipelineSchedule,
    pub energy_opt: PipelineSchedule,
    /// Non-dominated points, throughput descending.
    pub pareto: Vec<ParetoPoint>,
}

impl ScheduleResult {
    pub(crate) fn from_front(
        front: &ParetoFront,
        objective: Objective,
        cost: &CostModel<'_>,
    ) -> Result<Self> {
        objective.validate()?;
        let points = front.points();
        let (Some(first), Some(last)) = (points.first(), points.last()) else {
            return Err(Error::Infeasible {
                kernels: cost.blocking_kernels(),
            });
        };
        let chosen = match objective {
            Objective::PerfOptimized => first,
            Objective::EnergyOptimized => last,
            Objective::Balanced {
                min_throughput_fraction,
            } => front.balanced(min_throughput_fraction).unwrap_or(first),
        };
        let pareto = points
            .iter()
            .map(|c| cost.assemble(&c.stages).map(ParetoPoint::from_schedule))
            .collect::<Result<Vec<_>>>()?;
        Ok(ScheduleResult {
            objective,
            selected: cost.assemble(&chosen.stages)?,
            perf_opt: cost.assemble(&first.stages)?,
            energy_opt: cost.assemble(&last.stages)?,
            pareto,
        })
    }
}

/// Throughput ratio used by the balanced filter.
pub(crate) fn meets_fraction(period: f64, best_period: f64, fraction: f64) -> bool {
    1.0 / period >= fraction * (1.0 / best_period)
}

pub(crate) fn devices_map(sys: &SystemSpec, stages: &[StageSpec]) -> BTreeMap<String, u32> {
    let mut used = BTreeMap::new();
    for s in stages {
        if sys.device(&s.device_type).is_some() {
            *used.entry(s.device_type.clone()).or_insert(0) += s.device_count;
        }
    }
    used
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comm::{f_comm, Endpoint, Side, TransferQuery};
    use crate::model::{DeviceType, Generation, InterconnectSpec, Kernel, KernelKind, Workload};
    use crate::perf::{KernelCost, ModelSet};

    fn dev(name: &str, count: u32, kinds: &[KernelKind]) -> DeviceType {
        DeviceType {
            name: name.into(),
            count_available: count,
            link_bandwidth: 10e9,
            p_static: 20.0,
            p_dynamic: kinds.iter().map(|&k| (k, 100.0)).collect(),
            p_transfer_dynamic: 0.0,
            eligible: kinds.iter().copied().collect(),
            perf_model_id: name.to_lowercase(),
        }
    }

    fn two_kernel() -> (Workload, SystemSpec) {
        let wa = KernelKind::WindowAttention;
        let wl = Workload {
            kernels: vec![Kernel::window_attention("k1", 8, 8), Kernel::window_attention("k2", 8, 8)],
            edge_bytes: vec![0],
            input_bytes: 0,
            output_bytes: 0,
            replication_input: vec![false, false],
        };
        let sys = SystemSpec {
            device_types: vec![dev("FPGA", 1, &[wa]), dev("GPU", 1, &[wa])],
            interconnect: InterconnectSpec::ideal(Generation::Pcie4),
        };
        (wl, sys)
    }

    fn synthetic_times(a: Alloc, k: usize) -> Option<KernelCost> {
        let t = [[10.0, 20.0], [4.0, 2.0]][a.type_idx][k];
        Some(KernelCost {
            kind: KernelKind::WindowAttention,
            compute: t,
            gather: 0.0,
        })
    }

    #[test]
    fn two_kernel_example() {
        let (wl, sys) = two_kernel();
        let cost = CostModel::from_kernel_costs(&wl, &sys, synthetic_times).unwrap();
        let dp = dype_schedule_with(&cost, Objective::PerfOptimized).unwrap();
        assert_eq!(dp.selected.mnemonic, "1G");
        assert_eq!(dp.selected.period, 6.0);
        let oracle = oracle_schedule_with(&cost, Objective::PerfOptimized, OracleLimits::default()).unwrap();
        assert_eq!(oracle.selected, dp.selected);
        let (_, count) = oracle_front(&cost, OracleLimits::default()).unwrap();
        // Two single-stage placements plus two type-alternating splits.
        assert_eq!(count, 4);

        let split = [
            StageSpec {
                kernels: 0..1,
                device_type: "FPGA".into(),
                device_count: 1,
            },
            StageSpec {
                kernels: 1..2,
                device_type: "GPU".into(),
                device_count: 1,
            },
        ];
        assert_eq!(cost.evaluate(&split).unwrap().0, 10.0);
    }

    #[test]
    fn oracle_counts_single_kernel_allocations() {
        let wl = Workload {
            kernels: vec![Kernel::window_attention("a", 1024, 512)],
            edge_bytes: vec![],
            input_bytes: 4 * 1024 * 64,
            output_bytes: 4 * 1024 * 64,
            replication_input: vec![false],
        };
        let sys = SystemSpec::demo();
        let cost = CostModel::new(&wl, sys, ModelSet::demo()).unwrap();
        let (front, count) = oracle_front(&cost, OracleLimits::default()).unwrap();
        assert_eq!(count, sys.total_devices() as u64);
        let (dp, _) = dype_front(&cost).unwrap();
        assert_eq!(front.points()[0].period, dp.points()[0].period);
    }

    #[test]
    fn oracle_guard() {
        let wl = Workload {
            kernels: (0..11).map(|i| Kernel::window_attention(format!("a{i}"), 64, 8)).collect(),
            edge_bytes: vec![0; 10],
            input_bytes: 0,
            output_bytes: 0,
            replication_input: vec![false; 11],
        };
        let cost = CostModel::new(&wl, SystemSpec::demo(), ModelSet::demo()).unwrap();
        assert!(matches!(oracle_front(&cost, OracleLimits::default()), Err(Error::OracleGuard(_))));
    }

    #[test]
    fn infeasible_names_blocking_kernels() {
        let wl = Workload {
            kernels: vec![Kernel::gemm("dense", 16, 16, 16)],
            edge_bytes: vec![],
            input_bytes: 4 * 16 * 16,
            output_bytes: 4 * 16 * 16,
            replication_input: vec![false],
        };
        let sys = SystemSpec::demo().restricted_to("FPGA");
        match dype_schedule(&wl, &sys, ModelSet::demo(), Objective::PerfOptimized) {
            Err(Error::Infeasible { kernels }) => assert_eq!(kernels, vec!["dense".to_string()]),
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn fleetrec_all_gpu_matches_gpu_only() {
        let wl = crate::workload::WorkloadConfig::from_preset("gcn:OA").unwrap().build().unwrap();
        let sys = SystemSpec::demo();
        let pin = (0..wl.len()).map(|k| (k, "GPU".to_string())).collect();
        let a = baseline_schedule(&wl, sys, ModelSet::demo(), &BaselineMode::FleetRec { pin }, Objective::PerfOptimized)
            .unwrap();
        let b = baseline_schedule(&wl, sys, ModelSet::demo(), &BaselineMode::GpuOnly, Objective::PerfOptimized).unwrap();
        assert_eq!(a.selected.period, b.selected.period);
        assert_eq!(a.selected.energy_per_period, b.selected.energy_per_period);
        assert!(a.selected.stages.iter().all(|s| s.device_type == "GPU"));
    }

    #[test]
    fn theoretical_additive_sums() {
        let (wl, sys) = two_kernel();
        let cost = CostModel::from_kernel_costs(&wl, &sys, synthetic_times).unwrap();
        let single = |ty: &str| {
            cost.assemble(&[StageSpec {
                kernels: 0..2,
                device_type: ty.into(),
                device_count: 1,
            }])
            .map(ParetoPoint::from_schedule)
            .unwrap()
        };
        let mut gpu = single("GPU");
        let mut fpga = single("FPGA");
        gpu.throughput = 2.0;
        gpu.energy_per_inference = 1.0 / 0.4;
        fpga.throughput = 1.0;
        fpga.energy_per_inference = 1.0 / 0.6;
        let (thp, eff) = theoretical_additive(&gpu, &fpga);
        assert!((thp - 3.0).abs() < 1e-12 && (eff - 0.5).abs() < 1e-12);
        fpga.throughput = 0.0;
        assert_eq!(theoretical_additive(&gpu, &fpga).0, 2.0);
    }

    #[test]
    fn cost_transfers_match_f_comm() {
        let wl = crate::workload::WorkloadConfig::from_preset("gcn:OA").unwrap().build().unwrap();
        let sys = SystemSpec::demo();
        let cost = CostModel::new(&wl, sys, ModelSet::demo()).unwrap();
        let bytes = wl.edge_bytes[0];
        for (i, a) in cost.allocs().iter().enumerate() {
            for (j, b) in cost.allocs().iter().enumerate() {
                let q = TransferQuery {
                    bytes,
                    src: Endpoint::devices(&sys.device_types[a.type_idx], a.count),
                    dst: Endpoint::devices(&sys.device_types[b.type_idx], b.count),
                    side: Side::Source,
                };
                assert_eq!(cost.xfer(i, j, bytes), f_comm(&q, sys).unwrap());
            }
            let q = TransferQuery {
                bytes,
                src: Endpoint::Host,
                dst: Endpoint::devices(&sys.device_types[a.type_idx], a.count),
                side: Side::Destination,
            };
            assert_eq!(cost.host_xfer(i, bytes), f_comm(&q, sys).unwrap());
        }
    }

    #[test]
    fn balanced_full_fraction_is_perf() {
        let wl = crate::workload::WorkloadConfig::from_preset("gcn:OP").unwrap().build().unwrap();
        let perf = dype_schedule(&wl, SystemSpec::demo(), ModelSet::demo(), Objective::PerfOptimized).unwrap();
        let bal = dype_schedule(
            &wl,
            SystemSpec::demo(),
            ModelSet::demo(),
            Objective::Balanced {
                min_throughput_fraction: 1.0,
            },
        )
        .unwrap();
        assert_eq!(perf.selected, bal.selected);
        assert!(Objective::Balanced {
            min_throughput_fraction: 0.0
        }
        .validate()
        .is_err());
    }
}

//! Scheduling under misestimated kernel models.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{SystemSpec, Workload};
use crate::perf::ModelSet;

use super::{dype_front, oracle_front, CostModel, OracleLimits};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessCase {
    pub name: String,
    pub workload: Workload,
}

/// Outcome counts for one objective.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModeRobustness {
    pub runs: usize,
    pub sub_optimal: usize,
    /// Mean of `(chosen - optimal) / optimal` over the sub-optimal runs.
    pub mean_relative_loss: f64,
    /// Mean of `1 - optimal / chosen` over the sub-optimal runs: lost
    /// throughput for the period objective, lost inferences per joule for energy.
    pub mean_rate_loss: f64,
    pub max_relative_loss: f64,
}

impl ModeRobustness {
    fn record(&mut self, chosen: f64, optimal: f64) {
        self.runs += 1;
        if chosen > optimal {
            let rel = (chosen - optimal) / optimal;
            self.sub_optimal += 1;
            self.mean_relative_loss += rel;
            self.mean_rate_loss += 1.0 - optimal / chosen;
            self.max_relative_loss = self.max_relative_loss.max(rel);
        }
    }

    fn finish(&mut self) {
        if self.sub_optimal > 0 {
            self.mean_relative_loss /= self.sub_optimal as f64;
            self.mean_rate_loss /= self.sub_optimal as f64;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub epsilon: f64,
    pub trials: usize,
    pub seed: u64,
    pub cases: Vec<String>,
    pub perf: ModeRobustness,
    pub energy: ModeRobustness,
}

/// For each case and trial, scales every model coefficient by an independent
/// draw from `U(1 - epsilon, 1 + epsilon)`, schedules with the perturbed
/// models, and scores the chosen schedules under the true models against the
/// exhaustive optimum.
pub fn robustness_study(
    cases: &[RobustnessCase],
    sys: &SystemSpec,
    models: &ModelSet,
    epsilon: f64,
    trials: usize,
    seed: u64,
    limits: OracleLimits,
) -> Result<RobustnessReport> {
    if !(0.0..1.0).contains(&epsilon) {
        return Err(Error::validation("epsilon", "must be in [0, 1)"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perf = ModeRobustness::default();
    let mut energy = ModeRobustness::default();
    for case in cases {
        let truth = CostModel::new(&case.workload, sys, models)?;
        let (front, _) = oracle_front(&truth, limits)?;
        let (Some(best_p), Some(best_e)) = (front.points().first(), front.points().last()) else {
            return Err(Error::Infeasible {
                kernels: truth.blocking_kernels(),
            });
        };
        let (opt_period, opt_energy) = (best_p.period, best_e.energy);
        for _ in 0..trials {
            let perturbed = models.map_coefficients(|c| c * rng.gen_range(1.0 - epsilon..=1.0 + epsilon));
            let cost = CostModel::new(&case.workload, sys, &perturbed)?;
            let (guess, _) = dype_front(&cost)?;
            let points = guess.points();
            let (Some(p), Some(e)) = (points.first(), points.last()) else {
                return Err(Error::Infeasible {
                    kernels: cost.blocking_kernels(),
                });
            };
            perf.record(truth.evaluate(&p.stages)?.0, opt_period);
            energy.record(truth.evaluate(&e.stages)?.1, opt_energy);
        }
    }
    perf.finish();
    energy.finish();
    Ok(RobustnessReport {
        epsilon,
        trials,
        seed,
        cases: cases.iter().map(|c| c.name.clone()).collect(),
        perf,
        energy,
    })
}

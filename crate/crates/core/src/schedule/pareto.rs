use std::cmp::Ordering;

use super::{meets_fraction, Candidate};

/// Non-dominated `(period, energy)` set. Points with identical values keep
/// only the one with fewer devices, then the smaller tie key, so the final
/// set does not depend on insertion order.
#[derive(Debug, Clone, Default)]
pub struct ParetoFront {
    /// Period ascending, energy strictly descending.
    points: Vec<Candidate>,
}

fn covers(a: &Candidate, b: &Candidate) -> bool {
    if a.period > b.period || a.energy > b.energy {
        return false;
    }
    a.period < b.period || a.energy < b.energy || a.tail_cmp(b) != Ordering::Greater
}

impl ParetoFront {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `c` unless an existing point covers it; returns whether it was kept.
    pub fn insert(&mut self, c: Candidate) -> bool {
        if self.points.iter().any(|p| covers(p, &c)) {
            return false;
        }
        self.points.retain(|p| !covers(&c, p));
        let pos = self.points.partition_point(|p| p.perf_cmp(&c) == Ordering::Less);
        self.points.insert(pos, c);
        true
    }

    pub fn merge(&mut self, other: ParetoFront) {
        for c in other.points {
            self.insert(c);
        }
    }

    pub fn points(&self) -> &[Candidate] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Lowest-energy point whose throughput is at least `fraction` of the best.
    pub fn balanced(&self, fraction: f64) -> Option<&Candidate> {
        let best = self.points.first()?.period;
        self.points.iter().rev().find(|c| meets_fraction(c.period, best, fraction))
    }
}

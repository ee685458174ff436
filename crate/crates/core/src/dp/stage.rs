//! One period of the simplified dynamic program: choose how many consumers
//! of every level to serve given their sorted virtual valuations.

use serde::Serialize;

use super::vectors::{feasible_service_set, vstar_unchecked, ServiceVector, SupplyVector, VarietyVector};

/// Virtual valuations of one period's reports grouped by flexibility level,
/// each group sorted non-increasingly.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SortedReportSummary {
    levels: Vec<Vec<f64>>,
}

impl SortedReportSummary {
    /// Groups are sorted here; input order is irrelevant.
    pub fn new(mut levels: Vec<Vec<f64>>) -> Self {
        for group in &mut levels {
            group.sort_by(|a, b| b.total_cmp(a));
        }
        Self { levels }
    }

    /// Builds a summary from `(level, virtual value)` pairs.
    pub fn from_pairs(k: usize, pairs: impl IntoIterator<Item = (usize, f64)>) -> Self {
        let mut levels = vec![Vec::new(); k];
        for (level, w) in pairs {
            levels[level - 1].push(w);
        }
        Self::new(levels)
    }

    pub fn empty(k: usize) -> Self {
        Self { levels: vec![Vec::new(); k] }
    }

    pub fn varieties(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, j: usize) -> &[f64] {
        &self.levels[j - 1]
    }

    pub fn counts(&self) -> Vec<u32> {
        self.levels.iter().map(|l| l.len() as u32).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.iter().all(Vec::is_empty)
    }

    /// Sum of the top `u^j` values of every level, accumulated level by
    /// level and largest first. The oracle sums in the same order.
    pub fn served_value(&self, u: &[u32]) -> f64 {
        let mut acc = 0.0;
        for (group, &n) in self.levels.iter().zip(u) {
            for &w in &group[..n as usize] {
                acc += w;
            }
        }
        acc
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageDecision {
    pub value: f64,
    pub service: ServiceVector,
    pub routing: VarietyVector,
}

/// Maximizes served virtual value plus continuation over the feasible
/// service vectors. `continuation(m)` is the expected value carried into the
/// next period when `m` goods remain unallocated. The lexicographically
/// smallest maximizer wins ties, so consumers adding exactly zero are not
/// served.
pub fn stage_value<F>(summary: &SortedReportSummary, y: &SupplyVector, continuation: F) -> StageDecision
where
    F: Fn(&[u32]) -> f64,
{
    let counts = summary.counts();
    let mut best: Option<StageDecision> = None;
    let mut remaining = vec![0u32; y.len()];
    for u in feasible_service_set(&counts, y) {
        let v = vstar_unchecked(&u, y);
        for (r, (a, b)) in remaining.iter_mut().zip(y.iter().zip(v.iter())) {
            *r = a - b;
        }
        let value = summary.served_value(&u) + continuation(&remaining);
        if best.as_ref().is_none_or(|b| value > b.value) {
            best = Some(StageDecision { value, service: u, routing: v });
        }
    }
    best.expect("the zero service vector is always feasible")
}

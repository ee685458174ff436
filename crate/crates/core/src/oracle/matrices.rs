//! Exhaustive enumeration of feasible allocation matrices and the
//! unsimplified dynamic program built on it.

use crate::dp::{build_with_model, SolveOptions, StageModel, SupplyVector, ValueTables};
use crate::error::{Error, Result};
use crate::market::{MarketConfig, TypeId};
use crate::mechanism::AllocationMatrix;

/// Default cap on matrices enumerated for one report set.
pub const DEFAULT_MATRIX_BUDGET: u64 = 1_000_000;

/// Every feasible allocation for consumers of the given flexibility
/// levels: each row picks nothing or one variety up to its level, and
/// column sums stay within `y`. Rows vary fastest at the end, with
/// "nothing" before varieties.
pub fn enumerate_feasible_matrices(levels: &[usize], y: &[u32], budget: u64) -> Result<Vec<AllocationMatrix>> {
    let k = y.len();
    let count = levels
        .iter()
        .map(|&b| b as u128 + 1)
        .try_fold(1u128, |acc, c| acc.checked_mul(c))
        .unwrap_or(u128::MAX);
    if count > budget as u128 {
        return Err(Error::BudgetExceeded { count, budget });
    }
    let mut out = Vec::new();
    let mut choice = vec![0usize; levels.len()];
    let mut used = vec![0u32; k];
    fn rec(
        row: usize,
        levels: &[usize],
        y: &[u32],
        choice: &mut Vec<usize>,
        used: &mut Vec<u32>,
        out: &mut Vec<AllocationMatrix>,
    ) {
        if row == levels.len() {
            let assignment = choice.iter().map(|&c| (c > 0).then_some(c)).collect();
            out.push(AllocationMatrix::new(y.len(), assignment));
            return;
        }
        choice[row] = 0;
        rec(row + 1, levels, y, choice, used, out);
        for j in 1..=levels[row].min(y.len()) {
            if used[j - 1] < y[j - 1] {
                used[j - 1] += 1;
                choice[row] = j;
                rec(row + 1, levels, y, choice, used, out);
                used[j - 1] -= 1;
            }
        }
        choice[row] = 0;
    }
    rec(0, levels, y, &mut choice, &mut used, &mut out);
    Ok(out)
}

/// Sum of served virtual valuations in canonical order: by level
/// ascending, then value descending.
pub(crate) fn canonical_served_sum(reports: &[(usize, f64)], allocation: &AllocationMatrix) -> f64 {
    let mut served: Vec<(usize, f64)> = reports
        .iter()
        .zip(allocation.assignment())
        .filter(|(_, a)| a.is_some())
        .map(|(r, _)| *r)
        .collect();
    served.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.total_cmp(&a.1)));
    let mut acc = 0.0;
    for (_, w) in served {
        acc += w;
    }
    acc
}

/// Maximum over all feasible matrices of served virtual valuation plus
/// `cont` at the leftover supply. `reports` holds `(level, virtual value)`.
pub fn brute_stage_value<F>(reports: &[(usize, f64)], y: &[u32], cont: F, budget: u64) -> Result<f64>
where
    F: Fn(&[u32]) -> f64,
{
    let levels: Vec<usize> = reports.iter().map(|r| r.0).collect();
    let mut best: Option<f64> = None;
    let mut rest = vec![0u32; y.len()];
    for a in enumerate_feasible_matrices(&levels, y, budget)? {
        for ((r, s), c) in rest.iter_mut().zip(y).zip(a.column_sums()) {
            *r = s - c;
        }
        let value = canonical_served_sum(reports, &a) + cont(&rest);
        if best.is_none_or(|b| value > b) {
            best = Some(value);
        }
    }
    Ok(best.expect("the empty allocation is always feasible"))
}

struct BruteStage<'a> {
    cfg: &'a MarketConfig,
    budget: u64,
}

impl StageModel for BruteStage<'_> {
    type Prepared = Vec<(usize, f64)>;

    fn prepare(&self, t: usize, types: &[TypeId]) -> Self::Prepared {
        types
            .iter()
            .map(|&id| {
                let (level, i) = self.cfg.type_parts(id);
                (level, self.cfg.virtual_value_at(t, i, level))
            })
            .collect()
    }

    fn value(&self, _t: usize, reports: &Self::Prepared, y: &SupplyVector, cont: &dyn Fn(&[u32]) -> f64) -> f64 {
        brute_stage_value(reports, y, cont, self.budget).expect("matrix budget checked before induction")
    }
}

/// Value tables of the full-matrix dynamic program, computed with the same
/// backward-induction driver and summation order as the simplified solver.
pub fn build_brute_tables(cfg: &MarketConfig, budget: u64) -> Result<ValueTables> {
    let k = cfg.varieties() as u128;
    for t in 1..=cfg.horizon() {
        let n = cfg.arrivals().max_arrivals(t) as u32;
        let count = (k + 1).checked_pow(n).unwrap_or(u128::MAX);
        if count > budget as u128 {
            return Err(Error::BudgetExceeded { count, budget });
        }
    }
    build_with_model(cfg, &SolveOptions::exact(), &BruteStage { cfg, budget })
}

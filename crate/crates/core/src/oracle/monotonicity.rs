//! Supply-shift monotonicity of the value tables.

use serde::Serialize;

use crate::dp::ValueTables;
use crate::market::MONOTONE_SLACK;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MonotonicityKind {
    /// `y` moves one good from a higher variety of `z` to a lower one.
    SingleShift,
    /// Prefix sums of `y` dominate those of `z`.
    CumulativeDominance,
}

/// `C_t(y) < C_t(z)` beyond tolerance although `y` should be worth at least as much.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityViolation {
    pub t: usize,
    pub kind: MonotonicityKind,
    pub y: Vec<u32>,
    pub z: Vec<u32>,
    /// `C_t(z) - C_t(y)`.
    pub gap: f64,
}

fn prefix_dominates(y: &[u32], z: &[u32]) -> bool {
    let (mut a, mut b) = (0u64, 0u64);
    y.iter().zip(z).all(|(&p, &q)| {
        a += p as u64;
        b += q as u64;
        a >= b
    })
}

fn single_shift(y: &[u32], z: &[u32]) -> bool {
    // y = z + e_i - e_j with i < j
    let diff: Vec<i64> = y.iter().zip(z).map(|(&a, &b)| a as i64 - b as i64).collect();
    let nonzero: Vec<(usize, i64)> = diff.iter().copied().enumerate().filter(|(_, d)| *d != 0).collect();
    matches!(nonzero.as_slice(), [(i, 1), (j, -1)] if i < j)
}

/// Every ordered pair of tabulated supply vectors where `y` dominates `z`
/// and `C_t(y)` falls short of `C_t(z)` by more than the tolerance: a
/// relative `1e-12` for exact tables, three combined standard errors for
/// Monte Carlo tables. Each pair is reported once, as a single shift when
/// it is one.
pub fn check_monotonicity(tables: &ValueTables) -> Vec<MonotonicityViolation> {
    let mut out = Vec::new();
    for t in 1..=tables.horizon() {
        let b = tables.supply_box(t);
        let vectors: Vec<_> = b.iter().collect();
        for y in &vectors {
            let cy = tables.value(t, y);
            let sy = tables.std_error(t, y);
            for z in &vectors {
                if y == z || !prefix_dominates(y, z) {
                    continue;
                }
                let cz = tables.value(t, z);
                let sz = tables.std_error(t, z);
                let tol = if sy > 0.0 || sz > 0.0 {
                    3.0 * (sy * sy + sz * sz).sqrt()
                } else {
                    MONOTONE_SLACK * (1.0 + cz.abs())
                };
                if cz - cy > tol {
                    out.push(MonotonicityViolation {
                        t,
                        kind: if single_shift(y, z) {
                            MonotonicityKind::SingleShift
                        } else {
                            MonotonicityKind::CumulativeDominance
                        },
                        y: y.0.clone(),
                        z: z.0.clone(),
                        gap: cz - cy,
                    });
                }
            }
        }
    }
    out
}

//! Generalized monotone hazard rate check on the valuation grid.

use serde::Serialize;

use super::{MarketConfig, MONOTONE_SLACK};

/// One failed regularity condition. Indices are 1-based periods and levels
/// and 0-based grid indices.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegularityViolation {
    /// Hazard rate decreases from grid index `index` to `index + 1`.
    HazardDecreasingInValuation { t: usize, level: usize, index: usize },
    /// Hazard rate of `level` is below that of `level - 1` at `index`.
    HazardDecreasingInLevel { t: usize, level: usize, index: usize },
    /// Hazard rate of `level` does not strictly exceed that of `level - 1` at `index`.
    HazardNotStrictAcrossLevels { t: usize, level: usize, index: usize },
    /// Virtual valuation at the lowest grid point is not negative.
    NonNegativeAtMinimum { t: usize, level: usize, value: f64 },
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub passed: bool,
    /// `hazard[t-1][j-1][i]` for every grid index below the top endpoint,
    /// where `1 - Pi` vanishes.
    pub hazard: Vec<Vec<Vec<f64>>>,
    pub violations: Vec<RegularityViolation>,
    pub scope: &'static str,
}

const SCOPE: &str = "conditions checked at grid points only (upper endpoint excluded from hazard checks); \
strictness across levels is certified at grid points, not between them";

fn below(a: f64, b: f64) -> bool {
    a < b - MONOTONE_SLACK * (1.0 + b.abs())
}

/// Checks the regularity conditions the optimal mechanism relies on:
/// hazard rates non-decreasing in valuation and in flexibility level,
/// strictly increasing across levels, and a negative virtual valuation at
/// the lowest valuation.
pub fn validate_config(cfg: &MarketConfig) -> ValidationReport {
    let g = cfg.grid().len();
    let k = cfg.varieties();
    let types = cfg.types();
    let hazard: Vec<Vec<Vec<f64>>> = (1..=cfg.horizon())
        .map(|t| {
            (1..=k)
                .map(|j| {
                    (0..g - 1)
                        .map(|i| {
                            let tail = 1.0 - types.cdf(t, j, i);
                            if tail <= 0.0 {
                                f64::INFINITY
                            } else {
                                types.pdf(t, j, i) / tail
                            }
                        })
                        .collect()
                })
                .collect()
        })
        .collect();

    let mut violations = Vec::new();
    for (t0, per_t) in hazard.iter().enumerate() {
        let t = t0 + 1;
        for (j0, h) in per_t.iter().enumerate() {
            let level = j0 + 1;
            for index in 0..h.len().saturating_sub(1) {
                if below(h[index + 1], h[index]) {
                    violations.push(RegularityViolation::HazardDecreasingInValuation { t, level, index });
                }
            }
            if j0 > 0 {
                let lower = &per_t[j0 - 1];
                for index in 0..h.len() {
                    if below(h[index], lower[index]) {
                        violations.push(RegularityViolation::HazardDecreasingInLevel { t, level, index });
                    } else if h[index].partial_cmp(&lower[index]) != Some(std::cmp::Ordering::Greater) {
                        violations.push(RegularityViolation::HazardNotStrictAcrossLevels { t, level, index });
                    }
                }
            }
            let w_min = cfg.virtual_value_at(t, 0, level);
            if w_min >= 0.0 {
                violations.push(RegularityViolation::NonNegativeAtMinimum { t, level, value: w_min });
            }
        }
    }

    ValidationReport {
        passed: violations.is_empty(),
        hazard,
        violations,
        scope: SCOPE,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{build_example_config, ConfigDocument, GridSpec, TypeSpec};

    fn tabulated(pdf: Vec<Vec<f64>>, cdf: Vec<Vec<f64>>, flex: Vec<f64>) -> MarketConfig {
        let k = pdf.len();
        let g = pdf[0].len();
        MarketConfig::from_document(ConfigDocument {
            horizon: 1,
            varieties: k,
            grid: GridSpec { min: 0.0, max: 1.0, points: g },
            arrivals: vec![vec![0.0, 1.0]],
            supply: vec![vec![vec![0.0, 1.0]; k]],
            types: TypeSpec::Tabulated {
                flexibility: vec![flex],
                pdf: vec![pdf],
                cdf: vec![cdf],
            },
        })
        .unwrap()
    }

    #[test]
    fn worked_example_is_regular() {
        let cfg = build_example_config(&[2.0, 3.0], 0.5, 2, 1001).unwrap();
        let report = validate_config(&cfg);
        assert!(report.passed, "{:?}", &report.violations[..report.violations.len().min(5)]);
    }

    #[test]
    fn uniform_single_level_is_regular() {
        let g = 11;
        let xs: Vec<f64> = (0..g).map(|i| i as f64 / 10.0).collect();
        let cfg = tabulated(vec![vec![1.0; g]], vec![xs.clone()], vec![1.0]);
        let report = validate_config(&cfg);
        assert!(report.passed);
        for (i, x) in xs.iter().enumerate().take(g - 1) {
            assert!((report.hazard[0][0][i] - 1.0 / (1.0 - x)).abs() < 1e-9);
        }
        assert_eq!(cfg.virtual_valuation(1, 0.0, 1).unwrap(), -1.0);
    }

    #[test]
    fn decreasing_hazard_in_valuation_is_flagged() {
        // density piling up at the bottom: hazard falls in the middle
        let pdf = vec![vec![3.0, 0.2, 0.2, 0.2, 0.2]];
        let cdf = vec![vec![0.0, 0.6, 0.7, 0.8, 1.0]];
        let cfg = tabulated(pdf, cdf, vec![1.0]);
        let report = validate_config(&cfg);
        assert!(!report.passed);
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, RegularityViolation::HazardDecreasingInValuation { index: 0, .. })));
    }

    #[test]
    fn swapped_levels_are_flagged() {
        let cfg = build_example_config(&[2.0, 3.0], 0.5, 1, 21).unwrap();
        let mut doc = cfg.document().clone();
        if let TypeSpec::TruncatedExponential { alpha, .. } = &mut doc.types {
            alpha.swap(0, 1);
        }
        let swapped = MarketConfig::from_document(doc).unwrap();
        let report = validate_config(&swapped);
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, RegularityViolation::HazardDecreasingInLevel { level: 2, .. })));
    }

    #[test]
    fn equal_levels_fail_strictness() {
        let cfg = build_example_config(&[2.0], 0.5, 1, 21).unwrap();
        let mut doc = cfg.document().clone();
        doc.varieties = 2;
        doc.supply = vec![vec![vec![0.0, 1.0]; 2]];
        doc.types = TypeSpec::TruncatedExponential {
            alpha: vec![2.0, 2.0],
            flexibility: vec![vec![0.5, 0.5]],
        };
        let report = validate_config(&MarketConfig::from_document(doc).unwrap());
        assert!(!report.passed);
        assert!(report
            .violations
            .iter()
            .all(|v| matches!(v, RegularityViolation::HazardNotStrictAcrossLevels { .. })));
    }

    #[test]
    fn nonnegative_bottom_is_flagged() {
        let doc = ConfigDocument {
            horizon: 1,
            varieties: 1,
            grid: GridSpec { min: 5.0, max: 6.0, points: 5 },
            arrivals: vec![vec![0.0, 1.0]],
            supply: vec![vec![vec![0.0, 1.0]]],
            types: TypeSpec::TruncatedExponential { alpha: vec![2.0], flexibility: vec![vec![1.0]] },
        };
        let report = validate_config(&MarketConfig::from_document(doc).unwrap());
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, RegularityViolation::NonNegativeAtMinimum { .. })));
    }
}

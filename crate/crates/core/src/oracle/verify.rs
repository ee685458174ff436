//! Randomized verification of the simplified dynamic program against the
//! brute-force oracle on small instances.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::constructive::{constructive_allocation, transform_t};
use super::matrices::{build_brute_tables, enumerate_feasible_matrices};
use super::monotonicity::check_monotonicity;
use crate::dp::{
    build_value_tables, feasible_service_set, feasible_variety_set, vstar_unchecked, ServiceVector, SolveOptions,
    SupplyVector, ValueTables, VarietyVector,
};
use crate::error::Result;
use crate::market::{ConfigDocument, GridSpec, MarketConfig, TypeSpec, MONOTONE_SLACK};
use crate::stats::derive_seed;

pub const LEMMA5: &str = "lemma5_service_set";
pub const LEMMA6: &str = "lemma6_variety_set";
pub const APPENDIX_C: &str = "appendix_c_constructive";
pub const LEMMA7: &str = "lemma7_vstar_optimality";
pub const MASTER: &str = "master_equivalence";
pub const LEMMA8: &str = "lemma8_monotonicity";
pub const APPENDIX_F: &str = "appendix_f_transform";

/// Deliberate bugs for checking that the suite catches them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    /// `v*^j = min(y^j + 1, ...)` in the routing recursion.
    VstarOffByOne,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyOptions {
    pub instances: usize,
    pub seed: u64,
    /// Cap on matrices per report set and profiles per table entry.
    pub budget: u64,
    /// Fix the number of varieties instead of drawing it from 1..=3.
    pub varieties: Option<usize>,
    pub fault: Option<Fault>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { instances: 200, seed: 0, budget: 1_000_000, varieties: None, fault: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub instance: usize,
    pub instance_seed: u64,
    pub passed: bool,
    /// Largest violation found; zero when the check passed.
    pub worst_violation: f64,
    pub cases: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckSummary {
    pub name: &'static str,
    pub passed: bool,
    pub failures: usize,
    pub cases: u64,
    pub worst_violation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub options: VerifyOptions,
    pub summary: Vec<CheckSummary>,
    pub first_failure: Option<CheckResult>,
    pub results: Vec<CheckResult>,
}

fn normalized(weights: Vec<f64>) -> Vec<f64> {
    let s: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / s).collect()
}

/// A random small market: k <= 3 varieties, T <= 3 periods, at most two
/// arrivals and one new good per variety per period, a 3 to 5 point grid,
/// and truncated exponential valuations with increasing rates.
pub fn random_instance(seed: u64, varieties: Option<usize>) -> Result<MarketConfig> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = varieties.unwrap_or_else(|| rng.random_range(1..=3));
    let horizon = rng.random_range(1..=3);
    let n_max = rng.random_range(1..=2);
    let points = rng.random_range(3..=5);
    let mut alpha = Vec::with_capacity(k);
    let mut a: f64 = rng.random_range(0.5..3.0);
    for _ in 0..k {
        alpha.push(a);
        a += rng.random_range(0.5..2.0);
    }
    let arrivals = (0..horizon)
        .map(|_| normalized((0..=n_max).map(|_| rng.random_range(0.1..1.0)).collect()))
        .collect();
    let supply = (0..horizon)
        .map(|_| {
            (0..k)
                .map(|_| {
                    if rng.random_bool(0.25) {
                        vec![1.0]
                    } else {
                        let p: f64 = rng.random_range(0.1..0.9);
                        vec![1.0 - p, p]
                    }
                })
                .collect()
        })
        .collect();
    let flexibility = (0..horizon)
        .map(|_| normalized((0..k).map(|_| rng.random_range(0.1..1.0)).collect()))
        .collect();
    MarketConfig::from_document(ConfigDocument {
        horizon,
        varieties: k,
        grid: GridSpec { min: 0.0, max: 1.0, points },
        arrivals,
        supply,
        types: TypeSpec::TruncatedExponential { alpha, flexibility },
    })
}

struct Check {
    name: &'static str,
    worst: f64,
    cases: u64,
    detail: Option<String>,
}

impl Check {
    fn new(name: &'static str) -> Self {
        Self { name, worst: 0.0, cases: 0, detail: None }
    }

    fn case(&mut self) {
        self.cases += 1;
    }

    fn fail(&mut self, magnitude: f64, detail: impl FnOnce() -> String) {
        let magnitude = if magnitude.is_finite() { magnitude.max(f64::MIN_POSITIVE) } else { f64::MAX };
        self.worst = self.worst.max(magnitude);
        if self.detail.is_none() {
            self.detail = Some(detail());
        }
    }

    fn finish(self, instance: usize, instance_seed: u64) -> CheckResult {
        CheckResult {
            name: self.name,
            instance,
            instance_seed,
            passed: self.detail.is_none(),
            worst_violation: self.worst,
            cases: self.cases,
            detail: self.detail,
        }
    }
}

fn all_boxes(k: usize, cap: u32) -> Vec<Vec<u32>> {
    let base = cap as usize + 1;
    (0..base.pow(k as u32))
        .map(|mut code| {
            let mut v = vec![0u32; k];
            for slot in v.iter_mut().rev() {
                *slot = (code % base) as u32;
                code /= base;
            }
            v
        })
        .collect()
}

fn levels_of(counts: &[u32]) -> Vec<usize> {
    counts
        .iter()
        .enumerate()
        .flat_map(|(j, &n)| std::iter::repeat_n(j + 1, n as usize))
        .collect()
}

/// Lemmas 5 and 6 and the constructive allocation, swept over per-level
/// counts with at most three consumers and supplies of at most two per
/// variety.
fn check_sets(k: usize, budget: u64) -> Result<[Check; 3]> {
    let mut l5 = Check::new(LEMMA5);
    let mut l6 = Check::new(LEMMA6);
    let mut ac = Check::new(APPENDIX_C);
    for counts in all_boxes(k, 3).into_iter().filter(|c| c.iter().sum::<u32>() <= 3) {
        let levels = levels_of(&counts);
        for y in all_boxes(k, 2) {
            let ys = SupplyVector(y.clone());
            let matrices = enumerate_feasible_matrices(&levels, &y, budget)?;
            let mut projected: BTreeMap<Vec<u32>, BTreeSet<Vec<u32>>> = BTreeMap::new();
            for a in &matrices {
                projected.entry(a.service_counts(&levels)).or_default().insert(a.column_sums());
            }
            l5.case();
            let service = feasible_service_set(&counts, &ys);
            let from_dp: BTreeSet<Vec<u32>> = service.iter().map(|u| u.0.clone()).collect();
            let from_oracle: BTreeSet<Vec<u32>> = projected.keys().cloned().collect();
            if from_dp != from_oracle {
                let diff = from_dp.symmetric_difference(&from_oracle).count() as f64;
                l5.fail(diff, || format!("counts {counts:?}, y {y:?}: {from_dp:?} vs {from_oracle:?}"));
            }
            for u in &service {
                l6.case();
                let from_dp: BTreeSet<Vec<u32>> =
                    feasible_variety_set(u, &ys).into_iter().map(|v| v.0).collect();
                let from_oracle = projected.get(&u.0).cloned().unwrap_or_default();
                if from_dp != from_oracle {
                    let diff = from_dp.symmetric_difference(&from_oracle).count() as f64;
                    l6.fail(diff, || format!("u {u:?}, y {y:?}: {from_dp:?} vs {from_oracle:?}"));
                }
                ac.case();
                match constructive_allocation(u, &counts, &ys) {
                    Ok(a) if a.is_feasible(&levels, &y) && a.service_counts(&levels) == u.0 => {}
                    Ok(a) => ac.fail(1.0, || format!("u {u:?}, y {y:?}: built {:?}", a.assignment())),
                    Err(e) => ac.fail(1.0, || format!("u {u:?}, y {y:?}: {e}")),
                }
            }
        }
    }
    Ok([l5, l6, ac])
}

fn faulty_vstar(u: &[u32], y: &[u32]) -> VarietyVector {
    let mut v = vec![0u32; y.len()];
    let mut backlog = 0u32;
    for j in (0..y.len()).rev() {
        let want = u[j] + backlog;
        v[j] = want.min(y[j] + 1);
        backlog = want - v[j];
    }
    VarietyVector(v)
}

fn in_variety_set(v: &VarietyVector, u: &ServiceVector, y: &SupplyVector) -> bool {
    feasible_variety_set(u, y).contains(v)
}

/// Routing optimality and the exchange walk, over every tabulated supply
/// vector of every period and every service vector it admits.
fn check_routing(tables: &ValueTables, fault: Option<Fault>) -> [Check; 2] {
    let mut l7 = Check::new(LEMMA7);
    let mut af = Check::new(APPENDIX_F);
    let route = |u: &[u32], y: &[u32]| match fault {
        Some(Fault::VstarOffByOne) => faulty_vstar(u, y),
        None => vstar_unchecked(u, y),
    };
    let slack = |c: f64| MONOTONE_SLACK * (1.0 + c.abs());
    for t in 1..=tables.horizon() {
        for y in tables.supply_box(t).iter() {
            let total = y.total();
            let counts = vec![total; y.len()];
            let cont = |v: &VarietyVector| -> Option<f64> {
                let rest = y.checked_remove(v).ok()?;
                Some(tables.continuation(t, &rest))
            };
            for u in feasible_service_set(&counts, &y) {
                l7.case();
                let vs = route(&u, &y);
                let set = feasible_variety_set(&u, &y);
                if !set.contains(&vs) {
                    l7.fail(1.0, || format!("t {t}, u {u:?}, y {y:?}: v* {vs:?} not feasible"));
                    continue;
                }
                let at_star = cont(&vs).expect("member of the variety set");
                let best = set.iter().filter_map(&cont).fold(f64::NEG_INFINITY, f64::max);
                if best - at_star > slack(best) {
                    l7.fail(best - at_star, || format!("t {t}, u {u:?}, y {y:?}: {at_star} < {best}"));
                }
                for start in &set {
                    af.case();
                    let mut v = start.clone();
                    let mut steps = 0u32;
                    while v != vs {
                        if steps >= total {
                            af.fail(1.0, || format!("t {t}, u {u:?}, y {y:?}: no convergence from {start:?}"));
                            break;
                        }
                        let next = match transform_t(&v, &vs, &u, &y) {
                            Ok(n) => n,
                            Err(e) => {
                                af.fail(1.0, || format!("t {t}, u {u:?}, y {y:?}: stuck at {v:?}: {e}"));
                                break;
                            }
                        };
                        if !in_variety_set(&next, &u, &y) {
                            af.fail(1.0, || format!("t {t}, u {u:?}, y {y:?}: left the set at {next:?}"));
                            break;
                        }
                        let (before, after) = (cont(&v).unwrap(), cont(&next).unwrap());
                        if before - after > slack(before) {
                            af.fail(before - after, || {
                                format!("t {t}, u {u:?}, y {y:?}: {v:?} -> {next:?} lowers value")
                            });
                        }
                        v = next;
                        steps += 1;
                    }
                }
            }
        }
    }
    [l7, af]
}

fn check_master(cfg: &MarketConfig, tables: &ValueTables, budget: u64) -> Result<Check> {
    let mut c = Check::new(MASTER);
    let brute = build_brute_tables(cfg, budget)?;
    for t in 1..=tables.horizon() {
        for y in tables.supply_box(t).iter() {
            c.case();
            let (a, b) = (tables.value(t, &y), brute.value(t, &y));
            if a.to_bits() != b.to_bits() {
                c.fail((a - b).abs(), || format!("t {t}, y {y:?}: simplified {a:e} vs brute {b:e}"));
            }
        }
    }
    c.case();
    let (a, b) = (tables.expected_total(cfg), brute.expected_total(cfg));
    if a.to_bits() != b.to_bits() {
        c.fail((a - b).abs(), || format!("expected total: simplified {a:e} vs brute {b:e}"));
    }
    Ok(c)
}

fn check_lemma8(tables: &ValueTables) -> Check {
    let mut c = Check::new(LEMMA8);
    c.cases = (1..=tables.horizon()).map(|t| tables.supply_box(t).len().pow(2) as u64).sum();
    for v in check_monotonicity(tables) {
        c.fail(v.gap, || format!("t {}, C({:?}) < C({:?}) by {:e}", v.t, v.y, v.z, v.gap));
    }
    c
}

/// Runs every check on one instance.
fn verify_instance(cfg: &MarketConfig, options: &VerifyOptions) -> Result<Vec<Check>> {
    let tables = build_value_tables(cfg, &SolveOptions { budget: options.budget, ..SolveOptions::exact() })?;
    let [l5, l6, ac] = check_sets(cfg.varieties(), options.budget)?;
    let [l7, af] = check_routing(&tables, options.fault);
    let master = check_master(cfg, &tables, options.budget)?;
    let l8 = check_lemma8(&tables);
    Ok(vec![l5, l6, ac, l7, master, l8, af])
}

/// Verifies the instance family drawn from `options.seed`.
pub fn run_verification(options: &VerifyOptions) -> Result<VerifyReport> {
    let per_instance: Vec<Vec<CheckResult>> = (0..options.instances)
        .into_par_iter()
        .map(|i| {
            let seed = derive_seed(options.seed, &[i as u64]);
            let cfg = random_instance(seed, options.varieties)?;
            Ok(verify_instance(&cfg, options)?
                .into_iter()
                .map(|c| c.finish(i, seed))
                .collect())
        })
        .collect::<Result<_>>()?;
    let results: Vec<CheckResult> = per_instance.into_iter().flatten().collect();
    let mut summary: Vec<CheckSummary> = Vec::new();
    for r in &results {
        let s = match summary.iter_mut().find(|s| s.name == r.name) {
            Some(s) => s,
            None => {
                summary.push(CheckSummary { name: r.name, passed: true, failures: 0, cases: 0, worst_violation: 0.0 });
                summary.last_mut().unwrap()
            }
        };
        s.cases += r.cases;
        if !r.passed {
            s.passed = false;
            s.failures += 1;
            s.worst_violation = s.worst_violation.max(r.worst_violation);
        }
    }
    let first_failure = results.iter().find(|r| !r.passed).cloned();
    Ok(VerifyReport {
        passed: first_failure.is_none(),
        options: options.clone(),
        summary,
        first_failure,
        results,
    })
}

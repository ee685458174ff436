//! Backward induction over supply vectors.
//!
//! Reports are drawn independently of the history, so the solver stores only
//! `C_t(y)`, the expectation over the period's report set of the value
//! function at supply `y`. The value for a concrete report set is rebuilt on
//! demand with [`stage_value`](super::stage_value).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stage::{stage_value, SortedReportSummary};
use super::vectors::{fits_supply, vstar_unchecked, ServiceVector, SupplyVector};
use crate::error::{Error, Result};
use crate::market::{Fingerprint, MarketConfig, TypeId};
use crate::sampling::MarketSampler;
use crate::stats::{derive_seed, KahanSum, MeanSe};

/// Default cap on report profiles evaluated per `(t, y)` entry by the exact backend.
pub const DEFAULT_ENUMERATION_BUDGET: u64 = 10_000_000;

/// How expectations over report sets are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Backend {
    /// Enumerate every arrival count and type multiset.
    Exact,
    /// Average `samples` seeded report-set draws per entry.
    MonteCarlo { samples: u64, seed: u64 },
}

impl Backend {
    pub fn seed(&self) -> Option<u64> {
        match self {
            Backend::Exact => None,
            Backend::MonteCarlo { seed, .. } => Some(*seed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolveOptions {
    pub backend: Backend,
    pub budget: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { backend: Backend::Exact, budget: DEFAULT_ENUMERATION_BUDGET }
    }
}

impl SolveOptions {
    pub fn exact() -> Self {
        Self::default()
    }

    pub fn monte_carlo(samples: u64, seed: u64) -> Self {
        Self { backend: Backend::MonteCarlo { samples, seed }, ..Self::default() }
    }
}

/// The box `0 <= y <= caps` of supply vectors, enumerated lexicographically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupplyBox {
    caps: Vec<u32>,
    strides: Vec<usize>,
    len: usize,
}

impl SupplyBox {
    pub fn new(caps: Vec<u32>) -> Self {
        let mut strides = vec![0usize; caps.len()];
        let mut len = 1usize;
        for j in (0..caps.len()).rev() {
            strides[j] = len;
            len *= caps[j] as usize + 1;
        }
        Self { caps, strides, len }
    }

    pub fn caps(&self) -> &[u32] {
        &self.caps
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn contains(&self, y: &[u32]) -> bool {
        y.len() == self.caps.len() && y.iter().zip(&self.caps).all(|(a, b)| a <= b)
    }

    pub fn index(&self, y: &[u32]) -> usize {
        debug_assert!(self.contains(y), "{y:?} outside box {:?}", self.caps);
        y.iter().zip(&self.strides).map(|(&v, &s)| v as usize * s).sum()
    }

    pub fn vector(&self, mut index: usize) -> SupplyVector {
        let v = self
            .strides
            .iter()
            .map(|&s| {
                let c = index / s;
                index %= s;
                c as u32
            })
            .collect();
        SupplyVector(v)
    }

    pub fn iter(&self) -> impl Iterator<Item = SupplyVector> + '_ {
        (0..self.len).map(|i| self.vector(i))
    }
}

/// All report profiles of one period: arrival counts with positive
/// probability and, for each count, the multisets of types in lexicographic
/// `(level, grid index)` order, weighted by their probability.
pub(crate) struct ProfileSpace {
    arrivals: Vec<f64>,
    active: Vec<(TypeId, f64)>,
}

fn binomial(n: u128, r: u128) -> u128 {
    let mut acc: u128 = 1;
    for i in 0..r {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

impl ProfileSpace {
    pub(crate) fn new(cfg: &MarketConfig, t: usize) -> Self {
        let active = cfg
            .types()
            .joint_masses(t)
            .into_iter()
            .enumerate()
            .filter(|(_, m)| *m > 0.0)
            .map(|(i, m)| (TypeId(i), m))
            .collect();
        Self { arrivals: cfg.arrivals().pmf(t).to_vec(), active }
    }

    /// Number of profiles with positive probability (saturating).
    pub(crate) fn count(&self) -> u128 {
        let m = self.active.len() as u128;
        self.arrivals
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(|(n, _)| if m == 0 { u128::from(n == 0) } else { binomial(m + n as u128 - 1, n as u128) })
            .fold(0u128, u128::saturating_add)
    }

    pub(crate) fn check_budget(&self, budget: u64) -> Result<()> {
        let count = self.count();
        if count > budget as u128 {
            return Err(Error::StateSpaceTooLarge { count, budget });
        }
        Ok(())
    }

    /// Calls `f(types, weight)` for every profile in canonical order.
    pub(crate) fn for_each(&self, mut f: impl FnMut(&[TypeId], f64)) {
        let m = self.active.len();
        let mut types: Vec<TypeId> = Vec::new();
        for (n, &lambda) in self.arrivals.iter().enumerate() {
            if lambda <= 0.0 {
                continue;
            }
            if n == 0 {
                f(&[], lambda);
                continue;
            }
            if m == 0 {
                continue;
            }
            // positions into `active`, non-decreasing
            let mut pos = vec![0usize; n];
            loop {
                types.clear();
                types.extend(pos.iter().map(|&p| self.active[p].0));
                let mut weight = lambda;
                let mut run = 0usize;
                for i in 0..n {
                    weight *= self.active[pos[i]].1;
                    run = if i > 0 && pos[i] == pos[i - 1] { run + 1 } else { 1 };
                    // n! / prod(mult!) built incrementally: (i+1) / run
                    weight *= (i + 1) as f64 / run as f64;
                }
                f(&types, weight);

                let mut i = n;
                loop {
                    if i == 0 {
                        break;
                    }
                    i -= 1;
                    if pos[i] + 1 < m {
                        pos[i] += 1;
                        let v = pos[i];
                        for p in pos.iter_mut().skip(i + 1) {
                            *p = v;
                        }
                        break;
                    }
                    if i == 0 {
                        i = usize::MAX;
                        break;
                    }
                }
                if i == usize::MAX || (n > 0 && pos[0] >= m) {
                    break;
                }
            }
        }
    }
}

/// A per-period stage operator the backward induction can drive.
pub(crate) trait StageModel: Sync {
    type Prepared: Send + Sync;

    fn prepare(&self, t: usize, types: &[TypeId]) -> Self::Prepared;

    fn value(
        &self,
        t: usize,
        prepared: &Self::Prepared,
        y: &SupplyVector,
        continuation: &dyn Fn(&[u32]) -> f64,
    ) -> f64;
}

/// The simplified stage: sorted virtual valuations per level and `v*` routing.
pub(crate) struct SimplifiedStage<'a> {
    pub cfg: &'a MarketConfig,
}

pub(crate) fn summary_of(cfg: &MarketConfig, t: usize, types: &[TypeId]) -> SortedReportSummary {
    SortedReportSummary::from_pairs(
        cfg.varieties(),
        types.iter().map(|&id| {
            let (level, i) = cfg.type_parts(id);
            (level, cfg.virtual_value_at(t, i, level))
        }),
    )
}

impl StageModel for SimplifiedStage<'_> {
    type Prepared = SortedReportSummary;

    fn prepare(&self, t: usize, types: &[TypeId]) -> SortedReportSummary {
        summary_of(self.cfg, t, types)
    }

    fn value(
        &self,
        _t: usize,
        summary: &SortedReportSummary,
        y: &SupplyVector,
        continuation: &dyn Fn(&[u32]) -> f64,
    ) -> f64 {
        stage_value(summary, y, continuation).value
    }
}

const PREPARE_LIMIT: u128 = 1 << 20;

/// `D_t(m) = sum_x gamma_{t+1}(x) C_{t+1}(m + x)`, zero at the horizon.
fn continuation_table(cfg: &MarketConfig, boxes: &[SupplyBox], values: &[Vec<f64>], t: usize) -> Vec<f64> {
    let here = &boxes[t - 1];
    if t == cfg.horizon() {
        return vec![0.0; here.len()];
    }
    let next_box = &boxes[t];
    let next_values = &values[t];
    let outcomes = cfg.supply().outcomes(t + 1);
    (0..here.len())
        .map(|idx| {
            let m = here.vector(idx);
            let mut acc = KahanSum::new();
            for (x, p) in &outcomes {
                let z = m.add(x);
                acc.add(p * next_values[next_box.index(&z)]);
            }
            acc.total()
        })
        .collect()
}

pub(crate) struct InductionResult {
    pub boxes: Vec<SupplyBox>,
    pub values: Vec<Vec<f64>>,
    pub std_errors: Option<Vec<Vec<f64>>>,
    pub continuation: Vec<Vec<f64>>,
}

pub(crate) fn backward_induction<M: StageModel>(
    cfg: &MarketConfig,
    options: &SolveOptions,
    model: &M,
) -> Result<InductionResult> {
    let horizon = cfg.horizon();
    let boxes: Vec<SupplyBox> = (1..=horizon).map(|t| SupplyBox::new(cfg.supply_caps(t))).collect();
    if let Backend::Exact = options.backend {
        for t in 1..=horizon {
            ProfileSpace::new(cfg, t).check_budget(options.budget)?;
        }
    }
    let mut values: Vec<Vec<f64>> = boxes.iter().map(|b| vec![0.0; b.len()]).collect();
    let mut errors: Vec<Vec<f64>> = boxes.iter().map(|b| vec![0.0; b.len()]).collect();
    let mut continuation: Vec<Vec<f64>> = vec![Vec::new(); horizon];
    let sampler = match options.backend {
        Backend::MonteCarlo { .. } => Some(MarketSampler::new(cfg)),
        Backend::Exact => None,
    };

    for t in (1..=horizon).rev() {
        let cont = continuation_table(cfg, &boxes, &values, t);
        let here = &boxes[t - 1];
        let cont_of = |m: &[u32]| cont[here.index(m)];
        let slice: Vec<(f64, f64)> = match options.backend {
            Backend::Exact => {
                let space = ProfileSpace::new(cfg, t);
                if space.count() <= PREPARE_LIMIT {
                    let mut prepared = Vec::new();
                    space.for_each(|types, w| prepared.push((model.prepare(t, types), w)));
                    (0..here.len())
                        .into_par_iter()
                        .map(|idx| {
                            let y = here.vector(idx);
                            let mut acc = KahanSum::new();
                            for (p, w) in &prepared {
                                acc.add(w * model.value(t, p, &y, &cont_of));
                            }
                            (acc.total(), 0.0)
                        })
                        .collect()
                } else {
                    (0..here.len())
                        .into_par_iter()
                        .map(|idx| {
                            let y = here.vector(idx);
                            let mut acc = KahanSum::new();
                            space.for_each(|types, w| {
                                let p = model.prepare(t, types);
                                acc.add(w * model.value(t, &p, &y, &cont_of));
                            });
                            (acc.total(), 0.0)
                        })
                        .collect()
                }
            }
            Backend::MonteCarlo { samples, seed } => {
                let sampler = sampler.as_ref().expect("sampler built for Monte Carlo");
                (0..here.len())
                    .into_par_iter()
                    .map(|idx| {
                        let y = here.vector(idx);
                        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[t as u64, idx as u64]));
                        let draws: Vec<f64> = (0..samples)
                            .map(|_| {
                                let n = sampler.arrivals(t, &mut rng);
                                let mut types = sampler.consumer_types(t, n, &mut rng);
                                types.sort();
                                let p = model.prepare(t, &types);
                                model.value(t, &p, &y, &cont_of)
                            })
                            .collect();
                        let est = MeanSe::from_samples(&draws);
                        (est.mean, est.std_error)
                    })
                    .collect()
            }
        };
        for (idx, (v, se)) in slice.into_iter().enumerate() {
            values[t - 1][idx] = v;
            errors[t - 1][idx] = se;
        }
        continuation[t - 1] = cont;
    }

    let std_errors = match options.backend {
        Backend::Exact => None,
        Backend::MonteCarlo { .. } => Some(errors),
    };
    Ok(InductionResult { boxes, values, std_errors, continuation })
}

/// Expected value functions `C_t(y)` for every period and reachable supply
/// vector, plus the derived continuation values used at decision time.
#[derive(Debug, Clone)]
pub struct ValueTables {
    pub(crate) fingerprint: Fingerprint,
    pub(crate) backend: Backend,
    pub(crate) horizon: usize,
    pub(crate) varieties: usize,
    pub(crate) boxes: Vec<SupplyBox>,
    pub(crate) values: Vec<Vec<f64>>,
    pub(crate) std_errors: Option<Vec<Vec<f64>>>,
    pub(crate) continuation: Vec<Vec<f64>>,
}

/// Solves the dynamic program by backward induction.
pub fn build_value_tables(cfg: &MarketConfig, options: &SolveOptions) -> Result<ValueTables> {
    build_with_model(cfg, options, &SimplifiedStage { cfg })
}

pub(crate) fn build_with_model<M: StageModel>(
    cfg: &MarketConfig,
    options: &SolveOptions,
    model: &M,
) -> Result<ValueTables> {
    let r = backward_induction(cfg, options, model)?;
    Ok(ValueTables {
        fingerprint: cfg.fingerprint(),
        backend: options.backend,
        horizon: cfg.horizon(),
        varieties: cfg.varieties(),
        boxes: r.boxes,
        values: r.values,
        std_errors: r.std_errors,
        continuation: r.continuation,
    })
}

impl ValueTables {
    pub(crate) fn from_parts(
        cfg: &MarketConfig,
        backend: Backend,
        values: Vec<Vec<f64>>,
        std_errors: Option<Vec<Vec<f64>>>,
    ) -> Self {
        let boxes: Vec<SupplyBox> = (1..=cfg.horizon()).map(|t| SupplyBox::new(cfg.supply_caps(t))).collect();
        let mut continuation = vec![Vec::new(); cfg.horizon()];
        for t in (1..=cfg.horizon()).rev() {
            continuation[t - 1] = continuation_table(cfg, &boxes, &values, t);
        }
        Self {
            fingerprint: cfg.fingerprint(),
            backend,
            horizon: cfg.horizon(),
            varieties: cfg.varieties(),
            boxes,
            values,
            std_errors,
            continuation,
        }
    }

    pub fn fingerprint(&self) -> Fingerprint {
        self.fingerprint
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn varieties(&self) -> usize {
        self.varieties
    }

    /// Supply vectors tabulated for period `t`.
    pub fn supply_box(&self, t: usize) -> &SupplyBox {
        &self.boxes[t - 1]
    }

    /// Fails with [`Error::TableMismatch`] unless built for `cfg`.
    pub fn check_matches(&self, cfg: &MarketConfig) -> Result<()> {
        if self.fingerprint != cfg.fingerprint() {
            return Err(Error::TableMismatch {
                expected: cfg.fingerprint().to_string(),
                found: self.fingerprint.to_string(),
            });
        }
        Ok(())
    }

    pub fn contains(&self, t: usize, y: &[u32]) -> bool {
        t == self.horizon + 1 || (t >= 1 && t <= self.horizon && self.boxes[t - 1].contains(y))
    }

    /// `C_t(y)`; zero for `t = T + 1`.
    ///
    /// Panics if `y` is not a reachable supply vector of period `t`.
    pub fn value(&self, t: usize, y: &[u32]) -> f64 {
        if t == self.horizon + 1 {
            return 0.0;
        }
        assert!(self.contains(t, y), "supply {y:?} not tabulated for period {t}");
        self.values[t - 1][self.boxes[t - 1].index(y)]
    }

    /// Overwrites `C_t(y)` without refreshing continuation values. Meant for
    /// fault injection when testing the table checks.
    pub fn set_value(&mut self, t: usize, y: &[u32], value: f64) {
        let idx = self.boxes[t - 1].index(y);
        self.values[t - 1][idx] = value;
    }

    /// Monte Carlo standard error of `C_t(y)`; zero for exact tables.
    pub fn std_error(&self, t: usize, y: &[u32]) -> f64 {
        match &self.std_errors {
            Some(se) if t <= self.horizon => se[t - 1][self.boxes[t - 1].index(y)],
            _ => 0.0,
        }
    }

    /// Expected value carried into period `t + 1` when `m` goods are left
    /// unallocated at the end of period `t`.
    pub fn continuation(&self, t: usize, m: &[u32]) -> f64 {
        assert!(self.boxes[t - 1].contains(m), "supply {m:?} not tabulated for period {t}");
        self.continuation[t - 1][self.boxes[t - 1].index(m)]
    }

    /// Opportunity cost of serving one level-`j` consumer from supply `y` in
    /// period `t`: the drop in continuation value caused by the good `v*`
    /// would route to them.
    pub fn continuation_gap(&self, t: usize, y: &SupplyVector, j: usize) -> Result<f64> {
        let mut e = vec![0u32; self.varieties];
        if j == 0 || j > self.varieties {
            return Err(Error::LevelOutOfRange { level: j, varieties: self.varieties });
        }
        e[j - 1] = 1;
        if !fits_supply(&e, y) {
            return Err(Error::InfeasibleU { u: e, y: y.0.clone() });
        }
        if t == self.horizon {
            return Ok(0.0);
        }
        let v = vstar_unchecked(&e, y);
        let rest = y.checked_remove(&v)?;
        Ok(self.continuation(t, y) - self.continuation(t, &rest))
    }

    /// Expected total virtual surplus of the optimal policy from period 1,
    /// `sum_x gamma_1(x) C_1(x)`.
    pub fn expected_total(&self, cfg: &MarketConfig) -> f64 {
        cfg.supply()
            .outcomes(1)
            .iter()
            .map(|(x, p)| p * self.value(1, x))
            .collect::<KahanSum>()
            .total()
    }

    /// Number of tabulated `(t, y)` entries.
    pub fn entry_count(&self) -> usize {
        self.boxes.iter().map(SupplyBox::len).sum()
    }

    /// Smallest and largest tabulated value.
    pub fn extremes(&self) -> (f64, f64) {
        self.values
            .iter()
            .flatten()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

/// Service vector of the stage decision for explicit use by callers that
/// only need `u*`.
pub fn optimal_service(
    tables: &ValueTables,
    t: usize,
    summary: &SortedReportSummary,
    y: &SupplyVector,
) -> ServiceVector {
    stage_value(summary, y, |m| tables.continuation(t, m)).service
}

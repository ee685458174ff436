//! The optimal allocation rule and threshold payments, one period at a time.

mod forward;
mod interim;

pub use forward::{supply_distribution, SupplyLaw};
pub(crate) use forward::sample_supply as forward_sample_supply;
pub use interim::{interim_profile, interim_quantities, InterimBackend, InterimPoint};

use serde::{Deserialize, Serialize};

use crate::dp::{stage_value, SortedReportSummary, StageDecision, SupplyVector, ValueTables, VarietyVector};
use crate::error::{Error, Result};
use crate::market::{MarketConfig, TypeId};
use crate::stats::derive_seed;

/// A consumer's reported type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub valuation_index: usize,
    pub valuation: f64,
    pub flexibility: usize,
    /// 1-based position in the period's arrival order.
    pub arrival_index: usize,
}

impl Report {
    /// Validates that `valuation` is a grid point and `flexibility` a level.
    pub fn new(cfg: &MarketConfig, valuation: f64, flexibility: usize, arrival_index: usize) -> Result<Self> {
        let valuation_index = cfg.grid().index_of(valuation)?;
        Self::at_index(cfg, valuation_index, flexibility, arrival_index)
    }

    pub fn at_index(cfg: &MarketConfig, valuation_index: usize, flexibility: usize, arrival_index: usize) -> Result<Self> {
        cfg.check_level(flexibility)?;
        if valuation_index >= cfg.grid().len() {
            return Err(Error::OffGrid { value: valuation_index as f64 });
        }
        Ok(Self {
            valuation_index,
            valuation: cfg.grid().point(valuation_index),
            flexibility,
            arrival_index,
        })
    }
}

/// The reports of one period, indexed 1..n by arrival.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReportSet {
    reports: Vec<Report>,
}

impl ReportSet {
    pub fn new(cfg: &MarketConfig, reports: Vec<Report>) -> Result<Self> {
        for (pos, r) in reports.iter().enumerate() {
            if r.arrival_index != pos + 1 {
                return Err(Error::InvalidArgument(format!(
                    "report at position {} has arrival index {}",
                    pos + 1,
                    r.arrival_index
                )));
            }
            cfg.check_level(r.flexibility)?;
            if r.valuation_index >= cfg.grid().len() || cfg.grid().point(r.valuation_index) != r.valuation {
                return Err(Error::OffGrid { value: r.valuation });
            }
        }
        Ok(Self { reports })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Reports for consumer types in arrival order.
    pub fn from_types(cfg: &MarketConfig, types: &[TypeId]) -> Self {
        let reports = types
            .iter()
            .enumerate()
            .map(|(pos, &id)| {
                let (level, i) = cfg.type_parts(id);
                Report {
                    valuation_index: i,
                    valuation: cfg.grid().point(i),
                    flexibility: level,
                    arrival_index: pos + 1,
                }
            })
            .collect();
        Self { reports }
    }

    /// Reports from `(valuation, flexibility)` pairs in arrival order.
    pub fn from_pairs(cfg: &MarketConfig, pairs: &[(f64, usize)]) -> Result<Self> {
        let reports = pairs
            .iter()
            .enumerate()
            .map(|(pos, &(x, b))| Report::new(cfg, x, b, pos + 1))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { reports })
    }

    pub fn reports(&self) -> &[Report] {
        &self.reports
    }

    pub fn len(&self) -> usize {
        self.reports.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reports.is_empty()
    }
}

/// Which variety, if any, each consumer receives.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllocationMatrix {
    varieties: usize,
    assignment: Vec<Option<usize>>,
}

impl AllocationMatrix {
    pub fn new(varieties: usize, assignment: Vec<Option<usize>>) -> Self {
        Self { varieties, assignment }
    }

    pub fn empty(varieties: usize, consumers: usize) -> Self {
        Self { varieties, assignment: vec![None; consumers] }
    }

    pub fn consumers(&self) -> usize {
        self.assignment.len()
    }

    pub fn varieties(&self) -> usize {
        self.varieties
    }

    /// Variety (1-based) received by consumer `i` (0-based row).
    pub fn variety_of(&self, i: usize) -> Option<usize> {
        self.assignment[i]
    }

    pub fn assignment(&self) -> &[Option<usize>] {
        &self.assignment
    }

    /// Binary entry `a_{ij}` with 0-based row and 1-based variety.
    pub fn entry(&self, i: usize, j: usize) -> u8 {
        u8::from(self.assignment[i] == Some(j))
    }

    pub fn column_sums(&self) -> Vec<u32> {
        let mut sums = vec![0u32; self.varieties];
        for j in self.assignment.iter().flatten() {
            sums[j - 1] += 1;
        }
        sums
    }

    /// Served consumers per flexibility level.
    pub fn service_counts(&self, levels: &[usize]) -> Vec<u32> {
        let mut u = vec![0u32; self.varieties];
        for (a, &b) in self.assignment.iter().zip(levels) {
            if a.is_some() {
                u[b - 1] += 1;
            }
        }
        u
    }

    /// Rows serve at most one good, never above the consumer's level, and
    /// columns stay within supply.
    pub fn is_feasible(&self, levels: &[usize], y: &[u32]) -> bool {
        levels.len() == self.assignment.len()
            && self
                .assignment
                .iter()
                .zip(levels)
                .all(|(a, &b)| a.is_none_or(|j| j >= 1 && j <= b))
            && self.column_sums().iter().zip(y).all(|(c, s)| c <= s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MechanismOutcome {
    pub allocation: AllocationMatrix,
    pub payments: Vec<f64>,
    pub u_star: Vec<u32>,
    pub v_star: Vec<u32>,
    pub next_supply: SupplyVector,
}

/// Ordering among consumers of one level with equal virtual valuations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TieBreak {
    /// Lower arrival index first.
    #[default]
    ArrivalOrder,
    /// Seeded random priority per `(t, arrival_index)`.
    Seeded { seed: u64 },
}

/// Result of the threshold search for one consumer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Threshold {
    /// Lowest winning report: served iff the report is at least this grid point.
    Price { index: usize, value: f64 },
    /// Not served at any grid point.
    NotServed,
}

impl Threshold {
    pub fn serves(&self, valuation_index: usize) -> bool {
        matches!(self, Threshold::Price { index, .. } if valuation_index >= *index)
    }

    pub fn price(&self) -> Option<f64> {
        match self {
            Threshold::Price { value, .. } => Some(*value),
            Threshold::NotServed => None,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Bidder {
    level: usize,
    w: f64,
    key: u64,
    arrival: usize,
}

/// The optimal mechanism for a market with solved value tables.
#[derive(Debug, Clone)]
pub struct Mechanism<'a> {
    cfg: &'a MarketConfig,
    tables: &'a ValueTables,
    tie_break: TieBreak,
}

impl<'a> Mechanism<'a> {
    pub fn new(cfg: &'a MarketConfig, tables: &'a ValueTables) -> Result<Self> {
        tables.check_matches(cfg)?;
        Ok(Self { cfg, tables, tie_break: TieBreak::ArrivalOrder })
    }

    pub fn with_tie_break(mut self, tie_break: TieBreak) -> Self {
        self.tie_break = tie_break;
        self
    }

    pub fn config(&self) -> &'a MarketConfig {
        self.cfg
    }

    pub fn tables(&self) -> &'a ValueTables {
        self.tables
    }

    fn key(&self, t: usize, arrival: usize) -> u64 {
        match self.tie_break {
            TieBreak::ArrivalOrder => arrival as u64,
            TieBreak::Seeded { seed } => derive_seed(seed, &[t as u64, arrival as u64]),
        }
    }

    fn bidder(&self, t: usize, valuation_index: usize, level: usize, arrival: usize) -> Bidder {
        Bidder {
            level,
            w: self.cfg.virtual_value_at(t, valuation_index, level),
            key: self.key(t, arrival),
            arrival,
        }
    }

    fn check_inputs(&self, t: usize, y: &[u32]) -> Result<()> {
        self.cfg.check_period(t)?;
        if !self.tables.supply_box(t).contains(y) {
            return Err(Error::InvalidArgument(format!("supply {y:?} is not reachable in period {t}")));
        }
        Ok(())
    }

    /// Serves the top `u*^j` consumers of every level, in level order, with
    /// the `v*` goods taken in non-decreasing variety order.
    fn assign(&self, t: usize, bidders: &[Bidder], y: &SupplyVector) -> (StageDecision, Vec<Option<usize>>) {
        let k = self.cfg.varieties();
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); k];
        for (i, b) in bidders.iter().enumerate() {
            groups[b.level - 1].push(i);
        }
        for g in &mut groups {
            g.sort_by(|&a, &b| {
                let (x, z) = (&bidders[a], &bidders[b]);
                z.w.total_cmp(&x.w).then(x.key.cmp(&z.key)).then(x.arrival.cmp(&z.arrival))
            });
        }
        let summary = SortedReportSummary::new(
            groups.iter().map(|g| g.iter().map(|&i| bidders[i].w).collect()).collect(),
        );
        let decision = stage_value(&summary, y, |m| self.tables.continuation(t, m));
        let mut goods = decision
            .routing
            .iter()
            .enumerate()
            .flat_map(|(j, &n)| std::iter::repeat_n(j + 1, n as usize));
        let mut assignment = vec![None; bidders.len()];
        for (g, &u) in groups.iter().zip(decision.service.iter()) {
            for &i in &g[..u as usize] {
                assignment[i] = goods.next();
            }
        }
        (decision, assignment)
    }

    fn bidders(&self, t: usize, reports: &ReportSet) -> Vec<Bidder> {
        reports
            .reports()
            .iter()
            .map(|r| self.bidder(t, r.valuation_index, r.flexibility, r.arrival_index))
            .collect()
    }

    /// Allocation of period `t` for `reports` with unallocated supply `y`.
    pub fn allocate(&self, t: usize, reports: &ReportSet, y: &SupplyVector) -> Result<(AllocationMatrix, Vec<u32>, VarietyVector)> {
        self.check_inputs(t, y)?;
        let (decision, assignment) = self.assign(t, &self.bidders(t, reports), y);
        Ok((
            AllocationMatrix::new(self.cfg.varieties(), assignment),
            decision.service.into_inner(),
            decision.routing,
        ))
    }

    fn served_at(&self, t: usize, others: &[Bidder], focal: Bidder, y: &SupplyVector) -> bool {
        let mut all = Vec::with_capacity(others.len() + 1);
        all.extend_from_slice(others);
        all.push(focal);
        let (_, assignment) = self.assign(t, &all, y);
        assignment[others.len()].is_some()
    }

    fn threshold_for(&self, t: usize, others: &[Bidder], arrival: usize, level: usize, y: &SupplyVector) -> Result<Threshold> {
        let top = self.cfg.grid().len() - 1;
        let lo = match self.cfg.reserve_index(t, level) {
            Ok(i) => i,
            Err(Error::NoNonnegativePoint { .. }) => return Ok(Threshold::NotServed),
            Err(e) => return Err(e),
        };
        let served = |i: usize| self.served_at(t, others, self.bidder(t, i, level, arrival), y);
        if !served(top) {
            return Ok(Threshold::NotServed);
        }
        // being served is monotone in the own report, so bisect for the first win
        let (mut lo, mut hi) = (lo, top);
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if served(mid) {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        Ok(Threshold::Price { index: lo, value: self.cfg.grid().point(lo) })
    }

    /// Lowest grid report at or above the reserve price with which a
    /// level-`level` consumer at position `arrival_index` is served against
    /// `others`. Equals the reserve price when the consumer wins there.
    pub fn payment_threshold(
        &self,
        t: usize,
        others: &[Report],
        arrival_index: usize,
        level: usize,
        y: &SupplyVector,
    ) -> Result<Threshold> {
        self.check_inputs(t, y)?;
        self.cfg.check_level(level)?;
        let others: Vec<Bidder> = others
            .iter()
            .map(|r| self.bidder(t, r.valuation_index, r.flexibility, r.arrival_index))
            .collect();
        self.threshold_for(t, &others, arrival_index, level, y)
    }

    fn bidders_from_types(&self, t: usize, others: &[TypeId], arrival_index: usize) -> Vec<Bidder> {
        others
            .iter()
            .enumerate()
            .map(|(pos, &id)| {
                let (level, i) = self.cfg.type_parts(id);
                let arrival = if pos + 1 < arrival_index { pos + 1 } else { pos + 2 };
                self.bidder(t, i, level, arrival)
            })
            .collect()
    }

    /// Threshold of a level-`level` consumer at position `arrival_index`
    /// whose competitors have types `others` (in arrival order, skipping the
    /// focal position).
    pub(crate) fn threshold_against_types(
        &self,
        t: usize,
        others: &[TypeId],
        arrival_index: usize,
        level: usize,
        y: &SupplyVector,
    ) -> Result<Threshold> {
        let bidders = self.bidders_from_types(t, others, arrival_index);
        self.threshold_for(t, &bidders, arrival_index, level, y)
    }

    /// Thresholds for a consumer of every level `1..=k` against the same
    /// competitors.
    pub(crate) fn thresholds_all_levels(
        &self,
        t: usize,
        others: &[TypeId],
        arrival_index: usize,
        y: &SupplyVector,
    ) -> Result<Vec<Threshold>> {
        let bidders = self.bidders_from_types(t, others, arrival_index);
        (1..=self.cfg.varieties())
            .map(|c| self.threshold_for(t, &bidders, arrival_index, c, y))
            .collect()
    }

    /// Goods per variety allocated in period `t` to truthful consumers of
    /// types `types` (arrival order).
    pub(crate) fn routing_for_types(&self, t: usize, types: &[TypeId], y: &SupplyVector) -> VarietyVector {
        let bidders: Vec<Bidder> = types
            .iter()
            .enumerate()
            .map(|(pos, &id)| {
                let (level, i) = self.cfg.type_parts(id);
                self.bidder(t, i, level, pos + 1)
            })
            .collect();
        self.assign(t, &bidders, y).0.routing
    }

    /// Threshold payments for an allocation produced by [`allocate`](Self::allocate).
    pub fn payments(&self, t: usize, reports: &ReportSet, y: &SupplyVector, allocation: &AllocationMatrix) -> Result<Vec<f64>> {
        self.check_inputs(t, y)?;
        let bidders = self.bidders(t, reports);
        let mut out = vec![0.0; reports.len()];
        let mut others = Vec::with_capacity(bidders.len());
        for (i, r) in reports.reports().iter().enumerate() {
            if allocation.variety_of(i).is_none() {
                continue;
            }
            others.clear();
            others.extend(bidders.iter().enumerate().filter(|(m, _)| *m != i).map(|(_, b)| *b));
            match self.threshold_for(t, &others, r.arrival_index, r.flexibility, y)? {
                Threshold::Price { index, value } if index <= r.valuation_index => out[i] = value,
                other => {
                    return Err(Error::InconsistentAllocation {
                        consumer: r.arrival_index,
                        threshold: other.price().unwrap_or(f64::INFINITY),
                        report: r.valuation,
                    })
                }
            }
        }
        Ok(out)
    }

    /// Allocation and payments for one period.
    pub fn run_period(&self, t: usize, reports: &ReportSet, y: &SupplyVector) -> Result<MechanismOutcome> {
        let (allocation, u_star, v_star) = self.allocate(t, reports, y)?;
        let payments = self.payments(t, reports, y, &allocation)?;
        let next_supply = y.checked_remove(&allocation.column_sums())?;
        Ok(MechanismOutcome { allocation, payments, u_star, v_star: v_star.into_inner(), next_supply })
    }

    /// Runs period `t` and adds the next period's supply arrivals.
    pub fn step(&self, t: usize, y: &SupplyVector, reports: &ReportSet, arrivals_next: &[u32]) -> Result<(MechanismOutcome, SupplyVector)> {
        let outcome = self.run_period(t, reports, y)?;
        let next = advance_supply(y, &outcome.v_star, arrivals_next)?;
        Ok((outcome, next))
    }
}

/// Supply dynamics `y_{t+1} = y_t - v_t + x_{t+1}`.
pub fn advance_supply(y: &SupplyVector, allocated: &[u32], arrivals: &[u32]) -> Result<SupplyVector> {
    Ok(y.checked_remove(allocated)?.add(arrivals))
}

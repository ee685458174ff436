//! Seeded market episodes under the optimal mechanism, with revenue
//! estimation and incentive audits.

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dp::{
    build_with_model, stage_value, summary_of, SolveOptions, SortedReportSummary, StageModel, SupplyVector,
    ValueTables,
};
use crate::error::{Error, Result};
use crate::market::{MarketConfig, TypeId};
use crate::mechanism::{forward_sample_supply, Mechanism, MechanismOutcome, ReportSet, Threshold};
use crate::sampling::MarketSampler;
use crate::stats::{derive_seed, MeanSe};

/// One period of an episode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodRecord {
    pub t: usize,
    pub arrivals: usize,
    /// New goods `x_t`.
    pub supply_arrivals: Vec<u32>,
    /// `y_t`, including `x_t`.
    pub supply_before: SupplyVector,
    pub reports: ReportSet,
    pub virtual_values: Vec<f64>,
    pub outcome: MechanismOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeTrace {
    pub seed: u64,
    pub periods: Vec<PeriodRecord>,
    pub revenue: f64,
    pub virtual_surplus: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RevenueEstimate {
    pub revenue: MeanSe,
    pub virtual_surplus: MeanSe,
    pub replications: u64,
    pub seed: u64,
}

/// True types and misreports probed by the audits. Valuations are grid
/// indices.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditProbe {
    pub periods: Vec<usize>,
    pub valuations: Vec<usize>,
    pub deviations: Vec<usize>,
}

impl AuditProbe {
    /// Every period, with `points` evenly spaced grid points for both true
    /// valuations and misreports.
    pub fn uniform(cfg: &MarketConfig, points: usize) -> Self {
        let g = cfg.grid().len();
        let points = points.clamp(2, g);
        let idx: Vec<usize> = (0..points)
            .map(|m| ((m * (g - 1)) as f64 / (points - 1) as f64).round() as usize)
            .collect();
        Self { periods: (1..=cfg.horizon()).collect(), valuations: idx.clone(), deviations: idx }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeviationEntry {
    pub t: usize,
    pub true_valuation: f64,
    pub true_level: usize,
    pub report_valuation: f64,
    pub report_level: usize,
    /// Mean utility gain of the misreport over truth-telling.
    pub gain: f64,
    pub std_error: f64,
    pub samples: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UtilityEntry {
    pub t: usize,
    pub valuation: f64,
    pub level: usize,
    pub utility: f64,
    pub std_error: f64,
    pub samples: u64,
}

/// Allowed sampling error in audit verdicts, in standard errors.
pub const AUDIT_Z: f64 = 3.0;
const AUDIT_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub replications: u64,
    pub seed: u64,
    pub probe: AuditProbe,
    pub deviations: Vec<DeviationEntry>,
    /// Deviation with the largest mean gain.
    pub worst_gain: Option<DeviationEntry>,
    /// Every mean gain is at most `AUDIT_Z` standard errors.
    pub bic_passed: bool,
    pub utilities: Vec<UtilityEntry>,
    /// Truthful type with the smallest mean utility.
    pub ir_min: Option<UtilityEntry>,
    /// Every mean truthful utility is at least `-AUDIT_Z` standard errors.
    pub ir_passed: bool,
}

/// Drives episodes of one market.
pub struct Simulator<'a> {
    mech: Mechanism<'a>,
    sampler: MarketSampler,
}

impl<'a> Simulator<'a> {
    pub fn new(cfg: &'a MarketConfig, tables: &'a ValueTables) -> Result<Self> {
        Ok(Self { mech: Mechanism::new(cfg, tables)?, sampler: MarketSampler::new(cfg) })
    }

    pub fn from_mechanism(mech: Mechanism<'a>) -> Self {
        let sampler = MarketSampler::new(mech.config());
        Self { mech, sampler }
    }

    pub fn mechanism(&self) -> &Mechanism<'a> {
        &self.mech
    }

    /// One truthful episode; the trace is a function of `seed` alone.
    pub fn sample_episode(&self, seed: u64) -> Result<EpisodeTrace> {
        let cfg = self.mech.config();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut carry = SupplyVector::zeros(cfg.varieties());
        let mut periods = Vec::with_capacity(cfg.horizon());
        let (mut revenue, mut surplus) = (0.0, 0.0);
        for t in 1..=cfg.horizon() {
            let x = self.sampler.supply(t, &mut rng);
            let y = carry.add(&x);
            let n = self.sampler.arrivals(t, &mut rng);
            let types = self.sampler.consumer_types(t, n, &mut rng);
            let reports = ReportSet::from_types(cfg, &types);
            let virtual_values: Vec<f64> = reports
                .reports()
                .iter()
                .map(|r| cfg.virtual_value_at(t, r.valuation_index, r.flexibility))
                .collect();
            let outcome = self.mech.run_period(t, &reports, &y)?;
            for (i, w) in virtual_values.iter().enumerate() {
                if outcome.allocation.variety_of(i).is_some() {
                    revenue += outcome.payments[i];
                    surplus += w;
                }
            }
            carry = outcome.next_supply.clone();
            periods.push(PeriodRecord {
                t,
                arrivals: n,
                supply_arrivals: x,
                supply_before: y,
                reports,
                virtual_values,
                outcome,
            });
        }
        Ok(EpisodeTrace { seed, periods, revenue, virtual_surplus: surplus })
    }

    /// Seed of replication `rep` under master seed `seed`.
    pub fn episode_seed(seed: u64, rep: u64) -> u64 {
        derive_seed(seed, &[rep])
    }

    /// Mean and standard error of revenue and virtual surplus over
    /// independent episodes.
    pub fn estimate_revenue(&self, replications: u64, seed: u64) -> Result<RevenueEstimate> {
        if replications < 2 {
            return Err(Error::InvalidArgument("at least two replications are needed".into()));
        }
        let draws: Vec<(f64, f64)> = (0..replications)
            .into_par_iter()
            .map(|r| {
                let e = self.sample_episode(Self::episode_seed(seed, r))?;
                Ok((e.revenue, e.virtual_surplus))
            })
            .collect::<Result<_>>()?;
        let (rev, vs): (Vec<f64>, Vec<f64>) = draws.into_iter().unzip();
        Ok(RevenueEstimate {
            revenue: MeanSe::from_samples(&rev),
            virtual_surplus: MeanSe::from_samples(&vs),
            replications,
            seed,
        })
    }

    /// Thresholds faced by a focal consumer in period `t` for every level:
    /// the supply state comes from a truthful run of periods `1..t`, the
    /// arrival count is drawn given at least one arrival, the focal
    /// position is uniform and the competitors' types are drawn afresh.
    fn environment(&self, t: usize, seed: u64) -> Result<Option<Vec<Threshold>>> {
        let cfg = self.mech.config();
        if cfg.arrivals().pmf(t)[0] >= 1.0 {
            return Ok(None);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y = forward_sample_supply(&self.mech, &self.sampler, t, &mut rng)?;
        let n = loop {
            let n = self.sampler.arrivals(t, &mut rng);
            if n > 0 {
                break n;
            }
        };
        let focal = rand::Rng::random_range(&mut rng, 1..=n);
        let others: Vec<TypeId> = self.sampler.consumer_types(t, n - 1, &mut rng);
        self.mech.thresholds_all_levels(t, &others, focal, &y).map(Some)
    }

    /// Coupled estimates of the gain from every probed misreport `(r, c)`
    /// with `c` at most the true level, together with truthful utilities.
    /// Truthful and deviating reports face the same sampled environment.
    pub fn audit(&self, probe: &AuditProbe, replications: u64, seed: u64) -> Result<AuditReport> {
        let cfg = self.mech.config();
        if replications < 2 {
            return Err(Error::InvalidArgument("at least two replications are needed".into()));
        }
        let k = cfg.varieties();
        let grid = cfg.grid();
        for &t in &probe.periods {
            cfg.check_period(t)?;
        }
        for &i in probe.valuations.iter().chain(&probe.deviations) {
            if i >= grid.len() {
                return Err(Error::InvalidArgument(format!("grid index {i} out of range")));
            }
        }
        let mut deviations = Vec::new();
        let mut utilities = Vec::new();
        for &t in &probe.periods {
            let envs: Vec<Vec<Threshold>> = (0..replications)
                .into_par_iter()
                .map(|r| self.environment(t, derive_seed(seed, &[r, t as u64])))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .flatten()
                .collect();
            if envs.is_empty() {
                continue;
            }
            let outcome = |th: &Threshold, report: usize, value: f64| -> f64 {
                match th {
                    Threshold::Price { index, value: price } if report >= *index => value - price,
                    _ => 0.0,
                }
            };
            let combos: Vec<(usize, usize)> = probe
                .valuations
                .iter()
                .flat_map(|&v| (1..=k).map(move |b| (v, b)))
                .collect();
            let per_type: Vec<(UtilityEntry, Vec<DeviationEntry>)> = combos
                .par_iter()
                .map(|&(v, b)| {
                    let x = grid.point(v);
                    let truth: Vec<f64> = envs.iter().map(|e| outcome(&e[b - 1], v, x)).collect();
                    let u = MeanSe::from_samples(&truth);
                    let utility = UtilityEntry {
                        t,
                        valuation: x,
                        level: b,
                        utility: u.mean,
                        std_error: u.std_error,
                        samples: u.samples,
                    };
                    let mut gains = vec![0.0; envs.len()];
                    let mut devs = Vec::with_capacity(b * probe.deviations.len());
                    for c in 1..=b {
                        for &r in &probe.deviations {
                            for ((g, e), base) in gains.iter_mut().zip(&envs).zip(&truth) {
                                *g = outcome(&e[c - 1], r, x) - base;
                            }
                            let s = MeanSe::from_samples(&gains);
                            devs.push(DeviationEntry {
                                t,
                                true_valuation: x,
                                true_level: b,
                                report_valuation: grid.point(r),
                                report_level: c,
                                gain: s.mean,
                                std_error: s.std_error,
                                samples: s.samples,
                            });
                        }
                    }
                    (utility, devs)
                })
                .collect();
            for (u, d) in per_type {
                utilities.push(u);
                deviations.extend(d);
            }
        }
        let worst_gain = deviations.iter().copied().max_by(|a, b| a.gain.total_cmp(&b.gain));
        let ir_min = utilities.iter().copied().min_by(|a, b| a.utility.total_cmp(&b.utility));
        Ok(AuditReport {
            replications,
            seed,
            probe: probe.clone(),
            bic_passed: deviations.iter().all(|d| d.gain <= AUDIT_Z * d.std_error + AUDIT_FLOOR),
            ir_passed: utilities.iter().all(|u| u.utility >= -AUDIT_Z * u.std_error - AUDIT_FLOOR),
            deviations,
            worst_gain,
            utilities,
            ir_min,
        })
    }

    /// Incentive-compatibility audit over `probe`.
    pub fn bic_audit(&self, probe: &AuditProbe, replications: u64, seed: u64) -> Result<AuditReport> {
        self.audit(probe, replications, seed)
    }

    /// Participation audit over every period and `points` evenly spaced valuations.
    pub fn ir_audit(&self, points: usize, replications: u64, seed: u64) -> Result<AuditReport> {
        let mut probe = AuditProbe::uniform(self.mech.config(), points);
        probe.deviations.clear();
        self.audit(&probe, replications, seed)
    }
}

/// Greedy policy: serve every consumer with positive virtual valuation the
/// supply allows, ignoring the future, with the same `v*` routing.
struct MyopicStage<'a> {
    cfg: &'a MarketConfig,
}

impl StageModel for MyopicStage<'_> {
    type Prepared = SortedReportSummary;

    fn prepare(&self, t: usize, types: &[TypeId]) -> SortedReportSummary {
        summary_of(self.cfg, t, types)
    }

    fn value(&self, _t: usize, s: &SortedReportSummary, y: &SupplyVector, cont: &dyn Fn(&[u32]) -> f64) -> f64 {
        let d = stage_value(s, y, |_| 0.0);
        let rest = y.checked_remove(&d.routing).expect("v* fits the supply");
        s.served_value(&d.service) + cont(&rest)
    }
}

/// Exact expected virtual surplus of the myopic baseline policy. Not part
/// of the optimal mechanism; used as a dominance sanity check.
pub fn myopic_expected_surplus(cfg: &MarketConfig, budget: u64) -> Result<f64> {
    let tables = build_with_model(cfg, &SolveOptions { budget, ..SolveOptions::exact() }, &MyopicStage { cfg })?;
    Ok(tables.expected_total(cfg))
}

fn join(v: &[u32]) -> String {
    v.iter().map(u32::to_string).collect::<Vec<_>>().join(";")
}

/// Writes one CSV row per consumer and period, preceded by a `# ` comment
/// line holding `manifest`. Supply vectors are `;`-separated.
pub fn write_trace_csv(path: impl AsRef<Path>, manifest: &str, traces: &[EpisodeTrace]) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(file, "# {manifest}")?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record([
        "episode_seed",
        "t",
        "arrival_index",
        "valuation",
        "flexibility",
        "virtual_valuation",
        "served",
        "variety",
        "payment",
        "supply_before",
        "supply_after",
    ])?;
    for e in traces {
        for p in &e.periods {
            let before = join(&p.supply_before);
            let after = join(&p.outcome.next_supply);
            for (i, r) in p.reports.reports().iter().enumerate() {
                let variety = p.outcome.allocation.variety_of(i);
                w.write_record([
                    e.seed.to_string(),
                    p.t.to_string(),
                    r.arrival_index.to_string(),
                    r.valuation.to_string(),
                    r.flexibility.to_string(),
                    p.virtual_values[i].to_string(),
                    u8::from(variety.is_some()).to_string(),
                    variety.unwrap_or(0).to_string(),
                    p.outcome.payments[i].to_string(),
                    before.clone(),
                    after.clone(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

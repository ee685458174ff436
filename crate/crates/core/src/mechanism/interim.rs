//! Interim allocation probability `Q` and expected payment `P` of one
//! consumer, averaged over the other arrivals' types and the supply state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::forward::{sample_supply, supply_distribution};
use super::{Mechanism, Threshold};
use crate::error::{Error, Result};
use crate::market::TypeId;
use crate::sampling::MarketSampler;
use crate::stats::{derive_seed, KahanSum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InterimBackend {
    /// Enumerate supply states and the other consumers' types.
    Exact { budget: u64 },
    /// Average over seeded draws of the supply state and competitors.
    MonteCarlo { samples: u64, seed: u64 },
}

/// `Q` and `P` at one grid report, with standard errors (zero when exact).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InterimPoint {
    pub valuation_index: usize,
    pub valuation: f64,
    pub q: f64,
    pub p: f64,
    pub q_se: f64,
    pub p_se: f64,
}

/// `Q` and `P` of consumer `i` among `n_t` arrivals in period `t`, reporting
/// level `c` and each grid valuation in turn.
pub fn interim_profile(
    mech: &Mechanism<'_>,
    t: usize,
    n_t: usize,
    i: usize,
    c: usize,
    backend: InterimBackend,
) -> Result<Vec<InterimPoint>> {
    let cfg = mech.config();
    cfg.check_period(t)?;
    cfg.check_level(c)?;
    if i == 0 || i > n_t {
        return Err(Error::InvalidArgument(format!("consumer {i} outside 1..={n_t}")));
    }
    let g = cfg.grid().len();
    // weight and weighted price of thresholds landing at each grid index
    let mut hist = vec![KahanSum::new(); g];
    let mut pay = vec![KahanSum::new(); g];

    match backend {
        InterimBackend::Exact { budget } => {
            let law = supply_distribution(mech, t, budget)?;
            let active: Vec<(TypeId, f64)> = cfg
                .types()
                .joint_masses(t)
                .into_iter()
                .enumerate()
                .filter(|(_, m)| *m > 0.0)
                .map(|(id, m)| (TypeId(id), m))
                .collect();
            let others = n_t - 1;
            let count = (active.len() as u128)
                .checked_pow(others as u32)
                .and_then(|c| c.checked_mul(law.outcomes.len() as u128))
                .unwrap_or(u128::MAX);
            if count > budget as u128 {
                return Err(Error::StateSpaceTooLarge { count, budget });
            }
            let mut pos = vec![0usize; others];
            let mut types = vec![TypeId(0); others];
            for (y, py) in &law.outcomes {
                pos.iter_mut().for_each(|p| *p = 0);
                loop {
                    let mut w = *py;
                    for (slot, &p) in types.iter_mut().zip(&pos) {
                        *slot = active[p].0;
                        w *= active[p].1;
                    }
                    if let Threshold::Price { index, value } = mech.threshold_against_types(t, &types, i, c, y)? {
                        hist[index].add(w);
                        pay[index].add(w * value);
                    }
                    // odometer over ordered competitor tuples
                    let mut d = others;
                    while d > 0 {
                        d -= 1;
                        pos[d] += 1;
                        if pos[d] < active.len() {
                            break;
                        }
                        pos[d] = 0;
                        if d == 0 {
                            d = usize::MAX;
                            break;
                        }
                    }
                    if others == 0 || d == usize::MAX {
                        break;
                    }
                }
            }
            let mut q = KahanSum::new();
            let mut p = KahanSum::new();
            Ok((0..g)
                .map(|r| {
                    q.add(hist[r].total());
                    p.add(pay[r].total());
                    InterimPoint {
                        valuation_index: r,
                        valuation: cfg.grid().point(r),
                        q: q.total(),
                        p: p.total(),
                        q_se: 0.0,
                        p_se: 0.0,
                    }
                })
                .collect())
        }
        InterimBackend::MonteCarlo { samples, seed } => {
            if samples < 2 {
                return Err(Error::InvalidArgument("at least two samples are needed".into()));
            }
            let sampler = MarketSampler::new(cfg);
            let thresholds: Vec<Threshold> = (0..samples)
                .into_par_iter()
                .map(|s| {
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                        seed,
                        &[t as u64, n_t as u64, i as u64, c as u64, s],
                    ));
                    let y = sample_supply(mech, &sampler, t, &mut rng)?;
                    let others = sampler.consumer_types(t, n_t - 1, &mut rng);
                    mech.threshold_against_types(t, &others, i, c, &y)
                })
                .collect::<Result<Vec<_>>>()?;
            let mut sq = vec![KahanSum::new(); g];
            for th in &thresholds {
                if let Threshold::Price { index, value } = *th {
                    hist[index].add(1.0);
                    pay[index].add(value);
                    sq[index].add(value * value);
                }
            }
            let n = samples as f64;
            let scale = n / (n - 1.0);
            let (mut q, mut p, mut p2) = (KahanSum::new(), KahanSum::new(), KahanSum::new());
            Ok((0..g)
                .map(|r| {
                    q.add(hist[r].total());
                    p.add(pay[r].total());
                    p2.add(sq[r].total());
                    let qm = q.total() / n;
                    let pm = p.total() / n;
                    let pvar = (scale * (p2.total() / n - pm * pm)).max(0.0);
                    InterimPoint {
                        valuation_index: r,
                        valuation: cfg.grid().point(r),
                        q: qm,
                        p: pm,
                        q_se: (scale * qm * (1.0 - qm) / n).max(0.0).sqrt(),
                        p_se: (pvar / n).sqrt(),
                    }
                })
                .collect())
        }
    }
}

/// `Q` and `P` for a single report `(valuation, c)`.
pub fn interim_quantities(
    mech: &Mechanism<'_>,
    t: usize,
    n_t: usize,
    i: usize,
    valuation: f64,
    c: usize,
    backend: InterimBackend,
) -> Result<InterimPoint> {
    let r = mech.config().grid().index_of(valuation)?;
    Ok(interim_profile(mech, t, n_t, i, c, backend)?[r])
}

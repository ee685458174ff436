//! Distribution of the unallocated supply at the start of a period when
//! every earlier period is run truthfully under the mechanism.

use std::collections::BTreeMap;

use rand::Rng;
use serde::Serialize;

use super::Mechanism;
use crate::dp::{ProfileSpace, SupplyVector};
use crate::error::Result;
use crate::sampling::MarketSampler;
use crate::stats::KahanSum;

/// Probability of each supply vector `Y_t`, in lexicographic order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupplyLaw {
    pub t: usize,
    pub outcomes: Vec<(SupplyVector, f64)>,
}

impl SupplyLaw {
    /// `P(sum_j Y_t^j >= 1)`.
    pub fn prob_any_supply(&self) -> f64 {
        self.outcomes
            .iter()
            .filter(|(y, _)| y.total() > 0)
            .map(|(_, p)| *p)
            .collect::<KahanSum>()
            .total()
    }
}

/// Exact law of `Y_t` by enumerating supply arrivals and report profiles of
/// periods `1..t`. Each period's profile count is held to `budget`.
pub fn supply_distribution(mech: &Mechanism<'_>, t: usize, budget: u64) -> Result<SupplyLaw> {
    let cfg = mech.config();
    cfg.check_period(t)?;
    let mut law: Vec<(SupplyVector, f64)> = cfg
        .supply()
        .outcomes(1)
        .into_iter()
        .map(|(x, p)| (SupplyVector(x), p))
        .collect();
    for s in 1..t {
        let space = ProfileSpace::new(cfg, s);
        space.check_budget(budget)?;
        let mut profiles = Vec::new();
        space.for_each(|types, w| profiles.push((types.to_vec(), w)));
        let arrivals = cfg.supply().outcomes(s + 1);
        let mut next: BTreeMap<Vec<u32>, KahanSum> = BTreeMap::new();
        for (y, py) in &law {
            for (types, w) in &profiles {
                let v = mech.routing_for_types(s, types, y);
                let rest = y.checked_remove(&v)?;
                for (x, px) in &arrivals {
                    next.entry(rest.add(x).0).or_default().add(py * w * px);
                }
            }
        }
        law = next
            .into_iter()
            .map(|(y, p)| (SupplyVector(y), p.total()))
            .filter(|(_, p)| *p > 0.0)
            .collect();
    }
    Ok(SupplyLaw { t, outcomes: law })
}

/// Draws `Y_t` by running periods `1..t` truthfully.
pub(crate) fn sample_supply<R: Rng + ?Sized>(
    mech: &Mechanism<'_>,
    sampler: &MarketSampler,
    t: usize,
    rng: &mut R,
) -> Result<SupplyVector> {
    let mut y = SupplyVector(sampler.supply(1, rng));
    for s in 1..t {
        let n = sampler.arrivals(s, rng);
        let types = sampler.consumer_types(s, n, rng);
        let v = mech.routing_for_types(s, &types, &y);
        y = y.checked_remove(&v)?.add(&sampler.supply(s + 1, rng));
    }
    Ok(y)
}

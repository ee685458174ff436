//! Seeded draws from the market's primitive distributions.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::market::{MarketConfig, TypeId};

#[derive(Debug, Clone)]
struct PeriodSampler {
    arrivals: WeightedIndex<f64>,
    types: WeightedIndex<f64>,
    supply: Vec<WeightedIndex<f64>>,
}

/// Per-period samplers for arrivals, consumer types and new supply.
#[derive(Debug, Clone)]
pub struct MarketSampler {
    periods: Vec<PeriodSampler>,
}

impl MarketSampler {
    pub fn new(cfg: &MarketConfig) -> Self {
        let weighted = |w: &[f64]| WeightedIndex::new(w.iter().copied()).expect("validated PMF");
        let periods = (1..=cfg.horizon())
            .map(|t| PeriodSampler {
                arrivals: weighted(cfg.arrivals().pmf(t)),
                types: weighted(&cfg.types().joint_masses(t)),
                supply: (1..=cfg.varieties())
                    .map(|j| weighted(cfg.supply().pmf(t, j)))
                    .collect(),
            })
            .collect();
        Self { periods }
    }

    /// New goods per variety arriving in period `t`.
    pub fn supply<R: Rng + ?Sized>(&self, t: usize, rng: &mut R) -> Vec<u32> {
        self.periods[t - 1]
            .supply
            .iter()
            .map(|d| d.sample(rng) as u32)
            .collect()
    }

    pub fn arrivals<R: Rng + ?Sized>(&self, t: usize, rng: &mut R) -> usize {
        self.periods[t - 1].arrivals.sample(rng)
    }

    pub fn consumer_type<R: Rng + ?Sized>(&self, t: usize, rng: &mut R) -> TypeId {
        TypeId(self.periods[t - 1].types.sample(rng))
    }

    pub fn consumer_types<R: Rng + ?Sized>(&self, t: usize, n: usize, rng: &mut R) -> Vec<TypeId> {
        (0..n).map(|_| self.consumer_type(t, rng)).collect()
    }
}

//! Supply, service and variety vectors with the feasible-set enumerations
//! and the `v*` routing recursion.

use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

macro_rules! count_vector {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub struct $name(pub Vec<u32>);

        impl $name {
            pub fn new(v: Vec<u32>) -> Self {
                Self(v)
            }

            pub fn zeros(k: usize) -> Self {
                Self(vec![0; k])
            }

            pub fn total(&self) -> u32 {
                self.0.iter().sum()
            }

            pub fn into_inner(self) -> Vec<u32> {
                self.0
            }
        }

        impl Deref for $name {
            type Target = [u32];
            fn deref(&self) -> &[u32] {
                &self.0
            }
        }

        impl DerefMut for $name {
            fn deref_mut(&mut self) -> &mut [u32] {
                &mut self.0
            }
        }

        impl From<Vec<u32>> for $name {
            fn from(v: Vec<u32>) -> Self {
                Self(v)
            }
        }

        impl<const N: usize> From<[u32; N]> for $name {
            fn from(v: [u32; N]) -> Self {
                Self(v.to_vec())
            }
        }
    };
}

count_vector!(
    /// Unallocated goods per variety.
    SupplyVector
);
count_vector!(
    /// Consumers served per flexibility level.
    ServiceVector
);
count_vector!(
    /// Goods allocated per variety.
    VarietyVector
);

impl SupplyVector {
    /// `self - v`, failing if any component would go negative.
    pub fn checked_remove(&self, v: &[u32]) -> Result<SupplyVector> {
        self.iter()
            .zip(v)
            .enumerate()
            .map(|(j, (&y, &x))| y.checked_sub(x).ok_or(Error::NegativeSupply { variety: j + 1 }))
            .collect::<Result<Vec<_>>>()
            .map(SupplyVector)
    }

    pub fn add(&self, x: &[u32]) -> SupplyVector {
        SupplyVector(self.iter().zip(x).map(|(a, b)| a + b).collect())
    }
}

/// True when `u` satisfies the cumulative supply constraint
/// `sum_{l<=j} u^l <= sum_{l<=j} y^l` for every `j`.
pub fn fits_supply(u: &[u32], y: &[u32]) -> bool {
    let (mut cu, mut cy) = (0u64, 0u64);
    for (&a, &b) in u.iter().zip(y) {
        cu += a as u64;
        cy += b as u64;
        if cu > cy {
            return false;
        }
    }
    true
}

/// All service vectors achievable with `counts[j]` level-`j+1` consumers
/// and supply `y`, in lexicographic order.
pub fn feasible_service_set(counts: &[u32], y: &SupplyVector) -> Vec<ServiceVector> {
    assert_eq!(counts.len(), y.len(), "counts and supply must have length k");
    let mut out = Vec::new();
    let mut current = vec![0u32; y.len()];
    fn rec(
        j: usize,
        slack: u64,
        counts: &[u32],
        y: &[u32],
        current: &mut Vec<u32>,
        out: &mut Vec<ServiceVector>,
    ) {
        if j == y.len() {
            out.push(ServiceVector(current.clone()));
            return;
        }
        let room = slack + y[j] as u64;
        let top = (counts[j] as u64).min(room) as u32;
        for uj in 0..=top {
            current[j] = uj;
            rec(j + 1, room - uj as u64, counts, y, current, out);
        }
        current[j] = 0;
    }
    rec(0, 0, counts, y, &mut current, &mut out);
    out
}

/// All variety vectors that can fulfil service vector `u` from supply `y`,
/// in lexicographic order.
pub fn feasible_variety_set(u: &ServiceVector, y: &SupplyVector) -> Vec<VarietyVector> {
    assert_eq!(u.len(), y.len(), "service and supply must have length k");
    let k = y.len();
    let total = u.total() as u64;
    let prefix_u: Vec<u64> = u
        .iter()
        .scan(0u64, |acc, &x| {
            *acc += x as u64;
            Some(*acc)
        })
        .collect();
    let mut out = Vec::new();
    let mut current = vec![0u32; k];
    fn rec(
        j: usize,
        acc: u64,
        total: u64,
        prefix_u: &[u64],
        y: &[u32],
        current: &mut Vec<u32>,
        out: &mut Vec<VarietyVector>,
    ) {
        let k = y.len();
        if j == k {
            if acc == total {
                out.push(VarietyVector(current.clone()));
            }
            return;
        }
        for vj in 0..=y[j] {
            let next = acc + vj as u64;
            if next > total {
                break;
            }
            if j + 1 < k && next < prefix_u[j] {
                continue;
            }
            current[j] = vj;
            rec(j + 1, next, total, prefix_u, y, current, out);
        }
        current[j] = 0;
    }
    rec(0, 0, total, &prefix_u, y, &mut current, &mut out);
    out
}

/// Variety routing that keeps the lowest-index (most widely usable) goods:
/// `v*^k = min(u^k, y^k)` and, descending,
/// `v*^j = min(y^j, u^j + sum_{l>j} u^l - sum_{l>j} v*^l)`.
pub fn vstar(u: &ServiceVector, y: &SupplyVector) -> Result<VarietyVector> {
    if u.len() != y.len() || !fits_supply(u, y) {
        return Err(Error::InfeasibleU { u: u.0.clone(), y: y.0.clone() });
    }
    Ok(vstar_unchecked(u, y))
}

pub(crate) fn vstar_unchecked(u: &[u32], y: &[u32]) -> VarietyVector {
    let k = y.len();
    let mut v = vec![0u32; k];
    // unmet demand carried down from higher levels
    let mut backlog = 0u32;
    for j in (0..k).rev() {
        let want = u[j] + backlog;
        v[j] = want.min(y[j]);
        backlog = want - v[j];
    }
    VarietyVector(v)
}

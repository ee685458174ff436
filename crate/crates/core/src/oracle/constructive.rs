//! Constructive pieces of the optimality argument: building an allocation
//! from a service vector, and the exchange step that walks any feasible
//! variety vector to `v*`.

use crate::dp::{fits_supply, ServiceVector, SupplyVector, VarietyVector};
use crate::error::{Error, Result};
use crate::mechanism::AllocationMatrix;

/// Feasible allocation serving exactly `u^j` level-`j` consumers. Rows are
/// consumers grouped by level (`counts[0]` level-1 consumers first); within
/// a level the lowest rows are served, each with the lowest variety still
/// available.
pub fn constructive_allocation(u: &ServiceVector, counts: &[u32], y: &SupplyVector) -> Result<AllocationMatrix> {
    let k = y.len();
    let infeasible = || Error::InfeasibleU { u: u.0.clone(), y: y.0.clone() };
    if u.len() != k || counts.len() != k || u.iter().zip(counts).any(|(a, b)| a > b) || !fits_supply(u, y) {
        return Err(infeasible());
    }
    let mut left = y.0.clone();
    let mut assignment = Vec::with_capacity(counts.iter().sum::<u32>() as usize);
    for j in 0..k {
        for row in 0..counts[j] {
            if row < u[j] {
                let l = (0..=j).find(|&l| left[l] > 0).ok_or_else(infeasible)?;
                left[l] -= 1;
                assignment.push(Some(l + 1));
            } else {
                assignment.push(None);
            }
        }
    }
    Ok(AllocationMatrix::new(k, assignment))
}

/// One exchange step toward `v_star`: take the highest `j` with
/// `v^j < v*^j` and the highest `i < j` with `v^i > 0`, and move one good
/// from variety `i` to variety `j`.
pub fn transform_t(v: &VarietyVector, v_star: &VarietyVector, _u: &ServiceVector, _y: &SupplyVector) -> Result<VarietyVector> {
    if v == v_star {
        return Err(Error::NotApplicable);
    }
    let j = (0..v.len()).rev().find(|&j| v[j] < v_star[j]).ok_or(Error::NotApplicable)?;
    let i = (0..j).rev().find(|&i| v[i] > 0).ok_or(Error::NotApplicable)?;
    let mut next = v.clone();
    next[j] += 1;
    next[i] -= 1;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::vstar;

    #[test]
    fn constructive_examples() {
        let a = constructive_allocation(&ServiceVector(vec![1, 1]), &[1, 1], &SupplyVector(vec![1, 1])).unwrap();
        assert_eq!(a.assignment(), &[Some(1), Some(2)]);
        let a = constructive_allocation(&ServiceVector(vec![0, 0]), &[2, 1], &SupplyVector(vec![1, 1])).unwrap();
        assert_eq!(a.assignment(), &[None, None, None]);
        let a = constructive_allocation(&ServiceVector(vec![0, 2]), &[0, 2], &SupplyVector(vec![1, 1])).unwrap();
        assert_eq!(a.assignment(), &[Some(1), Some(2)]);
        assert!(matches!(
            constructive_allocation(&ServiceVector(vec![2, 0]), &[2, 0], &SupplyVector(vec![1, 1])),
            Err(Error::InfeasibleU { .. })
        ));
    }

    #[test]
    fn transform_examples() {
        let u = ServiceVector(vec![0, 2]);
        let y = SupplyVector(vec![1, 1]);
        let vs = vstar(&u, &y).unwrap();
        assert!(matches!(transform_t(&vs, &vs, &u, &y), Err(Error::NotApplicable)));

        let u = ServiceVector(vec![0, 0, 2]);
        let y = SupplyVector(vec![1, 1, 1]);
        let vs = vstar(&u, &y).unwrap();
        assert_eq!(vs.0, vec![0, 1, 1]);
        let step = transform_t(&VarietyVector(vec![1, 1, 0]), &vs, &u, &y).unwrap();
        assert_eq!(step.0, vec![1, 0, 1]);
        assert_eq!(transform_t(&step, &vs, &u, &y).unwrap(), vs);
    }
}

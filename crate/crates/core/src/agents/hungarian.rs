//! Minimum-cost rectangular assignment (rows ≤ columns) by shortest augmenting
//! paths with dual potentials, `O(K² M)`.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Assigns every row to a distinct column minimising the total cost.
/// Returns the column of each row and the total cost.
pub fn hungarian_assign(cost: &Array2<f64>) -> Result<(Vec<usize>, f64)> {
    let (n, m) = cost.dim();
    if n > m {
        return Err(Error::InvalidArgument(format!("{n} rows cannot be assigned to {m} columns")));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidArgument("assignment costs must be finite".into()));
    }
    if n == 0 {
        return Ok((Vec::new(), 0.0));
    }
    // 1-based arrays; column 0 is a virtual source.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[[i0 - 1, j - 1]] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=m {
        if owner[j] != 0 {
            assignment[owner[j] - 1] = j - 1;
        }
    }
    let total = assignment.iter().enumerate().map(|(i, &j)| cost[[i, j]]).sum();
    Ok((assignment, total))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn brute_force(cost: &Array2<f64>) -> f64 {
        fn rec(i: usize, cost: &Array2<f64>, used: &mut Vec<bool>) -> f64 {
            if i == cost.nrows() {
                return 0.0;
            }
            let mut best = f64::INFINITY;
            for j in 0..cost.ncols() {
                if !used[j] {
                    used[j] = true;
                    best = best.min(cost[[i, j]] + rec(i + 1, cost, used));
                    used[j] = false;
                }
            }
            best
        }
        rec(0, cost, &mut vec![false; cost.ncols()])
    }

    #[test]
    fn small_examples() {
        assert_eq!(hungarian_assign(&array![[1.0, 2.0], [3.0, 4.0]]).unwrap(), (vec![0, 1], 5.0));
        assert_eq!(hungarian_assign(&array![[4.0, 1.0], [2.0, 3.0]]).unwrap(), (vec![1, 0], 3.0));
    }

    #[test]
    fn ties_give_a_valid_permutation() {
        let (a, c) = hungarian_assign(&Array2::from_elem((3, 4), 2.5)).unwrap();
        assert_eq!(c, 7.5);
        let mut s = a.clone();
        s.sort();
        s.dedup();
        assert_eq!(s.len(), 3);
    }

    #[test]
    fn too_many_rows() {
        assert!(hungarian_assign(&Array2::zeros((3, 2))).is_err());
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..300 {
            let k = rng.random_range(1..=5);
            let m = rng.random_range(k..=6);
            let cost = Array2::from_shape_simple_fn((k, m), || rng.random_range(-10.0..10.0));
            let (a, c) = hungarian_assign(&cost).unwrap();
            assert!((c - brute_force(&cost)).abs() < 1e-9);
            let mut s = a.clone();
            s.sort();
            s.dedup();
            assert_eq!(s.len(), k);
        }
    }
}

//! Reproducible random and structured instances for property checks.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::Result;
use crate::model::{JumpMatrix, RateSpec};

/// Convex combination of random permutation matrices, always including the
/// cyclic shift so the result is irreducible.
pub fn random_doubly_stochastic<R: Rng>(n: usize, rng: &mut R) -> Result<JumpMatrix> {
    let mut m = vec![vec![0.0; n]; n];
    let shift_weight = 0.2 + 0.3 * rng.random::<f64>();
    for (x, row) in m.iter_mut().enumerate() {
        row[(x + 1) % n] += shift_weight;
    }
    let perms = 1 + rng.random_range(0..n.max(2));
    let raw: Vec<f64> = (0..perms).map(|_| rng.random::<f64>() + 0.05).collect();
    let total: f64 = raw.iter().sum();
    let mut perm: Vec<usize> = (0..n).collect();
    for w in raw {
        perm.shuffle(rng);
        let w = (1.0 - shift_weight) * w / total;
        for (x, &y) in perm.iter().enumerate() {
            m[x][y] += w;
        }
    }
    exact_rows(&mut m);
    JumpMatrix::from_rows(&m)
}

/// Symmetric (hence reversible) doubly stochastic matrix `(A + Aᵀ)/2`.
pub fn random_symmetric_doubly_stochastic<R: Rng>(n: usize, rng: &mut R) -> Result<JumpMatrix> {
    let a = random_doubly_stochastic(n, rng)?;
    let mut m: Vec<Vec<f64>> = (0..n)
        .map(|x| (0..n).map(|y| 0.5 * (a.get(x, y) + a.get(y, x))).collect())
        .collect();
    exact_rows(&mut m);
    JumpMatrix::from_rows(&m)
}

/// Row-stochastic matrix with strictly positive entries.
pub fn random_stochastic<R: Rng>(n: usize, rng: &mut R) -> Result<JumpMatrix> {
    let mut m: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..n).map(|_| rng.random::<f64>() + 0.05).collect())
        .collect();
    for row in m.iter_mut() {
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    exact_rows(&mut m);
    JumpMatrix::from_rows(&m)
}

/// Random walk driven by a uniformly chosen adjacent transposition,
/// `P = (1/(n−1)) Σ_i T_{i,i+1}`.
pub fn adjacent_swaps(n: usize) -> Result<JumpMatrix> {
    if n == 1 {
        return JumpMatrix::from_rows(&[vec![1.0]]);
    }
    let w = 1.0 / (n - 1) as f64;
    let mut m = vec![vec![0.0; n]; n];
    for i in 0..n - 1 {
        for (x, row) in m.iter_mut().enumerate() {
            let y = if x == i {
                i + 1
            } else if x == i + 1 {
                i
            } else {
                x
            };
            row[y] += w;
        }
    }
    exact_rows(&mut m);
    JumpMatrix::from_rows(&m)
}

/// Positive per-site rate tables of length `len`.
pub fn random_site_tables<R: Rng>(n: usize, len: usize, rng: &mut R) -> RateSpec {
    RateSpec::SiteTable {
        tables: (0..n)
            .map(|_| (0..len).map(|_| 0.2 + 2.0 * rng.random::<f64>()).collect())
            .collect(),
    }
}

/// Positive homogeneous rate table of length `len`.
pub fn random_table<R: Rng>(len: usize, rng: &mut R) -> RateSpec {
    RateSpec::Table {
        values: (0..len).map(|_| 0.2 + 2.0 * rng.random::<f64>()).collect(),
    }
}

/// Random vector with entries in `[-1, 1)`.
pub fn random_vector<R: Rng>(len: usize, rng: &mut R) -> Vec<f64> {
    (0..len).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect()
}

// Pushes the rounding residue of each row onto its diagonal so rows sum to 1
// within the validation tolerance.
fn exact_rows(m: &mut [Vec<f64>]) {
    for (x, row) in m.iter_mut().enumerate() {
        let s: f64 = row.iter().sum();
        row[x] += 1.0 - s;
        if row[x] < 0.0 {
            row[x] = 0.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generated_matrices_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in 2..=8 {
            let p = random_doubly_stochastic(n, &mut rng).unwrap();
            assert!(p.is_doubly_stochastic());
            let s = random_symmetric_doubly_stochastic(n, &mut rng).unwrap();
            assert!(s.is_doubly_stochastic() && s.is_reversible());
            random_stochastic(n, &mut rng).unwrap();
            let a = adjacent_swaps(n).unwrap();
            assert!(a.is_doubly_stochastic() && a.is_reversible());
        }
    }
}

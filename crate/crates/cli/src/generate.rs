//! Seeded random tensors.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spttn_core::{DenseTensor, SparseCoo};

use crate::error::{CliError, Result};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Number of nonzeros for `density` of `total` positions, rounding up but
/// ignoring floating-point noise in the product.
pub fn target_nnz(total: usize, density: f64) -> usize {
    let x = density * total as f64;
    let r = x.round();
    let n = if (x - r).abs() <= 1e-9 * (total.max(1) as f64) {
        r
    } else {
        x.ceil()
    };
    (n as usize).min(total)
}

/// `⌈density · ∏dims⌉` distinct coordinates, values uniform in `[-1, 1]`.
pub fn gen_random(dims: &[usize], density: f64, seed: u64) -> Result<SparseCoo> {
    if !(density > 0.0 && density <= 1.0) {
        return Err(CliError::Usage(format!(
            "density must be in (0, 1], got {}",
            density
        )));
    }
    let total = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| CliError::Usage("tensor too large to sample".into()))?;
    let mut rng = rng(seed);
    let mut picks = sample(&mut rng, total, target_nnz(total, density)).into_vec();
    picks.sort_unstable();
    let entries = picks
        .into_iter()
        .map(|mut lin| {
            let mut c = vec![0; dims.len()];
            for m in (0..dims.len()).rev() {
                c[m] = lin % dims[m];
                lin /= dims[m];
            }
            (c, rng.random_range(-1.0..=1.0))
        })
        .collect();
    Ok(SparseCoo::new(dims.to_vec(), entries)?)
}

/// Dense tensor with entries uniform in `[-1, 1]`.
pub fn gen_dense(dims: &[usize], rng: &mut ChaCha8Rng) -> DenseTensor {
    let n = dims.iter().product();
    DenseTensor::new(
        dims.to_vec(),
        (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect(),
    )
    .expect("sizes match")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn count_and_determinism() {
        let a = gen_random(&[8, 8, 8], 0.1, 42).unwrap();
        assert_eq!(a.nnz(), 52);
        assert_eq!(a, gen_random(&[8, 8, 8], 0.1, 42).unwrap());
        let b = gen_random(&[8, 8, 8], 0.1, 43).unwrap();
        let ca: Vec<_> = a.entries().iter().map(|e| e.0.clone()).collect();
        let cb: Vec<_> = b.entries().iter().map(|e| e.0.clone()).collect();
        assert_ne!(ca, cb);
        assert!(a.entries().iter().all(|(_, v)| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn full_density() {
        assert_eq!(gen_random(&[3, 4], 1.0, 1).unwrap().nnz(), 12);
    }

    #[test]
    fn rounding_ignores_noise() {
        assert_eq!(target_nnz(10, 0.3), 3);
        assert_eq!(target_nnz(512, 0.1), 52);
        assert_eq!(target_nnz(7, 0.01), 1);
    }

    #[test]
    fn bad_density() {
        assert!(gen_random(&[2, 2], 0.0, 1).is_err());
        assert!(gen_random(&[2, 2], 1.5, 1).is_err());
        assert!(gen_random(&[2, 2], f64::NAN, 1).is_err());
    }
}

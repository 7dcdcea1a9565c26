//! Seeded synthetic volumes for experiments and tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::matrix::Matrix;
use crate::scalar::Scalar;
use crate::tensor::{multi_mode_product, Dims, Volume3};

/// Sum of anisotropic Gaussian blobs on a zero background, with one
/// low-intensity channel carved through the largest blob.
pub fn smooth_phantom<T: Scalar>(dims: Dims, seed: u64) -> Volume3<T> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let scale = dims.iter().copied().min().unwrap_or(1) as f64;
    let n_blobs = 6;
    let blobs: Vec<([f64; 3], [f64; 3], f64)> = (0..n_blobs)
        .map(|b| {
            let center = [0, 1, 2].map(|a| dims[a] as f64 * rng.random_range(0.3..0.7));
            let width = if b == 0 {
                [scale * 0.18; 3]
            } else {
                [0, 1, 2].map(|_| scale * rng.random_range(0.05..0.12))
            };
            let amp = if b == 0 { 1.0 } else { rng.random_range(0.4..0.9) };
            (center, width, amp)
        })
        .collect();
    let (c0, w0, _) = blobs[0];
    let canal_width = scale * 0.03;
    Volume3::from_fn(dims, |i, j, k| {
        let p = [i as f64, j as f64, k as f64];
        let mut v = 0.0;
        for (c, w, a) in &blobs {
            let r2: f64 = (0..3).map(|n| ((p[n] - c[n]) / w[n]).powi(2)).sum();
            v += a * (-0.5 * r2).exp();
        }
        // channel along the third axis through the main blob
        let d2 = ((p[0] - c0[0]).powi(2) + (p[1] - c0[1]).powi(2)) / canal_width.powi(2);
        let along = ((p[2] - c0[2]) / (2.0 * w0[2])).powi(2);
        v *= 1.0 - 0.6 * (-0.5 * d2).exp() * (-0.5 * along).exp();
        T::of(v)
    })
}

/// Random tensor with prescribed multilinear ranks: a Gaussian core
/// expanded by random orthonormal factors.
pub fn low_rank_phantom<T: Scalar>(dims: Dims, ranks: [usize; 3], seed: u64) -> Volume3<T> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut gauss = || -> f64 { StandardNormal.sample(&mut rng) };
    let core = Volume3::from_fn(ranks, |_, _, _| T::of(gauss()));
    let factors: Vec<Matrix<T>> = (0..3)
        .map(|n| orthonormal_columns(Matrix::from_fn(dims[n], ranks[n], |_, _| T::of(gauss()))))
        .collect();
    multi_mode_product(&core, [&factors[0], &factors[1], &factors[2]])
        .expect("factor shapes match the core")
}

/// Volume of i.i.d. standard normal entries.
pub fn gaussian_volume<T: Scalar>(dims: Dims, seed: u64) -> Volume3<T> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    Volume3::from_fn(dims, |_, _, _| T::of(StandardNormal.sample(&mut rng)))
}

/// Modified Gram-Schmidt on the columns.
fn orthonormal_columns<T: Scalar>(mut a: Matrix<T>) -> Matrix<T> {
    let (rows, cols) = a.shape();
    for c in 0..cols {
        for p in 0..c {
            let proj: T = (0..rows).map(|r| a.get(r, c) * a.get(r, p)).sum();
            for r in 0..rows {
                a.set(r, c, a.get(r, c) - proj * a.get(r, p));
            }
        }
        let norm: T = (0..rows).map(|r| a.get(r, c) * a.get(r, c)).sum::<T>().sqrt();
        for r in 0..rows {
            a.set(r, c, a.get(r, c) / norm);
        }
    }
    a
}

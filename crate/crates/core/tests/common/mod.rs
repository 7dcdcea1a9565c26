//! Reference implementations written straight from the definitions. They
//! share nothing with the library code paths they check.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Plain nested-Vec tensor indexed `[i][j][k]`.
pub type Nested = Vec<Vec<Vec<f64>>>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_nested(rng: &mut ChaCha8Rng, d: [usize; 3]) -> Nested {
    (0..d[0])
        .map(|_| (0..d[1]).map(|_| (0..d[2]).map(|_| rng.random_range(-1.0..1.0)).collect()).collect())
        .collect()
}

pub fn random_rows(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<Vec<f64>> {
    (0..rows).map(|_| (0..cols).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}

pub fn dims_of(x: &Nested) -> [usize; 3] {
    [x.len(), x[0].len(), x[0][0].len()]
}

/// `T(a,b,c) = Σ_ijk X(i,j,k) P1(a,i) P2(b,j) P3(c,k)`, evaluated literally.
pub fn triple_sum(x: &Nested, p: [&Vec<Vec<f64>>; 3]) -> Nested {
    let [ni, nj, nk] = dims_of(x);
    let out = [p[0].len(), p[1].len(), p[2].len()];
    let mut t = vec![vec![vec![0.0; out[2]]; out[1]]; out[0]];
    for a in 0..out[0] {
        for b in 0..out[1] {
            for c in 0..out[2] {
                let mut s = 0.0;
                for i in 0..ni {
                    for j in 0..nj {
                        for k in 0..nk {
                            s += x[i][j][k] * p[0][a][i] * p[1][b][j] * p[2][c][k];
                        }
                    }
                }
                t[a][b][c] = s;
            }
        }
    }
    t
}

pub fn identity_rows(n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

/// Sum of R outer products of factor columns.
pub fn outer_product_sum(u: [&Vec<Vec<f64>>; 3]) -> Nested {
    let d = [u[0].len(), u[1].len(), u[2].len()];
    let r = u[0][0].len();
    let mut t = vec![vec![vec![0.0; d[2]]; d[1]]; d[0]];
    for i in 0..d[0] {
        for j in 0..d[1] {
            for k in 0..d[2] {
                t[i][j][k] = (0..r).map(|c| u[0][i][c] * u[1][j][c] * u[2][k][c]).sum();
            }
        }
    }
    t
}

pub fn nested_max_abs_diff(a: &Nested, b: &Nested) -> f64 {
    let mut m: f64 = 0.0;
    for (pa, pb) in a.iter().zip(b) {
        for (ra, rb) in pa.iter().zip(pb) {
            for (x, y) in ra.iter().zip(rb) {
                m = m.max((x - y).abs());
            }
        }
    }
    m
}

pub fn nested_rel_err(got: &Nested, want: &Nested) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (pa, pb) in got.iter().zip(want) {
        for (ra, rb) in pa.iter().zip(pb) {
            for (x, y) in ra.iter().zip(rb) {
                num += (x - y) * (x - y);
                den += y * y;
            }
        }
    }
    (num / den.max(f64::MIN_POSITIVE)).sqrt()
}

pub fn naive_norm(x: &Nested) -> f64 {
    let mut s = 0.0;
    for p in x {
        for r in p {
            for v in r {
                s += v * v;
            }
        }
    }
    s.sqrt()
}

/// Kronecker product of row-major matrices.
pub fn kron(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (ar, ac, br, bc) = (a.len(), a[0].len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; ac * bc]; ar * br];
    for i in 0..ar {
        for j in 0..ac {
            for k in 0..br {
                for l in 0..bc {
                    out[i * br + k][j * bc + l] = a[i][j] * b[k][l];
                }
            }
        }
    }
    out
}

pub fn matvec(a: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    a.iter().map(|row| row.iter().zip(v).map(|(x, y)| x * y).sum()).collect()
}

/// Mean squared error over masked entries, then PSNR with the reference's
/// full range as peak.
pub fn naive_psnr(reference: &[f64], test: &[f64], mask: &[bool]) -> f64 {
    let mut sse = 0.0;
    let mut n = 0usize;
    for i in 0..reference.len() {
        if mask[i] {
            sse += (reference[i] - test[i]).powi(2);
            n += 1;
        }
    }
    let lo = reference.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = reference.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    10.0 * ((hi - lo).powi(2) / (sse / n as f64)).log10()
}

/// Direct 3D sliding-window SSIM: for every voxel, the truncated 11³
/// Gaussian window (σ = 1.5) is evaluated explicitly and renormalized over
/// the in-bounds taps.
pub fn naive_ssim(reference: &[f64], test: &[f64], dims: [usize; 3], mask: &[bool]) -> f64 {
    let r = 5isize;
    let w1: Vec<f64> = (-r..=r).map(|t| (-((t * t) as f64) / (2.0 * 1.5 * 1.5)).exp()).collect();
    let lo = reference.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = reference.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let l = if hi > lo { hi - lo } else { 1.0 };
    let c1 = (0.01 * l) * (0.01 * l);
    let c2 = (0.03 * l) * (0.03 * l);
    let at = |i: usize, j: usize, k: usize| i + dims[0] * (j + dims[1] * k);
    let mut total = 0.0;
    let mut n = 0usize;
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                if !mask[at(i, j, k)] {
                    continue;
                }
                let (mut ws, mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
                for dk in -r..=r {
                    for dj in -r..=r {
                        for di in -r..=r {
                            let (ii, jj, kk) = (i as isize + di, j as isize + dj, k as isize + dk);
                            if ii < 0 || jj < 0 || kk < 0 {
                                continue;
                            }
                            let (ii, jj, kk) = (ii as usize, jj as usize, kk as usize);
                            if ii >= dims[0] || jj >= dims[1] || kk >= dims[2] {
                                continue;
                            }
                            let w = w1[(di + r) as usize] * w1[(dj + r) as usize] * w1[(dk + r) as usize];
                            let x = reference[at(ii, jj, kk)];
                            let y = test[at(ii, jj, kk)];
                            ws += w;
                            mx += w * x;
                            my += w * y;
                            sxx += w * x * x;
                            syy += w * y * y;
                            sxy += w * x * y;
                        }
                    }
                }
                let (mx, my) = (mx / ws, my / ws);
                let vx = sxx / ws - mx * mx;
                let vy = syy / ws - my * my;
                let cov = sxy / ws - mx * my;
                total += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                n += 1;
            }
        }
    }
    (total / n as f64).clamp(0.0, 1.0)
}

pub fn naive_dice(a: &[bool], b: &[bool]) -> f64 {
    let mut inter = 0usize;
    let mut na = 0usize;
    let mut nb = 0usize;
    for (&x, &y) in a.iter().zip(b) {
        na += x as usize;
        nb += y as usize;
        inter += (x && y) as usize;
    }
    if na + nb == 0 {
        1.0
    } else {
        2.0 * inter as f64 / (na + nb) as f64
    }
}

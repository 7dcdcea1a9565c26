//! Joint denoising and deconvolution through a rank-R canonical polyadic
//! model fitted by alternating least squares.
//!
//! Each sweep updates, for `n = 1, 2, 3` in order,
//!
//! ```text
//! Uⁿ = (DₙHₙ)† · Y⁽ⁿ⁾ · (B_hi ⊙ B_lo)†ᵀ,     B_m = DₘHₘUᵐ
//! ```
//!
//! where `(hi, lo)` are the two other modes, higher first. Both
//! pseudoinverses are Tikhonov-regularized; the Khatri–Rao one is applied
//! through its Gram identity `(B_hi ⊙ B_lo)ᵀ(B_hi ⊙ B_lo) = B_hiᵀB_hi ∘ B_loᵀB_lo`.
//! Denoising comes from keeping R small.

use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::baseline::linear_interpolation;
use crate::error::{Result, SisrError};
use crate::linalg::{left_singular, Cholesky};
use crate::matrix::Matrix;
use crate::operators::OperatorSet;
use crate::scalar::Scalar;
use crate::tensor::{fold, khatri_rao, multi_mode_product, unfold, Mode, Volume3};

/// Factor matrices `U¹ (I×R)`, `U² (J×R)`, `U³ (K×R)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CpdFactors<T> {
    u: [Matrix<T>; 3],
}

impl<T: Scalar> CpdFactors<T> {
    pub fn new(u1: Matrix<T>, u2: Matrix<T>, u3: Matrix<T>) -> Result<Self> {
        let r = u1.cols();
        if u2.cols() != r || u3.cols() != r {
            return Err(SisrError::dim(format!(
                "factor column counts differ: {}, {}, {}",
                r,
                u2.cols(),
                u3.cols()
            )));
        }
        if r == 0 || u1.rows() == 0 || u2.rows() == 0 || u3.rows() == 0 {
            return Err(SisrError::dim("factors must be non-empty"));
        }
        if !(u1.is_finite() && u2.is_finite() && u3.is_finite()) {
            return Err(SisrError::param("factors contain non-finite values"));
        }
        Ok(Self { u: [u1, u2, u3] })
    }

    pub fn zeros(dims: [usize; 3], rank: usize) -> Self {
        Self {
            u: dims.map(|n| Matrix::zeros(n, rank)),
        }
    }

    pub fn rank(&self) -> usize {
        self.u[0].cols()
    }

    pub fn factor(&self, mode: Mode) -> &Matrix<T> {
        &self.u[mode.index()]
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.u[0].rows(), self.u[1].rows(), self.u[2].rows()]
    }
}

/// `X(i,j,k) = Σ_r U¹(i,r)U²(j,r)U³(k,r)`, computed as
/// `fold(U¹ · (U³ ⊙ U²)ᵀ, 1)`.
pub fn cpd_reconstruct<T: Scalar>(f: &CpdFactors<T>) -> Result<Volume3<T>> {
    let kr = khatri_rao(&f.u[2], &f.u[1])?;
    let unfolded = f.u[0].matmul(&kr.transpose())?;
    fold(&unfolded, Mode::One, f.dims())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CpdInit {
    /// Seeded Gaussian entries scaled by `(‖Y‖_F / √(R·I·J·K))^{1/3}`.
    #[default]
    SeededRandom,
    /// Leading singular vectors of the trilinearly upsampled input's
    /// unfoldings; columns beyond the available vectors are seeded random.
    HosvdOfUpsampled,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CpdConfig {
    pub rank: usize,
    pub max_sweeps: usize,
    /// Stop once the relative change of the LR residual drops below this.
    pub rel_tol: f64,
    /// Regularizer of the Khatri–Rao pseudoinverse.
    pub epsilon: f64,
    pub init: CpdInit,
    pub seed: u64,
}

impl Default for CpdConfig {
    fn default() -> Self {
        Self {
            rank: 500,
            max_sweeps: 10,
            rel_tol: 1e-4,
            epsilon: 1.0,
            init: CpdInit::SeededRandom,
            seed: 0,
        }
    }
}

impl CpdConfig {
    fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(SisrError::param("rank must be at least 1"));
        }
        if !(self.rel_tol > 0.0) {
            return Err(SisrError::param("rel_tol must be positive"));
        }
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(SisrError::param("epsilon must be nonnegative"));
        }
        Ok(())
    }
}

/// Output of [`tf_sisr`].
#[derive(Clone, Debug)]
pub struct TfResult<T> {
    pub hr: Volume3<T>,
    pub factors: CpdFactors<T>,
    /// LR residual `‖Y − [[D₁H₁U¹, D₂H₂U², D₃H₃U³]]‖_F` at initialization and
    /// after every sweep.
    pub trace: Vec<f64>,
    pub runtime: Duration,
}

/// Fits HR factors to the LR volume `y` through the degradation operators
/// and returns the reconstructed HR volume.
pub fn tf_sisr<T: Scalar>(y: &Volume3<T>, ops: &OperatorSet<T>, cfg: &CpdConfig) -> Result<TfResult<T>> {
    let start = Instant::now();
    cfg.validate()?;
    ops.check_lr(y)?;
    let lr = y.dims();
    let hr = ops.hr_dims();
    check_rank(cfg.rank, lr)?;

    let y_norm = y.frobenius_norm();
    if y_norm == T::zero() {
        let factors = CpdFactors::zeros(hr, cfg.rank);
        return Ok(TfResult {
            hr: Volume3::zeros(hr),
            factors,
            trace: vec![0.0],
            runtime: start.elapsed(),
        });
    }

    let mut u = initial_factors(y, ops, cfg)?;
    let unfoldings = Mode::ALL.map(|mode| unfold(y, mode));
    let project = |mode: Mode, f: &Matrix<T>| ops.get(mode).composite().matmul(f);
    let mut b = [project(Mode::One, &u[0])?, project(Mode::Two, &u[1])?, project(Mode::Three, &u[2])?];
    let eps = T::of(cfg.epsilon);

    let mut trace = vec![lr_residual(y, &b)?];
    for sweep in 1..=cfg.max_sweeps {
        for mode in Mode::ALL {
            let n = mode.index();
            let (lo, hi) = mode.others();
            let (lo, hi) = (lo.index(), hi.index());
            let kr = khatri_rao(&b[hi], &b[lo])?;
            let mttkrp = unfoldings[n].matmul(&kr)?;
            let mut gram = b[hi].gram().hadamard(&b[lo].gram())?;
            gram.add_diagonal(eps);
            let solved = Cholesky::new(&gram)
                .and_then(|c| c.solve(&mttkrp.transpose()))
                .map_err(|e| divergence(e, &trace, sweep))?;
            u[n] = ops.get(mode).pinv().matmul(&solved.transpose())?;
            b[n] = project(mode, &u[n])?;
        }
        let res = lr_residual(y, &b)?;
        let prev = *trace.last().expect("trace starts non-empty");
        trace.push(res);
        if !res.is_finite() || !u.iter().all(Matrix::is_finite) {
            return Err(SisrError::Divergence {
                message: format!("non-finite residual after sweep {sweep}"),
                trace,
            });
        }
        log::debug!("cpd sweep {sweep}: residual {res:.6e}");
        if res == 0.0 || (prev - res).abs() / prev.max(f64::MIN_POSITIVE) < cfg.rel_tol {
            break;
        }
    }

    let [u1, u2, u3] = u;
    let factors = CpdFactors::new(u1, u2, u3)?;
    let hr_volume = cpd_reconstruct(&factors)?;
    Ok(TfResult {
        hr: hr_volume,
        factors,
        trace,
        runtime: start.elapsed(),
    })
}

/// Fails when `rank` exceeds the column count of any LR unfolding.
pub fn check_rank(rank: usize, lr_dims: [usize; 3]) -> Result<()> {
    for mode in Mode::ALL {
        let (a, b) = mode.others();
        let cols = lr_dims[a.index()] * lr_dims[b.index()];
        if rank > cols {
            return Err(SisrError::param(format!(
                "rank {rank} exceeds the {cols} columns of the mode-{} unfolding",
                mode.number()
            )));
        }
    }
    Ok(())
}

fn divergence(err: SisrError, trace: &[f64], sweep: usize) -> SisrError {
    match err {
        SisrError::Divergence { message, .. } => SisrError::Divergence {
            message: format!("{message} during sweep {sweep}"),
            trace: trace.to_vec(),
        },
        other => other,
    }
}

fn lr_residual<T: Scalar>(y: &Volume3<T>, b: &[Matrix<T>; 3]) -> Result<f64> {
    let model = CpdFactors { u: b.clone() };
    Ok(cpd_reconstruct(&model)?.sub(y)?.frobenius_norm().as_f64())
}

fn initial_factors<T: Scalar>(y: &Volume3<T>, ops: &OperatorSet<T>, cfg: &CpdConfig) -> Result<[Matrix<T>; 3]> {
    let hr = ops.hr_dims();
    let r = cfg.rank;
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let voxels: f64 = hr.iter().map(|&n| n as f64).product();
    let scale = (y.frobenius_norm().as_f64() / (r as f64 * voxels).sqrt()).cbrt();
    let mut random = |rows: usize| {
        Matrix::from_fn(rows, r, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            T::of(z * scale)
        })
    };
    match cfg.init {
        CpdInit::SeededRandom => Ok(hr.map(&mut random)),
        CpdInit::HosvdOfUpsampled => {
            let interp = Mode::ALL.map(|mode| {
                let op = ops.get(mode);
                linear_interpolation(op.hr_len(), op.rate())
            });
            let [a, b, c] = interp;
            let up = multi_mode_product(y, [&a?, &b?, &c?])?;
            let col_scale = T::of((up.frobenius_norm().as_f64() / (r as f64).sqrt()).cbrt());
            let mut out = Vec::with_capacity(3);
            for mode in Mode::ALL {
                let (vecs, _) = left_singular(&unfold(&up, mode))?;
                let mut f = random(hr[mode.index()]);
                for c in 0..r.min(vecs.cols()) {
                    for row in 0..f.rows() {
                        f.set(row, c, vecs.get(row, c) * col_scale);
                    }
                }
                out.push(f);
            }
            let [u1, u2, u3]: [Matrix<T>; 3] = out.try_into().expect("three modes");
            Ok([u1, u2, u3])
        }
    }
}

//! Truncated higher-order SVD denoising followed by separable regularized
//! deconvolution.
//!
//! The low-resolution volume is decomposed as `Y = Σ ×₁ V₁ ×₂ V₂ ×₃ V₃`,
//! components whose mode-wise singular value falls below a threshold (or
//! outside a fixed count) are dropped, and the surviving factors are
//! premultiplied by the cached pseudoinverses so the high-resolution
//! estimate is produced by a single multilinear expansion of the truncated
//! core.

use std::time::{Duration, Instant};

use crate::error::{Result, SisrError};
use crate::linalg::left_singular;
use crate::matrix::Matrix;
use crate::operators::OperatorSet;
use crate::scalar::Scalar;
use crate::tensor::{multi_mode_product, unfold, Mode, Volume3};

/// Tucker model `core ×₁ V₁ ×₂ V₂ ×₃ V₃` plus the untruncated mode-wise
/// singular values.
#[derive(Clone, Debug)]
pub struct TuckerModel<T> {
    core: Volume3<T>,
    factors: [Matrix<T>; 3],
    sv: [Vec<T>; 3],
    clamped: bool,
}

impl<T: Scalar> TuckerModel<T> {
    pub fn core(&self) -> &Volume3<T> {
        &self.core
    }

    pub fn factor(&self, mode: Mode) -> &Matrix<T> {
        &self.factors[mode.index()]
    }

    pub fn factors(&self) -> &[Matrix<T>; 3] {
        &self.factors
    }

    /// Mode-wise singular values of the source tensor, full length,
    /// non-increasing.
    pub fn singular_values(&self, mode: Mode) -> &[T] {
        &self.sv[mode.index()]
    }

    /// Current `(R₁, R₂, R₃)`.
    pub fn ranks(&self) -> [usize; 3] {
        self.core.dims()
    }

    /// Extents of the tensor this model reconstructs.
    pub fn source_dims(&self) -> [usize; 3] {
        [self.factors[0].rows(), self.factors[1].rows(), self.factors[2].rows()]
    }

    /// Set when a threshold rule would have removed every component of some
    /// mode and one component was kept instead.
    pub fn was_clamped(&self) -> bool {
        self.clamped
    }
}

/// Truncation of one mode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ModeRule {
    /// Keep the leading `n` components.
    Count(usize),
    /// Keep components with singular value `≥ τ`.
    Threshold(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruncationRule {
    pub modes: [ModeRule; 3],
}

impl TruncationRule {
    pub fn counts(r: [usize; 3]) -> Self {
        Self {
            modes: r.map(ModeRule::Count),
        }
    }

    pub fn thresholds(t: [f64; 3]) -> Self {
        Self {
            modes: t.map(ModeRule::Threshold),
        }
    }

    /// Keeps everything.
    pub fn full() -> Self {
        Self::counts([usize::MAX; 3])
    }

    fn validate(&self) -> Result<()> {
        for rule in &self.modes {
            match *rule {
                ModeRule::Count(0) => return Err(SisrError::param("truncation count must be at least 1")),
                ModeRule::Threshold(t) if !(t >= 0.0) || !t.is_finite() => {
                    return Err(SisrError::param("truncation threshold must be nonnegative"))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Full (untruncated) higher-order SVD.
///
/// `V_n` holds the left singular vectors of the mode-n unfolding, obtained
/// from the eigenvectors of its Gram matrix, and the core is
/// `y ×₁ V₁ᵀ ×₂ V₂ᵀ ×₃ V₃ᵀ`. `SV_n(i)` is the Frobenius norm of the i-th
/// mode-n slice of the core.
pub fn hosvd<T: Scalar>(y: &Volume3<T>) -> Result<TuckerModel<T>> {
    let basis = |mode: Mode| left_singular(&unfold(y, mode)).map(|(u, _)| u);
    let (v1, (v2, v3)) = rayon::join(
        || basis(Mode::One),
        || rayon::join(|| basis(Mode::Two), || basis(Mode::Three)),
    );
    let factors = [v1?, v2?, v3?];
    let t = [factors[0].transpose(), factors[1].transpose(), factors[2].transpose()];
    let core = multi_mode_product(y, [&t[0], &t[1], &t[2]])?;
    let sv = Mode::ALL.map(|mode| slice_norms(&core, mode));
    Ok(TuckerModel {
        core,
        factors,
        sv,
        clamped: false,
    })
}

// Norms of the mode-n slices, forced non-increasing so floating-point ties
// among negligible values cannot reorder them.
fn slice_norms<T: Scalar>(core: &Volume3<T>, mode: Mode) -> Vec<T> {
    let m = unfold(core, mode);
    let mut out: Vec<T> = (0..m.rows())
        .map(|r| m.row(r).iter().map(|&v| v * v).sum::<T>().sqrt())
        .collect();
    for i in 1..out.len() {
        out[i] = out[i].min(out[i - 1]);
    }
    out
}

/// Keeps the leading components of each mode according to `rule`. The
/// truncated core equals `Y ×₁ V̄₁ᵀ ×₂ V̄₂ᵀ ×₃ V̄₃ᵀ`, which for an HOSVD
/// model is the leading sub-block of the full core.
pub fn truncate<T: Scalar>(m: &TuckerModel<T>, rule: &TruncationRule) -> Result<TuckerModel<T>> {
    rule.validate()?;
    let mut clamped = m.clamped;
    let mut keep = [0usize; 3];
    for mode in Mode::ALL {
        let n = mode.index();
        let available = m.factors[n].cols();
        keep[n] = match rule.modes[n] {
            ModeRule::Count(c) => c.min(available),
            ModeRule::Threshold(tau) => {
                let tau = T::of(tau);
                let k = m.sv[n].iter().take(available).take_while(|&&s| s >= tau).count();
                if k == 0 {
                    log::warn!(
                        "threshold {} removes every mode-{} component; keeping one",
                        tau,
                        mode.number()
                    );
                    clamped = true;
                    1
                } else {
                    k
                }
            }
        };
    }
    let core = Volume3::from_fn(keep, |i, j, k| m.core.get(i, j, k));
    let factors = Mode::ALL.map(|mode| {
        let cols: Vec<usize> = (0..keep[mode.index()]).collect();
        m.factors[mode.index()].select_columns(&cols)
    });
    Ok(TuckerModel {
        core,
        factors,
        sv: m.sv.clone(),
        clamped,
    })
}

/// `core ×₁ V₁ ×₂ V₂ ×₃ V₃`.
pub fn tucker_reconstruct<T: Scalar>(m: &TuckerModel<T>) -> Result<Volume3<T>> {
    multi_mode_product(&m.core, [&m.factors[0], &m.factors[1], &m.factors[2]])
}

/// Output of [`td_sisr`].
#[derive(Clone, Debug)]
pub struct TdResult<T> {
    pub hr: Volume3<T>,
    pub model: TuckerModel<T>,
    pub runtime: Duration,
}

impl<T> TdResult<T> {
    /// Mirrors [`TuckerModel::was_clamped`].
    pub fn clamp_warning(&self) -> bool {
        self.model.clamped
    }
}

/// Denoise `y` by truncated HOSVD, then deconvolve each mode with the cached
/// pseudoinverse. The deconvolution is folded into the factors:
/// `X̂ = Σ̄ ×₁ (P₁V̄₁) ×₂ (P₂V̄₂) ×₃ (P₃V̄₃)`.
pub fn td_sisr<T: Scalar>(
    y: &Volume3<T>,
    ops: &OperatorSet<T>,
    rule: &TruncationRule,
) -> Result<TdResult<T>> {
    let start = Instant::now();
    ops.check_lr(y)?;
    rule.validate()?;
    let model = truncate(&hosvd(y)?, rule)?;
    let lifted = Mode::ALL.map(|mode| ops.get(mode).pinv().matmul(model.factor(mode)));
    let [a, b, c] = lifted;
    let (a, b, c) = (a?, b?, c?);
    let hr = multi_mode_product(&model.core, [&a, &b, &c])?;
    Ok(TdResult {
        hr,
        model,
        runtime: start.elapsed(),
    })
}

/// One mode's singular-value series.
#[derive(Clone, Debug, PartialEq)]
pub struct SvSeries<T> {
    pub mode: Mode,
    pub values: Vec<T>,
}

/// The three singular-value spectra, for export and plotting.
pub fn sv_spectrum<T: Scalar>(m: &TuckerModel<T>) -> [SvSeries<T>; 3] {
    Mode::ALL.map(|mode| SvSeries {
        mode,
        values: m.sv[mode.index()].clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::apply_pinv_all_modes;
    use crate::phantom::gaussian_volume;

    fn rank_one(a: &[f64], b: &[f64], c: &[f64]) -> Volume3<f64> {
        Volume3::from_fn([a.len(), b.len(), c.len()], |i, j, k| a[i] * b[j] * c[k])
    }

    fn norm(v: &[f64]) -> f64 {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    #[test]
    fn rank_one_spectrum() {
        let (a, b, c) = ([1.0, -2.0, 0.5], [0.3, 1.0, 2.0, -1.0], [2.0, 1.0]);
        let x = rank_one(&a, &b, &c);
        let m = hosvd(&x).unwrap();
        let expect = norm(&a) * norm(&b) * norm(&c);
        for mode in Mode::ALL {
            let sv = m.singular_values(mode);
            assert!((sv[0] - expect).abs() < 1e-12 * expect);
            assert!(sv[1..].iter().all(|&s| s <= 1e-12));
        }
        let t = truncate(&m, &TruncationRule::counts([1, 1, 1])).unwrap();
        let back = tucker_reconstruct(&t).unwrap();
        assert!(back.relative_error(&x).unwrap() < 1e-10);
    }

    #[test]
    fn series_lengths_follow_unfolding_shape() {
        let x = gaussian_volume::<f64>([7, 2, 3], 1);
        let m = hosvd(&x).unwrap();
        let lens: Vec<usize> = sv_spectrum(&m).iter().map(|s| s.values.len()).collect();
        assert_eq!(lens, vec![6, 2, 3]);
        for s in sv_spectrum(&m) {
            assert!(s.values.windows(2).all(|w| w[0] >= w[1]));
        }
        assert!(tucker_reconstruct(&m).unwrap().relative_error(&x).unwrap() < 1e-10);
    }

    #[test]
    fn superdiagonal_core_is_fixed_point() {
        let x = Volume3::from_fn([3, 3, 3], |i, j, k| {
            if i == j && j == k {
                [5.0, 3.0, 1.0][i]
            } else {
                0.0
            }
        });
        let m = hosvd(&x).unwrap();
        assert!(m.core().relative_error(&x).unwrap() < 1e-12);
        for mode in Mode::ALL {
            assert!(m.factor(mode).sub(&Matrix::identity(3)).unwrap().frobenius_norm() < 1e-12);
        }
    }

    #[test]
    fn keep_all_is_unchanged() {
        let x = gaussian_volume::<f64>([5, 4, 6], 2);
        let m = hosvd(&x).unwrap();
        let t = truncate(&m, &TruncationRule::full()).unwrap();
        let a = tucker_reconstruct(&m).unwrap();
        let b = tucker_reconstruct(&t).unwrap();
        assert!(a.relative_error(&b).unwrap() <= 1e-12);
    }

    #[test]
    fn threshold_rule_definition() {
        let mut m = hosvd(&gaussian_volume::<f64>([2, 2, 2], 3)).unwrap();
        m.sv = [vec![10.0, 0.5], vec![10.0, 0.5], vec![10.0, 0.5]];
        let t = truncate(&m, &TruncationRule::thresholds([1.0; 3])).unwrap();
        assert_eq!(t.ranks(), [1, 1, 1]);
        assert!(!t.was_clamped());
        let t = truncate(&m, &TruncationRule::thresholds([100.0, 1.0, 0.1])).unwrap();
        assert_eq!(t.ranks(), [1, 1, 2]);
        assert!(t.was_clamped());
        assert!(truncate(&m, &TruncationRule::counts([0, 1, 1])).is_err());
    }

    #[test]
    fn zero_core_gives_zero() {
        let mut m = hosvd(&gaussian_volume::<f64>([3, 3, 3], 4)).unwrap();
        m.core = Volume3::zeros(m.core.dims());
        assert!(tucker_reconstruct(&m).unwrap().as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_pipeline() {
        let y = gaussian_volume::<f64>([6, 5, 4], 5);
        let ops = OperatorSet::identity_blur([6, 5, 4], 1, 0.0).unwrap();
        let out = td_sisr(&y, &ops, &TruncationRule::full()).unwrap();
        assert!(out.hr.relative_error(&y).unwrap() < 1e-8);
    }

    #[test]
    fn fused_path_matches_two_stage_path() {
        let y = gaussian_volume::<f64>([8, 8, 8], 6);
        let ops = OperatorSet::gaussian([16, 16, 16], [1.5; 3], 2, 0.1, 3.0).unwrap();
        let rule = TruncationRule::counts([5, 4, 6]);
        let fused = td_sisr(&y, &ops, &rule).unwrap();
        let denoised = tucker_reconstruct(&truncate(&hosvd(&y).unwrap(), &rule).unwrap()).unwrap();
        let naive = apply_pinv_all_modes(&denoised, &ops).unwrap();
        assert!(fused.hr.relative_error(&naive).unwrap() < 1e-10);
        assert_eq!(fused.hr.dims(), [16, 16, 16]);
    }

    #[test]
    fn rejects_wrong_lr_shape() {
        let ops = OperatorSet::identity_blur([4, 4, 4], 2, 1.0).unwrap();
        let err = td_sisr(&Volume3::<f64>::zeros([4, 4, 4]), &ops, &TruncationRule::full());
        assert!(matches!(err, Err(SisrError::Dimension(_))));
    }
}

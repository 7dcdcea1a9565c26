//! Separable degradation operators: sampled Gaussian kernels, circulant blur
//! matrices, decimation, and the cached regularized pseudoinverse of each
//! per-mode blur-then-decimate product.

use crate::error::{Result, SisrError};
use crate::linalg::tikhonov_pinv;
use crate::matrix::Matrix;
use crate::scalar::Scalar;
use crate::tensor::{multi_mode_product, Mode, Volume3};

/// Default kernel truncation, in standard deviations.
pub const DEFAULT_KERNEL_RADIUS: f64 = 3.0;

/// Default Tikhonov regularizer.
pub const DEFAULT_EPSILON: f64 = 1.0;

/// Symmetric, unit-sum 1D Gaussian sampled at integer offsets.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianKernel1D<T> {
    sigma: T,
    taps: Vec<T>,
}

impl<T: Scalar> GaussianKernel1D<T> {
    pub fn sigma(&self) -> T {
        self.sigma
    }

    pub fn taps(&self) -> &[T] {
        &self.taps
    }

    /// Index of the central tap.
    pub fn center(&self) -> usize {
        self.taps.len() / 2
    }

    /// A single unit tap.
    pub fn delta() -> Self {
        Self {
            sigma: T::zero(),
            taps: vec![T::one()],
        }
    }
}

/// Samples `exp(−t²/2σ²)` at `t = −h..=h` with `h = ceil(radius·σ)`, then
/// normalizes to unit sum.
pub fn gaussian_kernel<T: Scalar>(sigma: T, radius_in_sigmas: T) -> Result<GaussianKernel1D<T>> {
    if !(sigma > T::zero()) || !sigma.is_finite() {
        return Err(SisrError::param(format!("kernel sigma must be positive, got {sigma}")));
    }
    if !(radius_in_sigmas >= T::zero()) || !radius_in_sigmas.is_finite() {
        return Err(SisrError::param("kernel radius must be nonnegative"));
    }
    let half = (radius_in_sigmas * sigma)
        .ceil()
        .to_usize()
        .ok_or_else(|| SisrError::param("kernel radius out of range"))?;
    let two_var = T::of(2.0) * sigma * sigma;
    let mut taps: Vec<T> = (0..=2 * half)
        .map(|p| {
            let t = T::of(p as f64 - half as f64);
            (-(t * t) / two_var).exp()
        })
        .collect();
    let total: T = taps.iter().copied().sum();
    taps.iter_mut().for_each(|v| *v /= total);
    // exact mirror symmetry regardless of summation rounding
    for t in 0..half {
        let m = (taps[t] + taps[2 * half - t]) / T::of(2.0);
        taps[t] = m;
        taps[2 * half - t] = m;
    }
    Ok(GaussianKernel1D { sigma, taps })
}

/// How the HR grid is reduced to the LR grid.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Decimation {
    /// Keep samples 0, r, 2r, ….
    #[default]
    Pick,
    /// Average each block of r consecutive samples.
    BlockMean,
}

/// Circulant `n × n` blur matrix; row `i` is the kernel centered on `i`
/// with circular wrap-around.
pub fn circulant_blur<T: Scalar>(n: usize, kernel: &GaussianKernel1D<T>) -> Result<Matrix<T>> {
    if kernel.taps.len() > n {
        return Err(SisrError::param(format!(
            "kernel with {} taps does not fit an axis of length {n}",
            kernel.taps.len()
        )));
    }
    let c = kernel.center() as isize;
    let mut h = Matrix::zeros(n, n);
    for i in 0..n {
        for (t, &w) in kernel.taps.iter().enumerate() {
            let col = (i as isize + t as isize - c).rem_euclid(n as isize) as usize;
            h.set(i, col, h.get(i, col) + w);
        }
    }
    Ok(h)
}

/// `(n/rate) × n` decimation matrix.
pub fn decimation<T: Scalar>(n: usize, rate: usize, kind: Decimation) -> Result<Matrix<T>> {
    if rate == 0 || n % rate != 0 {
        return Err(SisrError::param(format!(
            "axis length {n} is not divisible by rate {rate}"
        )));
    }
    let rows = n / rate;
    let mut d = Matrix::zeros(rows, n);
    match kind {
        Decimation::Pick => {
            for q in 0..rows {
                d.set(q, q * rate, T::one());
            }
        }
        Decimation::BlockMean => {
            let w = T::one() / T::of(rate as f64);
            for q in 0..rows {
                for s in 0..rate {
                    d.set(q, q * rate + s, w);
                }
            }
        }
    }
    Ok(d)
}

/// Per-mode degradation `D·H` together with its regularized pseudoinverse.
#[derive(Clone, Debug)]
pub struct ModeOperator<T> {
    mode: Mode,
    hr_len: usize,
    rate: usize,
    epsilon: T,
    blur: Matrix<T>,
    down: Matrix<T>,
    composite: Matrix<T>,
    pinv: Matrix<T>,
}

impl<T: Scalar> ModeOperator<T> {
    pub fn new(
        mode: Mode,
        hr_len: usize,
        rate: usize,
        kernel: &GaussianKernel1D<T>,
        epsilon: T,
    ) -> Result<Self> {
        Self::with_decimation(mode, hr_len, rate, kernel, epsilon, Decimation::Pick)
    }

    pub fn with_decimation(
        mode: Mode,
        hr_len: usize,
        rate: usize,
        kernel: &GaussianKernel1D<T>,
        epsilon: T,
        kind: Decimation,
    ) -> Result<Self> {
        if hr_len == 0 {
            return Err(SisrError::param("axis length must be positive"));
        }
        if !(epsilon >= T::zero()) || !epsilon.is_finite() {
            return Err(SisrError::param(format!("epsilon must be nonnegative, got {epsilon}")));
        }
        let down = decimation(hr_len, rate, kind)?;
        let blur = circulant_blur(hr_len, kernel)?;
        let composite = down.matmul(&blur)?;
        let pinv = tikhonov_pinv(&composite, epsilon)?;
        Ok(Self {
            mode,
            hr_len,
            rate,
            epsilon,
            blur,
            down,
            composite,
            pinv,
        })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn hr_len(&self) -> usize {
        self.hr_len
    }

    pub fn lr_len(&self) -> usize {
        self.hr_len / self.rate
    }

    pub fn rate(&self) -> usize {
        self.rate
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    /// `H_n`, circulant.
    pub fn blur(&self) -> &Matrix<T> {
        &self.blur
    }

    /// `D_n`.
    pub fn down(&self) -> &Matrix<T> {
        &self.down
    }

    /// `D_n H_n`, shape `lr_len × hr_len`.
    pub fn composite(&self) -> &Matrix<T> {
        &self.composite
    }

    /// `(AᵀA + εI)⁻¹Aᵀ` for `A = D_n H_n`, shape `hr_len × lr_len`.
    pub fn pinv(&self) -> &Matrix<T> {
        &self.pinv
    }
}

/// The three mode operators of a separable degradation.
#[derive(Clone, Debug)]
pub struct OperatorSet<T> {
    ops: [ModeOperator<T>; 3],
}

impl<T: Scalar> OperatorSet<T> {
    pub fn new(ops: [ModeOperator<T>; 3]) -> Result<Self> {
        for (op, mode) in ops.iter().zip(Mode::ALL) {
            if op.mode != mode {
                return Err(SisrError::param(format!(
                    "operator for mode {} given in slot {}",
                    op.mode.number(),
                    mode.number()
                )));
            }
        }
        Ok(Self { ops })
    }

    /// Builds Gaussian operators for an HR volume of extent `hr_dims`.
    pub fn gaussian(
        hr_dims: [usize; 3],
        sigmas: [T; 3],
        rate: usize,
        epsilon: T,
        radius_in_sigmas: T,
    ) -> Result<Self> {
        let build = |mode: Mode| -> Result<ModeOperator<T>> {
            let n = mode.index();
            let kernel = gaussian_kernel(sigmas[n], radius_in_sigmas)?;
            ModeOperator::new(mode, hr_dims[n], rate, &kernel, epsilon)
        };
        let (a, (b, c)) = rayon::join(
            || build(Mode::One),
            || rayon::join(|| build(Mode::Two), || build(Mode::Three)),
        );
        Self::new([a?, b?, c?])
    }

    /// Same as [`OperatorSet::gaussian`] with one unit tap per mode.
    pub fn identity_blur(hr_dims: [usize; 3], rate: usize, epsilon: T) -> Result<Self> {
        let k = GaussianKernel1D::delta();
        Self::new([
            ModeOperator::new(Mode::One, hr_dims[0], rate, &k, epsilon)?,
            ModeOperator::new(Mode::Two, hr_dims[1], rate, &k, epsilon)?,
            ModeOperator::new(Mode::Three, hr_dims[2], rate, &k, epsilon)?,
        ])
    }

    pub fn get(&self, mode: Mode) -> &ModeOperator<T> {
        &self.ops[mode.index()]
    }

    pub fn as_array(&self) -> &[ModeOperator<T>; 3] {
        &self.ops
    }

    pub fn hr_dims(&self) -> [usize; 3] {
        [self.ops[0].hr_len, self.ops[1].hr_len, self.ops[2].hr_len]
    }

    pub fn lr_dims(&self) -> [usize; 3] {
        [self.ops[0].lr_len(), self.ops[1].lr_len(), self.ops[2].lr_len()]
    }

    pub(crate) fn check_lr(&self, y: &Volume3<T>) -> Result<()> {
        if y.dims() != self.lr_dims() {
            return Err(SisrError::dim(format!(
                "low-resolution volume is {:?}, operators expect {:?}",
                y.dims(),
                self.lr_dims()
            )));
        }
        Ok(())
    }

    pub(crate) fn check_hr(&self, x: &Volume3<T>) -> Result<()> {
        if x.dims() != self.hr_dims() {
            return Err(SisrError::dim(format!(
                "high-resolution volume is {:?}, operators expect {:?}",
                x.dims(),
                self.hr_dims()
            )));
        }
        Ok(())
    }

    /// `x ×₁ D₁H₁ ×₂ D₂H₂ ×₃ D₃H₃`.
    pub fn forward(&self, x: &Volume3<T>) -> Result<Volume3<T>> {
        self.check_hr(x)?;
        multi_mode_product(
            x,
            [&self.ops[0].composite, &self.ops[1].composite, &self.ops[2].composite],
        )
    }
}

/// Separable regularized deconvolution `y ×₁ P₁ ×₂ P₂ ×₃ P₃` with the cached
/// pseudoinverses.
pub fn apply_pinv_all_modes<T: Scalar>(y: &Volume3<T>, ops: &OperatorSet<T>) -> Result<Volume3<T>> {
    ops.check_lr(y)?;
    let [a, b, c] = ops.as_array();
    multi_mode_product(y, [&a.pinv, &b.pinv, &c.pinv])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_length_and_symmetry() {
        for sigma in [0.3, 1.0, 2.5, 8.0] {
            let k = gaussian_kernel(sigma, 3.0).unwrap();
            let half = (3.0f64 * sigma).ceil() as usize;
            assert_eq!(k.taps().len(), 2 * half + 1);
            let sum: f64 = k.taps().iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            let c = k.center();
            for t in 0..=half {
                assert!((k.taps()[c - t] - k.taps()[c + t]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn narrow_kernel_is_near_delta() {
        let k = gaussian_kernel(0.1, 3.0).unwrap();
        assert!(k.taps()[k.center()] >= 1.0 - 1e-10);
    }

    #[test]
    fn kernel_matches_closed_form() {
        let k = gaussian_kernel(1.0f64, 3.0).unwrap();
        let raw: Vec<f64> = (-3..=3).map(|t: i32| (-(t * t) as f64 / 2.0).exp()).collect();
        let z: f64 = raw.iter().sum();
        for (got, want) in k.taps().iter().zip(raw.iter().map(|v| v / z)) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn kernel_rejects_nonpositive_sigma() {
        assert!(matches!(gaussian_kernel(0.0, 3.0), Err(SisrError::Parameter(_))));
        assert!(gaussian_kernel(-1.0, 3.0).is_err());
    }

    #[test]
    fn operator_rejects_bad_geometry() {
        let k = gaussian_kernel(1.0, 3.0).unwrap();
        assert!(ModeOperator::new(Mode::One, 9, 2, &k, 1.0).is_err());
        assert!(ModeOperator::new(Mode::One, 6, 2, &k, 1.0).is_err()); // 7 taps > 6
    }

    #[test]
    fn decimation_rows_pick_every_rth_sample() {
        let d = decimation::<f64>(8, 2, Decimation::Pick).unwrap();
        for q in 0..4 {
            let row = d.row(q);
            assert_eq!(row.iter().filter(|&&v| v == 1.0).count(), 1);
            assert_eq!(row.iter().filter(|&&v| v == 0.0).count(), 7);
            assert_eq!(row[2 * q], 1.0);
        }
    }

    #[test]
    fn blur_is_circulant_with_unit_rows() {
        let k = gaussian_kernel(1.0, 2.0).unwrap();
        let h = circulant_blur(7, &k).unwrap();
        for i in 0..7 {
            let s: f64 = h.row(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            for j in 0..7 {
                assert_eq!(h.get(i, j), h.get((i + 1) % 7, (j + 1) % 7));
            }
        }
    }

    #[test]
    fn identity_case() {
        let k = gaussian_kernel(0.1, 3.0).unwrap();
        let op = ModeOperator::new(Mode::Two, 5, 1, &k, 0.0).unwrap();
        let eye = Matrix::identity(5);
        assert!(op.composite().sub(&eye).unwrap().frobenius_norm() < 1e-8);
        assert!(op.pinv().sub(&eye).unwrap().frobenius_norm() < 1e-8);
    }

    #[test]
    fn composite_preserves_constants() {
        let k = gaussian_kernel(1.0, 3.0).unwrap();
        let op = ModeOperator::new(Mode::One, 8, 2, &k, 1.0).unwrap();
        let out = op.composite().matvec(&[2.5; 8]).unwrap();
        assert_eq!(out.len(), 4);
        assert!(out.iter().all(|v| (*v - 2.5f64).abs() < 1e-12));
    }

    #[test]
    fn block_mean_rows() {
        let d = decimation::<f64>(6, 3, Decimation::BlockMean).unwrap();
        assert_eq!(d.row(1), &[0.0, 0.0, 0.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]);
    }

    #[test]
    fn zero_input_deconvolves_to_zero() {
        let ops = OperatorSet::gaussian([8, 8, 8], [1.0; 3], 2, 1.0, 3.0).unwrap();
        let out = apply_pinv_all_modes(&Volume3::zeros([4, 4, 4]), &ops).unwrap();
        assert_eq!(out.dims(), [8, 8, 8]);
        assert!(out.as_slice().iter().all(|&v| v == 0.0));
        assert!(apply_pinv_all_modes(&Volume3::zeros([4, 4, 3]), &ops).is_err());
    }
}

//! Dense order-3 tensors and the multilinear primitives built on them.
//!
//! Elements are stored with the first index varying fastest, then the
//! second, then the third. Mode-n unfoldings place the mode-n fibers as
//! columns in lexicographic order of the remaining indices, lowest-numbered
//! remaining mode fastest. Under this convention
//!
//! ```text
//! unfold([[U1, U2, U3]], 1) = U1 · khatri_rao(U3, U2)ᵀ
//! unfold([[U1, U2, U3]], 2) = U2 · khatri_rao(U3, U1)ᵀ
//! unfold([[U1, U2, U3]], 3) = U3 · khatri_rao(U2, U1)ᵀ
//! ```

use rayon::prelude::*;

use crate::error::{Result, SisrError};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// One of the three tensor modes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    One,
    Two,
    Three,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::One, Mode::Two, Mode::Three];

    /// Zero-based axis index.
    #[inline]
    pub fn index(self) -> usize {
        match self {
            Mode::One => 0,
            Mode::Two => 1,
            Mode::Three => 2,
        }
    }

    /// One-based mode number as used in the literature (1, 2, 3).
    pub fn number(self) -> usize {
        self.index() + 1
    }

    pub fn from_number(n: usize) -> Result<Self> {
        match n {
            1 => Ok(Mode::One),
            2 => Ok(Mode::Two),
            3 => Ok(Mode::Three),
            _ => Err(SisrError::param(format!("mode must be 1, 2 or 3, got {n}"))),
        }
    }

    /// The two other modes, lower-numbered first.
    pub fn others(self) -> (Mode, Mode) {
        match self {
            Mode::One => (Mode::Two, Mode::Three),
            Mode::Two => (Mode::One, Mode::Three),
            Mode::Three => (Mode::One, Mode::Two),
        }
    }
}

/// Extents `(I, J, K)`.
pub type Dims = [usize; 3];

/// Splits a tensor around `axis` into (stride below, extent, count above).
#[inline]
fn split(dims: Dims, axis: usize) -> (usize, usize, usize) {
    let left: usize = dims[..axis].iter().product();
    let right: usize = dims[axis + 1..].iter().product();
    (left, dims[axis], right)
}

/// Dense real third-order tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume3<T> {
    dims: Dims,
    data: Vec<T>,
}

impl<T: Scalar> Volume3<T> {
    pub fn zeros(dims: Dims) -> Self {
        Self {
            dims,
            data: vec![T::zero(); dims.iter().product()],
        }
    }

    pub fn filled(dims: Dims, value: T) -> Self {
        Self {
            dims,
            data: vec![value; dims.iter().product()],
        }
    }

    /// Wraps a buffer in i-fastest order. Rejects zero extents, length
    /// mismatches and non-finite entries.
    pub fn from_vec(dims: Dims, data: Vec<T>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(SisrError::dim(format!("extents must be positive, got {dims:?}")));
        }
        let n: usize = dims.iter().product();
        if data.len() != n {
            return Err(SisrError::dim(format!(
                "buffer of length {} does not match {dims:?}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(SisrError::param("volume contains non-finite values"));
        }
        Ok(Self { dims, data })
    }

    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(dims.iter().product());
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    data.push(f(i, j, k));
                }
            }
        }
        Self { dims, data }
    }

    #[inline]
    pub fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    pub fn dim(&self, mode: Mode) -> usize {
        self.dims[mode.index()]
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> T {
        self.data[self.offset(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: T) {
        let o = self.offset(i, j, k);
        self.data[o] = v;
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            dims: self.dims,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    fn zip_with(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.dims != other.dims {
            return Err(SisrError::dim(format!(
                "volumes differ in shape: {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        Ok(Self {
            dims: self.dims,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|v| v * s)
    }

    pub fn sum_sq(&self) -> T {
        self.data.iter().map(|&v| v * v).sum()
    }

    pub fn frobenius_norm(&self) -> T {
        frobenius_norm(self)
    }

    /// `‖self − other‖_F / ‖other‖_F`, or the absolute error when `other` is zero.
    pub fn relative_error(&self, other: &Self) -> Result<T> {
        let diff = self.sub(other)?.frobenius_norm();
        let base = other.frobenius_norm();
        Ok(if base > T::zero() { diff / base } else { diff })
    }

    pub fn min_max(&self) -> (T, T) {
        self.data.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
    }

    pub fn cast<U: Scalar>(&self) -> Volume3<U> {
        Volume3 {
            dims: self.dims,
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }
}

/// Mode-n unfolding: a `dims[mode] × (product of other dims)` matrix whose
/// columns are the mode-n fibers.
pub fn unfold<T: Scalar>(x: &Volume3<T>, mode: Mode) -> Matrix<T> {
    let (left, n, right) = split(x.dims, mode.index());
    let cols = left * right;
    let mut out = vec![T::zero(); n * cols];
    let src = x.as_slice();
    // Column index of element (l, p, r) is l + left·r.
    for r in 0..right {
        for p in 0..n {
            let base = (r * n + p) * left;
            let dst = p * cols + r * left;
            out[dst..dst + left].copy_from_slice(&src[base..base + left]);
        }
    }
    Matrix::from_vec(n, cols, out).expect("unfold shape is consistent")
}

/// Inverse of [`unfold`].
pub fn fold<T: Scalar>(m: &Matrix<T>, mode: Mode, dims: Dims) -> Result<Volume3<T>> {
    let (left, n, right) = split(dims, mode.index());
    if m.rows() != n || m.cols() != left * right {
        return Err(SisrError::dim(format!(
            "cannot fold a {}x{} matrix along mode {} into {dims:?}",
            m.rows(),
            m.cols(),
            mode.number()
        )));
    }
    if dims.contains(&0) {
        return Err(SisrError::dim("fold target has a zero extent"));
    }
    let cols = left * right;
    let mut data = vec![T::zero(); n * cols];
    let src = m.as_slice();
    for r in 0..right {
        for p in 0..n {
            let base = (r * n + p) * left;
            let s = p * cols + r * left;
            data[base..base + left].copy_from_slice(&src[s..s + left]);
        }
    }
    Ok(Volume3 { dims, data })
}

/// Mode-n product `x ×_n p`: every mode-n fiber is left-multiplied by `p`.
pub fn mode_n_product<T: Scalar>(x: &Volume3<T>, p: &Matrix<T>, mode: Mode) -> Result<Volume3<T>> {
    let axis = mode.index();
    let (left, n, right) = split(x.dims, axis);
    if p.cols() != n {
        return Err(SisrError::dim(format!(
            "mode-{} product needs a matrix with {n} columns, got {}x{}",
            mode.number(),
            p.rows(),
            p.cols()
        )));
    }
    let m = p.rows();
    if m == 0 {
        return Err(SisrError::dim("mode product with an empty operator"));
    }
    let mut dims = x.dims;
    dims[axis] = m;
    let mut data = vec![T::zero(); left * m * right];
    let src = x.as_slice();
    let slab = |(r, out): (usize, &mut [T])| {
        let x_slab = &src[r * n * left..(r + 1) * n * left];
        for q in 0..m {
            let dst = &mut out[q * left..(q + 1) * left];
            for (idx, &coef) in p.row(q).iter().enumerate() {
                if coef == T::zero() {
                    continue;
                }
                let fiber = &x_slab[idx * left..(idx + 1) * left];
                for (d, &s) in dst.iter_mut().zip(fiber) {
                    *d += coef * s;
                }
            }
        }
    };
    let chunk = (m * left).max(1);
    if left * n * m * right >= 1 << 15 && right > 1 {
        data.par_chunks_mut(chunk).enumerate().for_each(slab);
    } else if left * n * m * right >= 1 << 15 {
        // A single slab (mode three): split across output rows instead.
        data.par_chunks_mut(left.max(1)).enumerate().for_each(|(q, dst)| {
            for (idx, &coef) in p.row(q).iter().enumerate() {
                if coef == T::zero() {
                    continue;
                }
                for (d, &s) in dst.iter_mut().zip(&src[idx * left..(idx + 1) * left]) {
                    *d += coef * s;
                }
            }
        });
    } else {
        data.chunks_mut(chunk).enumerate().for_each(slab);
    }
    Ok(Volume3 { dims, data })
}

/// Applies one matrix per mode: `x ×_1 p[0] ×_2 p[1] ×_3 p[2]`.
pub fn multi_mode_product<T: Scalar>(x: &Volume3<T>, p: [&Matrix<T>; 3]) -> Result<Volume3<T>> {
    // Shrinking modes first keeps intermediates small.
    let mut order = Mode::ALL;
    order.sort_by(|a, b| {
        let ra = p[a.index()].rows() as f64 / p[a.index()].cols().max(1) as f64;
        let rb = p[b.index()].rows() as f64 / p[b.index()].cols().max(1) as f64;
        ra.partial_cmp(&rb).unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut out = mode_n_product(x, p[order[0].index()], order[0])?;
    for &mode in &order[1..] {
        out = mode_n_product(&out, p[mode.index()], mode)?;
    }
    Ok(out)
}

/// Column-wise Kronecker product. Row `ia·b.rows + ib` of column `r` holds
/// `a(ia, r)·b(ib, r)`, so the row index of `b` varies fastest.
pub fn khatri_rao<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    if a.cols() != b.cols() {
        return Err(SisrError::dim(format!(
            "khatri-rao operands have {} and {} columns",
            a.cols(),
            b.cols()
        )));
    }
    let r = a.cols();
    let mut out = Matrix::zeros(a.rows() * b.rows(), r);
    let data = out.as_mut_slice();
    for ia in 0..a.rows() {
        let a_row = a.row(ia);
        for ib in 0..b.rows() {
            let dst = &mut data[(ia * b.rows() + ib) * r..(ia * b.rows() + ib + 1) * r];
            for ((d, &x), &y) in dst.iter_mut().zip(a_row).zip(b.row(ib)) {
                *d = x * y;
            }
        }
    }
    Ok(out)
}

pub fn frobenius_norm<T: Scalar>(x: &Volume3<T>) -> T {
    x.sum_sq().sqrt()
}

//! Trilinear upsampling, the reference every super-resolution result is
//! compared against.

use crate::error::{Result, SisrError};
use crate::matrix::Matrix;
use crate::scalar::Scalar;
use crate::tensor::{multi_mode_product, Volume3};

/// `hr_len × (hr_len / rate)` linear interpolation matrix on a periodic
/// grid. LR sample `q` sits at HR index `q·rate`, matching pick decimation.
pub fn linear_interpolation<T: Scalar>(hr_len: usize, rate: usize) -> Result<Matrix<T>> {
    if rate == 0 || hr_len % rate != 0 || hr_len == 0 {
        return Err(SisrError::param(format!(
            "axis length {hr_len} is not divisible by rate {rate}"
        )));
    }
    let lr_len = hr_len / rate;
    let mut m = Matrix::zeros(hr_len, lr_len);
    for i in 0..hr_len {
        let q = i / rate;
        let frac = T::of((i % rate) as f64 / rate as f64);
        m.set(i, q, m.get(i, q) + T::one() - frac);
        let next = (q + 1) % lr_len;
        m.set(i, next, m.get(i, next) + frac);
    }
    Ok(m)
}

/// Upsamples `y` by `rate` along every mode with separable linear
/// interpolation.
pub fn trilinear_upsample<T: Scalar>(y: &Volume3<T>, rate: usize) -> Result<Volume3<T>> {
    let d = y.dims();
    let m1 = linear_interpolation(d[0] * rate, rate)?;
    let m2 = linear_interpolation(d[1] * rate, rate)?;
    let m3 = linear_interpolation(d[2] * rate, rate)?;
    multi_mode_product(y, [&m1, &m2, &m3])
}

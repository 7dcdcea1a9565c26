//! Masked PSNR, 3D structural similarity, Dice overlap and the threshold
//! segmenter used to build masks.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::degradation::DB_CAP;
use crate::error::{Result, SisrError};
use crate::scalar::Scalar;
use crate::tensor::{Dims, Volume3};

/// SSIM window standard deviation, in voxels.
pub const SSIM_SIGMA: f64 = 1.5;
/// SSIM window half-width; the window spans `2·radius + 1` voxels per axis.
pub const SSIM_RADIUS: usize = 5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Number of histogram bins used by Otsu thresholding.
pub const OTSU_BINS: usize = 256;

/// Boolean voxel mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VoxelMask {
    dims: Dims,
    data: Vec<bool>,
}

impl VoxelMask {
    pub fn new(dims: Dims, data: Vec<bool>) -> Result<Self> {
        if data.len() != dims.iter().product::<usize>() {
            return Err(SisrError::dim("mask buffer does not match its extents"));
        }
        Ok(Self { dims, data })
    }

    pub fn full(dims: Dims) -> Self {
        Self {
            dims,
            data: vec![true; dims.iter().product()],
        }
    }

    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize) -> bool) -> Self {
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

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Grows the mask by one voxel in the 26-neighbourhood.
    pub fn dilate(&self) -> Self {
        let [ni, nj, nk] = self.dims;
        let idx = |i: usize, j: usize, k: usize| i + ni * (j + nj * k);
        let mut out = vec![false; self.data.len()];
        for k in 0..nk {
            for j in 0..nj {
                for i in 0..ni {
                    if !self.data[idx(i, j, k)] {
                        continue;
                    }
                    for kk in k.saturating_sub(1)..=(k + 1).min(nk - 1) {
                        for jj in j.saturating_sub(1)..=(j + 1).min(nj - 1) {
                            for ii in i.saturating_sub(1)..=(i + 1).min(ni - 1) {
                                out[idx(ii, jj, kk)] = true;
                            }
                        }
                    }
                }
            }
        }
        Self {
            dims: self.dims,
            data: out,
        }
    }
}

fn check_pair<T: Scalar>(a: &Volume3<T>, b: &Volume3<T>, mask: &VoxelMask) -> Result<()> {
    if a.dims() != b.dims() || a.dims() != mask.dims() {
        return Err(SisrError::dim(format!(
            "metric operands differ: {:?}, {:?}, mask {:?}",
            a.dims(),
            b.dims(),
            mask.dims()
        )));
    }
    if mask.count() == 0 {
        return Err(SisrError::param("metric mask is empty"));
    }
    Ok(())
}

/// `10·log₁₀(peak² / MSE)` over the masked voxels, with `peak` the full
/// dynamic range of `reference`. Zero error reports [`DB_CAP`].
pub fn psnr<T: Scalar>(reference: &Volume3<T>, test: &Volume3<T>, mask: &VoxelMask) -> Result<f64> {
    check_pair(reference, test, mask)?;
    let (sse, n) = reference
        .as_slice()
        .iter()
        .zip(test.as_slice())
        .zip(mask.as_slice())
        .filter(|(_, &m)| m)
        .fold((0.0, 0usize), |(s, n), ((&a, &b), _)| {
            let d = a.as_f64() - b.as_f64();
            (s + d * d, n + 1)
        });
    let mse = sse / n as f64;
    if mse == 0.0 {
        return Ok(DB_CAP);
    }
    let (lo, hi) = reference.min_max();
    let peak = hi.as_f64() - lo.as_f64();
    if peak == 0.0 {
        return Err(SisrError::param("reference volume has zero dynamic range"));
    }
    Ok((10.0 * (peak * peak / mse).log10()).min(DB_CAP))
}

fn ssim_window() -> Vec<f64> {
    let r = SSIM_RADIUS as isize;
    (-r..=r)
        .map(|t| (-((t * t) as f64) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect()
}

// Gaussian-weighted local mean along one axis; taps falling outside the
// volume are dropped and the remaining weights renormalized.
fn smooth_axis(src: &[f64], dims: Dims, axis: usize, window: &[f64]) -> Vec<f64> {
    let stride = match axis {
        0 => 1,
        1 => dims[0],
        _ => dims[0] * dims[1],
    };
    let n = dims[axis];
    let r = window.len() / 2;
    let mut out = vec![0.0; src.len()];
    for (base, o) in out.iter_mut().enumerate() {
        let p = (base / stride) % n;
        let lo = p.saturating_sub(r);
        let hi = (p + r).min(n - 1);
        let mut acc = 0.0;
        let mut wsum = 0.0;
        for q in lo..=hi {
            let w = window[q + r - p];
            acc += w * src[base + q * stride - p * stride];
            wsum += w;
        }
        *o = acc / wsum;
    }
    out
}

fn local_mean(src: &[f64], dims: Dims, window: &[f64]) -> Vec<f64> {
    let a = smooth_axis(src, dims, 0, window);
    let b = smooth_axis(&a, dims, 1, window);
    smooth_axis(&b, dims, 2, window)
}

/// Per-voxel SSIM map with a separable 3D Gaussian window
/// (σ = [`SSIM_SIGMA`], radius [`SSIM_RADIUS`]).
pub fn ssim_map<T: Scalar>(reference: &Volume3<T>, test: &Volume3<T>) -> Result<Vec<f64>> {
    let dims = reference.dims();
    if test.dims() != dims {
        return Err(SisrError::dim("ssim operands differ in shape"));
    }
    let side = 2 * SSIM_RADIUS + 1;
    if dims.iter().any(|&d| d < side) {
        return Err(SisrError::param(format!(
            "volume {dims:?} is smaller than the {side}-voxel ssim window"
        )));
    }
    let (lo, hi) = reference.min_max();
    let mut range = hi.as_f64() - lo.as_f64();
    if range == 0.0 {
        range = 1.0;
    }
    let c1 = (SSIM_K1 * range).powi(2);
    let c2 = (SSIM_K2 * range).powi(2);
    let x: Vec<f64> = reference.as_slice().iter().map(|v| v.as_f64()).collect();
    let y: Vec<f64> = test.as_slice().iter().map(|v| v.as_f64()).collect();
    let window = ssim_window();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a * b).collect();
    let (mx, my) = rayon::join(|| local_mean(&x, dims, &window), || local_mean(&y, dims, &window));
    let (sxx, (syy, sxy)) = rayon::join(
        || local_mean(&xx, dims, &window),
        || rayon::join(|| local_mean(&yy, dims, &window), || local_mean(&xy, dims, &window)),
    );
    Ok((0..x.len())
        .map(|p| {
            let vx = sxx[p] - mx[p] * mx[p];
            let vy = syy[p] - my[p] * my[p];
            let cov = sxy[p] - mx[p] * my[p];
            ((2.0 * mx[p] * my[p] + c1) * (2.0 * cov + c2))
                / ((mx[p] * mx[p] + my[p] * my[p] + c1) * (vx + vy + c2))
        })
        .collect())
}

/// Mean SSIM over the masked voxels, clamped to `[0, 1]`.
pub fn ssi<T: Scalar>(reference: &Volume3<T>, test: &Volume3<T>, mask: &VoxelMask) -> Result<f64> {
    check_pair(reference, test, mask)?;
    let map = ssim_map(reference, test)?;
    let (sum, n) = map
        .iter()
        .zip(mask.as_slice())
        .filter(|(_, &m)| m)
        .fold((0.0, 0usize), |(s, n), (v, _)| (s + v, n + 1));
    Ok((sum / n as f64).clamp(0.0, 1.0))
}

/// `2|a ∩ b| / (|a| + |b|)`; two empty masks score 1.
pub fn dice(a: &VoxelMask, b: &VoxelMask) -> Result<f64> {
    if a.dims != b.dims {
        return Err(SisrError::dim("dice operands differ in shape"));
    }
    let inter = a.data.iter().zip(&b.data).filter(|(&x, &y)| x && y).count();
    let total = a.count() + b.count();
    if total == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / total as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Segmentation {
    Fixed(f64),
    Otsu,
}

/// Otsu threshold on a [`OTSU_BINS`]-bin histogram spanning the value
/// range. Returns the lower edge of the first bin of the upper class.
pub fn otsu_threshold<T: Scalar>(x: &Volume3<T>) -> Result<f64> {
    let (lo, hi) = x.min_max();
    let (lo, hi) = (lo.as_f64(), hi.as_f64());
    if !(hi > lo) {
        return Err(SisrError::param("otsu needs a non-constant volume"));
    }
    let width = (hi - lo) / OTSU_BINS as f64;
    let mut hist = [0usize; OTSU_BINS];
    for v in x.as_slice() {
        let b = (((v.as_f64() - lo) / width) as usize).min(OTSU_BINS - 1);
        hist[b] += 1;
    }
    let total = x.len() as f64;
    let center = |b: usize| lo + (b as f64 + 0.5) * width;
    let grand: f64 = hist.iter().enumerate().map(|(b, &c)| c as f64 * center(b)).sum();
    let (mut w0, mut s0) = (0.0, 0.0);
    let mut best = (f64::NEG_INFINITY, 0usize);
    for (b, &c) in hist.iter().enumerate().take(OTSU_BINS - 1) {
        w0 += c as f64;
        s0 += c as f64 * center(b);
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let between = w0 * w1 * (s0 / w0 - (grand - s0) / w1).powi(2);
        if between > best.0 {
            best = (between, b);
        }
    }
    Ok(lo + (best.1 + 1) as f64 * width)
}

/// Voxels at or above the chosen threshold.
pub fn threshold_segment<T: Scalar>(x: &Volume3<T>, method: Segmentation) -> Result<VoxelMask> {
    let t = match method {
        Segmentation::Fixed(t) => t,
        Segmentation::Otsu => otsu_threshold(x)?,
    };
    Ok(VoxelMask {
        dims: x.dims(),
        data: x.as_slice().iter().map(|v| v.as_f64() >= t).collect(),
    })
}

/// Mask used for experiment scoring: Otsu on the reference, dilated by one voxel.
pub fn otsu_dilate1<T: Scalar>(reference: &Volume3<T>) -> Result<VoxelMask> {
    Ok(threshold_segment(reference, Segmentation::Otsu)?.dilate())
}

/// One row of a results table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub psnr_db: f64,
    pub ssi: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dice: Option<f64>,
    pub runtime_s: f64,
    #[serde(flatten)]
    pub params: BTreeMap<String, serde_json::Value>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(dims: Dims) -> Volume3<f64> {
        Volume3::from_fn(dims, |i, j, k| ((i * 7 + j * 3 + k * 5) % 17) as f64 / 16.0)
    }

    #[test]
    fn psnr_cap_and_formula() {
        let r = ramp([12, 12, 12]);
        let m = VoxelMask::full(r.dims());
        assert_eq!(psnr(&r, &r, &m).unwrap(), DB_CAP);
        // binary reference, uniform error 0.1 → MSE 0.01 → 20 dB
        let b = Volume3::from_fn([4, 4, 4], |i, _, _| (i % 2) as f64);
        let t = b.map(|v| v + 0.1);
        let got = psnr(&b, &t, &VoxelMask::full([4, 4, 4])).unwrap();
        assert!((got - 20.0).abs() < 1e-9);
    }

    #[test]
    fn psnr_rejects_empty_mask() {
        let r = ramp([4, 4, 4]);
        let m = VoxelMask::new([4, 4, 4], vec![false; 64]).unwrap();
        assert!(matches!(psnr(&r, &r, &m), Err(SisrError::Parameter(_))));
    }

    #[test]
    fn ssi_identity_and_offset() {
        let r = ramp([12, 12, 12]);
        let m = VoxelMask::full(r.dims());
        assert!((ssi(&r, &r, &m).unwrap() - 1.0).abs() < 1e-12);
        assert!(ssi(&r, &r.map(|v| v + 5.0), &m).unwrap() < 1.0);
        assert!(ssi(&ramp([10, 12, 12]), &ramp([10, 12, 12]), &VoxelMask::full([10, 12, 12])).is_err());
    }

    #[test]
    fn dice_cases() {
        let d = [10, 10, 2];
        let a = VoxelMask::from_fn(d, |i, _, k| k == 0 && i < 10);
        let b = VoxelMask::from_fn(d, |i, _, k| k == 0 && i < 5 || k == 1 && i < 5);
        assert_eq!(a.count(), 100);
        assert_eq!(b.count(), 100);
        assert_eq!(dice(&a, &a).unwrap(), 1.0);
        assert_eq!(dice(&a, &b).unwrap(), 0.5);
        assert_eq!(dice(&a, &b).unwrap(), dice(&b, &a).unwrap());
        let c = VoxelMask::from_fn(d, |_, _, k| k == 1);
        assert_eq!(dice(&a, &c).unwrap(), 0.0);
        let empty = VoxelMask::new(d, vec![false; 200]).unwrap();
        assert_eq!(dice(&empty, &empty).unwrap(), 1.0);
    }

    #[test]
    fn fixed_threshold_cases() {
        let x = Volume3::from_fn([4, 4, 4], |i, j, _| if (i + j) % 3 == 0 { 10.0 } else { 0.0 });
        let m = threshold_segment(&x, Segmentation::Fixed(5.0)).unwrap();
        for (v, b) in x.as_slice().iter().zip(m.as_slice()) {
            assert_eq!(*v == 10.0, *b);
        }
        let z = Volume3::<f64>::zeros([3, 3, 3]);
        assert_eq!(threshold_segment(&z, Segmentation::Fixed(1.0)).unwrap().count(), 0);
        assert!(threshold_segment(&z, Segmentation::Otsu).is_err());
    }

    #[test]
    fn dilation_grows_single_voxel_to_cube() {
        let m = VoxelMask::from_fn([5, 5, 5], |i, j, k| (i, j, k) == (2, 2, 2));
        assert_eq!(m.dilate().count(), 27);
        let corner = VoxelMask::from_fn([5, 5, 5], |i, j, k| (i, j, k) == (0, 0, 0));
        assert_eq!(corner.dilate().count(), 8);
    }

    #[test]
    fn report_serializes_flat() {
        let mut params = BTreeMap::new();
        params.insert("mask_mode".to_string(), serde_json::json!("otsu-dilate1"));
        let r = MetricReport {
            psnr_db: 30.0,
            ssi: 0.9,
            dice: None,
            runtime_s: 1.5,
            params,
        };
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(v["mask_mode"], "otsu-dilate1");
        assert!(v.get("dice").is_none());
        let back: MetricReport = serde_json::from_value(v).unwrap();
        assert_eq!(back, r);
    }
}

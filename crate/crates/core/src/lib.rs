//! Single-image super-resolution of 3D volumes with tensor factorizations.
//!
//! Two pipelines share one separable degradation model (per-mode circulant
//! Gaussian blur followed by decimation):
//!
//! * [`cpd::tf_sisr`] fits a rank-R canonical polyadic model whose factors
//!   live on the high-resolution grid, solving jointly for denoising and
//!   deconvolution by alternating least squares.
//! * [`tucker::td_sisr`] denoises the low-resolution volume with a truncated
//!   higher-order SVD and then applies a Tikhonov-regularized pseudoinverse
//!   along each mode.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix it to `f64`, which is what the command-line tool uses.

pub mod baseline;
pub mod cpd;
pub mod degradation;
pub mod error;
pub mod io;
pub mod linalg;
pub mod matrix;
pub mod metrics;
pub mod operators;
pub mod phantom;
pub mod scalar;
pub mod tensor;
pub mod tucker;

pub use error::{FormatError, Result, SisrError};
pub use matrix::Matrix;
pub use scalar::Scalar;
pub use tensor::{Dims, Mode, Volume3};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub type Volume = Volume3<f64>;
pub type VolumeF32 = Volume3<f32>;
pub type Mat = Matrix<f64>;
pub type MatF32 = Matrix<f32>;
pub type Operators = operators::OperatorSet<f64>;
pub type ModeOp = operators::ModeOperator<f64>;
pub type Factors = cpd::CpdFactors<f64>;
pub type Tucker = tucker::TuckerModel<f64>;

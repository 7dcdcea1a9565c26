use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "sisr", version, about = "Tensor-factorization super-resolution for 3D volumes")]
pub struct Cli {
    /// Cap on worker threads used by the numeric kernels.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Storage precision of written volumes.
    #[arg(long, global = true, value_enum, default_value_t = DtypeArg::F64)]
    pub dtype: DtypeArg,

    /// Where to write the run manifest (default: `<out>.manifest.json`).
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded synthetic volume.
    Phantom(PhantomArgs),
    /// Blur, decimate and add noise to a high-resolution volume.
    Degrade(DegradeArgs),
    /// Super-resolve with the CPD/ALS pipeline.
    #[command(name = "sr-cpd")]
    SrCpd(SrCpdArgs),
    /// Super-resolve with truncated HOSVD denoising plus separable deconvolution.
    #[command(name = "sr-tucker")]
    SrTucker(SrTuckerArgs),
    /// Trilinear upsampling baseline.
    #[command(name = "sr-trilinear")]
    SrTrilinear(SrTrilinearArgs),
    /// Score a volume against a reference.
    Evaluate(EvaluateArgs),
    /// Export the mode-wise singular values of a volume as CSV.
    #[command(name = "sv-spectrum")]
    SvSpectrum(SvSpectrumArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DtypeArg {
    F32,
    F64,
}

/// Either one value applied to all three modes or three comma-separated values.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Triple<T>(pub [T; 3]);

impl<T: FromStr + Copy> FromStr for Triple<T>
where
    T::Err: std::fmt::Display,
{
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<T> = s
            .split(',')
            .map(|p| p.trim().parse::<T>().map_err(|e| format!("{p:?}: {e}")))
            .collect::<Result<_, _>>()?;
        match parts.as_slice() {
            [v] => Ok(Triple([*v; 3])),
            [a, b, c] => Ok(Triple([*a, *b, *c])),
            _ => Err(format!("expected 1 or 3 comma-separated values, got {}", parts.len())),
        }
    }
}

/// Blur and sampling parameters shared by every command that needs the
/// degradation operators.
#[derive(Debug, Args, Clone)]
pub struct OperatorArgs {
    /// Gaussian blur standard deviation per mode, in HR voxels.
    #[arg(long, default_value = "8,8,8")]
    pub sigma: Triple<f64>,
    /// Integer downsampling rate.
    #[arg(long, default_value_t = 2)]
    pub rate: usize,
    /// Kernel truncation radius, in standard deviations.
    #[arg(long = "kernel-radius", default_value_t = 3.0)]
    pub kernel_radius: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PhantomKind {
    Smooth,
    LowRank,
}

#[derive(Debug, Args)]
pub struct PhantomArgs {
    #[arg(long, default_value = "64,64,64")]
    pub dims: Triple<usize>,
    #[arg(long, value_enum, default_value_t = PhantomKind::Smooth)]
    pub kind: PhantomKind,
    /// Multilinear ranks for `--kind low-rank`.
    #[arg(long, default_value = "4,4,4")]
    pub ranks: Triple<usize>,
    /// Multiplies every voxel.
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DecimationArg {
    Pick,
    BlockMean,
}

#[derive(Debug, Args)]
pub struct DegradeArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[command(flatten)]
    pub ops: OperatorArgs,
    /// Target SNR in dB; omit for a noiseless result.
    #[arg(long)]
    pub snr: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = DecimationArg::Pick)]
    pub decimation: DecimationArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    Random,
    Hosvd,
}

#[derive(Debug, Args)]
pub struct SrCpdArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[command(flatten)]
    pub ops: OperatorArgs,
    /// CPD rank R.
    #[arg(long, default_value_t = 500)]
    pub ranks: usize,
    /// Tikhonov regularizer for both pseudoinverses.
    #[arg(long, default_value_t = 1.0)]
    pub epsilon: f64,
    #[arg(long = "max-sweeps", default_value_t = 10)]
    pub max_sweeps: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    #[arg(long, value_enum, default_value_t = InitArg::Random)]
    pub init: InitArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Residual trace CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SrTuckerArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[command(flatten)]
    pub ops: OperatorArgs,
    /// Components kept per mode.
    #[arg(long, conflicts_with = "sv_threshold")]
    pub ranks: Option<Triple<usize>>,
    /// Keep components whose mode-wise singular value is at least this.
    #[arg(long = "sv-threshold")]
    pub sv_threshold: Option<Triple<f64>>,
    #[arg(long, default_value_t = 1.0)]
    pub epsilon: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// Singular-value spectra CSV.
    #[arg(long = "sv-csv")]
    pub sv_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SrTrilinearArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub rate: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MaskMode {
    /// Otsu threshold of the reference, dilated by one voxel.
    #[value(name = "otsu-dilate1")]
    OtsuDilate1,
    Otsu,
    Full,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long = "mask-mode", value_enum, default_value_t = MaskMode::OtsuDilate1)]
    pub mask_mode: MaskMode,
    /// Segment both volumes (`otsu` or `fixed:<t>`) and report their Dice overlap.
    #[arg(long)]
    pub segment: Option<SegmentArg>,
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SegmentArg {
    Otsu,
    Fixed(f64),
}

impl FromStr for SegmentArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "otsu" {
            return Ok(SegmentArg::Otsu);
        }
        match s.strip_prefix("fixed:") {
            Some(t) => t
                .parse()
                .map(SegmentArg::Fixed)
                .map_err(|e| format!("bad threshold {t:?}: {e}")),
            None => Err(format!("expected `otsu` or `fixed:<t>`, got {s:?}")),
        }
    }
}

#[derive(Debug, Args)]
pub struct SvSpectrumArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Manifest written by an earlier run.
    #[arg(long = "from")]
    pub from: PathBuf,
}

//! On-disk formats: `.t3r` volumes with a JSON sidecar, CSV series and run
//! manifests.
//!
//! A volume `name.t3r` holds raw little-endian scalars, first index fastest.
//! Its header lives next to it in `name.t3r.json`:
//!
//! ```json
//! {"dims": [I, J, K], "dtype": "f64", "order": "i-fastest",
//!  "voxel_size": [1.0, 1.0, 1.0], "provenance": {}}
//! ```
//!
//! Files are written to a temporary sibling and renamed into place, so a
//! failed run never leaves a truncated payload behind.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{FormatError, Result, SisrError};
use crate::scalar::Scalar;
use crate::tensor::{Mode, Volume3};
use crate::tucker::SvSeries;

pub const ORDER_I_FASTEST: &str = "i-fastest";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    #[default]
    F64,
}

impl Dtype {
    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "f32" => Ok(Dtype::F32),
            "f64" => Ok(Dtype::F64),
            other => Err(SisrError::param(format!("unknown dtype {other:?}"))),
        }
    }
}

/// Contents of the `.t3r.json` sidecar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeHeader {
    pub dims: [usize; 3],
    pub dtype: String,
    pub order: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub voxel_size: Option<[f64; 3]>,
    #[serde(default)]
    pub provenance: BTreeMap<String, serde_json::Value>,
}

impl VolumeHeader {
    pub fn new(dims: [usize; 3], dtype: Dtype) -> Self {
        Self {
            dims,
            dtype: match dtype {
                Dtype::F32 => "f32".into(),
                Dtype::F64 => "f64".into(),
            },
            order: ORDER_I_FASTEST.into(),
            voxel_size: None,
            provenance: BTreeMap::new(),
        }
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn io_err(path: &Path, source: std::io::Error) -> SisrError {
    SisrError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn format_err(path: &Path, kind: FormatError) -> SisrError {
    SisrError::Format {
        path: path.display().to_string(),
        kind,
    }
}

/// Writes `bytes` to a temporary sibling of `path`, then renames it.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp-{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(io_err(path, e));
    }
    Ok(())
}

/// Stores `x` at `path` (payload) and `path.json` (header). The header's
/// `dims`, `dtype` and `order` are overwritten from `x` and `dtype`.
pub fn write_volume<T: Scalar>(x: &Volume3<T>, path: &Path, dtype: Dtype, mut header: VolumeHeader) -> Result<()> {
    header.dims = x.dims();
    header.dtype = VolumeHeader::new(x.dims(), dtype).dtype;
    header.order = ORDER_I_FASTEST.into();
    let mut payload = Vec::with_capacity(x.len() * dtype.size());
    match dtype {
        Dtype::F64 => x
            .as_slice()
            .iter()
            .for_each(|v| payload.extend_from_slice(&v.as_f64().to_le_bytes())),
        Dtype::F32 => x
            .as_slice()
            .iter()
            .for_each(|v| payload.extend_from_slice(&(v.as_f64() as f32).to_le_bytes())),
    }
    let json = serde_json::to_vec_pretty(&header)
        .map_err(|e| format_err(path, FormatError::BadHeader(e.to_string())))?;
    write_atomic(path, &payload)?;
    write_atomic(&sidecar_path(path), &json)
}

pub fn read_header(path: &Path) -> Result<VolumeHeader> {
    let side = sidecar_path(path);
    let text = match fs::read(&side) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(format_err(path, FormatError::MissingSidecar))
        }
        Err(e) => return Err(io_err(&side, e)),
    };
    let header: VolumeHeader =
        serde_json::from_slice(&text).map_err(|e| format_err(path, FormatError::BadHeader(e.to_string())))?;
    if header.dims.contains(&0) {
        return Err(format_err(path, FormatError::BadHeader("dims must be positive".into())));
    }
    if header.order != ORDER_I_FASTEST {
        return Err(format_err(
            path,
            FormatError::BadHeader(format!("unsupported order {:?}", header.order)),
        ));
    }
    Ok(header)
}

/// Loads a volume and its header.
pub fn read_volume<T: Scalar>(path: &Path) -> Result<(Volume3<T>, VolumeHeader)> {
    let header = read_header(path)?;
    let dtype = match header.dtype.as_str() {
        "f32" => Dtype::F32,
        "f64" => Dtype::F64,
        other => return Err(format_err(path, FormatError::UnknownDtype(other.into()))),
    };
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let n: usize = header.dims.iter().product();
    let expected = (n * dtype.size()) as u64;
    if bytes.len() as u64 != expected {
        return Err(format_err(
            path,
            FormatError::LengthMismatch {
                expected,
                actual: bytes.len() as u64,
            },
        ));
    }
    let data: Vec<T> = match dtype {
        Dtype::F64 => bytes
            .chunks_exact(8)
            .map(|c| T::of(f64::from_le_bytes(c.try_into().expect("8-byte chunk"))))
            .collect(),
        Dtype::F32 => bytes
            .chunks_exact(4)
            .map(|c| T::of(f32::from_le_bytes(c.try_into().expect("4-byte chunk")) as f64))
            .collect(),
    };
    let x = Volume3::from_vec(header.dims, data)?;
    Ok((x, header))
}

/// C-style `%.17g` rendering.
pub fn fmt_g17(v: f64) -> String {
    const P: i32 = 17;
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{:.*e}", (P - 1) as usize, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= P {
        let m = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        strip_zeros(&format!("{:.*}", (P - 1 - exp) as usize, v)).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Residual trace as `sweep,residual`.
pub fn write_trace_csv(path: &Path, trace: &[f64]) -> Result<()> {
    let mut out = String::from("sweep,residual\n");
    for (i, r) in trace.iter().enumerate() {
        out.push_str(&format!("{i},{}\n", fmt_g17(*r)));
    }
    write_atomic(path, out.as_bytes())
}

/// Singular-value spectra as `mode,index,sv,log10_sv`; indices are 1-based.
pub fn write_sv_csv<T: Scalar>(path: &Path, spectra: &[SvSeries<T>]) -> Result<()> {
    let mut out = String::from("mode,index,sv,log10_sv\n");
    for s in spectra {
        for (i, v) in s.values.iter().enumerate() {
            let v = v.as_f64();
            out.push_str(&format!(
                "{},{},{},{}\n",
                s.mode.number(),
                i + 1,
                fmt_g17(v),
                fmt_g17(v.log10())
            ));
        }
    }
    write_atomic(path, out.as_bytes())
}

/// Parses a file written by [`write_sv_csv`] back into per-mode series.
pub fn read_sv_csv(path: &Path) -> Result<Vec<SvSeries<f64>>> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut series: Vec<SvSeries<f64>> = Mode::ALL
        .iter()
        .map(|&mode| SvSeries { mode, values: Vec::new() })
        .collect();
    for (n, line) in text.lines().enumerate().skip(1) {
        let bad = || format_err(path, FormatError::BadHeader(format!("line {}: {line:?}", n + 1)));
        let mut cols = line.split(',');
        let mode: usize = cols.next().and_then(|c| c.parse().ok()).ok_or_else(bad)?;
        let _index = cols.next().ok_or_else(bad)?;
        let sv: f64 = cols.next().and_then(|c| c.parse().ok()).ok_or_else(bad)?;
        let mode = Mode::from_number(mode).map_err(|_| bad())?;
        series[mode.index()].values.push(sv);
    }
    Ok(series)
}

/// Everything needed to replay a command-line run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Full argument vector, program name excluded.
    pub args: Vec<String>,
    pub params: BTreeMap<String, serde_json::Value>,
    pub seeds: BTreeMap<String, u64>,
    pub timings_s: BTreeMap<String, f64>,
    pub outputs: Vec<String>,
    pub library_version: String,
}

impl RunManifest {
    pub fn new(command: &str, args: Vec<String>) -> Self {
        Self {
            command: command.into(),
            args,
            params: BTreeMap::new(),
            seeds: BTreeMap::new(),
            timings_s: BTreeMap::new(),
            outputs: Vec::new(),
            library_version: crate::VERSION.into(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_vec_pretty(self)
            .map_err(|e| format_err(path, FormatError::BadHeader(e.to_string())))?;
        write_atomic(path, &json)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| format_err(path, FormatError::BadHeader(e.to_string())))
    }
}

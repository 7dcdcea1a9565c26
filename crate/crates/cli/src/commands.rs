use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Parser;
use serde_json::{json, Value};

use sisr_core::baseline::trilinear_upsample;
use sisr_core::cpd::{check_rank, tf_sisr, CpdConfig, CpdInit};
use sisr_core::degradation::{degrade, DegradationSpec, NOISE_GENERATOR};
use sisr_core::io::{
    read_header, read_volume, write_sv_csv, write_trace_csv, write_volume, Dtype, RunManifest, VolumeHeader,
};
use sisr_core::metrics::{
    dice, otsu_dilate1, psnr, ssi, threshold_segment, MetricReport, Segmentation, VoxelMask,
};
use sisr_core::operators::{gaussian_kernel, Decimation, ModeOperator, OperatorSet};
use sisr_core::phantom::{low_rank_phantom, smooth_phantom};
use sisr_core::tucker::{hosvd, sv_spectrum, td_sisr, TruncationRule};
use sisr_core::{Mode, Result, Scalar, SisrError, Volume3};

use crate::args::*;

fn param(msg: impl Into<String>) -> SisrError {
    SisrError::Parameter(msg.into())
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

/// Shared bookkeeping for one invocation.
struct Run {
    manifest: RunManifest,
    manifest_path: PathBuf,
    dtype: Dtype,
}

impl Run {
    fn new(cli: &Cli, command: &str, args: Vec<String>, primary_out: &Path) -> Self {
        let manifest_path = cli.manifest.clone().unwrap_or_else(|| {
            let mut s = primary_out.as_os_str().to_owned();
            s.push(".manifest.json");
            PathBuf::from(s)
        });
        let dtype = match cli.dtype {
            DtypeArg::F32 => Dtype::F32,
            DtypeArg::F64 => Dtype::F64,
        };
        let mut manifest = RunManifest::new(command, args);
        manifest.params.insert("dtype".into(), json!(format!("{dtype:?}").to_lowercase()));
        if let Some(n) = cli.threads {
            manifest.params.insert("threads".into(), json!(n));
        }
        Self {
            manifest,
            manifest_path,
            dtype,
        }
    }

    fn param(&mut self, key: &str, v: Value) {
        self.manifest.params.insert(key.into(), v);
    }

    /// Header provenance: the command, its parameters and seeds.
    fn header(&self, dims: [usize; 3], runtime_s: f64) -> VolumeHeader {
        let mut h = VolumeHeader::new(dims, self.dtype);
        h.provenance.insert("command".into(), json!(self.manifest.command));
        h.provenance.insert("params".into(), json!(self.manifest.params));
        h.provenance.insert("seeds".into(), json!(self.manifest.seeds));
        h.provenance.insert("runtime_s".into(), json!(runtime_s));
        h.provenance.insert("library_version".into(), json!(sisr_core::VERSION));
        h
    }

    fn write<T: Scalar>(&mut self, x: &Volume3<T>, path: &Path, runtime_s: f64) -> Result<()> {
        let h = self.header(x.dims(), runtime_s);
        write_volume(x, path, self.dtype, h)?;
        self.manifest.outputs.push(path_str(path));
        Ok(())
    }

    fn finish(mut self, total: Instant) -> Result<()> {
        self.manifest.timings_s.insert("total".into(), total.elapsed().as_secs_f64());
        self.manifest.save(&self.manifest_path)
    }
}

pub fn run(cli: &Cli, args: Vec<String>) -> Result<()> {
    match &cli.command {
        Command::Phantom(a) => phantom(cli, a, args),
        Command::Degrade(a) => degrade_cmd(cli, a, args),
        Command::SrCpd(a) => sr_cpd(cli, a, args),
        Command::SrTucker(a) => sr_tucker(cli, a, args),
        Command::SrTrilinear(a) => sr_trilinear(cli, a, args),
        Command::Evaluate(a) => evaluate(cli, a, args),
        Command::SvSpectrum(a) => sv_spectrum_cmd(cli, a, args),
        Command::Replay(a) => replay(a),
    }
}

fn check_ops(ops: &OperatorArgs) -> Result<()> {
    if ops.sigma.0.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(param("--sigma values must be positive and finite"));
    }
    if ops.rate == 0 {
        return Err(param("--rate must be at least 1"));
    }
    if !(ops.kernel_radius.is_finite() && ops.kernel_radius > 0.0) {
        return Err(param("--kernel-radius must be positive"));
    }
    Ok(())
}

fn check_epsilon(eps: f64) -> Result<()> {
    if !(eps.is_finite() && eps >= 0.0) {
        return Err(param("--epsilon must be finite and non-negative"));
    }
    Ok(())
}

fn record_ops(run: &mut Run, ops: &OperatorArgs) {
    run.param("sigma", json!(ops.sigma.0));
    run.param("rate", json!(ops.rate));
    run.param("kernel_radius", json!(ops.kernel_radius));
}

fn build_ops<T: Scalar>(
    hr_dims: [usize; 3],
    ops: &OperatorArgs,
    epsilon: f64,
    kind: Decimation,
) -> Result<OperatorSet<T>> {
    if kind == Decimation::Pick {
        return OperatorSet::gaussian(
            hr_dims,
            ops.sigma.0.map(T::of),
            ops.rate,
            T::of(epsilon),
            T::of(ops.kernel_radius),
        );
    }
    let mut built = Vec::with_capacity(3);
    for mode in Mode::ALL {
        let n = mode.index();
        let k = gaussian_kernel(T::of(ops.sigma.0[n]), T::of(ops.kernel_radius))?;
        built.push(ModeOperator::with_decimation(mode, hr_dims[n], ops.rate, &k, T::of(epsilon), kind)?);
    }
    let [a, b, c]: [ModeOperator<T>; 3] = built.try_into().map_err(|_| param("operator construction"))?;
    OperatorSet::new([a, b, c])
}

fn hr_dims_of(lr: [usize; 3], rate: usize) -> [usize; 3] {
    lr.map(|n| n * rate)
}

fn phantom(cli: &Cli, a: &PhantomArgs, args: Vec<String>) -> Result<()> {
    let t0 = Instant::now();
    if a.dims.0.contains(&0) {
        return Err(param("--dims must be positive"));
    }
    if !a.scale.is_finite() {
        return Err(param("--scale must be finite"));
    }
    let mut run = Run::new(cli, "phantom", args, &a.out);
    run.param("dims", json!(a.dims.0));
    run.param("kind", json!(format!("{:?}", a.kind).to_lowercase()));
    run.param("scale", json!(a.scale));
    run.manifest.seeds.insert("phantom".into(), a.seed);
    let x: Volume3<f64> = match a.kind {
        PhantomKind::Smooth => smooth_phantom(a.dims.0, a.seed),
        PhantomKind::LowRank => {
            if a.ranks.0.iter().zip(a.dims.0).any(|(&r, n)| r == 0 || r > n) {
                return Err(param("--ranks must lie in 1..=dims per mode"));
            }
            run.param("ranks", json!(a.ranks.0));
            low_rank_phantom(a.dims.0, a.ranks.0, a.seed)
        }
    };
    let x = x.scale(a.scale);
    let dt = t0.elapsed().as_secs_f64();
    run.write(&x, &a.out, dt)?;
    run.finish(t0)
}

fn degrade_cmd(cli: &Cli, a: &DegradeArgs, args: Vec<String>) -> Result<()> {
    match cli.dtype {
        DtypeArg::F32 => degrade_typed::<f32>(cli, a, args),
        DtypeArg::F64 => degrade_typed::<f64>(cli, a, args),
    }
}

fn degrade_typed<T: Scalar>(cli: &Cli, a: &DegradeArgs, args: Vec<String>) -> Result<()> {
    let t0 = Instant::now();
    check_ops(&a.ops)?;
    let spec = DegradationSpec {
        sigmas: a.ops.sigma.0,
        rate: a.ops.rate,
        snr_db: a.snr,
        seed: a.seed,
    };
    spec.validate()?;
    let hdr = read_header(&a.input)?;
    if hdr.dims.iter().any(|n| n % a.ops.rate != 0) {
        return Err(SisrError::Dimension(format!(
            "input dims {:?} are not divisible by rate {}",
            hdr.dims, a.ops.rate
        )));
    }
    let kind = match a.decimation {
        DecimationArg::Pick => Decimation::Pick,
        DecimationArg::BlockMean => Decimation::BlockMean,
    };
    let mut run = Run::new(cli, "degrade", args, &a.out);
    record_ops(&mut run, &a.ops);
    run.param("snr_db", json!(a.snr));
    run.param("decimation", json!(format!("{:?}", a.decimation).to_lowercase()));
    run.param("noise_generator", json!(NOISE_GENERATOR));
    run.param("input", json!(path_str(&a.input)));
    run.manifest.seeds.insert("noise".into(), a.seed);

    let ops: OperatorSet<T> = build_ops(hdr.dims, &a.ops, 1.0, kind)?;
    let (x, _) = read_volume::<T>(&a.input)?;
    let t = Instant::now();
    let y = degrade(&x, &spec, &ops)?;
    let dt = t.elapsed().as_secs_f64();
    run.manifest.timings_s.insert("degrade".into(), dt);
    run.write(&y, &a.out, dt)?;
    run.finish(t0)
}

fn sr_cpd(cli: &Cli, a: &SrCpdArgs, args: Vec<String>) -> Result<()> {
    match cli.dtype {
        DtypeArg::F32 => sr_cpd_typed::<f32>(cli, a, args),
        DtypeArg::F64 => sr_cpd_typed::<f64>(cli, a, args),
    }
}

fn sr_cpd_typed<T: Scalar>(cli: &Cli, a: &SrCpdArgs, args: Vec<String>) -> Result<()> {
    let t0 = Instant::now();
    check_ops(&a.ops)?;
    check_epsilon(a.epsilon)?;
    if a.max_sweeps == 0 {
        return Err(param("--max-sweeps must be at least 1"));
    }
    if !(a.tol.is_finite() && a.tol >= 0.0) {
        return Err(param("--tol must be finite and non-negative"));
    }
    let hdr = read_header(&a.input)?;
    check_rank(a.ranks, hdr.dims)?;
    let cfg = CpdConfig {
        rank: a.ranks,
        max_sweeps: a.max_sweeps,
        rel_tol: a.tol,
        epsilon: a.epsilon,
        init: match a.init {
            InitArg::Random => CpdInit::SeededRandom,
            InitArg::Hosvd => CpdInit::HosvdOfUpsampled,
        },
        seed: a.seed,
    };
    let mut run = Run::new(cli, "sr-cpd", args, &a.out);
    record_ops(&mut run, &a.ops);
    run.param("rank", json!(a.ranks));
    run.param("epsilon", json!(a.epsilon));
    run.param("max_sweeps", json!(a.max_sweeps));
    run.param("tol", json!(a.tol));
    run.param("init", json!(format!("{:?}", a.init).to_lowercase()));
    run.param("input", json!(path_str(&a.input)));
    run.manifest.seeds.insert("init".into(), a.seed);

    let ops: OperatorSet<T> = build_ops(hr_dims_of(hdr.dims, a.ops.rate), &a.ops, a.epsilon, Decimation::Pick)?;
    let (y, _) = read_volume::<T>(&a.input)?;
    let res = match tf_sisr(&y, &ops, &cfg) {
        Ok(r) => r,
        Err(e) => {
            if let (SisrError::Divergence { trace, .. }, Some(p)) = (&e, &a.trace) {
                let _ = write_trace_csv(p, trace);
            }
            return Err(e);
        }
    };
    let dt = res.runtime.as_secs_f64();
    run.manifest.timings_s.insert("sr".into(), dt);
    run.param("sweeps", json!(res.trace.len().saturating_sub(1)));
    run.write(&res.hr, &a.out, dt)?;
    if let Some(p) = &a.trace {
        write_trace_csv(p, &res.trace)?;
        run.manifest.outputs.push(path_str(p));
    }
    run.finish(t0)
}

fn sr_tucker(cli: &Cli, a: &SrTuckerArgs, args: Vec<String>) -> Result<()> {
    match cli.dtype {
        DtypeArg::F32 => sr_tucker_typed::<f32>(cli, a, args),
        DtypeArg::F64 => sr_tucker_typed::<f64>(cli, a, args),
    }
}

fn sr_tucker_typed<T: Scalar>(cli: &Cli, a: &SrTuckerArgs, args: Vec<String>) -> Result<()> {
    let t0 = Instant::now();
    check_ops(&a.ops)?;
    check_epsilon(a.epsilon)?;
    let rule = match (a.ranks, a.sv_threshold) {
        (_, Some(t)) => {
            if t.0.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(param("--sv-threshold values must be finite and non-negative"));
            }
            TruncationRule::thresholds(t.0)
        }
        (Some(r), None) => {
            if r.0.contains(&0) {
                return Err(param("--ranks must be positive"));
            }
            TruncationRule::counts(r.0)
        }
        (None, None) => TruncationRule::counts([40; 3]),
    };
    let hdr = read_header(&a.input)?;
    let mut run = Run::new(cli, "sr-tucker", args, &a.out);
    record_ops(&mut run, &a.ops);
    run.param("epsilon", json!(a.epsilon));
    match (a.ranks, a.sv_threshold) {
        (_, Some(t)) => run.param("sv_threshold", json!(t.0)),
        (r, None) => run.param("ranks", json!(r.map_or([40; 3], |r| r.0))),
    }
    run.param("input", json!(path_str(&a.input)));

    let ops: OperatorSet<T> = build_ops(hr_dims_of(hdr.dims, a.ops.rate), &a.ops, a.epsilon, Decimation::Pick)?;
    let (y, _) = read_volume::<T>(&a.input)?;
    let res = td_sisr(&y, &ops, &rule)?;
    if res.clamp_warning() {
        eprintln!("warning: a truncation rule kept no components in some mode; kept one instead");
    }
    let dt = res.runtime.as_secs_f64();
    run.manifest.timings_s.insert("sr".into(), dt);
    run.param("kept_ranks", json!(res.model.ranks()));
    run.param("clamped", json!(res.clamp_warning()));
    run.write(&res.hr, &a.out, dt)?;
    if let Some(p) = &a.sv_csv {
        write_sv_csv(p, &sv_spectrum(&res.model))?;
        run.manifest.outputs.push(path_str(p));
    }
    run.finish(t0)
}

fn sr_trilinear(cli: &Cli, a: &SrTrilinearArgs, args: Vec<String>) -> Result<()> {
    let t0 = Instant::now();
    if a.rate == 0 {
        return Err(param("--rate must be at least 1"));
    }
    let mut run = Run::new(cli, "sr-trilinear", args, &a.out);
    run.param("rate", json!(a.rate));
    run.param("input", json!(path_str(&a.input)));
    let (y, _) = read_volume::<f64>(&a.input)?;
    let t = Instant::now();
    let x = trilinear_upsample(&y, a.rate)?;
    let dt = t.elapsed().as_secs_f64();
    run.manifest.timings_s.insert("sr".into(), dt);
    run.write(&x, &a.out, dt)?;
    run.finish(t0)
}

fn evaluate(cli: &Cli, a: &EvaluateArgs, args: Vec<String>) -> Result<()> {
    let t0 = Instant::now();
    let rh = read_header(&a.reference)?;
    let th = read_header(&a.test)?;
    if rh.dims != th.dims {
        return Err(SisrError::Dimension(format!(
            "reference dims {:?} differ from test dims {:?}",
            rh.dims, th.dims
        )));
    }
    let mut run = Run::new(cli, "evaluate", args, &a.report);
    let (reference, _) = read_volume::<f64>(&a.reference)?;
    let (test, test_hdr) = read_volume::<f64>(&a.test)?;
    let mask = match a.mask_mode {
        MaskMode::OtsuDilate1 => otsu_dilate1(&reference)?,
        MaskMode::Otsu => threshold_segment(&reference, Segmentation::Otsu)?,
        MaskMode::Full => VoxelMask::full(reference.dims()),
    };
    let psnr_db = psnr(&reference, &test, &mask)?;
    let ssi_v = ssi(&reference, &test, &mask)?;
    let dice_v = match a.segment {
        None => None,
        Some(s) => {
            let seg = match s {
                SegmentArg::Otsu => Segmentation::Otsu,
                SegmentArg::Fixed(t) => Segmentation::Fixed(t),
            };
            let sr = threshold_segment(&reference, seg)?;
            let st = threshold_segment(&test, seg)?;
            Some(dice(&sr, &st)?)
        }
    };
    let runtime_s = test_hdr
        .provenance
        .get("runtime_s")
        .and_then(Value::as_f64)
        .unwrap_or(0.0);

    let mut params: BTreeMap<String, Value> = BTreeMap::new();
    params.insert("reference".into(), json!(path_str(&a.reference)));
    params.insert("test".into(), json!(path_str(&a.test)));
    params.insert("mask_mode".into(), json!(mask_name(a.mask_mode)));
    params.insert("mask_voxels".into(), json!(mask.count()));
    if let Some(cmd) = test_hdr.provenance.get("command") {
        params.insert("method".into(), cmd.clone());
    }
    if let Some(Value::Object(p)) = test_hdr.provenance.get("params") {
        for (k, v) in p {
            params.entry(k.clone()).or_insert_with(|| v.clone());
        }
    }
    let report = MetricReport {
        psnr_db,
        ssi: ssi_v,
        dice: dice_v,
        runtime_s,
        params,
    };
    let bytes = serde_json::to_vec_pretty(&report).map_err(|e| param(e.to_string()))?;
    sisr_core::io::write_atomic(&a.report, &bytes)?;
    println!("psnr_db={psnr_db:.4} ssi={ssi_v:.6}{}", dice_v.map_or(String::new(), |d| format!(" dice={d:.6}")));
    run.param("mask_mode", json!(mask_name(a.mask_mode)));
    run.manifest.outputs.push(path_str(&a.report));
    run.finish(t0)
}

fn mask_name(m: MaskMode) -> String {
    use clap::ValueEnum;
    m.to_possible_value().map_or_else(String::new, |v| v.get_name().to_string())
}

fn sv_spectrum_cmd(cli: &Cli, a: &SvSpectrumArgs, args: Vec<String>) -> Result<()> {
    let t0 = Instant::now();
    let mut run = Run::new(cli, "sv-spectrum", args, &a.out);
    run.param("input", json!(path_str(&a.input)));
    let (x, _) = read_volume::<f64>(&a.input)?;
    let model = hosvd(&x)?;
    write_sv_csv(&a.out, &sv_spectrum(&model))?;
    run.manifest.outputs.push(path_str(&a.out));
    run.finish(t0)
}

fn replay(a: &ReplayArgs) -> Result<()> {
    let m = RunManifest::load(&a.from)?;
    if m.command == "replay" {
        return Err(param("refusing to replay a replay manifest"));
    }
    if m.library_version != sisr_core::VERSION {
        log::warn!(
            "manifest written by version {}, replaying with {}",
            m.library_version,
            sisr_core::VERSION
        );
    }
    let argv = std::iter::once("sisr".to_string()).chain(m.args.iter().cloned());
    let cli = Cli::try_parse_from(argv).map_err(|e| param(format!("manifest arguments do not parse: {e}")))?;
    if let Command::Replay(_) = cli.command {
        return Err(param("refusing to replay a replay manifest"));
    }
    run(&cli, m.args)
}

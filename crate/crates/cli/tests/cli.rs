use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sisr_core::io::{read_sv_csv, read_volume, write_volume, Dtype, RunManifest, VolumeHeader};
use sisr_core::Volume;

fn sisr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sisr")).args(args).output().unwrap()
}

fn ok(args: &[&str]) {
    let out = sisr(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

#[test]
fn identical_volumes_score_at_the_cap() {
    let d = tempfile::tempdir().unwrap();
    let (hr, lr, rep) = (s(&d.path().join("hr.t3r")), s(&d.path().join("lr.t3r")), s(&d.path().join("r.json")));
    ok(&["phantom", "--dims", "24", "--seed", "2", "--out", &hr]);
    ok(&["degrade", "--in", &hr, "--sigma", "1", "--snr", "20", "--seed", "3", "--out", &lr]);
    ok(&["evaluate", "--ref", &lr, "--test", &lr, "--mask-mode", "full", "--segment", "fixed:0.3", "--report", &rep]);
    let v: serde_json::Value = serde_json::from_slice(&fs::read(&rep).unwrap()).unwrap();
    assert_eq!(v["psnr_db"], 200.0);
    assert_eq!(v["ssi"], 1.0);
    assert_eq!(v["dice"], 1.0);
    assert_eq!(v["method"], "degrade");

    let m = RunManifest::load(Path::new(&format!("{lr}.manifest.json"))).unwrap();
    assert_eq!(m.seeds["noise"], 3);
    assert!(m.params["noise_generator"].as_str().unwrap().contains("ChaCha20"));
}

#[test]
fn rank_one_spectrum_has_one_nonzero_value_per_mode() {
    let d = tempfile::tempdir().unwrap();
    let (x, csv) = (d.path().join("x.t3r"), d.path().join("sv.csv"));
    let v = Volume::from_fn([6, 5, 4], |i, j, k| (1.0 + i as f64) * (0.5 + j as f64) * (3.0 - 0.5 * k as f64));
    write_volume(&v, &x, Dtype::F64, VolumeHeader::new(v.dims(), Dtype::F64)).unwrap();
    ok(&["sv-spectrum", "--in", &s(&x), "--out", &s(&csv)]);
    let spectra = read_sv_csv(&csv).unwrap();
    assert_eq!(spectra.len(), 3);
    for series in &spectra {
        assert!(series.values[0] > 1.0);
        assert!(series.values[1] <= 1e-10, "{:?}", series.values);
    }
}

#[test]
fn default_parameters_run_the_full_chain() {
    let d = tempfile::tempdir().unwrap();
    let p = |n: &str| s(&d.path().join(n));
    ok(&["phantom", "--dims", "64", "--seed", "1", "--out", &p("hr.t3r")]);
    ok(&["degrade", "--in", &p("hr.t3r"), "--snr", "25", "--out", &p("lr.t3r")]);
    ok(&["sr-tucker", "--in", &p("lr.t3r"), "--out", &p("td.t3r"), "--sv-csv", &p("sv.csv")]);
    ok(&["--dtype", "f32", "sr-cpd", "--in", &p("lr.t3r"), "--max-sweeps", "2", "--out", &p("tf.t3r"), "--trace", &p("t.csv")]);
    ok(&["evaluate", "--ref", &p("hr.t3r"), "--test", &p("td.t3r"), "--report", &p("r.json")]);
    let (td, hdr) = read_volume::<f64>(Path::new(&p("td.t3r"))).unwrap();
    assert_eq!(td.dims(), [64, 64, 64]);
    assert_eq!(hdr.provenance["params"]["kept_ranks"], serde_json::json!([32, 32, 32]));
    let (_, hdr) = read_volume::<f32>(Path::new(&p("tf.t3r"))).unwrap();
    assert_eq!(hdr.dtype, "f32");
    let trace = fs::read_to_string(p("t.csv")).unwrap();
    assert_eq!(trace.lines().count(), 4);
}

#[test]
fn failures_map_to_exit_codes() {
    let d = tempfile::tempdir().unwrap();
    let p = |n: &str| s(&d.path().join(n));
    ok(&["phantom", "--dims", "16", "--out", &p("hr.t3r")]);
    ok(&["phantom", "--dims", "15", "--out", &p("odd.t3r")]);
    let code = |args: &[&str]| sisr(args).status.code().unwrap();
    assert_eq!(code(&["sr-cpd", "--bogus"]), 1);
    assert_eq!(code(&["degrade", "--in", &p("hr.t3r"), "--sigma", "-1", "--out", &p("x")]), 1);
    assert_eq!(code(&["sr-cpd", "--in", &p("hr.t3r"), "--ranks", "1000", "--out", &p("x")]), 1);
    assert_eq!(code(&["sr-tucker", "--in", &p("missing.t3r"), "--out", &p("x")]), 2);
    fs::write(p("hr.t3r"), [0u8; 12]).unwrap();
    assert_eq!(code(&["sv-spectrum", "--in", &p("hr.t3r"), "--out", &p("x")]), 2);
    assert_eq!(code(&["degrade", "--in", &p("odd.t3r"), "--out", &p("x")]), 3);
    ok(&["phantom", "--dims", "16", "--out", &p("hr.t3r")]);
    assert_eq!(code(&["evaluate", "--ref", &p("hr.t3r"), "--test", &p("odd.t3r"), "--report", &p("r")]), 3);
    assert!(!Path::new(&p("x")).exists());
}

mod common;

use common::*;
use sisr_core::cpd::{cpd_reconstruct, tf_sisr, CpdConfig, CpdFactors, CpdInit};
use sisr_core::degradation::{degrade, DegradationSpec};
use sisr_core::operators::OperatorSet;
use sisr_core::phantom::smooth_phantom;
use sisr_core::{Mat, Volume};

fn to_nested(v: &Volume) -> Nested {
    let d = v.dims();
    (0..d[0])
        .map(|i| (0..d[1]).map(|j| (0..d[2]).map(|k| v.get(i, j, k)).collect()).collect())
        .collect()
}

#[test]
fn reconstruction_matches_outer_product_sum() {
    let mut r = rng(21);
    let u: Vec<Vec<Vec<f64>>> = [5, 4, 6].iter().map(|&n| random_rows(&mut r, n, 3)).collect();
    let f = CpdFactors::new(
        Mat::from_rows(&u[0]).unwrap(),
        Mat::from_rows(&u[1]).unwrap(),
        Mat::from_rows(&u[2]).unwrap(),
    )
    .unwrap();
    let got = to_nested(&cpd_reconstruct(&f).unwrap());
    let want = outer_product_sum([&u[0], &u[1], &u[2]]);
    assert!(nested_rel_err(&got, &want) <= 1e-12);
}

fn rank_one_volume(dims: [usize; 3]) -> Volume {
    let a: Vec<f64> = (0..dims[0]).map(|i| 1.0 + 0.3 * i as f64).collect();
    let b: Vec<f64> = (0..dims[1]).map(|j| (j as f64 * 0.7).cos() + 1.5).collect();
    let c: Vec<f64> = (0..dims[2]).map(|k| 2.0 - 0.1 * k as f64).collect();
    Volume::from_fn(dims, |i, j, k| a[i] * b[j] * c[k])
}

#[test]
fn rank_one_identity_instance_is_recovered() {
    let dims = [6, 5, 7];
    let y = rank_one_volume(dims);
    let ops = OperatorSet::identity_blur(dims, 1, 0.0).unwrap();
    let cfg = CpdConfig {
        rank: 1,
        max_sweeps: 5,
        rel_tol: 1e-12,
        epsilon: 0.0,
        init: CpdInit::SeededRandom,
        seed: 3,
    };
    let out = tf_sisr(&y, &ops, &cfg).unwrap();
    assert!(out.trace.len() <= 6);
    assert!(*out.trace.last().unwrap() < 1e-6, "{:?}", out.trace);
    assert!(out.hr.relative_error(&y).unwrap() < 1e-6);
}

#[test]
fn exact_least_squares_residual_never_increases() {
    let dims = [8, 7, 6];
    let ops = OperatorSet::identity_blur(dims, 1, 0.0).unwrap();
    for seed in 0..4 {
        let y = smooth_phantom::<f64>(dims, seed);
        let cfg = CpdConfig {
            rank: 3,
            max_sweeps: 25,
            rel_tol: 1e-14,
            epsilon: 0.0,
            init: CpdInit::SeededRandom,
            seed,
        };
        let out = tf_sisr(&y, &ops, &cfg).unwrap();
        for w in out.trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "seed {seed}: {:?}", out.trace);
        }
    }
}

#[test]
fn regularized_runs_improve_from_start_to_end() {
    let hr = [16, 16, 16];
    // (DH)(DH)† shrinks smooth content by s²/(s²+ε); keep ε well below the
    // squared operator gain (≈ 1/2 here) so each update is close to an LS step.
    let cases = [
        (0, CpdInit::SeededRandom, 0.01),
        (1, CpdInit::HosvdOfUpsampled, 0.01),
        (2, CpdInit::SeededRandom, 0.05),
        (3, CpdInit::HosvdOfUpsampled, 0.05),
    ];
    for (seed, init, epsilon) in cases {
        let ops = OperatorSet::gaussian(hr, [1.0; 3], 2, epsilon, 3.0).unwrap();
        let x = smooth_phantom::<f64>(hr, seed);
        let spec = DegradationSpec {
            sigmas: [1.0; 3],
            rate: 2,
            snr_db: Some(30.0),
            seed,
        };
        let y = degrade(&x, &spec, &ops).unwrap();
        let cfg = CpdConfig {
            rank: 10,
            epsilon,
            init,
            seed,
            ..CpdConfig::default()
        };
        let out = tf_sisr(&y, &ops, &cfg).unwrap();
        assert!(out.trace.iter().all(|r| r.is_finite()));
        assert!(out.trace.last().unwrap() <= &out.trace[0], "{:?}", out.trace);
        assert_eq!(out.hr.dims(), hr);
    }
}

#[test]
fn identical_config_gives_identical_bits() {
    let hr = [12, 12, 12];
    let ops = OperatorSet::gaussian(hr, [1.0; 3], 2, 1.0, 3.0).unwrap();
    let y = ops.forward(&smooth_phantom::<f64>(hr, 5)).unwrap();
    for init in [CpdInit::SeededRandom, CpdInit::HosvdOfUpsampled] {
        let cfg = CpdConfig {
            rank: 8,
            init,
            seed: 77,
            ..CpdConfig::default()
        };
        let a = tf_sisr(&y, &ops, &cfg).unwrap();
        let b = tf_sisr(&y, &ops, &cfg).unwrap();
        assert_eq!(a.factors, b.factors);
        assert_eq!(a.hr, b.hr);
        assert_eq!(a.trace, b.trace);
    }
}

#[test]
fn f32_pipeline_runs() {
    let hr = [8, 8, 8];
    let ops = OperatorSet::<f32>::gaussian(hr, [1.0; 3], 2, 1.0, 3.0).unwrap();
    let y = ops.forward(&smooth_phantom::<f32>(hr, 1)).unwrap();
    let cfg = CpdConfig {
        rank: 4,
        ..CpdConfig::default()
    };
    let out = tf_sisr(&y, &ops, &cfg).unwrap();
    assert_eq!(out.hr.dims(), hr);
    assert!(out.hr.as_slice().iter().all(|v| v.is_finite()));
}

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use sps_ellipsoids::model::{generate_fir_dataset, generate_input, sample_noise, simulate_fir};
use sps_ellipsoids::{least_squares, Dataset, InputSpec, NoiseSpec, Stream};

/// Two-sample Kolmogorov–Smirnov distance between `w` and `−w`.
fn ks_reflection(w: &[f64]) -> f64 {
    let mut a = w.to_vec();
    let mut b: Vec<f64> = w.iter().map(|x| -x).collect();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let n = a.len() as f64;
    let (mut i, mut j, mut worst) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        worst = worst.max((i as f64 - j as f64).abs() / n);
    }
    worst
}

#[test]
fn noise_families_are_symmetric() {
    let specs = [
        NoiseSpec::UniformSymmetric { halfwidth: 3.0 },
        NoiseSpec::GaussianIid { stddev: 2.0 },
        NoiseSpec::NonstationaryMixture {
            horizon: Some(2_000_000),
        },
    ];
    for (k, spec) in specs.iter().enumerate() {
        let w = sample_noise(spec, 1_000_000, &mut Stream::new(40 + k as u64).rng()).unwrap();
        let ks = ks_reflection(&w);
        assert!(ks < 0.005, "{spec:?}: KS distance {ks}");
    }
}

#[test]
fn noiseless_data_recovers_parameters() {
    for d in [1usize, 2, 5] {
        let theta: Vec<f64> = (0..d).map(|k| 5.0 - k as f64).collect();
        let u = generate_input(
            &InputSpec::reference_ar(),
            60 + d,
            200,
            &mut Stream::new(d as u64).rng(),
        )
        .unwrap();
        let ds = generate_fir_dataset(&theta, &u, &vec![0.0; 60]).unwrap();
        let est = least_squares(&ds).unwrap();
        for (a, b) in est.iter().zip(&theta) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}

#[test]
fn square_design_is_solved_exactly() {
    let u = generate_input(&InputSpec::reference_fir(), 6, 0, &mut Stream::new(2).rng()).unwrap();
    let w = [0.3, -1.2, 0.7];
    let ds = generate_fir_dataset(&[5.0, 5.0, 5.0], &u, &w).unwrap();
    let direct = ds.regressors().clone().lu().solve(ds.outputs()).unwrap();
    assert!((ds.regressors() * &direct - ds.outputs()).norm() < 1e-10);
    assert!((least_squares(&ds).unwrap() - direct).norm() < 1e-9);
}

#[test]
fn dataset_accessors_are_consistent() {
    let phi = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 2.0, 1.0, 1.0, -1.0, 3.0]);
    let ds = Dataset::new(phi.clone(), DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0])).unwrap();
    assert_eq!(ds.gram(), phi.transpose() * &phi);
    assert_eq!(ds.rbar(), phi.transpose() * &phi / 4.0);
    let p = ds.prefix(3).unwrap();
    assert_eq!(p.n(), 3);
    assert_eq!(p.outputs().as_slice(), &[1.0, 2.0, 3.0]);
    assert!(ds.prefix(1).is_err());
    assert!(Dataset::new(phi, DVector::zeros(3)).is_err());
}

#[test]
fn noise_spec_json_shapes() {
    let spec: NoiseSpec =
        serde_json::from_str(r#"{"kind":"uniform_symmetric","halfwidth":3}"#).unwrap();
    assert_eq!(spec, NoiseSpec::UniformSymmetric { halfwidth: 3.0 });
    let spec: NoiseSpec = serde_json::from_str(r#"{"kind":"gaussian_iid","stddev":1.5}"#).unwrap();
    assert_eq!(spec, NoiseSpec::GaussianIid { stddev: 1.5 });
    let spec: NoiseSpec = serde_json::from_str(r#"{"kind":"nonstationary_mixture"}"#).unwrap();
    assert_eq!(spec, NoiseSpec::NonstationaryMixture { horizon: None });
    let input: InputSpec =
        serde_json::from_str(r#"{"kind":"ar_filtered","a":0.7,"c":[1,0.775,0.55,0.325,0.1]}"#)
            .unwrap();
    assert_eq!(input, InputSpec::reference_ar());
    assert!(InputSpec::ArFiltered {
        a: 1.0,
        c: vec![1.0]
    }
    .validate()
    .is_err());
    assert!(NoiseSpec::UniformSymmetric { halfwidth: 0.0 }
        .validate()
        .is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn simulation_is_deterministic(seed in any::<u64>(), d in 1usize..5, n in 10usize..80) {
        let make = || simulate_fir(&vec![5.0; d], &InputSpec::reference_ar(),
            &NoiseSpec::NonstationaryMixture { horizon: None }, n, 50, Stream::new(seed)).unwrap();
        let (a, b) = (make(), make());
        prop_assert_eq!(a.regressors(), b.regressors());
        prop_assert_eq!(a.outputs(), b.outputs());
    }

    #[test]
    fn regressors_have_shift_structure(seed in any::<u64>(), d in 2usize..6, n in 10usize..60) {
        let ds = simulate_fir(&vec![1.0; d], &InputSpec::reference_fir(),
            &NoiseSpec::GaussianIid { stddev: 1.0 }, n, 0, Stream::new(seed)).unwrap();
        let phi = ds.regressors();
        for t in 0..n - 1 {
            for k in 0..d - 1 {
                prop_assert_eq!(phi[(t, k)], phi[(t + 1, k + 1)]);
            }
        }
    }

    #[test]
    fn uniform_noise_respects_its_bound(seed in any::<u64>(), h in 0.1f64..10.0) {
        let w = sample_noise(&NoiseSpec::UniformSymmetric { halfwidth: h }, 500, &mut Stream::new(seed).rng()).unwrap();
        prop_assert!(w.iter().all(|x| x.abs() <= h));
    }
}

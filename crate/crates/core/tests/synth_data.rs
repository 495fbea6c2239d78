use std::f64::consts::PI;

use femm_varx::model::{objective, simulate};
use femm_varx::synth::*;
use femm_varx::{FemmError, ModelSet, Series, SwitchingWeights};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

#[test]
fn parameter_asset_checksum() {
    let digest = Sha256::digest(TWO_REGIME_DATA.as_bytes());
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    assert_eq!(hex, "116331d0b2cfec9e615794d9e832065cce64b3f680c5646cb23d38558e2a2026");
}

#[test]
fn parameter_asset_spot_values() {
    let p = two_regime_parameters().unwrap();
    let (m1, m2) = (&p.models.models()[0], &p.models.models()[1]);
    assert_eq!(m1.offset.as_slice(), &[2.0, 6.0, 3.0, -1.0]);
    assert_eq!(m2.offset.as_slice(), &[5.0, 4.0, 1.0, 2.0]);
    let a3 = &m1.interactions[2];
    assert_eq!([a3[(3, 0)], a3[(3, 1)], a3[(3, 2)], a3[(3, 3)]], [0.9, 0.3, -0.3, 0.2]);
    assert_eq!(m2.controls[3][(0, 0)], 0.003);
    let b0 = &m2.controls[0];
    assert_eq!([b0[(0, 0)], b0[(0, 1)], b0[(0, 2)], b0[(0, 3)]], [0.4, -0.2, 0.9, -1.0]);
    assert_eq!(p.x_init.column(0).as_slice(), &[0.3, -0.5, 0.2, 0.1]);
    assert_eq!(p.x_init.column(1).as_slice(), &[0.7, 0.1, 0.3, -0.3]);
    assert_eq!(p.x_init.column(2).as_slice(), &[0.1, -0.9, 0.4, 0.1]);
}

fn quiet(t: usize, seed: u64) -> GeneratorSpec {
    GeneratorSpec {
        sigma_u: 0.0,
        noise_x: 0.0,
        seed,
        ..GeneratorSpec::with_length(t)
    }
}

#[test]
fn noiseless_covariates_hit_closed_forms() {
    let u = make_covariates(&quiet(1002, 1));
    assert_eq!(u[(0, 1001)], -1.0);
    assert!(u[(1, 74)].abs() <= 1e-12);
    assert_eq!(u[(3, 0)], 0.5);
}

#[test]
fn covariates_replay_step_by_step() {
    let spec = GeneratorSpec {
        t: 200,
        sigma_u4: Some(1.0),
        seed: 17,
        regime_path: vec![(1, 1)],
        ..GeneratorSpec::default()
    };
    let u = make_covariates(&spec);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    rng.set_stream(1);
    let (eta, eta4) = (Normal::new(0.0, 0.5).unwrap(), Normal::new(0.0, 1.0).unwrap());
    let mut omega = 0.5;
    for col in 0..200 {
        let t = (col + 1) as f64;
        if col > 0 {
            omega += -0.5 + rng.random::<f64>();
        }
        let clean = [
            1.0 - 2.0 * t / 200.0,
            (2.0 * PI * t / 150.0).sin(),
            (2.0 * PI * t / 200.0).sin() * (2.0 * PI * t / 40.0 + PI / 2.0 * (2.0 * PI * t / 120.0).sin()).cos(),
        ];
        for (d, c) in clean.iter().enumerate() {
            let expected = c + eta.sample(&mut rng);
            assert!((u[(d, col)] - expected).abs() <= 1e-12, "u{} at {t}", d + 1);
        }
        let expected = omega + eta4.sample(&mut rng);
        assert!((u[(3, col)] - expected).abs() <= 1e-12, "u4 at {t}");
    }
}

#[test]
fn offsets_only_series_sits_on_the_offsets() {
    let mut truth = two_regime_parameters().unwrap();
    for m in truth.models.models_mut() {
        m.interactions.iter_mut().for_each(|a| a.fill(0.0));
        m.controls.iter_mut().for_each(|b| b.fill(0.0));
    }
    let spec = quiet(600, 2);
    let u = make_covariates(&spec);
    let (x, gamma) = make_series(&spec, &truth, &u).unwrap();
    let labels = gamma.hard_labels();
    let mu = [[2.0, 6.0, 3.0, -1.0], [5.0, 4.0, 1.0, 2.0]];
    for t in 3..600 {
        assert_eq!(x.column(t).as_slice(), &mu[labels[t]]);
    }
    assert_eq!(labels[249], 0);
    assert_eq!(labels[250], 1);
    assert_eq!(labels[500], 0);
}

#[test]
fn constant_path_matches_single_model_simulation() {
    let truth = two_regime_parameters().unwrap();
    let spec = GeneratorSpec {
        regime_path: vec![(1, 1)],
        ..quiet(300, 3)
    };
    let u = make_covariates(&spec);
    let (x, _) = make_series(&spec, &truth, &u).unwrap();
    let single = ModelSet::new(vec![truth.models.models()[0].clone()]).unwrap();
    let expected = simulate(&single, &SwitchingWeights::constant(1, 300), &u, &truth.x_init, None, 0).unwrap();
    assert_eq!(x, expected);
}

#[test]
fn true_parameters_leave_only_the_injected_noise() {
    // residuals are the injected noise: 4 x 999 draws of variance 0.005
    for seed in 0..10 {
        let d = generate(&GeneratorSpec {
            seed,
            ..GeneratorSpec::default()
        })
        .unwrap();
        let obj = objective(&d.truth.models, &d.gamma, &d.x, &d.u).unwrap();
        let expected = 1002.0 * 0.02;
        assert!((obj - expected).abs() <= 0.2 * expected, "seed {seed}: {obj}");
    }
}

#[test]
fn generated_shapes() {
    let d = generate(&GeneratorSpec::default()).unwrap();
    assert_eq!(d.x.shape(), (4, 1002));
    assert_eq!(d.u.shape(), (4, 1002));
    assert_eq!(d.truth.models.t_st(), 4);
    assert_eq!(d.x.columns(0, 3), d.truth.x_init.columns(0, 3));
}

#[test]
fn generation_is_deterministic() {
    let spec = GeneratorSpec {
        seed: 9,
        ..GeneratorSpec::default()
    };
    let (a, b) = (generate(&spec).unwrap(), generate(&spec).unwrap());
    assert_eq!(a.x, b.x);
    assert_eq!(a.u, b.u);
    let other = generate(&GeneratorSpec { seed: 10, ..spec }).unwrap();
    assert_ne!(a.x, other.x);
}

#[test]
fn mask_count_and_protection() {
    let d = generate(&GeneratorSpec::default()).unwrap();
    let s = Series::complete(d.x);
    let protected = default_protected(1002, 3, false);
    assert_eq!(protected, vec![0, 1001]);
    let m = inject_mcar(&s, 0.05, &protected, 4).unwrap();
    assert_eq!(m.missing_count(), 200);
    for d in 0..4 {
        assert!(!m.is_missing(d, 0) && !m.is_missing(d, 1001));
    }
    let again = inject_mcar(&s, 0.05, &protected, 4).unwrap();
    assert_eq!(again.mask(), m.mask());
}

#[test]
fn protecting_the_initial_window() {
    let s = Series::complete(DMatrix::from_element(2, 50, 1.0));
    let protected = default_protected(50, 3, true);
    assert_eq!(protected, vec![0, 1, 2, 49]);
    let m = inject_mcar(&s, 0.5, &protected, 1).unwrap();
    assert_eq!(m.missing_count(), 46);
    assert!((0..3).all(|t| !m.is_missing(0, t) && !m.is_missing(1, t)));
}

#[test]
fn masking_adds_to_existing_gaps() {
    let mut mask = DMatrix::from_element(1, 12, false);
    mask[(0, 5)] = true;
    let s = Series::new(DMatrix::from_element(1, 12, 2.0), mask).unwrap();
    // ten unprotected steps, one already missing
    let m = inject_mcar(&s, 0.5, &[0, 11], 8).unwrap();
    assert_eq!(m.missing_count(), 1 + 5);
}

#[test]
fn exhausting_fraction_is_an_error() {
    let s = Series::complete(DMatrix::from_element(2, 10, 1.0));
    assert!(matches!(inject_mcar(&s, 1.0, &[0, 9], 1), Err(FemmError::MaskExhausted { .. })));
    assert!(matches!(inject_mcar(&s, -0.1, &[0, 9], 1), Err(FemmError::Config(_))));
}

#[test]
fn masking_is_uniform_over_eligible_entries() {
    let s = Series::complete(DMatrix::from_element(4, 1002, 0.0));
    let protected = default_protected(1002, 3, false);
    let mut counts = DMatrix::<f64>::zeros(4, 1002);
    let seeds = 200;
    for seed in 0..seeds {
        let m = inject_mcar(&s, 0.1, &protected, seed).unwrap();
        for (c, missing) in counts.iter_mut().zip(m.mask().iter()) {
            *c += f64::from(u8::from(*missing));
        }
    }
    let n = seeds as f64;
    let se = (0.1 * 0.9 / n).sqrt();
    for t in 1..1001 {
        for d in 0..4 {
            let rate = counts[(d, t)] / n;
            assert!((rate - 0.1).abs() <= 4.0 * se, "entry ({d}, {t}) rate {rate}");
        }
    }
    assert!(counts.column(0).iter().chain(counts.column(1001).iter()).all(|c| *c == 0.0));
}

#[test]
fn regime_path_validation() {
    let truth = two_regime_parameters().unwrap();
    let u = make_covariates(&quiet(100, 0));
    for path in [vec![(1, 3)], vec![(1, 1), (1, 2)], vec![(1, 1), (101, 2)], vec![]] {
        let spec = GeneratorSpec {
            regime_path: path.clone(),
            ..quiet(100, 0)
        };
        assert!(make_series(&spec, &truth, &u).is_err(), "{path:?}");
    }
}

#[test]
fn stored_models_are_stable() {
    // companion matrix spectral radius below one for each regime
    let truth = two_regime_parameters().unwrap();
    for m in truth.models.models() {
        let (dx, q) = (m.dimx(), m.q());
        let mut comp = DMatrix::zeros(dx * q, dx * q);
        for (l, a) in m.interactions.iter().enumerate() {
            comp.view_mut((0, l * dx), (dx, dx)).copy_from(a);
        }
        for i in dx..dx * q {
            comp[(i, i - dx)] = 1.0;
        }
        let radius = comp.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(radius < 1.0, "{radius}");
    }
}

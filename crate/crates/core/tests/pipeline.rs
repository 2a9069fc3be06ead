//! End-to-end behavior of the estimator and the experiment harness.

use pcrfle::estimator::{bias_variance_decompose, fit};
use pcrfle::experiments::{generate, mean_fit_curve, run_sweep, ExperimentConfig, Tuning};
use pcrfle::geometry::{build_graph, kernel_moments, KernelSpec, SampleSet};
use pcrfle::sobolev::{spectral_seminorm, zoo_function, Domain};
use pcrfle::spectral::{eigensolve_with, laplacian, EigenMethod, EigenOptions};

#[test]
fn noiseless_sweep_mse_is_the_bias() {
    let cfg = ExperimentConfig {
        noise_sd: 0.0,
        n_grid: vec![80, 120],
        repetitions: 3,
        tuning: Tuning::Grid {
            k_grid: vec![2, 5, 9, 14],
            eps_grid: vec![0.3, 0.5],
        },
        ..ExperimentConfig::default()
    };
    let report = run_sweep(&cfg).unwrap();
    for r in &report.records {
        let d = generate(&cfg, r.n, r.rep).unwrap();
        let (k, eps) = (r.k.unwrap(), r.epsilon.unwrap());
        let f = fit(&d.samples, k, eps, &cfg.kernel).unwrap();
        let bv = bias_variance_decompose(&f, &d.truth).unwrap();
        assert_eq!(r.mse, bv.bias_sq, "n = {}, rep = {}", r.n, r.rep);
        assert_eq!(bv.variance_proxy, 0.0);
    }
}

#[test]
fn noise_splits_into_bias_and_projected_noise() {
    let cfg = ExperimentConfig::default();
    let d = generate(&cfg, 300, 1).unwrap();
    let f = fit(&d.samples, 20, 0.2, &cfg.kernel).unwrap();
    let bv = bias_variance_decompose(&f, &d.truth).unwrap();
    // Pythagoras: f̂ − f = (f̂ − Πf) + (Πf − f) with orthogonal parts
    let mse = f.mse(&d.truth).unwrap();
    assert!((mse - bv.bias_sq - bv.variance_proxy).abs() < 1e-12);
    // projected N(0,1) noise has expectation K/n
    assert!(bv.variance_proxy > 0.2 * 20.0 / 300.0 && bv.variance_proxy < 5.0 * 20.0 / 300.0);
}

#[test]
fn averaged_fit_tracks_blocks_away_from_jumps() {
    let cfg = ExperimentConfig {
        repetitions: 30,
        ..ExperimentConfig::default()
    };
    let grid: Vec<f64> = (0..100).map(|i| 0.025 + 0.05 * i as f64).collect();
    let curve = mean_fit_curve(&cfg, 1000, &grid).unwrap();
    assert_eq!(curve.failed_repetitions, 0);
    let f2 = zoo_function("f2").unwrap();
    let mut worst = 0.0f64;
    for i in 0..grid.len() {
        let x = grid[i];
        if f2.breakpoints().iter().any(|b| (x - b).abs() < 0.2) {
            continue;
        }
        let m = curve.mean_fit[i].expect("every bucket holds design points");
        worst = worst.max((m - curve.truth[i]).abs());
    }
    assert!(worst < 0.25, "largest gap away from jumps {worst}");
}

#[test]
fn dirichlet_energy_tracks_the_continuum_energy() {
    // u = sin on [0, 5] with uniform density 1/5: the scaled form tends to
    // (σ₁/2) ∫ |u'|² g², up to boundary effects of order ε
    let kernel = KernelSpec::default();
    let sigma1 = kernel_moments(&kernel, 1).unwrap().sigma1;
    let energy = (2.5 + 10f64.sin() / 4.0) / 25.0;
    let mut ratios = Vec::new();
    for n in [200, 400, 800] {
        let cfg = ExperimentConfig {
            n_grid: vec![n],
            ..ExperimentConfig::default()
        };
        let d = generate(&cfg, n, 0).unwrap();
        let (_, eps) = cfg.theorem_epsilon(n).unwrap();
        let g = build_graph(&d.samples, eps, &kernel).unwrap();
        let op = laplacian(&g, 1).unwrap();
        let eig = eigensolve_with(
            &op,
            n,
            &EigenOptions {
                method: EigenMethod::Dense,
                ..EigenOptions::default()
            },
        )
        .unwrap();
        let u: Vec<f64> = d.samples.points().map(|x| x[0].sin()).collect();
        ratios.push(spectral_seminorm(&eig, &u, 1.0).unwrap() / (sigma1 * energy));
    }
    let (lo, hi) = ratios.iter().fold((f64::MAX, f64::MIN), |(a, b), &r| (a.min(r), b.max(r)));
    assert!(lo > 0.3 && hi < 0.8, "{ratios:?}");
    assert!(hi / lo < 1.5, "{ratios:?}");
}

#[test]
fn two_dimensional_design_runs() {
    let cfg = ExperimentConfig {
        truth: pcrfle::experiments::TruthSpec::Inline(pcrfle::sobolev::TestFunction::Power {
            alpha: 0.6,
            domain: Domain {
                low: vec![-1.0, -1.0],
                high: vec![1.0, 1.0],
            },
        }),
        design: Domain {
            low: vec![-1.0, -1.0],
            high: vec![1.0, 1.0],
        },
        n_grid: vec![150, 300],
        repetitions: 2,
        // with unit constants the window is still empty at n = 150 in 2-D
        tuning: Tuning::Rule {
            m: 1.0,
            c0: 1.0,
            upper_c0: 2.0,
        },
        ..ExperimentConfig::default()
    };
    let r = run_sweep(&cfg).unwrap();
    assert_eq!(r.failures, 0, "{:?}", r.records);
    assert!((r.theoretical_slope + 0.9 / 2.9).abs() < 1e-15);
    assert!(mean_fit_curve(&cfg, 150, &[0.0]).is_err());
}

#[test]
fn external_csv_round_trip_through_fit() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.csv");
    let xs: Vec<f64> = (0..50).map(|i| i as f64 / 49.0).collect();
    let ys: Vec<f64> = xs.iter().map(|x| (6.0 * x).sin()).collect();
    SampleSet::from_line(&xs, Some(ys.clone())).unwrap().write_csv(&path).unwrap();
    let back = SampleSet::read_csv(&path).unwrap();
    assert_eq!(back.coords(), &xs[..]);
    assert_eq!(back.responses().unwrap(), &ys[..]);
    let f = fit(&back, 50, 0.1, &KernelSpec::Indicator).unwrap();
    let out = dir.path().join("fit.csv");
    f.write_csv(&back, &[("source".into(), "test".into())], &out).unwrap();
    let text = std::fs::read_to_string(out).unwrap();
    assert!(text.starts_with("# K=50\n# epsilon="));
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 51);
}

//! Randomized invariants across the geometry, spectral, estimator and seminorm layers.

use std::sync::Arc;

use proptest::prelude::*;

use pcrfle::estimator::{empirical_sq_norm, fit, fit_on};
use pcrfle::geometry::{build_graph, build_graph_with, KernelSpec, NeighborSearch, SampleSet};
use pcrfle::sobolev::{continuum_seminorm, seminorm_quadrature, spectral_seminorm, TestFunction};
use pcrfle::spectral::{eigensolve_with, laplacian, EigenMethod, EigenOptions, EigenSystem};

fn kernel_strategy() -> impl Strategy<Value = KernelSpec> {
    prop_oneof![
        Just(KernelSpec::Indicator),
        Just(KernelSpec::Triangular),
        (0.2f64..1.0).prop_map(|h| KernelSpec::TruncatedGaussian { h }),
    ]
}

/// `(points, dim)` in the unit cube.
fn cloud(max_n: usize) -> impl Strategy<Value = (Vec<f64>, usize)> {
    (1usize..=3, 4usize..=max_n).prop_flat_map(|(d, n)| (prop::collection::vec(0.0f64..1.0, n * d), Just(d)))
}

fn dense() -> EigenOptions {
    EigenOptions {
        method: EigenMethod::Dense,
        ..EigenOptions::default()
    }
}

fn full_system(s: &SampleSet, eps: f64, kernel: &KernelSpec) -> EigenSystem {
    let g = build_graph(s, eps, kernel).unwrap();
    eigensolve_with(&laplacian(&g, s.dim()).unwrap(), s.n(), &dense()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn kd_tree_matches_brute_force((coords, d) in cloud(300), eps in 0.05f64..0.6, kernel in kernel_strategy()) {
        let s = SampleSet::from_flat(coords, d, None).unwrap();
        let brute = build_graph_with(&s, eps, &kernel, NeighborSearch::BruteForce).unwrap();
        let tree = build_graph_with(&s, eps, &kernel, NeighborSearch::KdTree).unwrap();
        prop_assert_eq!(brute, tree);
    }

    #[test]
    fn edges_grow_with_epsilon((coords, d) in cloud(120), e1 in 0.05f64..0.5, grow in 1.0f64..2.0) {
        let s = SampleSet::from_flat(coords, d, None).unwrap();
        let small = build_graph(&s, e1, &KernelSpec::Indicator).unwrap();
        let large = build_graph(&s, e1 * grow, &KernelSpec::Indicator).unwrap();
        for (i, j, _) in small.edges() {
            prop_assert!(large.weight(i, j) > 0.0);
        }
        prop_assert!(large.connectivity().component_count <= small.connectivity().component_count);
    }

    #[test]
    fn weights_symmetric_and_degrees_consistent((coords, d) in cloud(150), eps in 0.1f64..0.8, kernel in kernel_strategy()) {
        let s = SampleSet::from_flat(coords, d, None).unwrap();
        let g = build_graph(&s, eps, &kernel).unwrap();
        for i in 0..g.n() {
            let mut deg = 0.0;
            for (j, w) in g.row(i) {
                prop_assert!(j != i);
                prop_assert_eq!(w, g.weight(j, i));
                deg += w;
            }
            prop_assert!((deg - g.degree()[i]).abs() <= 1e-12 * deg.max(1.0));
        }
    }

    #[test]
    fn fit_is_permutation_equivariant(
        (coords, d) in cloud(60),
        eps in 0.3f64..0.9,
        seed in any::<u64>(),
        kfrac in 0.0f64..1.0,
    ) {
        let n = coords.len() / d;
        let y: Vec<f64> = (0..n).map(|i| ((i as u64 ^ seed) % 97) as f64 / 10.0 - 4.0).collect();
        let s = SampleSet::from_flat(coords, d, Some(y)).unwrap();
        let eig = full_system(&s, eps, &KernelSpec::default());
        // K must sit at a spectral gap for the projection to be well defined
        let k = ((kfrac * n as f64) as usize).clamp(1, n);
        let v = eig.values();
        prop_assume!(k == n || v[k] - v[k - 1] > 1e-6 * (1.0 + v[k].abs()));

        let mut perm: Vec<usize> = (0..n).collect();
        let mut state = seed;
        for i in (1..n).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (state >> 33) as usize % (i + 1));
        }
        let a = fit(&s, k, eps, &KernelSpec::default()).unwrap();
        let b = fit(&s.permuted(&perm).unwrap(), k, eps, &KernelSpec::default()).unwrap();
        for (i, &p) in perm.iter().enumerate() {
            prop_assert!((b.fitted[i] - a.fitted[p]).abs() < 1e-8, "{} vs {}", b.fitted[i], a.fitted[p]);
        }
    }

    #[test]
    fn projection_shrinks_and_interpolates((coords, d) in cloud(80), eps in 0.2f64..0.7, shift in -3.0f64..3.0) {
        let n = coords.len() / d;
        let y: Vec<f64> = coords.chunks(d).map(|x| x.iter().sum::<f64>().sin() + shift).collect();
        let s = SampleSet::from_flat(coords, d, None).unwrap();
        let eig = Arc::new(full_system(&s, eps, &KernelSpec::Triangular));
        let mut prev = 0.0;
        for k in 0..=n {
            let f = fit_on(eig.clone(), &y, k, eps).unwrap();
            let e = empirical_sq_norm(&f.fitted);
            prop_assert!(e <= empirical_sq_norm(&y) + 1e-10);
            prop_assert!(e + 1e-10 >= prev);
            prev = e;
        }
        prop_assert!((prev - empirical_sq_norm(&y)).abs() < 1e-9);
    }

    #[test]
    fn spectral_seminorm_homogeneous_and_subadditive(
        (coords, d) in cloud(60),
        eps in 0.3f64..0.8,
        c in -5.0f64..5.0,
        s in 0.05f64..1.0,
    ) {
        let sset = SampleSet::from_flat(coords, d, None).unwrap();
        let eig = full_system(&sset, eps, &KernelSpec::default());
        let u: Vec<f64> = sset.points().map(|x| x[0] * 3.0 - x[d - 1]).collect();
        let v: Vec<f64> = sset.points().map(|x| (x.iter().sum::<f64>() * 4.0).cos()).collect();
        let semi = |f: &[f64]| spectral_seminorm(&eig, f, s).unwrap().sqrt();
        let cu: Vec<f64> = u.iter().map(|x| c * x).collect();
        let base = semi(&u);
        prop_assert!((semi(&cu) - c.abs() * base).abs() <= 1e-10 * (1.0 + c.abs() * base));
        let sum: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + b).collect();
        prop_assert!(semi(&sum) <= semi(&u) + semi(&v) + 1e-10);
        // constants carry no energy
        let flat = vec![c; sset.n()];
        prop_assert!(spectral_seminorm(&eig, &flat, s).unwrap().abs() < 1e-10 * (1.0 + c * c));
    }

    #[test]
    fn eigenvector_energy_is_its_eigenvalue_power((coords, d) in cloud(50), eps in 0.3f64..0.8, s in 0.05f64..1.0, pick in 0.0f64..1.0) {
        let sset = SampleSet::from_flat(coords, d, None).unwrap();
        let eig = full_system(&sset, eps, &KernelSpec::default());
        let k = ((pick * sset.n() as f64) as usize).min(sset.n() - 1);
        let vk: Vec<f64> = eig.vector(k).iter().copied().collect();
        let want = eig.clamped_value(k).powf(s);
        let got = spectral_seminorm(&eig, &vk, s).unwrap();
        prop_assert!((got - want).abs() <= 1e-9 * (1.0 + want), "{} vs {}", got, want);
    }
}

fn random_blocks(breaks: &[f64], values: &[f64]) -> TestFunction {
    let mut b: Vec<f64> = breaks.to_vec();
    b.sort_by(f64::total_cmp);
    b.dedup_by(|x, y| (*x - *y).abs() < 1e-3);
    let mut bp = vec![0.0];
    bp.extend(b.into_iter().filter(|&x| x > 1e-3 && x < 1.0 - 1e-3));
    bp.push(1.0);
    let vals = values.iter().cycle().take(bp.len() - 1).copied().collect();
    TestFunction::PiecewiseConstant { breakpoints: bp, values: vals }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn continuum_seminorm_homogeneous_and_subadditive(
        b1 in prop::collection::vec(0.0f64..1.0, 1..4),
        v1 in prop::collection::vec(-2.0f64..2.0, 1..5),
        b2 in prop::collection::vec(0.0f64..1.0, 1..4),
        v2 in prop::collection::vec(-2.0f64..2.0, 1..5),
        c in -4.0f64..4.0,
        s in 0.05f64..0.45,
    ) {
        let f = random_blocks(&b1, &v1);
        let g = random_blocks(&b2, &v2);
        let level = 10;
        let rf = continuum_seminorm(&f, s, level).unwrap();
        let eval = |t: &TestFunction, x: f64| t.evaluate(&[x]).unwrap();
        let scaled = seminorm_quadrature(|x| c * eval(&f, x), 0.0, 1.0, s, level).unwrap();
        prop_assert!((scaled.seminorm() - c.abs() * rf.seminorm()).abs() <= 1e-10 * (1.0 + c.abs() * rf.seminorm()));
        let rg = continuum_seminorm(&g, s, level).unwrap();
        let sum = seminorm_quadrature(|x| eval(&f, x) + eval(&g, x), 0.0, 1.0, s, level).unwrap();
        // the partial sums are seminorms of their own, so the finest level obeys the inequality exactly
        let fine = |r: &pcrfle::sobolev::SeminormResult| r.refinements.last().unwrap().1.sqrt();
        prop_assert!(fine(&sum) <= fine(&rf) + fine(&rg) + 1e-12);
    }
}

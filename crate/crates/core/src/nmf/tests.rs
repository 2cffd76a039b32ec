use ndarray::{array, Array2, Axis};
use proptest::prelude::*;

use super::*;

fn random_nonneg(rows: usize, cols: usize, rng: &mut rng::Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng::uniform(rng, 0.0, 1.0))
}

/// Elementwise summation of every term, no matrix products.
fn objective_oracle(x: &Array2<f64>, w: &Array2<f64>, h: &Array2<f64>, a: &Array2<f64>, lambda: f64, eta: f64) -> f64 {
    let (f, s) = x.dim();
    let r = w.ncols();
    let mut fit = 0.0;
    for i in 0..f {
        for j in 0..s {
            let mut wh = 0.0;
            for q in 0..r {
                wh += w[[i, q]] * h[[q, j]];
            }
            fit += (x[[i, j]] - wh).powi(2);
        }
    }
    let mut manifold = 0.0;
    for i in 0..s {
        for j in 0..s {
            let d2: f64 = (0..r).map(|q| (h[[q, i]] - h[[q, j]]).powi(2)).sum();
            manifold += 0.5 * a[[i, j]] * d2;
        }
    }
    let sparse: f64 = h.iter().map(|v| v.sqrt()).sum();
    0.5 * fit + 0.5 * lambda * manifold + eta * sparse
}

fn graph_for(x: &Array2<f64>, k: usize) -> GraphLaplacian {
    build_knn_graph(x.view(), k).unwrap()
}

#[test]
fn exact_product_has_zero_objective() {
    let mut rng = rng::seeded(1);
    let w = random_nonneg(4, 2, &mut rng);
    let h = random_nonneg(2, 6, &mut rng);
    let x = w.dot(&h);
    let l = graph_for(&x, 2);
    assert!(nmf_objective(x.view(), w.view(), h.view(), &l, 0.0, 0.0).unwrap() < 1e-28);
}

#[test]
fn constant_rows_have_zero_manifold_term() {
    let h = array![[0.3, 0.3, 0.3, 0.3], [2.0, 2.0, 2.0, 2.0]];
    let x = array![[0.0, 1.0, 2.0, 3.0]];
    let l = graph_for(&x, 1);
    assert_eq!(l.trace_quadratic(h.view()), 0.0);
}

#[test]
fn objective_matches_summation_oracle() {
    let mut rng = rng::seeded(2);
    let x = random_nonneg(4, 6, &mut rng);
    let w = random_nonneg(4, 2, &mut rng);
    let h = random_nonneg(2, 6, &mut rng);
    let l = graph_for(&x, 2);
    let got = nmf_objective(x.view(), w.view(), h.view(), &l, 0.1, 0.01).unwrap();
    let want = objective_oracle(&x, &w, &h, &l.adjacency_dense(), 0.1, 0.01);
    assert!((got - want).abs() < 1e-10, "{got} vs {want}");
}

#[test]
fn objective_rejects_negative_entries() {
    let x = array![[1.0, 2.0]];
    let w = array![[1.0]];
    let h = array![[1.0, -0.5]];
    let l = graph_for(&x, 1);
    assert!(matches!(nmf_objective(x.view(), w.view(), h.view(), &l, 0.0, 0.0), Err(Error::InvalidInput(_))));
}

#[test]
fn trace_equals_pairwise_sum() {
    let mut rng = rng::seeded(3);
    for s in [5, 12, 30] {
        let x = random_nonneg(3, s, &mut rng);
        let h = random_nonneg(4, s, &mut rng);
        let l = graph_for(&x, 3);
        let a = l.adjacency_dense();
        let mut pair = 0.0;
        for i in 0..s {
            for j in 0..s {
                pair += 0.5 * a[[i, j]] * (0..4).map(|q| (h[[q, i]] - h[[q, j]]).powi(2)).sum::<f64>();
            }
        }
        // and via the dense matrix product
        let dense = h.dot(&l.laplacian_dense()).dot(&h.t()).diag().sum();
        let t = l.trace_quadratic(h.view());
        assert!((t - pair).abs() < 1e-10 && (t - dense).abs() < 1e-10);
    }
}

#[test]
fn laplacian_is_symmetric_with_zero_rows() {
    let mut rng = rng::seeded(4);
    let x = random_nonneg(5, 25, &mut rng);
    let l = graph_for(&x, 5).laplacian_dense();
    assert_eq!(l, l.t());
    for r in l.rows() {
        assert!(r.sum().abs() < 1e-12);
    }
    let a = graph_for(&x, 5).adjacency_dense();
    assert!(a.diag().iter().all(|&v| v == 0.0));
}

fn exact_recovery_config() -> NmfConfig {
    NmfConfig { rank: 2, lambda: 0.0, eta: 0.0, max_iters: 20_000, tol: 0.0, ..NmfConfig::default() }
}

#[test]
fn recovers_exact_factorisation() {
    let mut rng = rng::seeded(10);
    let w = random_nonneg(6, 2, &mut rng);
    let h = random_nonneg(2, 10, &mut rng);
    let x = w.dot(&h);
    let l = graph_for(&x, 5);
    let out = nmf_factorize(&MotionFeatureMatrix::new(x.clone()).unwrap(), &exact_recovery_config(), &l).unwrap();
    let res: f64 = (&x - &out.w.dot(&out.h)).iter().map(|v| v * v).sum();
    assert!(res < 1e-6, "residual {res}");
}

#[test]
fn sparsity_increases_small_entries() {
    let mut rng = rng::seeded(11);
    let x = random_nonneg(8, 40, &mut rng);
    let l = graph_for(&x, 5);
    let mx = MotionFeatureMatrix::new(x).unwrap();
    let base = NmfConfig { rank: 4, lambda: 0.0, max_iters: 300, tol: 0.0, ..NmfConfig::default() };
    let frac = |eta: f64| {
        let f = nmf_factorize(&mx, &NmfConfig { eta, ..base.clone() }, &l).unwrap();
        f.h.iter().filter(|&&v| v < 1e-3).count() as f64 / f.h.len() as f64
    };
    assert!(frac(10.0) > frac(0.0));
}

#[test]
fn full_width_shape() {
    let mut rng = rng::seeded(12);
    let x = random_nonneg(52, 5745, &mut rng);
    let l = graph_for(&x, 5);
    let cfg = NmfConfig { max_iters: 3, ..NmfConfig::default() };
    let out = nmf_factorize(&MotionFeatureMatrix::new(x).unwrap(), &cfg, &l).unwrap();
    assert_eq!(out.h.dim(), (20, 5745));
    assert_eq!(out.w.dim(), (52, 20));
}

#[test]
fn monotone_over_grid() {
    for seed in 0..10u64 {
        let mut rng = rng::seeded(100 + seed);
        let x = random_nonneg(6, 24, &mut rng);
        let l = graph_for(&x, 5);
        let mx = MotionFeatureMatrix::new(x).unwrap();
        for lambda in [0.0, 0.1, 1.0] {
            for eta in [0.0, 0.01, 0.1] {
                let cfg = NmfConfig { rank: 3, lambda, eta, max_iters: 200, tol: 0.0, seed, ..NmfConfig::default() };
                let t = nmf_factorize(&mx, &cfg, &l).unwrap().objective_trace;
                for p in t.windows(2) {
                    assert!(p[1] <= p[0] * (1.0 + 1e-9), "seed {seed} λ {lambda} η {eta}: {} -> {}", p[0], p[1]);
                }
            }
        }
    }
}

#[test]
fn normalisation_keeps_reconstruction() {
    let mut rng = rng::seeded(13);
    let x = random_nonneg(5, 20, &mut rng);
    let l = graph_for(&x, 4);
    let cfg = NmfConfig { rank: 3, max_iters: 50, ..NmfConfig::default() };
    let mut f = nmf_factorize(&MotionFeatureMatrix::new(x).unwrap(), &cfg, &l).unwrap();
    for r in f.h.rows() {
        assert!((r.iter().copied().fold(0.0, f64::max) - 1.0).abs() < 1e-15);
    }
    let before = f.w.dot(&f.h);
    f.w.mapv_inplace(|v| v * 3.0);
    f.h.mapv_inplace(|v| v / 3.0);
    f.normalize_rows();
    let after = f.w.dot(&f.h);
    assert!((&before - &after).iter().all(|d| d.abs() < 1e-12));
    f.sort_rows_by_centroid();
    assert!((&before - &f.w.dot(&f.h)).iter().all(|d| d.abs() < 1e-12));
}

#[test]
fn entries_respect_floor() {
    let mut rng = rng::seeded(14);
    let x = random_nonneg(5, 20, &mut rng);
    let l = graph_for(&x, 4);
    let cfg = NmfConfig { rank: 3, eta: 1.0, max_iters: 100, ..NmfConfig::default() };
    let f = nmf_factorize(&MotionFeatureMatrix::new(x).unwrap(), &cfg, &l).unwrap();
    assert!(f.w.iter().chain(f.h.iter()).all(|&v| v >= cfg.epsilon_floor));
}

#[test]
fn nan_reports_iteration() {
    let x = array![[1e300, 1e300, 1e300], [1e300, 1.0, 1e300]];
    let l = graph_for(&x, 1);
    let cfg = NmfConfig { rank: 1, lambda: 0.0, eta: 0.0, max_iters: 5, ..NmfConfig::default() };
    match nmf_factorize(&MotionFeatureMatrix::new(x).unwrap(), &cfg, &l) {
        Err(Error::Numerical(m)) => assert!(m.contains("iteration"), "{m}"),
        other => panic!("expected numerical error, got {other:?}"),
    }
}

#[test]
fn feature_matrix_validation() {
    assert!(MotionFeatureMatrix::new(array![[1.0, 0.0], [2.0, 0.0]]).is_err());
    assert!(MotionFeatureMatrix::new(array![[1.0, -1.0]]).is_err());
    assert!(MotionFeatureMatrix::new(array![[1.0, f64::NAN]]).is_err());
    assert!(NmfConfig { rank: 0, ..NmfConfig::default() }.validate().is_err());
    assert!(NmfConfig { eta: -1.0, ..NmfConfig::default() }.validate().is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn updates_preserve_nonnegativity(seed in 0u64..1000, lambda in 0.0f64..2.0, eta in 0.0f64..0.5) {
        let mut rng = rng::seeded(seed);
        let x = random_nonneg(4, 12, &mut rng);
        let l = graph_for(&x, 3);
        let cfg = NmfConfig { rank: 2, lambda, eta, max_iters: 30, seed, ..NmfConfig::default() };
        let f = nmf_factorize(&MotionFeatureMatrix::new(x).unwrap(), &cfg, &l).unwrap();
        prop_assert!(f.w.iter().chain(f.h.iter()).all(|&v| v > 0.0));
    }

    #[test]
    fn trace_quadratic_is_psd(seed in 0u64..1000, s in 3usize..20) {
        let mut rng = rng::seeded(seed);
        let x = random_nonneg(3, s, &mut rng);
        let h = Array2::from_shape_simple_fn((2, s), || rng::normal(&mut rng));
        let l = graph_for(&x, 2.min(s - 1));
        prop_assert!(l.trace_quadratic(h.view()) >= -1e-12);
    }
}

#[test]
fn align_rows_recovers_a_permutation() {
    let mut rng = rng::seeded(21);
    let w = random_nonneg(8, 4, &mut rng);
    let h = random_nonneg(4, 12, &mut rng);
    let perm = [2usize, 0, 3, 1];
    let mut f = NmfFactors {
        w: w.select(Axis(1), &perm),
        h: h.select(Axis(0), &perm),
        objective_trace: vec![],
    };
    f.align_rows_to(&w).unwrap();
    assert_eq!(f.w, w);
    assert_eq!(f.h, h);
    assert!(matches!(f.align_rows_to(&random_nonneg(8, 3, &mut rng)), Err(Error::Shape { .. })));
}

#[test]
fn warm_start_at_the_solution_stays_there() {
    let mut rng = rng::seeded(22);
    let w = random_nonneg(6, 2, &mut rng);
    let h = random_nonneg(2, 10, &mut rng);
    let x = MotionFeatureMatrix::new(w.dot(&h)).unwrap();
    let l = graph_for(&w.dot(&h), 3);
    let cfg = NmfConfig { rank: 2, lambda: 0.0, eta: 0.0, max_iters: 300, ..NmfConfig::default() };
    let warm = nmf_factorize_from(&x, &cfg, &l, Some(&w)).unwrap();
    assert!(*warm.objective_trace.last().unwrap() < 1e-8, "{:?}", warm.objective_trace.last());
    // components keep the order of the supplied start
    for q in 0..2 {
        let (a, b) = (w.column(q), warm.w.column(q));
        assert!(a.dot(&b) / (a.dot(&a) * b.dot(&b)).sqrt() > 0.99);
    }
    let bad = random_nonneg(6, 3, &mut rng);
    assert!(matches!(nmf_factorize_from(&x, &cfg, &l, Some(&bad)), Err(Error::Shape { .. })));
}

use std::sync::OnceLock;

use proptest::prelude::*;
use saddle_scope::analysis::escape::predict_escape_time;
use saddle_scope::analysis::regions::{classify, ClassifierParams, RegionLabel};
use saddle_scope::analysis::spectral::{spectral_split, SYMMETRY_TOL};
use saddle_scope::optimizer::{run, run_coupled, RunConfig};
use saddle_scope::oracles::{GradientOracle, OracleSpec};
use saddle_scope::problems::{
    sym_norm, CostModel, Matrix, QuadraticSaddleSpec, TwoLayerLogisticSpec, Vector,
};
use saddle_scope::rng;

fn logistic() -> &'static CostModel {
    static MODEL: OnceLock<CostModel> = OnceLock::new();
    MODEL.get_or_init(|| CostModel::logistic(TwoLayerLogisticSpec::default()).unwrap())
}

fn point(r: f64) -> impl Strategy<Value = Vector> {
    (-r..r, -r..r).prop_map(|(a, b)| Vector::from_vec(vec![a, b]))
}

fn in_disk(w: &Vector, r: f64) -> bool {
    w.norm() <= r
}

fn fd_grad(m: &CostModel, w: &Vector, h: f64) -> Vector {
    Vector::from_iterator(
        w.len(),
        (0..w.len()).map(|k| {
            let mut p = w.clone();
            let mut q = w.clone();
            p[k] += h;
            q[k] -= h;
            (m.cost(&p).unwrap() - m.cost(&q).unwrap()) / (2.0 * h)
        }),
    )
}

fn fd_hessian(m: &CostModel, w: &Vector, h: f64) -> Matrix {
    let n = w.len();
    let mut out = Matrix::zeros(n, n);
    for k in 0..n {
        let mut p = w.clone();
        let mut q = w.clone();
        p[k] += h;
        q[k] -= h;
        let col = (m.grad(&p).unwrap() - m.grad(&q).unwrap()) / (2.0 * h);
        out.set_column(k, &col);
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn logistic_derivatives_match_finite_differences(w in point(2.5)) {
        let m = logistic();
        let g = m.grad(&w).unwrap();
        prop_assert!((fd_grad(m, &w, 1e-5) - &g).amax() < 1e-7);
        let h = m.hessian(&w).unwrap();
        prop_assert!((fd_hessian(m, &w, 1e-5) - &h).amax() < 1e-6);
        prop_assert!((&h - h.transpose()).amax() == 0.0);
    }

    #[test]
    fn quadratic_derivatives_match_finite_differences(
        c in prop::collection::vec(-3.0..3.0f64, 1..5),
        seed in any::<u64>(),
    ) {
        let m = CostModel::quadratic(QuadraticSaddleSpec::new(c.clone())).unwrap();
        let mut r = rng::from_seed(seed);
        let w = Vector::from_iterator(c.len(), (0..c.len()).map(|_| rand::Rng::random_range(&mut r, -2.0..2.0)));
        prop_assert!((fd_grad(&m, &w, 1e-5) - m.grad(&w).unwrap()).amax() < 1e-8);
        prop_assert!((fd_hessian(&m, &w, 1e-5) - m.hessian(&w).unwrap()).amax() < 1e-8);
    }

    #[test]
    fn logistic_smoothness_certificate_holds(x in point(2.1), y in point(2.1)) {
        prop_assume!(in_disk(&x, 3.0) && in_disk(&y, 3.0));
        let m = logistic();
        let s = m.smoothness();
        let d = (&x - &y).norm();
        let dg = (m.grad(&x).unwrap() - m.grad(&y).unwrap()).norm();
        prop_assert!(dg <= s.lipschitz_grad * d + 1e-12);
        let dh = sym_norm(&(m.hessian(&x).unwrap() - m.hessian(&y).unwrap()));
        prop_assert!(dh <= s.lipschitz_hess * d + 1e-12);
    }

    /// `J(y) <= J(x) + ∇J(x)ᵀ(y − x) + (δ/2)|y − x|²` and the cubic remainder
    /// `|J(y) − second-order Taylor| <= (ρ/6)|y − x|³`.
    #[test]
    fn logistic_taylor_bounds(x in point(2.1), y in point(2.1)) {
        prop_assume!(in_disk(&x, 3.0) && in_disk(&y, 3.0));
        let m = logistic();
        let s = m.smoothness();
        let d = &y - &x;
        let jx = m.cost(&x).unwrap();
        let jy = m.cost(&y).unwrap();
        let lin = jx + m.grad(&x).unwrap().dot(&d);
        prop_assert!(jy <= lin + 0.5 * s.lipschitz_grad * d.norm_squared() + 1e-12);
        let quad = lin + 0.5 * d.dot(&(m.hessian(&x).unwrap() * &d));
        prop_assert!((jy - quad).abs() <= s.lipschitz_hess / 6.0 * d.norm().powi(3) + 1e-12);
    }

    #[test]
    fn estimates_reconstruct_the_gradient(w in point(2.0), seed in any::<u64>(), kind in 0usize..5) {
        let spec = match kind {
            0 => OracleSpec::exact(),
            1 => OracleSpec::stochastic().with_minibatch(3),
            2 => OracleSpec::perturbed_exact(0.7),
            3 => OracleSpec::perturbed_stochastic(1.3),
            _ => OracleSpec::targeted(1.0, vec![1.0, 1.0]),
        };
        let o = GradientOracle::new(spec).unwrap();
        let m = logistic();
        let g = m.grad(&w).unwrap();
        let est = o.estimate(m, &w, &mut rng::from_seed(seed)).unwrap();
        prop_assert!((&est.direction + est.noise(&g) - &g).amax() <= 1e-14 * (1.0 + g.amax()));
    }

    #[test]
    fn runs_are_reproducible(seed in any::<u64>(), mu in 0.001..0.05f64) {
        let m = logistic();
        let o = GradientOracle::new(OracleSpec::perturbed_stochastic(1.0)).unwrap();
        let w0 = Vector::from_vec(vec![-0.5, 0.5]);
        let c = RunConfig::new(mu, 60, seed);
        prop_assert_eq!(run(m, &o, &w0, &c).unwrap(), run(m, &o, &w0, &c).unwrap());
        let a = run_coupled(m, &o, &w0, 40, mu, seed).unwrap();
        let b = run_coupled(m, &o, &w0, 40, mu, seed).unwrap();
        prop_assert_eq!(a.deviations, b.deviations);
        prop_assert_eq!(a.true_traj, b.true_traj);
        prop_assert_eq!(&a.noise, &a.model_noise);
    }

    #[test]
    fn labels_partition_the_plane(w in point(3.0), mu in 0.0..0.1f64, sigma_sq in 0.0..3.0f64) {
        let m = logistic();
        let p = ClassifierParams::for_model(m, mu, 0.5, sigma_sq).unwrap();
        let label = classify(&w, m, &p).unwrap();
        let g2 = m.grad(&w).unwrap().norm_squared();
        prop_assert_eq!(label == RegionLabel::G, g2 >= p.g_threshold());
        if label != RegionLabel::G {
            let lmin = spectral_split(&m.hessian(&w).unwrap()).unwrap().min_eigenvalue();
            prop_assert_eq!(label == RegionLabel::H, lmin <= -p.tau);
        }
    }

    #[test]
    fn spectral_split_reassembles(entries in prop::collection::vec(-5.0..5.0f64, 16), n in 1usize..5) {
        let a = Matrix::from_fn(n, n, |i, j| entries[i * 4 + j]);
        let h = (&a + a.transpose()) * 0.5;
        let split = spectral_split(&h).unwrap();
        prop_assert!((split.reassemble() - &h).amax() <= SYMMETRY_TOL);
        let v = split.basis();
        prop_assert!((v.transpose() * &v - Matrix::identity(n, n)).amax() <= 1e-12);
        prop_assert!(split.eigvals_nonneg.iter().all(|l| *l >= 0.0));
        prop_assert!(split.eigvals_neg.iter().all(|l| *l < 0.0));
        let all = split.eigenvalues();
        prop_assert!(all.windows(2).all(|p| p[0] >= p[1]));
    }
}

#[test]
fn escape_time_monotone_over_grid() {
    let grid = [0.1, 0.5, 1.0, 2.0, 5.0];
    for &s2 in &grid {
        for &l2 in &grid {
            for &tau in &grid {
                for m in 1..5 {
                    let base = predict_escape_time(m, s2, l2, 0.01, tau).unwrap();
                    assert!(predict_escape_time(m + 1, s2, l2, 0.01, tau).unwrap() >= base);
                    assert!(predict_escape_time(m, s2 * 2.0, l2, 0.01, tau).unwrap() >= base);
                    assert!(predict_escape_time(m, s2, l2 * 2.0, 0.01, tau).unwrap() <= base);
                    assert!(predict_escape_time(m, s2, l2, 0.01, tau * 2.0).unwrap() <= base);
                }
            }
        }
    }
}

#[test]
fn escape_time_scales_as_inverse_step() {
    let scaled: Vec<f64> = [1e-2, 1e-3, 1e-4]
        .iter()
        .map(|&mu| mu * predict_escape_time(2, 1.0, 1.0, mu, 0.4).unwrap() as f64)
        .collect();
    let limit = 5f64.ln() / 0.8;
    for s in &scaled {
        assert!((s / limit - 1.0).abs() < 0.05, "{s} vs {limit}");
    }
    assert!((scaled[2] - limit).abs() < (scaled[0] - limit).abs());
}

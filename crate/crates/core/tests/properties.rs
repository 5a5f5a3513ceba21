//! Randomized agreement between the factored production paths and the dense
//! reference implementations, plus structural invariants.

use proptest::prelude::*;

use wrgd::harness::MOverN;
use wrgd::manifold::{normalize_tangent_param, project, retract_rank1};
use wrgd::measurement::{apply_lift, apply_lift_adjoint, forward_intensities};
use wrgd::oracle::{
    dense_gradient_operator, dense_rank1_trunc_svd, dense_rgd_step, gaussian_vector,
    perturbed_point, DenseHermitian, DenseSensing,
};
use wrgd::solvers::{dist_phase, rgd_step, step_size_exact, SolverConfig, SolverKind};
use wrgd::{FactoredHermitian, HermitianAction, MeasurementEnsemble, MetricKind, Rank1Point, C64};

fn rel_vec(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den.max(1e-300)
}

fn rel_cvec(a: &[C64], b: &[C64]) -> f64 {
    let num: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum::<f64>().sqrt();
    num / den.max(1e-300)
}

fn metric() -> impl Strategy<Value = MetricKind> {
    prop_oneof![
        Just(MetricKind::Canonical),
        Just(MetricKind::WfPseudo),
        Just(MetricKind::Weighted)
    ]
}

fn solver() -> impl Strategy<Value = SolverKind> {
    prop_oneof![Just(SolverKind::Twrgd), Just(SolverKind::Trgd)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn lift_matches_dense(n in 1usize..=16, extra in 0usize..40, seed in any::<u64>(), c in -2.0f64..2.0) {
        let m = n + extra;
        let ens = MeasurementEnsemble::sample(n, m, seed).unwrap();
        let z = gaussian_vector(seed ^ 1, n);
        let f = FactoredHermitian::sym_pair(&z, &gaussian_vector(seed ^ 2, n))
            .unwrap()
            .plus(c, &FactoredHermitian::outer(1.0, &gaussian_vector(seed ^ 3, n)))
            .unwrap();
        let fast = apply_lift(&ens, &f, None).unwrap();
        let slow = DenseSensing::from_ensemble(&ens).lift(&DenseHermitian::from_factored(&f), None);
        prop_assert!(rel_vec(&fast, &slow) <= 1e-10);
    }

    #[test]
    fn adjoint_matches_dense(n in 1usize..=16, extra in 0usize..40, seed in any::<u64>()) {
        let m = n + extra;
        let ens = MeasurementEnsemble::sample(n, m, seed).unwrap();
        let b: Vec<f64> = gaussian_vector(seed ^ 5, m).iter().map(|c| c.re).collect();
        let v = gaussian_vector(seed ^ 6, n);
        let fast = apply_lift_adjoint(&ens, &b, None, &v).unwrap();
        let slow = DenseSensing::from_ensemble(&ens).adjoint(&b, None).apply(&v);
        prop_assert!(rel_cvec(&fast, &slow) <= 1e-10);
    }

    #[test]
    fn retraction_matches_dense_eigen(n in 1usize..=16, seed in any::<u64>(), scale in -1.5f64..1.5) {
        let z = gaussian_vector(seed, n);
        let anchor = Rank1Point::new(z.clone()).unwrap();
        let step = normalize_tangent_param(&anchor, &gaussian_vector(seed ^ 7, n)).unwrap();
        let target = DenseHermitian::outer(1.0, &z)
            .add_scaled(scale, &DenseHermitian::from_factored(&step.to_factored()));
        let (lambda, u) = dense_rank1_trunc_svd(&target);
        match retract_rank1(&anchor, &step, scale) {
            Ok(p) => {
                let slow = DenseHermitian::outer(lambda, &u);
                let got = DenseHermitian::outer(1.0, p.factor());
                prop_assert!(got.add_scaled(-1.0, &slow).frob_norm() <= 1e-9 * slow.frob_norm());
            }
            Err(_) => prop_assert!(lambda <= 1e-12 * target.frob_norm()),
        }
    }

    #[test]
    fn projection_matches_dense_operator(n in 1usize..=12, seed in any::<u64>(), kind in metric()) {
        let z = gaussian_vector(seed, n);
        let anchor = Rank1Point::new(z.clone()).unwrap();
        let a = DenseHermitian::random(n, seed ^ 9);
        let fast = project(kind, &anchor, &a).unwrap();
        let fast = DenseHermitian::from_factored(&fast.to_factored());
        let slow = dense_gradient_operator(kind, &z, &a);
        let scale = slow.frob_norm().max(a.frob_norm());
        prop_assert!(fast.add_scaled(-1.0, &slow).frob_norm() <= 1e-9 * scale);
    }

    #[test]
    fn weighted_projection_is_compatible(n in 1usize..=12, seed in any::<u64>()) {
        let z = gaussian_vector(seed, n);
        let anchor = Rank1Point::new(z.clone()).unwrap();
        let a = DenseHermitian::random(n, seed ^ 11);
        let t = project(MetricKind::Weighted, &anchor, &a).unwrap();
        let t = DenseHermitian::from_factored(&t.to_factored());
        let b = normalize_tangent_param(&anchor, &gaussian_vector(seed ^ 12, n)).unwrap();
        let b = DenseHermitian::from_factored(&b.to_factored());
        let lhs = t.metric_inner(MetricKind::Weighted, &b);
        let rhs = a.frob_inner(&b);
        prop_assert!((lhs - rhs).abs() <= 1e-9 * a.frob_norm() * b.frob_norm());
    }

    #[test]
    fn tangent_norm_matches_dense(n in 1usize..=16, seed in any::<u64>(), kind in metric()) {
        let anchor = Rank1Point::new(gaussian_vector(seed, n)).unwrap();
        let t = normalize_tangent_param(&anchor, &gaussian_vector(seed ^ 13, n)).unwrap();
        let dense = DenseHermitian::from_factored(&t.to_factored());
        let a = t.norm_sqr(kind);
        let b = dense.metric_inner(kind, &dense);
        prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(b.abs()).max(1e-300));
    }

    #[test]
    fn rgd_step_matches_dense(n in 2usize..=8, ratio in 6usize..12, seed in any::<u64>(), kind in solver(), truncated in any::<bool>()) {
        let m = ratio * n;
        let ens = MeasurementEnsemble::sample(n, m, seed).unwrap();
        let x = gaussian_vector(seed ^ 17, n);
        let y = forward_intensities(&ens, &x).unwrap();
        let z = perturbed_point(&x, 0.3, seed ^ 18);
        let mut cfg = SolverConfig::for_solver(kind);
        cfg.truncated = truncated;
        let tau = truncated.then_some(cfg.truncation);
        let slow = dense_rgd_step(&DenseSensing::from_ensemble(&ens), y.values(), &z, cfg.metric, tau);
        let fast = rgd_step(&ens, &y, &Rank1Point::new(z).unwrap(), &cfg);
        match (fast, slow) {
            (Ok(f), Ok(s)) => {
                let gap = dist_phase(f.factor(), &s).unwrap();
                let sn = s.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
                prop_assert!(gap <= 1e-8 * sn, "gap {gap}");
            }
            (Err(_), Err(_)) => {}
            (f, s) => prop_assert!(false, "disagree: {:?} vs {:?}", f.is_ok(), s.is_ok()),
        }
    }

    #[test]
    fn exact_step_ignores_direction_scale(n in 1usize..=8, seed in any::<u64>(), c in 0.01f64..100.0, kind in metric()) {
        let ens = MeasurementEnsemble::sample(n, 6 * n, seed).unwrap();
        let anchor = Rank1Point::new(gaussian_vector(seed ^ 19, n)).unwrap();
        let d = normalize_tangent_param(&anchor, &gaussian_vector(seed ^ 20, n)).unwrap();
        let a1 = step_size_exact(&ens, None, &d, kind).unwrap();
        let a2 = step_size_exact(&ens, None, &d.scaled(c), kind).unwrap();
        prop_assert!((a1 - a2).abs() <= 1e-9 * a1.abs());
    }

    #[test]
    fn dist_phase_ignores_global_phase(n in 1usize..=16, seed in any::<u64>(), phi in 0.0f64..6.3) {
        let x = gaussian_vector(seed, n);
        let z = gaussian_vector(seed ^ 21, n);
        let rot = C64::from_polar(1.0, phi);
        let zr: Vec<C64> = z.iter().map(|c| c * rot).collect();
        let xr: Vec<C64> = x.iter().map(|c| c * rot.conj()).collect();
        let d = dist_phase(&z, &x).unwrap();
        prop_assert!((dist_phase(&zr, &x).unwrap() - d).abs() <= 1e-10 * (1.0 + d));
        prop_assert!((dist_phase(&z, &xr).unwrap() - d).abs() <= 1e-10 * (1.0 + d));
        prop_assert!((dist_phase(&x, &z).unwrap() - d).abs() <= 1e-10 * (1.0 + d));
        prop_assert!(dist_phase(&zr, &z).unwrap() <= 1e-6 * (1.0 + d));
    }

    #[test]
    fn intensities_are_lifted_outer_products(n in 1usize..=16, seed in any::<u64>()) {
        let ens = MeasurementEnsemble::sample(n, 3 * n, seed).unwrap();
        let x = gaussian_vector(seed ^ 23, n);
        let y = forward_intensities(&ens, &x).unwrap();
        let lifted = apply_lift(&ens, &FactoredHermitian::outer(1.0, &x), None).unwrap();
        prop_assert!(y.values().iter().all(|&v| v >= 0.0));
        prop_assert!(rel_vec(y.values(), &lifted) <= 1e-12);
    }

    #[test]
    fn ratio_display_round_trips(num in 1u64..200, den in 1u64..20) {
        let r: MOverN = format!("{num}/{den}").parse().unwrap();
        let back: MOverN = r.to_string().parse().unwrap();
        prop_assert_eq!(r, back);
        prop_assert!((r.value() - num as f64 / den as f64).abs() < 1e-12);
    }
}

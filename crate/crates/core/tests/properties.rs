mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use volterra_lq::dictionary::{build_regressors, MultiIndex, VolterraStructure};
use volterra_lq::metrics::{rmse, sparsity_curve};
use volterra_lq::norms::{norm_1, norm_q, scaled_radius};
use volterra_lq::solver::{fit, lmo, project_l1, QuadraticObjective, SolverOptions};
use volterra_lq::tuning::{fit_scaled, tune_r, TuningOptions};
use volterra_lq::{Dataset, RegressorMatrix};

fn vec_strategy(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, 1..=max_len)
}

fn instance(seed: u64, d: usize, n: usize) -> (RegressorMatrix, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    common::random_instance(&mut rng, d, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lag_permutations_evaluate_identically(
        u in prop::collection::vec(-2.0f64..2.0, 12),
        lags in prop::collection::vec(0usize..6, 1..4),
        rot in 0usize..4,
    ) {
        let mut perm = lags.clone();
        let k = rot % perm.len();
        perm.rotate_left(k);
        perm.reverse();
        let n = 11;
        let a = MultiIndex::from_lags(lags.clone()).evaluate(&u, n);
        let b = MultiIndex::from_lags(perm.clone()).evaluate(&u, n);
        prop_assert_eq!(a.to_bits(), b.to_bits());
        let direct: f64 = perm.iter().map(|&k| u[n - k]).product();
        prop_assert!((direct - a).abs() <= 1e-14 * a.abs().max(1e-300));
    }

    #[test]
    fn regressor_rows_and_determinism(
        u in prop::collection::vec(-2.0f64..2.0, 8..40),
        l in 1usize..5,
        p in 1usize..4,
    ) {
        let s = VolterraStructure::uniform(p, l).unwrap();
        let tau = s.tau();
        prop_assume!(u.len() > tau);
        let data = Dataset::new(u.clone(), u.clone(), tau).unwrap();
        let a = build_regressors(&data, &s).unwrap();
        let b = build_regressors(&data, &s).unwrap();
        prop_assert_eq!(a.rows(), u.len() - tau);
        prop_assert_eq!(a.cols(), s.count_params().unwrap());
        prop_assert_eq!(&a, &b);
        // constant column is all ones
        prop_assert!((0..a.rows()).all(|i| a.get(i, 0) == 1.0));
    }

    #[test]
    fn norm_inequality(x in vec_strategy(50)) {
        let d = x.len() as f64;
        let l1 = norm_1(&x);
        for q in [1.5, 2.0, 3.0] {
            let lq = norm_q(&x, q);
            prop_assert!(lq <= l1 * (1.0 + 1e-12));
            prop_assert!(l1 <= d.powf(1.0 - 1.0 / q) * lq * (1.0 + 1e-12));
        }
    }

    #[test]
    fn radius_nesting(seed in any::<u64>(), d in 1usize..60, qi in 0usize..3) {
        let q = [1.5, 2.0, 3.0][qi];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = common::random_ball_point(&mut rng, d, q, scaled_radius(d, q, 1.0), true);
        prop_assert!(norm_1(&x) <= 1.0 + 1e-12);
    }

    #[test]
    fn lmo_lies_on_sphere_and_beats_samples(g in vec_strategy(6), seed in any::<u64>(), qi in 0usize..3, r in 0.1f64..5.0) {
        let q = [1.0, 1.5, 2.0][qi];
        prop_assume!(g.iter().any(|v| *v != 0.0));
        let s = lmo(&g, q, r);
        prop_assert!((norm_q(&s, q) - r).abs() <= 1e-12 * r);
        let best: f64 = s.iter().zip(&g).map(|(a, b)| a * b).sum();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..200 {
            let x = common::random_ball_point(&mut rng, g.len(), q, r, true);
            let v: f64 = x.iter().zip(&g).map(|(a, b)| a * b).sum();
            prop_assert!(best <= v + 1e-12 * v.abs().max(1.0));
        }
    }

    #[test]
    fn projection_is_feasible_and_idempotent(p in vec_strategy(8), r in 0.05f64..5.0) {
        let x = project_l1(&p, r);
        prop_assert!(norm_1(&x) <= r * (1.0 + 1e-12));
        let y = project_l1(&x, r);
        for (a, b) in x.iter().zip(&y) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
        let oracle = common::project_l1_enumeration(&p, r);
        for (a, b) in x.iter().zip(&oracle) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn objective_forms_agree(seed in any::<u64>(), d in 1usize..7, extra in 0usize..20) {
        let (s, y) = instance(seed, d, d + 1 + extra);
        let obj = QuadraticObjective::new(s.clone(), y.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let theta = common::random_ball_point(&mut rng, d, 2.0, 3.0, false);
        let v = obj.value(&theta).unwrap();
        prop_assert!(v >= 0.0);
        let ne = obj.normal_equations().value(&theta);
        prop_assert!((v - ne).abs() <= 1e-10 * v.max(1e-12));
        let reference = common::Quadratic::from_data(&s, &y).value(&theta);
        prop_assert!((v - reference).abs() <= 1e-10 * v.max(1e-12));
    }

    #[test]
    fn gradient_matches_finite_differences(seed in any::<u64>(), d in 1usize..7) {
        let (s, y) = instance(seed, d, 30);
        let obj = QuadraticObjective::new(s, y).unwrap();
        let theta = vec![0.3; d];
        let g = obj.gradient(&theta).unwrap();
        let h = 1e-5;
        for i in 0..d {
            let mut a = theta.clone();
            let mut b = theta.clone();
            a[i] += h;
            b[i] -= h;
            let fd = (obj.value(&a).unwrap() - obj.value(&b).unwrap()) / (2.0 * h);
            prop_assert!((fd - g[i]).abs() <= 1e-6 * g[i].abs().max(1.0), "i={} fd={} g={}", i, fd, g[i]);
        }
    }

    #[test]
    fn trace_is_monotone_and_gap_nonnegative(seed in any::<u64>(), d in 2usize..7, qi in 0usize..3, r in 0.1f64..3.0) {
        let q = [1.0, 1.5, 2.0][qi];
        let (s, y) = instance(seed, d, 40);
        let obj = QuadraticObjective::new(s, y).unwrap();
        let rep = fit(&obj, q, r, &SolverOptions::default()).unwrap();
        prop_assert!(rep.gap >= 0.0);
        prop_assert!(rep.coefficients.is_feasible());
        for w in rep.trace.windows(2) {
            prop_assert!(w[1].objective <= w[0].objective * (1.0 + 1e-12) + 1e-15);
        }
    }

    #[test]
    fn l1_iterates_have_at_most_k_nonzeros(seed in any::<u64>(), k in 0usize..12) {
        let (s, y) = instance(seed, 20, 60);
        let obj = QuadraticObjective::new(s, y).unwrap();
        let opts = SolverOptions { max_iters: Some(k), gap_tol: Some(0.0), ..Default::default() };
        let rep = fit(&obj, 1.0, 2.0, &opts).unwrap();
        prop_assert!(rep.iterations <= k);
        let nz = rep.coefficients.values.iter().filter(|v| **v != 0.0).count();
        prop_assert!(nz <= rep.iterations, "nz={} iters={}", nz, rep.iterations);
        let curve = sparsity_curve(&rep.coefficients.values, &[1e-12]).unwrap();
        prop_assert!(curve.counts[0] <= k);
    }

    #[test]
    fn rmse_squared_is_the_objective(seed in any::<u64>(), d in 1usize..7) {
        let (s, y) = instance(seed, d, 25);
        let obj = QuadraticObjective::new(s.clone(), y.clone()).unwrap();
        let theta = vec![0.1; d];
        let e = rmse(&y, &s.mul_vec(&theta)).unwrap();
        let v = obj.value(&theta).unwrap();
        prop_assert!((e * e - v).abs() <= 1e-10 * v);
    }

    #[test]
    fn sparsity_counts_are_permutation_invariant(mut x in vec_strategy(30), k in 0usize..30) {
        let t = [1e-6, 1e-3, 0.5, 2.0, 7.0];
        let a = sparsity_curve(&x, &t).unwrap();
        let len = x.len();
        x.rotate_left(k % len);
        x.reverse();
        let b = sparsity_curve(&x, &t).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.counts.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(a.counts[0] <= len);
    }
}

/// While the constraint is inactive the scaled fit is the least-squares
/// solution divided by R, so doubling R halves the norm.
#[test]
fn doubling_r_halves_the_norm_while_inactive() {
    let (s, y) = instance(11, 10, 80);
    let obj = QuadraticObjective::new(s, y).unwrap();
    let opts = SolverOptions { gap_tol: Some(1e-20), max_iters: Some(200_000), ..Default::default() };
    for q in [1.0, 1.5, 2.0] {
        let ls = common::Quadratic::from_data(obj.design(), obj.targets()).unconstrained();
        let target = scaled_radius(10, q, 1.0);
        // inactive at r when ||ls||_q / r < target
        let r = 4.0 * norm_q(&ls, q) / target;
        let a = fit_scaled(&obj, q, r, &opts).unwrap();
        let b = fit_scaled(&obj, q, 2.0 * r, &opts).unwrap();
        assert!(a.norm_q < target, "q={q}: constraint active");
        let rel = (b.norm_q - a.norm_q / 2.0).abs() / (a.norm_q / 2.0);
        assert!(rel <= 1e-6, "q={q}: relative deviation {rel}");
    }
}

#[test]
fn tuning_norms_do_not_increase_with_r() {
    let (s, y) = instance(5, 10, 60);
    let obj = QuadraticObjective::new(s, y).unwrap();
    for q in [1.0, 1.5, 2.0] {
        let res = tune_r(&obj, q, None, &TuningOptions::default()).unwrap();
        let mut steps = res.trace.clone();
        steps.sort_by(|a, b| a.r.total_cmp(&b.r));
        for w in steps.windows(2) {
            assert!(w[1].norm <= w[0].norm * (1.0 + 1e-6) + 1e-12, "q={q}: {:?}", w);
        }
        // never searched below the first R whose norm reaches the target
        let first_at_target = res.trace.iter().filter(|s| s.norm >= res.target).map(|s| s.r).fold(0.0, f64::max);
        assert!(res.r > first_at_target);
    }
}

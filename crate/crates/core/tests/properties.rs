use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use sparse_rls::baselines::{exact_linesearch, sequential_step};
use sparse_rls::estimator::{
    best_response, descent_bound, evaluate_objective, soft_threshold, stepsize_simplified, weight_factor, Estimator,
    EstimatorConfig, EstimatorState, Penalty, RegularizationSchedule, StepsizeRule,
};
use sparse_rls::signal::{RegressionSample, Scenario, ScenarioConfig};
use sparse_rls::stats::SufficientStats;

fn entry() -> impl Strategy<Value = f64> {
    -3.0..3.0f64
}

/// `(G = AᵀA/m, b, x, x̂)` for a random `A`.
fn problem() -> impl Strategy<Value = (SufficientStats, DVector<f64>, DVector<f64>)> {
    (1usize..8, 1usize..10).prop_flat_map(|(k, m)| {
        (
            prop::collection::vec(entry(), k * m),
            prop::collection::vec(entry(), k),
            prop::collection::vec(entry(), k),
            prop::collection::vec(entry(), k),
        )
            .prop_map(move |(a, b, x, xhat)| {
                let a = DMatrix::from_vec(m, k, a);
                let g = a.transpose() * &a / m as f64;
                let stats = SufficientStats::from_parts(g, DVector::from_vec(b), 1).unwrap();
                (stats, DVector::from_vec(x), DVector::from_vec(xhat))
            })
    })
}

fn samples(k: usize, n: usize, t: usize, values: &[f64]) -> Vec<RegressionSample> {
    (0..n)
        .map(|i| {
            let g = DVector::from_fn(k, |j, _| values[(i * (k + 1) + j) % values.len()]);
            RegressionSample { g, y: values[(i * (k + 1) + k) % values.len()], sensor_id: i + 1, time: t }
        })
        .collect()
}

proptest! {
    #[test]
    fn soft_threshold_shrinks_toward_zero(a in 0.0..5.0f64, b in -10.0..10.0f64) {
        let s = soft_threshold(a, b);
        prop_assert!(s.abs() <= b.abs());
        prop_assert!(s == 0.0 || s.signum() == b.signum());
        prop_assert_eq!(s == 0.0, b.abs() <= a);
    }

    #[test]
    fn recursion_equals_plain_averages(
        k in 1usize..6,
        n in 1usize..4,
        horizon in 1usize..20,
        values in prop::collection::vec(entry(), 1..50),
    ) {
        let mut stats = SufficientStats::new(k);
        let mut sum_g = DMatrix::<f64>::zeros(k, k);
        let mut sum_b = DVector::<f64>::zeros(k);
        for t in 1..=horizon {
            let batch = samples(k, n, t, &values[(t % values.len())..]);
            stats.update(&batch).unwrap();
            for s in &batch {
                sum_g += &s.g * s.g.transpose();
                sum_b += &s.g * s.y;
            }
            let tf = t as f64;
            prop_assert!((stats.g() - &sum_g / tf).norm() <= 1e-12 * (1.0 + sum_g.norm() / tf));
            prop_assert!((stats.b() - &sum_b / tf).norm() <= 1e-12 * (1.0 + sum_b.norm() / tf));
        }
    }

    #[test]
    fn statistics_stay_positive_semidefinite(
        k in 1usize..6,
        beta in 0.0..=1.0f64,
        values in prop::collection::vec(entry(), 1..50),
    ) {
        let mut stats = SufficientStats::with_forgetting(k, beta).unwrap();
        for t in 1..=15 {
            stats.update(&samples(k, 1, t, &values[(t % values.len())..])).unwrap();
            prop_assert!(stats.min_eigenvalue() >= -1e-10 * stats.g().norm().max(1e-300));
            prop_assert_eq!(stats.g(), &stats.g().transpose());
        }
    }

    #[test]
    fn best_response_ignores_evaluation_order((stats, x, _) in problem(), mu in 0.0..2.0f64, seed in any::<u64>()) {
        let cfg = EstimatorConfig::default();
        let pen = Penalty::Uniform(mu);
        let whole = best_response(&stats, &x, &pen, &cfg).unwrap();
        let k = x.len();
        let mut order: Vec<usize> = (0..k).collect();
        // Cheap deterministic shuffle.
        let mut s = seed | 1;
        for i in (1..k).rev() {
            s ^= s << 13; s ^= s >> 7; s ^= s << 17;
            order.swap(i, (s % (i as u64 + 1)) as usize);
        }
        let g = stats.g();
        let mut piecewise = DVector::zeros(k);
        for &i in &order {
            let diag = g[(i, i)] + 1e-6;
            let v = stats.b()[i] - g.row(i).transpose().dot(&x) + diag * x[i];
            piecewise[i] = soft_threshold(mu, v) / diag;
        }
        prop_assert_eq!(whole, piecewise);
    }

    #[test]
    fn stepsizes_are_ordered((stats, x, xhat) in problem(), mu in 0.0..2.0f64) {
        let pen = Penalty::Uniform(mu);
        let phi = |g: f64| evaluate_objective(&stats, &pen, &(&x + g * (&xhat - &x)));
        let simplified = stepsize_simplified(&stats, &x, &xhat, &pen, false);
        let exact = exact_linesearch(&stats, &x, &xhat, &pen);
        prop_assert!((0.0..=1.0).contains(&simplified));
        prop_assert!((0.0..=1.0).contains(&exact));
        let slack = 1e-10 * (1.0 + phi(0.0).abs());
        prop_assert!(phi(exact) <= phi(simplified) + slack);
        prop_assert!(phi(simplified) <= phi(0.0) + slack);
    }

    #[test]
    fn estimator_steps_descend_and_stay_nonpositive(
        (stats, x, _) in problem(),
        scale in 0.0..5.0f64,
        exact in any::<bool>(),
    ) {
        let cfg = EstimatorConfig {
            schedule: RegularizationSchedule::Plain { scale, exponent: 1.0 },
            stepsize: if exact { StepsizeRule::ExactLineSearch } else { StepsizeRule::Simplified },
            check_invariants: true,
            ..Default::default()
        };
        let mut est = Estimator::new(x.len(), cfg).unwrap();
        let r = est.step(&stats).unwrap();
        prop_assert!(r.objective_tentative <= r.objective_before + 1e-12 * (1.0 + r.objective_before.abs()));
        prop_assert!(r.objective_after <= 0.0);
        let c_min = (0..x.len()).map(|i| stats.g()[(i, i)] + 1e-6).fold(f64::INFINITY, f64::min);
        let bound = descent_bound(r.gamma, c_min, stats.max_eigenvalue(), r.step_norm);
        if !exact {
            prop_assert!(r.objective_tentative - r.objective_before <= bound + 1e-9);
        }
    }

    #[test]
    fn nonnegative_mode_stays_in_the_orthant((stats, x, _) in problem(), mu in 0.0..2.0f64) {
        let cfg = EstimatorConfig { nonnegative: true, ..Default::default() };
        let x = x.map(f64::abs);
        let xhat = best_response(&stats, &x, &Penalty::Uniform(mu), &cfg).unwrap();
        prop_assert!(xhat.iter().all(|v| *v >= 0.0));
        let pen = Penalty::Uniform(mu);
        let general = stepsize_simplified(&stats, &x, &xhat, &pen, false);
        let orthant = stepsize_simplified(&stats, &x, &xhat, &pen, true);
        prop_assert!((general - orthant).abs() <= 1e-12);
    }

    #[test]
    fn sequential_step_never_increases_the_loss((stats, x, _) in problem(), mu in 0.0..2.0f64, t in 1usize..20) {
        let pen = Penalty::Uniform(mu);
        let stats = SufficientStats::from_parts(stats.g().clone(), stats.b().clone(), t).unwrap();
        let before = evaluate_objective(&stats, &pen, &x);
        let mut state = EstimatorState { x, t };
        if sequential_step(&mut state, &stats, &pen, 1e-8).is_ok() {
            let after = evaluate_objective(&stats, &pen, &state.x);
            prop_assert!(after <= before + 1e-12 * (1.0 + before.abs()));
        }
    }

    #[test]
    fn weight_factor_is_a_nonincreasing_fraction(mu in 1e-3..2.0f64, a in 1.01..5.0f64, u in 0.0..10.0f64, v in 0.0..10.0f64) {
        let (lo, hi) = if u <= v { (u, v) } else { (v, u) };
        let (wl, wh) = (weight_factor(mu, a, lo), weight_factor(mu, a, hi));
        prop_assert!((0.0..=1.0).contains(&wl) && (0.0..=1.0).contains(&wh));
        prop_assert!(wh <= wl);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn identical_seeds_give_identical_streams(seed in any::<u64>(), k in 5usize..15, n in 1usize..4) {
        let cfg = ScenarioConfig { k, n, horizon: 5, density: 0.2, seed, ..Default::default() };
        let a: Vec<_> = Scenario::new(cfg.clone()).unwrap().flat_map(|i| i.samples).collect();
        let b: Vec<_> = Scenario::new(cfg).unwrap().flat_map(|i| i.samples).collect();
        prop_assert_eq!(a, b);
    }
}

//! Seeded runtime checks behind the `invariants` subcommand.
//!
//! Each check drives a small scenario and reports whether a property held at
//! every instance. They are deliberately cheap (seconds in total) so the CLI
//! can be used as a smoke test on any machine.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::baselines::{exact_linesearch, lasso_oracle, sequential_step, OracleConfig};
use crate::distnet::{
    max_relative_deviation, run_centralized, run_fusion_center, run_fusion_free, ExecutionMode, NetworkConfig,
};
use crate::error::Result;
use crate::estimator::{
    best_response, descent_bound, evaluate_objective, monotone_onset, soft_threshold, Estimator, EstimatorConfig,
    EstimatorState, Penalty, RegularizationSchedule, StepTerms,
};
use crate::signal::{Scenario, ScenarioConfig};
use crate::stats::SufficientStats;

#[derive(Debug, Clone, PartialEq)]
pub struct InvariantOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for InvariantOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

fn outcome(name: &'static str, passed: bool, detail: String) -> InvariantOutcome {
    InvariantOutcome { name, passed, detail }
}

fn scenario(k: usize, n: usize, horizon: usize, seed: u64) -> ScenarioConfig {
    ScenarioConfig { k, n, horizon, seed, density: 0.1, noise_variance: 0.2, ..Default::default() }
}

/// Runs every check with scenarios derived from `seed`.
pub fn run_suite(seed: u64) -> Result<Vec<InvariantOutcome>> {
    Ok(vec![
        stats_recursion(seed)?,
        psd_preserved(seed)?,
        descent_and_reset(seed)?,
        monotone_chain(seed)?,
        linesearch_dominance(seed)?,
        nonnegative_mode(seed)?,
        jacobi_purity(seed)?,
        sequential_non_increase(seed)?,
        architecture_equivalence(seed)?,
        ledger_exactness(seed)?,
        reset_reconstruction(seed)?,
        weighted_onset(seed)?,
    ])
}

/// Recursive `(G, b)` against the plain averages `Σggᵀ/t`, `Σgy/t`.
pub fn stats_recursion(seed: u64) -> Result<InvariantOutcome> {
    let cfg = scenario(12, 3, 300, seed);
    let k = cfg.k;
    let mut stats = SufficientStats::new(k);
    let mut sum_g = DMatrix::<f64>::zeros(k, k);
    let mut sum_b = DVector::<f64>::zeros(k);
    let mut worst = 0.0f64;
    for inst in Scenario::new(cfg)? {
        stats.update(&inst.samples)?;
        for s in &inst.samples {
            sum_g += &s.g * s.g.transpose();
            sum_b += &s.g * s.y;
        }
        let t = inst.t as f64;
        let eg = (stats.g() - &sum_g / t).norm() / (sum_g.norm() / t);
        let eb = (stats.b() - &sum_b / t).norm() / (sum_b.norm() / t).max(f64::MIN_POSITIVE);
        worst = worst.max(eg).max(eb);
    }
    Ok(outcome("stats_recursion", worst <= 1e-12, format!("max relative deviation {worst:.3e} (tol 1e-12)")))
}

pub fn psd_preserved(seed: u64) -> Result<InvariantOutcome> {
    let cfg = scenario(30, 1, 120, seed);
    let mut stats = SufficientStats::with_forgetting(cfg.k, 0.95)?;
    let mut violations = 0;
    for inst in Scenario::new(cfg)? {
        stats.update(&inst.samples)?;
        if stats.min_eigenvalue() < -1e-10 * stats.g().norm() {
            violations += 1;
        }
    }
    Ok(outcome("psd_preserved", violations == 0, format!("{violations} instances with a negative eigenvalue")))
}

/// Descent inequality (slack 1e−9) and `L(x⁽ᵗ⁺¹⁾) ≤ 0` at every step.
pub fn descent_and_reset(seed: u64) -> Result<InvariantOutcome> {
    let cfg = scenario(100, 1, 500, seed);
    let est_cfg = EstimatorConfig::default();
    let mut stats = SufficientStats::new(cfg.k);
    let mut est = Estimator::new(cfg.k, est_cfg.clone())?;
    let mut descent = 0;
    let mut reset = 0;
    for inst in Scenario::new(cfg)? {
        stats.update(&inst.samples)?;
        let r = est.step(&stats)?;
        let c_min = (0..stats.dim()).map(|i| stats.g()[(i, i)] + est_cfg.proximal.at(i)).fold(f64::INFINITY, f64::min);
        let bound = descent_bound(r.gamma, c_min, stats.max_eigenvalue(), r.step_norm);
        if r.objective_tentative - r.objective_before > bound + 1e-9 {
            descent += 1;
        }
        if r.objective_after > 0.0 {
            reset += 1;
        }
    }
    Ok(outcome(
        "descent_and_reset",
        descent == 0 && reset == 0,
        format!("500 steps: {descent} descent violations, {reset} positive losses"),
    ))
}

/// `L(x⁽ᵗ⁾) ≥ L(x̃) ≥ L(x⁽ᵗ⁺¹⁾) ≥ L(x_lasso) − 1e−8`.
pub fn monotone_chain(seed: u64) -> Result<InvariantOutcome> {
    let cfg = scenario(40, 1, 200, seed);
    let mut stats = SufficientStats::new(cfg.k);
    let mut est = Estimator::new(cfg.k, EstimatorConfig::default())?;
    let oracle_cfg = OracleConfig::default();
    let mut warm: Option<DVector<f64>> = None;
    let mut violations = 0;
    for inst in Scenario::new(cfg)? {
        stats.update(&inst.samples)?;
        let r = est.step(&stats)?;
        let sol = lasso_oracle(&stats, &r.penalty, &oracle_cfg, warm.as_ref());
        let ok = r.objective_before >= r.objective_tentative
            && r.objective_tentative >= r.objective_after
            && r.objective_after >= sol.objective - 1e-8;
        if !ok {
            violations += 1;
        }
        warm = Some(sol.x);
    }
    Ok(outcome("monotone_chain", violations == 0, format!("{violations} of 200 instances out of order")))
}

/// `φ(γ_exact) ≤ φ(γ_simplified) ≤ φ(0)` for the loss along `x̂ − x`.
pub fn linesearch_dominance(seed: u64) -> Result<InvariantOutcome> {
    let cfg = scenario(30, 1, 150, seed);
    let mut stats = SufficientStats::new(cfg.k);
    let mut est = Estimator::new(cfg.k, EstimatorConfig::default())?;
    let mut violations = 0;
    for inst in Scenario::new(cfg)? {
        stats.update(&inst.samples)?;
        let x = est.x().clone();
        let r = est.step(&stats)?;
        let phi = |g: f64| evaluate_objective(&stats, &r.penalty, &(&x + g * (&r.best_response - &x)));
        let exact = exact_linesearch(&stats, &x, &r.best_response, &r.penalty);
        let slack = 1e-12 * (1.0 + phi(0.0).abs());
        if phi(exact) > phi(r.gamma) + slack || phi(r.gamma) > phi(0.0) + slack {
            violations += 1;
        }
    }
    Ok(outcome("linesearch_dominance", violations == 0, format!("{violations} of 150 instances violated")))
}

/// Iterates stay nonnegative and both stepsize formulas agree to 1e−12.
pub fn nonnegative_mode(seed: u64) -> Result<InvariantOutcome> {
    let mut cfg = scenario(30, 1, 200, seed);
    cfg.nonnegative = true;
    let mut stats = SufficientStats::new(cfg.k);
    let mut est = Estimator::new(cfg.k, EstimatorConfig { nonnegative: true, ..Default::default() })?;
    let mut negative = 0;
    let mut worst_gap = 0.0f64;
    for inst in Scenario::new(cfg)? {
        stats.update(&inst.samples)?;
        let x = est.x().clone();
        let r = est.step(&stats)?;
        let d = &r.best_response - &x;
        let gx = stats.g_times(&x);
        let gd = stats.g_times(&d);
        let terms = StepTerms::new(&stats, &x, &r.best_response, &d, &gx, &gd, &r.penalty);
        worst_gap = worst_gap.max((terms.simplified_gamma() - terms.nonnegative_gamma()).abs());
        if est.x().iter().any(|v| *v < 0.0) {
            negative += 1;
        }
    }
    Ok(outcome(
        "nonnegative_mode",
        negative == 0 && worst_gap <= 1e-12,
        format!("{negative} negative iterates, stepsize gap {worst_gap:.3e}"),
    ))
}

/// Element-wise best responses computed in reversed order match bitwise.
pub fn jacobi_purity(seed: u64) -> Result<InvariantOutcome> {
    let cfg = scenario(25, 2, 40, seed);
    let mut stats = SufficientStats::new(cfg.k);
    let est_cfg = EstimatorConfig::default();
    let mut est = Estimator::new(cfg.k, est_cfg.clone())?;
    let mut mismatches = 0;
    for inst in Scenario::new(cfg)? {
        stats.update(&inst.samples)?;
        let x = est.x().clone();
        let mu = Penalty::Uniform(est_cfg.schedule.mu(stats.t()));
        let whole = best_response(&stats, &x, &mu, &est_cfg)?;
        let k = x.len();
        let g = stats.g();
        let mut reversed = DVector::zeros(k);
        for i in (0..k).rev() {
            let diag = g[(i, i)] + est_cfg.proximal.at(i);
            let gx_i = g.row(i).transpose().dot(&x);
            let v = stats.b()[i] - gx_i + diag * x[i];
            reversed[i] = soft_threshold(mu.at(i), v) / diag;
        }
        if whole != reversed {
            mismatches += 1;
        }
        est.step(&stats)?;
    }
    Ok(outcome("jacobi_purity", mismatches == 0, format!("{mismatches} of 40 instances differ")))
}

pub fn sequential_non_increase(seed: u64) -> Result<InvariantOutcome> {
    let cfg = scenario(20, 1, 200, seed);
    let mut stats = SufficientStats::new(cfg.k);
    let schedule = RegularizationSchedule::default();
    let mut state = EstimatorState::initial(cfg.k);
    let mut violations = 0;
    for inst in Scenario::new(cfg)? {
        stats.update(&inst.samples)?;
        let mu = Penalty::Uniform(schedule.mu(stats.t()));
        let before = evaluate_objective(&stats, &mu, &state.x);
        sequential_step(&mut state, &stats, &mu, 1e-8)?;
        let after = evaluate_objective(&stats, &mu, &state.x);
        if after > before + 1e-12 * (1.0 + before.abs()) {
            violations += 1;
        }
    }
    Ok(outcome("sequential_non_increase", violations == 0, format!("{violations} of 200 steps increased the loss")))
}

/// Centralized, fusion-center, fusion-free (lockstep and threaded) agree.
pub fn architecture_equivalence(seed: u64) -> Result<InvariantOutcome> {
    let net = NetworkConfig::new(scenario(40, 3, 50, seed), EstimatorConfig::default());
    let central = run_centralized(&net)?;
    let fc = run_fusion_center(&net)?;
    let ff = run_fusion_free(&net)?;
    let threaded = run_fusion_free(&NetworkConfig { mode: ExecutionMode::Threaded, ..net.clone() })?;
    let mut worst = max_relative_deviation(&fc.trajectory, &central);
    for traj in ff.node_trajectories.iter().chain(&threaded.node_trajectories) {
        worst = worst.max(max_relative_deviation(traj, &central));
    }
    let identical = threaded.ledger == ff.ledger && threaded.node_trajectories == ff.node_trajectories;
    Ok(outcome(
        "architecture_equivalence",
        worst <= 1e-12 && identical,
        format!("max relative deviation {worst:.3e}, threaded identical: {identical}"),
    ))
}

pub fn ledger_exactness(seed: u64) -> Result<InvariantOutcome> {
    let k = 40;
    let n = 3;
    let net = NetworkConfig::new(scenario(k, n, 20, seed), EstimatorConfig::default());
    let ff = run_fusion_free(&net)?.ledger;
    let fc = run_fusion_center(&net)?.ledger;
    let ff_ok = ff.entries.len() == 20 * n && ff.entries.iter().all(|e| e.total_reals == 4 * k);
    let fc_ok = fc.entries.len() == 20 * n && fc.entries.iter().all(|e| e.total_reals == 2 * k + 1);
    Ok(outcome(
        "ledger_exactness",
        ff_ok && fc_ok,
        format!("fusion-free {} reals, fusion-center {} reals", ff.total(), fc.total()),
    ))
}

/// Tentative loss rebuilt from exchanged sums against direct evaluation.
pub fn reset_reconstruction(seed: u64) -> Result<InvariantOutcome> {
    let net = NetworkConfig::new(scenario(40, 3, 60, seed), EstimatorConfig::default());
    let ff = run_fusion_free(&net)?;
    let mut stats = SufficientStats::new(40);
    let mut est = Estimator::new(40, EstimatorConfig::default())?;
    let mut worst = 0.0f64;
    for (inst, round) in Scenario::new(net.scenario.clone())?.zip(&ff.rounds) {
        stats.update(&inst.samples)?;
        let r = est.step(&stats)?;
        let rel = (round.tentative_objective - r.objective_tentative).abs() / r.objective_tentative.abs().max(1e-300);
        worst = worst.max(rel);
    }
    Ok(outcome("reset_reconstruction", worst <= 1e-10, format!("max relative error {worst:.3e} (tol 1e-10)")))
}

/// Reports the instance after which every weighted gain is nonincreasing.
pub fn weighted_onset(seed: u64) -> Result<InvariantOutcome> {
    let mut cfg = scenario(20, 1, 600, seed);
    cfg.density = 0.2;
    cfg.leading_support = true;
    let schedule = RegularizationSchedule::Weighted { scale: 1.0, exponent: 0.4, a: 2.0 };
    let est = Estimator::new(cfg.k, EstimatorConfig { schedule, ..Default::default() })?;
    let mut stats = SufficientStats::new(cfg.k);
    let mut gains: Vec<Vec<f64>> = vec![Vec::new(); cfg.k];
    for inst in Scenario::new(cfg)? {
        stats.update(&inst.samples)?;
        let (penalty, _) = est.penalty_for(&stats)?;
        for (i, g) in gains.iter_mut().enumerate() {
            g.push(penalty.at(i));
        }
    }
    let onsets: Vec<Option<usize>> = gains.iter().map(|g| monotone_onset(g)).collect();
    let all = onsets.iter().all(Option::is_some);
    let t0 = onsets.iter().flatten().max().copied();
    let detail = match t0 {
        Some(i0) if all => format!("gains nonincreasing from t0 = {} of 600", i0 + 1),
        _ => format!("{} elements never settle", onsets.iter().filter(|o| o.is_none()).count()),
    };
    Ok(outcome("weighted_onset", all, detail))
}

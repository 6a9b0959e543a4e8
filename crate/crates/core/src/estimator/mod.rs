//! The online parallel estimator.
//!
//! At each instance `t` the estimator performs one pass over the current
//! statistics:
//!
//! 1. every element computes its best response `x̂_k` against the frozen
//!    iterate (Jacobi semantics);
//! 2. a stepsize `γ ∈ [0, 1]` is chosen along `x̂ − x`, either by the
//!    closed-form simplified rule or by exact line search;
//! 3. the tentative point `x̃ = x + γ(x̂ − x)` is kept unless its loss is
//!    positive, in which case the iterate restarts from the origin.

mod schedule;
mod update;

use std::io::Write;

use nalgebra::DVector;
use serde::Serialize;

pub use schedule::{monotone_onset, weight_factor, Penalty, RegularizationSchedule};
pub use update::{best_response, evaluate_objective, reset_step, soft_threshold, stepsize_simplified, Reset};
pub(crate) use update::{best_response_with, StepTerms};

use crate::baselines::{exact_linesearch, rls_solve};
use crate::error::{Error, Result};
use crate::stats::SufficientStats;

/// Proximal weights `c_k` added to each element's scalar subproblem.
#[derive(Debug, Clone, PartialEq)]
pub enum ProximalWeights {
    Constant(f64),
    PerElement(DVector<f64>),
}

impl ProximalWeights {
    #[inline]
    pub fn at(&self, k: usize) -> f64 {
        match self {
            ProximalWeights::Constant(c) => *c,
            ProximalWeights::PerElement(v) => v[k],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StepsizeRule {
    #[default]
    Simplified,
    /// Exact minimization of the loss along the direction.
    ExactLineSearch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    pub proximal: ProximalWeights,
    pub schedule: RegularizationSchedule,
    pub nonnegative: bool,
    pub stepsize: StepsizeRule,
    /// Lower bound enforced on `G_kk + c_k`.
    pub c_floor: f64,
    /// Ridge numerator for the RLS estimate used by the weighted schedule.
    pub rls_ridge: f64,
    /// Check the descent bound and the reset guarantee after every step.
    pub check_invariants: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            proximal: ProximalWeights::Constant(1e-6),
            schedule: RegularizationSchedule::default(),
            nonnegative: false,
            stepsize: StepsizeRule::Simplified,
            c_floor: 1e-8,
            rls_ridge: 1e-4,
            check_invariants: false,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        let bad_c = match &self.proximal {
            ProximalWeights::Constant(c) => !(*c >= 0.0),
            ProximalWeights::PerElement(v) => v.iter().any(|c| !(*c >= 0.0)),
        };
        if bad_c {
            return Err(Error::InvalidConfig("proximal weights must be ≥ 0".into()));
        }
        if !(self.c_floor > 0.0) {
            return Err(Error::InvalidConfig("c_floor must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorState {
    pub x: DVector<f64>,
    /// Instance whose statistics the next step consumes.
    pub t: usize,
}

impl EstimatorState {
    /// `x⁽¹⁾ = 0`, `t = 1`.
    pub fn initial(k: usize) -> Self {
        Self { x: DVector::zeros(k), t: 1 }
    }
}

/// Everything one step computed.
#[derive(Debug, Clone)]
pub struct StepReport {
    pub t: usize,
    pub gamma: f64,
    pub best_response: DVector<f64>,
    /// `‖x̂ − x‖₂`
    pub step_norm: f64,
    /// Loss at the iterate the step started from.
    pub objective_before: f64,
    /// Loss at the tentative point `x̃`.
    pub objective_tentative: f64,
    /// Loss at the new iterate.
    pub objective_after: f64,
    pub reset_taken: bool,
    pub penalty: Penalty,
    /// Weight factors applied by the weighted schedule.
    pub weights: Option<DVector<f64>>,
}

/// Per-step diagnostic row; columns in declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiagnosticRecord {
    pub t: usize,
    pub gamma: f64,
    pub step_norm: f64,
    pub objective_before: f64,
    pub objective_after: f64,
    pub reset_taken: bool,
}

impl From<&StepReport> for DiagnosticRecord {
    fn from(r: &StepReport) -> Self {
        Self {
            t: r.t,
            gamma: r.gamma,
            step_norm: r.step_norm,
            objective_before: r.objective_before,
            objective_after: r.objective_after,
            reset_taken: r.reset_taken,
        }
    }
}

pub fn write_diagnostics_csv<W: Write>(records: &[DiagnosticRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Estimator {
    cfg: EstimatorConfig,
    state: EstimatorState,
    diagnostics: Option<Vec<DiagnosticRecord>>,
}

impl Estimator {
    pub fn new(k: usize, cfg: EstimatorConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg, state: EstimatorState::initial(k), diagnostics: None })
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.cfg
    }

    pub fn state(&self) -> &EstimatorState {
        &self.state
    }

    pub fn x(&self) -> &DVector<f64> {
        &self.state.x
    }

    /// Start collecting a [`DiagnosticRecord`] per step.
    pub fn enable_diagnostics(&mut self) {
        self.diagnostics.get_or_insert_with(Vec::new);
    }

    /// Drains the collected diagnostics.
    pub fn take_diagnostics(&mut self) -> Vec<DiagnosticRecord> {
        self.diagnostics.as_mut().map(std::mem::take).unwrap_or_default()
    }

    /// Gains in force for `stats`, plus the weight factors in weighted mode.
    pub fn penalty_for(&self, stats: &SufficientStats) -> Result<(Penalty, Option<DVector<f64>>)> {
        let t = stats.t();
        if let RegularizationSchedule::Weighted { a, .. } = self.cfg.schedule {
            let rls = rls_solve(stats, self.cfg.rls_ridge);
            let mu = self.cfg.schedule.mu(t);
            let weights = rls.map(|v| weight_factor(mu, a, v.abs()));
            let penalty = self.cfg.schedule.effective_regularizer(t, Some(&rls))?;
            Ok((penalty, Some(weights)))
        } else {
            Ok((self.cfg.schedule.effective_regularizer(t, None)?, None))
        }
    }

    /// Advances from `x⁽ᵗ⁾` to `x⁽ᵗ⁺¹⁾` using the statistics of instance `t`.
    pub fn step(&mut self, stats: &SufficientStats) -> Result<StepReport> {
        let t = self.state.t;
        if stats.t() != t {
            return Err(Error::NonConsecutiveTime { current: t, found: stats.t() });
        }
        if stats.dim() != self.state.x.len() {
            return Err(Error::DimensionMismatch { expected: self.state.x.len(), found: stats.dim() });
        }
        let (penalty, weights) = self.penalty_for(stats)?;
        let x = &self.state.x;
        let cfg = &self.cfg;

        let gx = stats.g_times(x);
        let objective_before = 0.5 * x.dot(&gx) - stats.b().dot(x) + penalty.weighted_l1(x);
        let xhat = best_response_with(stats, x, &gx, &penalty, &cfg.proximal, cfg.nonnegative, cfg.c_floor)?;
        let d = &xhat - x;
        let gd = stats.g_times(&d);
        let terms = StepTerms::new(stats, x, &xhat, &d, &gx, &gd, &penalty);
        let gamma = match cfg.stepsize {
            StepsizeRule::Simplified if cfg.nonnegative => terms.nonnegative_gamma(),
            StepsizeRule::Simplified => terms.simplified_gamma(),
            StepsizeRule::ExactLineSearch => exact_linesearch(stats, x, &xhat, &penalty),
        };
        let xtilde = x + gamma * &d;
        let reset = reset_step(stats, &penalty, xtilde);
        let report = StepReport {
            t,
            gamma,
            step_norm: d.norm(),
            objective_before,
            objective_tentative: reset.tentative_objective,
            objective_after: reset.objective(),
            reset_taken: reset.reset_taken,
            best_response: xhat,
            penalty,
            weights,
        };
        if cfg.check_invariants {
            self.check_step(stats, &report)?;
        }
        self.state.x = reset.x;
        self.state.t += 1;
        if let Some(d) = self.diagnostics.as_mut() {
            d.push(DiagnosticRecord::from(&report));
        }
        Ok(report)
    }

    fn check_step(&self, stats: &SufficientStats, r: &StepReport) -> Result<()> {
        let c_min = (0..stats.dim()).map(|k| stats.g()[(k, k)] + self.cfg.proximal.at(k)).fold(f64::INFINITY, f64::min);
        let bound = descent_bound(r.gamma, c_min, stats.max_eigenvalue(), r.step_norm);
        if r.objective_tentative - r.objective_before > bound + 1e-9 {
            return Err(Error::InvariantViolation {
                t: r.t,
                detail: format!(
                    "descent bound: ΔL = {:e} exceeds {:e}",
                    r.objective_tentative - r.objective_before,
                    bound
                ),
            });
        }
        if r.objective_after > 0.0 {
            return Err(Error::InvariantViolation {
                t: r.t,
                detail: format!("reset guarantee: L(x⁽ᵗ⁺¹⁾) = {:e} > 0", r.objective_after),
            });
        }
        Ok(())
    }
}

/// Right-hand side of the descent inequality,
/// `−γ(c_min − ½λ_max γ)‖x̂ − x‖²`.
pub fn descent_bound(gamma: f64, c_min: f64, lambda_max: f64, step_norm: f64) -> f64 {
    -gamma * (c_min - 0.5 * lambda_max * gamma) * step_norm * step_norm
}

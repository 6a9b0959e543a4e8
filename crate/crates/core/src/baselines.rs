//! Reference solvers the parallel estimator is compared against: the
//! single-coordinate online update, classical RLS, an accurate batch LASSO
//! solver, and exact line search along a direction.

use nalgebra::{DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::estimator::{soft_threshold, EstimatorState, Penalty, RegularizationSchedule};
use crate::stats::SufficientStats;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    /// Stop when a sweep changes the loss by at most `tol·(1 + |L|)`.
    pub objective_tol: f64,
    pub max_sweeps: usize,
    /// RLS ridge numerator; the ridge applied at instance `t` is this over `t`.
    pub ridge_eps_numerator: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { objective_tol: 1e-12, max_sweeps: 100_000, ridge_eps_numerator: 1e-4 }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.objective_tol > 0.0) || self.max_sweeps == 0 {
            return Err(Error::InvalidConfig("oracle needs tol > 0 and max_sweeps ≥ 1".into()));
        }
        Ok(())
    }
}

/// Updates only element `(t − 1) mod K` to its exact coordinate minimizer
/// `S_μ(r_k) / G_kk`; everything else is left alone.
pub fn sequential_step(
    state: &mut EstimatorState,
    stats: &SufficientStats,
    mu: &Penalty,
    c_floor: f64,
) -> Result<usize> {
    let k = stats.dim();
    if state.x.len() != k {
        return Err(Error::DimensionMismatch { expected: k, found: state.x.len() });
    }
    if stats.t() != state.t {
        return Err(Error::NonConsecutiveTime { current: state.t, found: stats.t() });
    }
    let idx = (state.t - 1) % k;
    let g = stats.g();
    let diag = g[(idx, idx)];
    if !(diag >= c_floor) {
        return Err(Error::DiagonalFloor { index: idx, value: diag, floor: c_floor });
    }
    let r = stats.b()[idx] - g.row(idx).transpose().dot(&state.x) + diag * state.x[idx];
    state.x[idx] = soft_threshold(mu.at(idx), r) / diag;
    state.t += 1;
    Ok(idx)
}

/// Online sequential baseline driven by a plain schedule.
#[derive(Debug, Clone)]
pub struct SequentialEstimator {
    state: EstimatorState,
    schedule: RegularizationSchedule,
    c_floor: f64,
}

impl SequentialEstimator {
    pub fn new(k: usize, schedule: RegularizationSchedule) -> Result<Self> {
        schedule.validate()?;
        if schedule.is_weighted() {
            return Err(Error::Unsupported("sequential baseline takes a plain schedule".into()));
        }
        Ok(Self { state: EstimatorState::initial(k), schedule, c_floor: 1e-8 })
    }

    pub fn x(&self) -> &DVector<f64> {
        &self.state.x
    }

    pub fn state(&self) -> &EstimatorState {
        &self.state
    }

    pub fn step(&mut self, stats: &SufficientStats) -> Result<usize> {
        let mu = Penalty::Uniform(self.schedule.mu(stats.t()));
        sequential_step(&mut self.state, stats, &mu, self.c_floor)
    }
}

/// Minimizer of `½xᵀGx − bᵀx`: `G†b`, or `(G + (ε/t)I)⁻¹b` when `G` is
/// numerically singular (smallest eigenvalue below `1e−10·λ_max`).
pub fn rls_solve(stats: &SufficientStats, ridge_eps_numerator: f64) -> DVector<f64> {
    let k = stats.dim();
    if k == 0 {
        return DVector::zeros(0);
    }
    let eig = SymmetricEigen::new(stats.g().clone());
    let lmax = eig.eigenvalues.max();
    let lmin = eig.eigenvalues.min();
    let ridge = if lmin < 1e-10 * lmax || lmax <= 0.0 { ridge_eps_numerator / stats.t().max(1) as f64 } else { 0.0 };
    // Vᵀb, scaled by the (regularized) inverse eigenvalues, mapped back by V.
    let mut coeffs = eig.eigenvectors.tr_mul(stats.b());
    for (c, l) in coeffs.iter_mut().zip(eig.eigenvalues.iter()) {
        let denom = l + ridge;
        *c = if denom > 0.0 { *c / denom } else { 0.0 };
    }
    &eig.eigenvectors * coeffs
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoSolution {
    pub x: DVector<f64>,
    pub objective: f64,
    pub sweeps: usize,
    /// Loss change over the last sweep.
    pub last_change: f64,
    pub converged: bool,
}

/// Cyclic coordinate minimization of the regularized loss to high accuracy.
///
/// Full sweeps alternate with sweeps over the current nonzeros only; the
/// stopping rule is always checked on a full sweep. If `max_sweeps` runs out
/// the best iterate so far is returned with `converged = false`.
pub fn lasso_oracle(
    stats: &SufficientStats,
    mu: &Penalty,
    cfg: &OracleConfig,
    warm_start: Option<&DVector<f64>>,
) -> LassoSolution {
    let k = stats.dim();
    let g = stats.g();
    let b = stats.b();
    let mut x = warm_start.cloned().unwrap_or_else(|| DVector::zeros(k));
    let mut gx = g * &x;
    let objective = |x: &DVector<f64>, gx: &DVector<f64>| 0.5 * x.dot(gx) - b.dot(x) + mu.weighted_l1(x);

    let coordinate = |i: usize, x: &mut DVector<f64>, gx: &mut DVector<f64>| {
        let gii = g[(i, i)];
        let new = if gii > 0.0 {
            soft_threshold(mu.at(i), b[i] - gx[i] + gii * x[i]) / gii
        } else {
            // Row i of a PSD matrix with zero diagonal is zero: the loss is
            // flat in x_i apart from the ℓ1 term.
            0.0
        };
        let delta = new - x[i];
        if delta != 0.0 {
            x[i] = new;
            gx.axpy(delta, &g.column(i), 1.0);
        }
    };

    let mut current = objective(&x, &gx);
    let mut sweeps = 0;
    let mut last_change = f64::INFINITY;
    let mut converged = false;
    while sweeps < cfg.max_sweeps {
        for i in 0..k {
            coordinate(i, &mut x, &mut gx);
        }
        sweeps += 1;
        gx = g * &x;
        let next = objective(&x, &gx);
        last_change = (current - next).abs();
        current = next;
        if last_change <= cfg.objective_tol * (1.0 + current.abs()) {
            converged = true;
            break;
        }
        let active: Vec<usize> = (0..k).filter(|&i| x[i] != 0.0).collect();
        if active.len() < k {
            let mut inner_prev = current;
            while sweeps < cfg.max_sweeps {
                for &i in &active {
                    coordinate(i, &mut x, &mut gx);
                }
                sweeps += 1;
                let inner = objective(&x, &gx);
                let change = (inner_prev - inner).abs();
                inner_prev = inner;
                if change <= cfg.objective_tol * (1.0 + inner.abs()) {
                    break;
                }
            }
            gx = g * &x;
            current = objective(&x, &gx);
        }
    }
    LassoSolution { x, objective: current, sweeps, last_change, converged }
}

/// Exact minimizer over `[0, 1]` of the loss along `x̂ − x`.
pub fn exact_linesearch(stats: &SufficientStats, x: &DVector<f64>, xhat: &DVector<f64>, mu: &Penalty) -> f64 {
    let d = xhat - x;
    let gx = stats.g_times(x);
    let quad = d.dot(&stats.g_times(&d));
    let lin = (gx - stats.b()).dot(&d);
    exact_linesearch_from_terms(quad, lin, x, &d, mu)
}

/// Exact line search given `dᵀGd` and `(Gx − b)ᵀd`.
///
/// `φ(γ) = ½·quad·γ² + lin·γ + Σ μ_k(|x_k + γd_k| − |x_k|)` is convex and
/// piecewise quadratic with kinks where an element crosses zero. Each piece
/// is minimized in closed form and the best piece wins; ties go to the
/// smaller stepsize.
pub fn exact_linesearch_from_terms(quad: f64, lin: f64, x: &DVector<f64>, d: &DVector<f64>, mu: &Penalty) -> f64 {
    let k = x.len();
    let mut knots: Vec<f64> = (0..k)
        .filter(|&i| d[i] != 0.0 && mu.at(i) != 0.0)
        .map(|i| -x[i] / d[i])
        .filter(|g| *g > 0.0 && *g < 1.0)
        .collect();
    knots.sort_by(|a, b| a.partial_cmp(b).expect("finite knots"));
    knots.dedup();

    let base_l1 = mu.weighted_l1(x);
    let phi = |gamma: f64| -> f64 {
        let l1: f64 = (0..k).map(|i| mu.at(i) * (x[i] + gamma * d[i]).abs()).sum();
        0.5 * quad * gamma * gamma + lin * gamma + (l1 - base_l1)
    };

    let mut best_gamma = 0.0;
    let mut best_value = 0.0;
    let consider = |gamma: f64, best_gamma: &mut f64, best_value: &mut f64| {
        let v = phi(gamma);
        if v < *best_value {
            *best_value = v;
            *best_gamma = gamma;
        }
    };

    let mut lo = 0.0;
    for hi in knots.into_iter().chain(std::iter::once(1.0)) {
        let mid = 0.5 * (lo + hi);
        let slope: f64 = (0..k)
            .filter(|&i| d[i] != 0.0)
            .map(|i| {
                let s = x[i] + mid * d[i];
                mu.at(i) * s.signum() * d[i] * (s != 0.0) as u8 as f64
            })
            .sum();
        let candidate = if quad > 0.0 {
            (-(lin + slope) / quad).clamp(lo, hi)
        } else if lin + slope < 0.0 {
            hi
        } else {
            lo
        };
        consider(candidate, &mut best_gamma, &mut best_value);
        consider(hi, &mut best_gamma, &mut best_value);
        lo = hi;
    }
    best_gamma
}

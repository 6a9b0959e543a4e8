use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::estimator::{evaluate_objective, Penalty};
use crate::stats::SufficientStats;

/// Oracle losses closer to zero than this make the ratio meaningless.
pub const OBJECTIVE_FLOOR: f64 = 1e-14;

/// Relative objective error against the LASSO minimizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveError {
    /// `|L(x) − L(x_opt)| / |L(x_opt)|`
    pub magnitude: f64,
    /// `(L(x) − L(x_opt)) / L(x_opt)`, negative whenever `L(x) > L(x_opt)`
    /// because the optimal loss is negative.
    pub signed: f64,
}

/// `None` when the oracle loss is within [`OBJECTIVE_FLOOR`] of zero.
pub fn metric_relative_objective_error(
    x: &DVector<f64>,
    stats: &SufficientStats,
    mu: &Penalty,
    oracle_x: &DVector<f64>,
) -> Option<ObjectiveError> {
    let opt = evaluate_objective(stats, mu, oracle_x);
    objective_error_from_values(evaluate_objective(stats, mu, x), opt)
}

pub fn objective_error_from_values(value: f64, optimum: f64) -> Option<ObjectiveError> {
    if optimum.abs() <= OBJECTIVE_FLOOR {
        return None;
    }
    let diff = value - optimum;
    Some(ObjectiveError { magnitude: diff.abs() / optimum.abs(), signed: diff / optimum })
}

/// `‖x − x*‖² / ‖x*‖²`.
pub fn metric_relative_square_error(x: &DVector<f64>, x_true: &DVector<f64>) -> Result<f64> {
    let denom = x_true.norm_squared();
    if denom == 0.0 {
        return Err(Error::InvalidConfig("relative square error needs a nonzero true signal".into()));
    }
    if x.len() != x_true.len() {
        return Err(Error::DimensionMismatch { expected: x_true.len(), found: x.len() });
    }
    Ok((x - x_true).norm_squared() / denom)
}

/// Signed percentage `(simplified − optimal) / optimal × 100`; `None` when
/// the optimal stepsize is zero.
pub fn metric_stepsize_error(simplified: f64, optimal: f64) -> Option<f64> {
    if optimal == 0.0 {
        None
    } else {
        Some((simplified - optimal) / optimal * 100.0)
    }
}

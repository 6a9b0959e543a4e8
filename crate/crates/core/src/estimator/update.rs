//! The three closed-form pieces of one parallel update: best response,
//! stepsize, and reset.

use nalgebra::DVector;

use super::schedule::Penalty;
use super::{EstimatorConfig, ProximalWeights};
use crate::error::{Error, Result};
use crate::stats::SufficientStats;

/// `S_a(b) = (b − a)⁺ − (−b − a)⁺`.
#[inline]
pub fn soft_threshold(a: f64, b: f64) -> f64 {
    (b - a).max(0.0) - (-b - a).max(0.0)
}

/// `½xᵀGx − bᵀx + Σ μ_k |x_k|`.
pub fn evaluate_objective(stats: &SufficientStats, mu: &Penalty, x: &DVector<f64>) -> f64 {
    let gx = stats.g_times(x);
    0.5 * x.dot(&gx) - stats.b().dot(x) + mu.weighted_l1(x)
}

/// Elementwise minimizer of the loss plus proximal term with every other
/// element frozen at `x`. All elements read the same `x`.
pub fn best_response(
    stats: &SufficientStats,
    x: &DVector<f64>,
    mu: &Penalty,
    cfg: &EstimatorConfig,
) -> Result<DVector<f64>> {
    let gx = stats.g_times(x);
    best_response_with(stats, x, &gx, mu, &cfg.proximal, cfg.nonnegative, cfg.c_floor)
}

pub(crate) fn best_response_with(
    stats: &SufficientStats,
    x: &DVector<f64>,
    gx: &DVector<f64>,
    mu: &Penalty,
    proximal: &ProximalWeights,
    nonnegative: bool,
    c_floor: f64,
) -> Result<DVector<f64>> {
    let k = stats.dim();
    if x.len() != k {
        return Err(Error::DimensionMismatch { expected: k, found: x.len() });
    }
    let g = stats.g();
    let b = stats.b();
    let mut out = DVector::zeros(k);
    for i in 0..k {
        let ci = proximal.at(i);
        let diag = g[(i, i)] + ci;
        if !(diag >= c_floor) {
            return Err(Error::DiagonalFloor { index: i, value: diag, floor: c_floor });
        }
        // r_i + c_i x_i with r_i = b_i − Σ_{j≠i} G_ij x_j
        let v = b[i] - gx[i] + diag * x[i];
        let m = mu.at(i);
        out[i] = if nonnegative { (v - m).max(0.0) / diag } else { soft_threshold(m, v) / diag };
    }
    Ok(out)
}

/// Closed-form minimizer over `[0, 1]` of the quadratic upper bound in
/// which the ℓ1 change is linearized between `x` and `x̂`.
pub fn stepsize_simplified(
    stats: &SufficientStats,
    x: &DVector<f64>,
    xhat: &DVector<f64>,
    mu: &Penalty,
    nonnegative: bool,
) -> f64 {
    let d = xhat - x;
    let gx = stats.g_times(x);
    let gd = stats.g_times(&d);
    let terms = StepTerms::new(stats, x, xhat, &d, &gx, &gd, mu);
    if nonnegative {
        terms.nonnegative_gamma()
    } else {
        terms.simplified_gamma()
    }
}

/// Scalar ingredients of the stepsize rules along `d = x̂ − x`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct StepTerms {
    /// `dᵀGd`
    pub quad: f64,
    /// `(Gx − b)ᵀd`
    pub lin: f64,
    /// `Σ μ_k(|x̂_k| − |x_k|)`
    pub l1_change: f64,
    /// `Σ μ_k d_k`
    pub l1_slope_nonneg: f64,
}

impl StepTerms {
    pub fn new(
        stats: &SufficientStats,
        x: &DVector<f64>,
        xhat: &DVector<f64>,
        d: &DVector<f64>,
        gx: &DVector<f64>,
        gd: &DVector<f64>,
        mu: &Penalty,
    ) -> Self {
        let lin = (gx - stats.b()).dot(d);
        Self::from_aggregates(d.dot(gd), lin, x, xhat, d, mu)
    }

    pub fn from_aggregates(
        quad: f64,
        lin: f64,
        x: &DVector<f64>,
        xhat: &DVector<f64>,
        d: &DVector<f64>,
        mu: &Penalty,
    ) -> Self {
        Self {
            quad,
            lin,
            // Elementwise differences avoid cancellation between two large sums.
            l1_change: mu.weighted_sum(&xhat.zip_map(x, |a, b| a.abs() - b.abs())),
            l1_slope_nonneg: mu.weighted_sum(d),
        }
    }

    pub fn simplified_gamma(&self) -> f64 {
        clamp_unit(-(self.lin + self.l1_change), self.quad)
    }

    pub fn nonnegative_gamma(&self) -> f64 {
        clamp_unit(-(self.lin + self.l1_slope_nonneg), self.quad)
    }
}

/// `[num/den]₀¹`, with a flat or degenerate curvature mapped to 0.
fn clamp_unit(num: f64, den: f64) -> f64 {
    if !(den > 0.0) {
        return 0.0;
    }
    (num / den).clamp(0.0, 1.0)
}

/// Outcome of the reset check.
#[derive(Debug, Clone, PartialEq)]
pub struct Reset {
    pub x: DVector<f64>,
    /// Loss at the tentative point.
    pub tentative_objective: f64,
    pub reset_taken: bool,
}

impl Reset {
    /// Loss at the returned iterate.
    pub fn objective(&self) -> f64 {
        if self.reset_taken {
            0.0
        } else {
            self.tentative_objective
        }
    }
}

/// Keeps `x̃` when its loss is at most the loss at the origin (zero),
/// otherwise restarts from the origin.
pub fn reset_step(stats: &SufficientStats, mu: &Penalty, xtilde: DVector<f64>) -> Reset {
    let tentative_objective = evaluate_objective(stats, mu, &xtilde);
    if tentative_objective <= 0.0 {
        Reset { x: xtilde, tentative_objective, reset_taken: false }
    } else {
        Reset { x: DVector::zeros(stats.dim()), tentative_objective, reset_taken: true }
    }
}

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Per-element ℓ1 gains `μ_k`.
#[derive(Debug, Clone, PartialEq)]
pub enum Penalty {
    Uniform(f64),
    PerElement(DVector<f64>),
}

impl Penalty {
    #[inline]
    pub fn at(&self, k: usize) -> f64 {
        match self {
            Penalty::Uniform(mu) => *mu,
            Penalty::PerElement(v) => v[k],
        }
    }

    /// `Σ_k μ_k |x_k|`.
    pub fn weighted_l1(&self, x: &DVector<f64>) -> f64 {
        match self {
            Penalty::Uniform(mu) => mu * x.lp_norm(1),
            Penalty::PerElement(v) => v.iter().zip(x.iter()).map(|(m, xk)| m * xk.abs()).sum(),
        }
    }

    /// `Σ_k μ_k d_k`, the ℓ1 slope along `d` on the nonnegative orthant.
    pub fn weighted_sum(&self, d: &DVector<f64>) -> f64 {
        match self {
            Penalty::Uniform(mu) => mu * d.sum(),
            Penalty::PerElement(v) => v.dot(d),
        }
    }

    pub fn to_vector(&self, k: usize) -> DVector<f64> {
        match self {
            Penalty::Uniform(mu) => DVector::from_element(k, *mu),
            Penalty::PerElement(v) => v.clone(),
        }
    }

    pub fn max(&self) -> f64 {
        match self {
            Penalty::Uniform(mu) => *mu,
            Penalty::PerElement(v) => v.max(),
        }
    }
}

/// Rule producing the regularization gain at each instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegularizationSchedule {
    /// `μ⁽ᵗ⁾ = scale / t^exponent`.
    Plain { scale: f64, exponent: f64 },
    /// Plain base gain, scaled per element by the weight factor of the
    /// current RLS estimate.
    Weighted { scale: f64, exponent: f64, a: f64 },
}

impl Default for RegularizationSchedule {
    fn default() -> Self {
        RegularizationSchedule::Plain { scale: 10.0, exponent: 1.0 }
    }
}

impl RegularizationSchedule {
    pub fn validate(&self) -> Result<()> {
        let (scale, exponent) = match *self {
            RegularizationSchedule::Plain { scale, exponent } => (scale, exponent),
            RegularizationSchedule::Weighted { scale, exponent, a } => {
                if !(a > 1.0) {
                    return Err(Error::InvalidConfig(format!("weight parameter a = {a} must exceed 1")));
                }
                (scale, exponent)
            }
        };
        if !(scale > 0.0 && scale.is_finite()) || !(exponent > 0.0 && exponent.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "schedule needs scale > 0 and exponent > 0, got {scale} and {exponent}"
            )));
        }
        Ok(())
    }

    pub fn is_weighted(&self) -> bool {
        matches!(self, RegularizationSchedule::Weighted { .. })
    }

    /// The base gain `μ⁽ᵗ⁾` at instance `t ≥ 1`.
    pub fn mu(&self, t: usize) -> f64 {
        let (scale, exponent) = match *self {
            RegularizationSchedule::Plain { scale, exponent } => (scale, exponent),
            RegularizationSchedule::Weighted { scale, exponent, .. } => (scale, exponent),
        };
        scale / (t as f64).powf(exponent)
    }

    /// Element gains at instance `t`. Weighted mode needs the RLS estimate
    /// computed from the same statistics.
    pub fn effective_regularizer(&self, t: usize, rls_estimate: Option<&DVector<f64>>) -> Result<Penalty> {
        let mu = self.mu(t);
        match *self {
            RegularizationSchedule::Plain { .. } => Ok(Penalty::Uniform(mu)),
            RegularizationSchedule::Weighted { a, .. } => {
                let rls = rls_estimate.ok_or(Error::MissingRlsEstimate)?;
                Ok(Penalty::PerElement(rls.map(|v| mu * weight_factor(mu, a, v.abs()))))
            }
        }
    }
}

/// Piecewise-linear weight: 1 below `μ`, 0 above `aμ`, linear in between.
pub fn weight_factor(mu: f64, a: f64, xabs: f64) -> f64 {
    if xabs <= mu {
        1.0
    } else if xabs >= a * mu {
        0.0
    } else {
        (a * mu - xabs) / ((a - 1.0) * mu)
    }
}

/// First index from which `seq` never increases again, or `None` if the last
/// step still increases. An empty or single-element sequence yields `Some(0)`.
pub fn monotone_onset(seq: &[f64]) -> Option<usize> {
    if seq.len() < 2 {
        return Some(0);
    }
    let last_rise = seq.windows(2).rposition(|w| w[1] > w[0]);
    match last_rise {
        None => Some(0),
        Some(i) if i + 2 == seq.len() => None,
        Some(i) => Some(i + 1),
    }
}

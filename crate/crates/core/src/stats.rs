//! Running sufficient statistics `G⁽ᵗ⁾`, `b⁽ᵗ⁾` of the least-squares loss.
//!
//! Both are kept normalized by `t`:
//!
//! ```text
//! G⁽ᵗ⁾ = ((t−1)·β·G⁽ᵗ⁻¹⁾ + Σₙ gₙgₙᵀ) / t
//! b⁽ᵗ⁾ = ((t−1)·β·b⁽ᵗ⁻¹⁾ + Σₙ yₙgₙ) / t
//! ```
//!
//! With `β = 1` these are the plain sample averages over all instances seen
//! so far.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::signal::RegressionSample;

#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats {
    g: DMatrix<f64>,
    b: DVector<f64>,
    t: usize,
    beta: f64,
}

impl SufficientStats {
    /// Empty statistics for dimension `k`, no forgetting.
    pub fn new(k: usize) -> Self {
        Self { g: DMatrix::zeros(k, k), b: DVector::zeros(k), t: 0, beta: 1.0 }
    }

    /// Empty statistics with forgetting factor `beta ∈ [0, 1]`.
    pub fn with_forgetting(k: usize, beta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::InvalidConfig(format!("forgetting factor {beta} outside [0, 1]")));
        }
        Ok(Self { beta, ..Self::new(k) })
    }

    /// Builds statistics from explicit parts, e.g. for hand-made test problems.
    pub fn from_parts(g: DMatrix<f64>, b: DVector<f64>, t: usize) -> Result<Self> {
        if g.nrows() != g.ncols() {
            return Err(Error::InvalidConfig("G must be square".into()));
        }
        if g.nrows() != b.len() {
            return Err(Error::DimensionMismatch { expected: g.nrows(), found: b.len() });
        }
        Ok(Self { g, b, t, beta: 1.0 })
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn g(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Folds in all samples of instance `t + 1`.
    pub fn update(&mut self, samples: &[RegressionSample]) -> Result<()> {
        let k = self.dim();
        let next = self.t + 1;
        for s in samples {
            if s.g.len() != k {
                return Err(Error::DimensionMismatch { expected: k, found: s.g.len() });
            }
            if s.time != next {
                return Err(Error::NonConsecutiveTime { current: self.t, found: s.time });
            }
        }
        let inv_t = 1.0 / next as f64;
        let keep = self.t as f64 * self.beta * inv_t;
        self.g *= keep;
        self.b *= keep;
        for s in samples {
            self.g.ger(inv_t, &s.g, &s.g, 1.0);
            self.b.axpy(s.y * inv_t, &s.g, 1.0);
        }
        symmetrize(&mut self.g);
        self.t = next;
        Ok(())
    }

    /// `G x`.
    pub fn g_times(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.g * x
    }

    /// Largest eigenvalue of `G`.
    pub fn max_eigenvalue(&self) -> f64 {
        extreme_eigenvalues(&self.g).1
    }

    /// Smallest eigenvalue of `G`.
    pub fn min_eigenvalue(&self) -> f64 {
        extreme_eigenvalues(&self.g).0
    }

    /// Writes `K=..,t=..,beta=..` followed by the `K` rows of `G` and then
    /// `b`, comma separated, row-major. Values use shortest round-trip
    /// formatting so [`SufficientStats::read_snapshot`] restores them exactly.
    pub fn write_snapshot<W: Write>(&self, mut out: W) -> Result<()> {
        let k = self.dim();
        writeln!(out, "K={},t={},beta={}", k, self.t, self.beta)?;
        let join = |it: &mut dyn Iterator<Item = f64>| it.map(|v| v.to_string()).collect::<Vec<_>>().join(",");
        for i in 0..k {
            writeln!(out, "{}", join(&mut (0..k).map(|j| self.g[(i, j)])))?;
        }
        writeln!(out, "{}", join(&mut self.b.iter().copied()))?;
        Ok(())
    }

    pub fn read_snapshot<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines.next().ok_or_else(|| Error::Snapshot("empty input".into()))??;
        let (mut k, mut t, mut beta) = (None, None, None);
        for field in header.split(',') {
            let (key, value) =
                field.split_once('=').ok_or_else(|| Error::Snapshot(format!("bad header field `{field}`")))?;
            let bad = |_| Error::Snapshot(format!("bad header value `{field}`"));
            match key.trim() {
                "K" => k = Some(value.trim().parse::<usize>().map_err(|e| bad(e.to_string()))?),
                "t" => t = Some(value.trim().parse::<usize>().map_err(|e| bad(e.to_string()))?),
                "beta" => beta = Some(value.trim().parse::<f64>().map_err(|e| bad(e.to_string()))?),
                other => return Err(Error::Snapshot(format!("unknown header key `{other}`"))),
            }
        }
        let (k, t, beta) = match (k, t, beta) {
            (Some(k), Some(t), Some(beta)) => (k, t, beta),
            _ => return Err(Error::Snapshot("header needs K, t and beta".into())),
        };
        let mut row = |expect: usize| -> Result<Vec<f64>> {
            let line = lines.next().ok_or_else(|| Error::Snapshot("truncated input".into()))??;
            let vals = line
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Snapshot(e.to_string()))?;
            if vals.len() != expect {
                return Err(Error::Snapshot(format!("row has {} values, expected {expect}", vals.len())));
            }
            Ok(vals)
        };
        let mut g = DMatrix::zeros(k, k);
        for i in 0..k {
            for (j, v) in row(k)?.into_iter().enumerate() {
                g[(i, j)] = v;
            }
        }
        let b = DVector::from_vec(row(k)?);
        Ok(Self { g, b, t, beta })
    }
}

/// Statistics held by a single sensor; they sum to the network-wide ones.
#[derive(Debug, Clone, PartialEq)]
pub struct NodePartialStats {
    sensor_id: usize,
    stats: SufficientStats,
}

impl NodePartialStats {
    pub fn new(sensor_id: usize, k: usize, beta: f64) -> Result<Self> {
        Ok(Self { sensor_id, stats: SufficientStats::with_forgetting(k, beta)? })
    }

    pub fn sensor_id(&self) -> usize {
        self.sensor_id
    }

    pub fn stats(&self) -> &SufficientStats {
        &self.stats
    }

    /// Folds in this node's samples for the next instance; samples from other
    /// sensors are rejected.
    pub fn update(&mut self, samples: &[RegressionSample]) -> Result<()> {
        if let Some(s) = samples.iter().find(|s| s.sensor_id != self.sensor_id) {
            return Err(Error::InvalidConfig(format!(
                "sample from sensor {} offered to node {}",
                s.sensor_id, self.sensor_id
            )));
        }
        self.stats.update(samples)
    }
}

pub(crate) fn symmetrize(g: &mut DMatrix<f64>) {
    let k = g.nrows();
    for j in 0..k {
        for i in (j + 1)..k {
            let avg = 0.5 * (g[(i, j)] + g[(j, i)]);
            g[(i, j)] = avg;
            g[(j, i)] = avg;
        }
    }
}

/// (min, max) eigenvalue of a symmetric matrix.
pub(crate) fn extreme_eigenvalues(g: &DMatrix<f64>) -> (f64, f64) {
    if g.is_empty() {
        return (0.0, 0.0);
    }
    let eig = SymmetricEigen::new(g.clone());
    (eig.eigenvalues.min(), eig.eigenvalues.max())
}

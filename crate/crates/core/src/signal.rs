//! Ground-truth sparse signals and the linear measurement process
//! `y = gᵀx* + v`.
//!
//! All randomness flows through [`StreamTag`]: every draw is taken from a
//! ChaCha8 stream keyed by the scenario seed and selected by a tag naming
//! what is being drawn (the signal, one sensor's sample at one instance, or
//! the innovation at one instance). A centralized run and a distributed run
//! of the same scenario therefore consume identical randomness regardless of
//! the order in which they ask for it.

use std::path::Path;

use nalgebra::DVector;
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of the time-varying signal law `x_{t+1,k} = α x_{t,k} + w_{t,k}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeVarying {
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Signal dimension.
    #[serde(rename = "K")]
    pub k: usize,
    /// Sensors (measurements) per instance.
    #[serde(rename = "N")]
    pub n: usize,
    pub density: f64,
    pub noise_variance: f64,
    pub horizon: usize,
    pub seed: u64,
    #[serde(default)]
    pub nonnegative: bool,
    /// Place the nonzeros on the leading indices instead of a random subset.
    #[serde(default)]
    pub leading_support: bool,
    #[serde(default)]
    pub time_varying: Option<TimeVarying>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            k: 100,
            n: 1,
            density: 0.1,
            noise_variance: 0.2,
            horizon: 1000,
            seed: 1,
            nonnegative: false,
            leading_support: false,
            time_varying: None,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.k == 0 {
            return bad("K must be at least 1".into());
        }
        if self.n == 0 {
            return bad("N must be at least 1".into());
        }
        if self.horizon == 0 {
            return bad("horizon must be at least 1".into());
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return bad(format!("density {} outside (0, 1]", self.density));
        }
        if self.density * (self.k as f64) < 1.0 {
            return bad(format!("density·K = {} < 1 leaves the signal empty", self.density * self.k as f64));
        }
        if !(self.noise_variance >= 0.0 && self.noise_variance.is_finite()) {
            return bad(format!("noise_variance {} must be ≥ 0", self.noise_variance));
        }
        if let Some(tv) = self.time_varying {
            check_alpha(tv.alpha)?;
        }
        Ok(())
    }

    /// Number of nonzero entries, `round(density·K)`.
    pub fn nonzeros(&self) -> usize {
        ((self.density * self.k as f64).round() as usize).clamp(1, self.k)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("alpha {alpha} outside (0, 1)")))
    }
}

/// Names an independent random stream within one scenario seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamTag {
    Signal,
    /// Regressor and noise of sensor `sensor` (1-based) at instance `time`.
    Sample {
        sensor: usize,
        time: usize,
    },
    /// Innovation applied after instance `time`.
    Innovation {
        time: usize,
    },
}

impl StreamTag {
    /// Layout: kind in bits 56..64, time in bits 24..56, sensor in bits 0..24.
    fn stream_id(self) -> u64 {
        match self {
            StreamTag::Signal => 1 << 56,
            StreamTag::Sample { sensor, time } => {
                debug_assert!(sensor < 1 << 24 && (time as u64) < 1 << 32);
                (2 << 56) | ((time as u64) << 24) | sensor as u64
            }
            StreamTag::Innovation { time } => (3 << 56) | ((time as u64) << 24),
        }
    }

    pub fn rng(self, seed: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(self.stream_id());
        rng
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseSignal {
    values: DVector<f64>,
}

impl SparseSignal {
    pub fn new(values: DVector<f64>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Zero-based indices of the nonzero entries, ascending.
    pub fn support(&self) -> Vec<usize> {
        self.values.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(k, _)| k).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionSample {
    pub g: DVector<f64>,
    pub y: f64,
    /// 1-based sensor index.
    pub sensor_id: usize,
    /// 1-based instance index.
    pub time: usize,
}

/// Draws a signal with exactly `round(density·K)` standard-normal nonzeros
/// (absolute values in nonnegative mode).
pub fn generate_signal<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> Result<SparseSignal> {
    cfg.validate()?;
    let m = cfg.nonzeros();
    let support: Vec<usize> = if cfg.leading_support {
        (0..m).collect()
    } else {
        let mut idx = sample_indices(rng, cfg.k, m).into_vec();
        idx.sort_unstable();
        idx
    };
    let mut values = DVector::zeros(cfg.k);
    for k in support {
        // A draw of exactly 0.0 would silently shrink the support.
        let v: f64 = loop {
            let v: f64 = rng.sample(StandardNormal);
            if v != 0.0 {
                break v;
            }
        };
        values[k] = if cfg.nonnegative { v.abs() } else { v };
    }
    Ok(SparseSignal { values })
}

/// One measurement per sensor at instance `t`: `g ~ N(0, I)`, `v ~ N(0, σ²)`.
pub fn generate_instance(signal: &SparseSignal, cfg: &ScenarioConfig, t: usize) -> Result<Vec<RegressionSample>> {
    if signal.len() != cfg.k {
        return Err(Error::DimensionMismatch { expected: cfg.k, found: signal.len() });
    }
    let noise_sd = cfg.noise_variance.sqrt();
    Ok((1..=cfg.n)
        .map(|sensor| {
            let mut rng = StreamTag::Sample { sensor, time: t }.rng(cfg.seed);
            let g = DVector::from_fn(cfg.k, |_, _| rng.sample::<f64, _>(StandardNormal));
            let v: f64 = noise_sd * rng.sample::<f64, _>(StandardNormal);
            let y = g.dot(signal.values()) + v;
            RegressionSample { g, y, sensor_id: sensor, time: t }
        })
        .collect())
}

/// Advances every nonzero entry by `α x + w`, `w ~ N(0, 1 − α²)`; zeros stay zero.
pub fn evolve_signal<R: Rng + ?Sized>(signal: &SparseSignal, alpha: f64, rng: &mut R) -> Result<SparseSignal> {
    check_alpha(alpha)?;
    let innovation = Normal::new(0.0, (1.0 - alpha * alpha).sqrt()).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let values = signal.values.map(|v| if v == 0.0 { 0.0 } else { alpha * v + innovation.sample(rng) });
    Ok(SparseSignal { values })
}

/// One instance of a scenario: the signal in force and the samples it produced.
#[derive(Debug, Clone)]
pub struct Instance {
    pub t: usize,
    pub truth: SparseSignal,
    pub samples: Vec<RegressionSample>,
}

/// Deterministic instance stream for a scenario, `t = 1..=horizon`.
#[derive(Debug, Clone)]
pub struct Scenario {
    cfg: ScenarioConfig,
    signal: SparseSignal,
    next_t: usize,
}

impl Scenario {
    pub fn new(cfg: ScenarioConfig) -> Result<Self> {
        let signal = generate_signal(&cfg, &mut StreamTag::Signal.rng(cfg.seed))?;
        Ok(Self { cfg, signal, next_t: 1 })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    /// The signal that will generate the next instance.
    pub fn signal(&self) -> &SparseSignal {
        &self.signal
    }
}

impl Iterator for Scenario {
    type Item = Instance;

    fn next(&mut self) -> Option<Instance> {
        let t = self.next_t;
        if t > self.cfg.horizon {
            return None;
        }
        let samples = generate_instance(&self.signal, &self.cfg, t).expect("validated scenario");
        let truth = self.signal.clone();
        if let Some(tv) = self.cfg.time_varying {
            let mut rng = StreamTag::Innovation { time: t }.rng(self.cfg.seed);
            self.signal = evolve_signal(&self.signal, tv.alpha, &mut rng).expect("validated alpha");
        }
        self.next_t += 1;
        Some(Instance { t, truth, samples })
    }
}

//! Online parallel estimation of a sparse vector from streaming linear
//! measurements.
//!
//! At every instance the sample statistics `(G, b)` are refreshed and the
//! estimate takes one step on the regularized loss
//! `½xᵀGx − bᵀx + Σ μ_k|x_k|`: all elements compute a soft-thresholded best
//! response in parallel, a closed-form stepsize blends it with the current
//! iterate, and a reset to zero guards against a positive loss.
//!
//! ```
//! use sparse_rls::estimator::{Estimator, EstimatorConfig};
//! use sparse_rls::signal::{Scenario, ScenarioConfig};
//! use sparse_rls::stats::SufficientStats;
//!
//! let cfg = ScenarioConfig { k: 20, horizon: 200, density: 0.2, ..Default::default() };
//! let mut stats = SufficientStats::new(cfg.k);
//! let mut est = Estimator::new(cfg.k, EstimatorConfig::default()).unwrap();
//! for inst in Scenario::new(cfg).unwrap() {
//!     stats.update(&inst.samples).unwrap();
//!     let report = est.step(&stats).unwrap();
//!     assert!(report.objective_after <= 0.0);
//! }
//! ```

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod distnet;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod signal;
pub mod stats;

pub use error::{Error, Result};

#[cfg(doctest)]
#[doc = include_str!("../../../README.md")]
mod readme {}

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/statistics.md")]
    mod statistics {}
    #[doc = include_str!("../../../book/src/parallel-step.md")]
    mod parallel_step {}
    #[doc = include_str!("../../../book/src/baselines.md")]
    mod baselines {}
    #[doc = include_str!("../../../book/src/weighted.md")]
    mod weighted {}
    #[doc = include_str!("../../../book/src/network.md")]
    mod network {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}

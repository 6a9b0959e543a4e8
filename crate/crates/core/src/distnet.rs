//! Round-based simulation of a sensor network running the parallel
//! estimator, with and without a fusion center.
//!
//! Without a fusion center every sensor keeps only its own partial
//! statistics `(G_n, b_n)`. One instance takes two exchange phases:
//!
//! | phase | payload per sensor            | network sum       |
//! |-------|-------------------------------|-------------------|
//! | 1     | `d(G_n)`, `G_n x − b_n`       | `d(G)`, `Gx − b`  |
//! | 2     | `G_n x`, `G_n x̂`              | `Gx`, `Gx̂`        |
//!
//! Phase-1 sums are enough for every sensor to compute the same best
//! response; phase-2 sums give the curvature `dᵀGd` of the stepsize and,
//! together with phase 1, the loss at the tentative point needed by the
//! reset. Sums are exact and reduced in a fixed sensor order, so every
//! sensor ends each round with a bit-identical iterate.

use std::io::Write;

use nalgebra::DVector;
use serde::Serialize;

use crate::baselines::exact_linesearch_from_terms;
use crate::error::{Error, Result};
use crate::estimator::{soft_threshold, Estimator, EstimatorConfig, Penalty, StepTerms, StepsizeRule};
use crate::signal::{RegressionSample, Scenario, ScenarioConfig};
use crate::stats::{NodePartialStats, SufficientStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    FusionCenter,
    FusionFree,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecutionMode {
    /// All sensors computed on the calling thread, in sensor order.
    #[default]
    Lockstep,
    /// One scoped thread per sensor within each phase.
    Threaded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    One,
    Two,
}

/// What a sensor publishes in one exchange phase.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeMessage {
    pub phase: Phase,
    pub sensor_id: usize,
    pub payload: Vec<f64>,
}

/// Reals exchanged by one sensor at one instance. For the fusion-center
/// architecture phase 1 is the uplink `(g, y)` and phase 2 the broadcast.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LedgerEntry {
    pub t: usize,
    pub node: usize,
    pub phase1_reals: usize,
    pub phase2_reals: usize,
    pub total_reals: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignalingLedger {
    pub architecture: Architecture,
    pub entries: Vec<LedgerEntry>,
}

impl SignalingLedger {
    fn new(architecture: Architecture) -> Self {
        Self { architecture, entries: Vec::new() }
    }

    fn record(&mut self, t: usize, node: usize, phase1: usize, phase2: usize) {
        self.entries.push(LedgerEntry {
            t,
            node,
            phase1_reals: phase1,
            phase2_reals: phase2,
            total_reals: phase1 + phase2,
        });
    }

    pub fn total(&self) -> usize {
        self.entries.iter().map(|e| e.total_reals).sum()
    }

    /// Network-wide reals exchanged at instance `t`.
    pub fn instance_total(&self, t: usize) -> usize {
        self.entries.iter().filter(|e| e.t == t).map(|e| e.total_reals).sum()
    }

    /// Columns `t,node,phase1_reals,phase2_reals,total_reals`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for e in &self.entries {
            w.serialize(e)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct NetworkConfig {
    pub scenario: ScenarioConfig,
    pub estimator: EstimatorConfig,
    /// Forgetting factor applied to every statistic.
    pub forgetting: f64,
    pub mode: ExecutionMode,
}

impl NetworkConfig {
    pub fn new(scenario: ScenarioConfig, estimator: EstimatorConfig) -> Self {
        Self { scenario, estimator, forgetting: 1.0, mode: ExecutionMode::Lockstep }
    }
}

/// Iterates `x⁽ᵗ⁺¹⁾` for `t = 1..=T`.
pub type Trajectory = Vec<DVector<f64>>;

/// Single-process run on the pooled statistics.
pub fn run_centralized(cfg: &NetworkConfig) -> Result<Trajectory> {
    let k = cfg.scenario.k;
    let mut stats = SufficientStats::with_forgetting(k, cfg.forgetting)?;
    let mut est = Estimator::new(k, cfg.estimator.clone())?;
    let mut out = Vec::with_capacity(cfg.scenario.horizon);
    for inst in Scenario::new(cfg.scenario.clone())? {
        stats.update(&inst.samples)?;
        est.step(&stats)?;
        out.push(est.x().clone());
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct FusionCenterRun {
    pub trajectory: Trajectory,
    pub ledger: SignalingLedger,
}

/// Sensors ship raw samples up; the center runs the estimator and
/// broadcasts the new iterate.
pub fn run_fusion_center(cfg: &NetworkConfig) -> Result<FusionCenterRun> {
    let k = cfg.scenario.k;
    let mut stats = SufficientStats::with_forgetting(k, cfg.forgetting)?;
    let mut est = Estimator::new(k, cfg.estimator.clone())?;
    let mut ledger = SignalingLedger::new(Architecture::FusionCenter);
    let mut trajectory = Vec::with_capacity(cfg.scenario.horizon);
    for inst in Scenario::new(cfg.scenario.clone())? {
        for s in &inst.samples {
            ledger.record(inst.t, s.sensor_id, s.g.len() + 1, k);
        }
        stats.update(&inst.samples)?;
        est.step(&stats)?;
        trajectory.push(est.x().clone());
    }
    Ok(FusionCenterRun { trajectory, ledger })
}

/// One sensor of the fusion-free network.
#[derive(Debug, Clone)]
pub struct SensorNode {
    partial: NodePartialStats,
    x: DVector<f64>,
    t: usize,
}

/// Sums of the phase-1 payloads.
#[derive(Debug, Clone)]
struct PhaseOneSums {
    diag: DVector<f64>,
    grad: DVector<f64>,
}

/// What a sensor holds between the two phases.
#[derive(Debug, Clone)]
struct Pending {
    xhat: DVector<f64>,
}

/// Per-round values every sensor derived locally.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundSummary {
    pub t: usize,
    pub gamma: f64,
    /// Loss at the tentative point, rebuilt from the exchanged sums.
    pub tentative_objective: f64,
    pub reset_taken: bool,
}

impl SensorNode {
    pub fn new(sensor_id: usize, k: usize, forgetting: f64) -> Result<Self> {
        Ok(Self { partial: NodePartialStats::new(sensor_id, k, forgetting)?, x: DVector::zeros(k), t: 1 })
    }

    pub fn sensor_id(&self) -> usize {
        self.partial.sensor_id()
    }

    pub fn x(&self) -> &DVector<f64> {
        &self.x
    }

    /// Folds in this sensor's own measurement(s) for the current instance.
    pub fn ingest(&mut self, samples: &[RegressionSample]) -> Result<()> {
        self.partial.update(samples)
    }

    fn stats(&self) -> &SufficientStats {
        self.partial.stats()
    }

    pub fn phase_one(&self) -> NodeMessage {
        let s = self.stats();
        let mut payload = Vec::with_capacity(2 * s.dim());
        payload.extend(s.g().diagonal().iter());
        payload.extend((s.g_times(&self.x) - s.b()).iter());
        NodeMessage { phase: Phase::One, sensor_id: self.sensor_id(), payload }
    }

    fn best_response(&self, sums: &PhaseOneSums, mu: &Penalty, cfg: &EstimatorConfig) -> Result<Pending> {
        let k = self.x.len();
        let mut xhat = DVector::zeros(k);
        for i in 0..k {
            let diag = sums.diag[i] + cfg.proximal.at(i);
            if !(diag >= cfg.c_floor) {
                return Err(Error::DiagonalFloor { index: i, value: diag, floor: cfg.c_floor });
            }
            let v = -sums.grad[i] + diag * self.x[i];
            let m = mu.at(i);
            xhat[i] = if cfg.nonnegative { (v - m).max(0.0) / diag } else { soft_threshold(m, v) / diag };
        }
        Ok(Pending { xhat })
    }

    fn phase_two(&self, pending: &Pending) -> NodeMessage {
        let s = self.stats();
        let mut payload = Vec::with_capacity(2 * s.dim());
        payload.extend(s.g_times(&self.x).iter());
        payload.extend(s.g_times(&pending.xhat).iter());
        NodeMessage { phase: Phase::Two, sensor_id: self.sensor_id(), payload }
    }

    fn finish(
        &mut self,
        sums1: &PhaseOneSums,
        sums2: &[f64],
        pending: Pending,
        mu: &Penalty,
        cfg: &EstimatorConfig,
    ) -> RoundSummary {
        let k = self.x.len();
        let gx = DVector::from_column_slice(&sums2[..k]);
        let gxhat = DVector::from_column_slice(&sums2[k..]);
        let d = &pending.xhat - &self.x;
        let gd = &gxhat - &gx;
        let terms = StepTerms::from_aggregates(d.dot(&gd), sums1.grad.dot(&d), &self.x, &pending.xhat, &d, mu);
        let gamma = match cfg.stepsize {
            StepsizeRule::Simplified if cfg.nonnegative => terms.nonnegative_gamma(),
            StepsizeRule::Simplified => terms.simplified_gamma(),
            StepsizeRule::ExactLineSearch => exact_linesearch_from_terms(terms.quad, terms.lin, &self.x, &d, mu),
        };
        let xtilde = &self.x + gamma * &d;
        // L(x̃) = ½x̃ᵀ(2(Gx − b) − Gx + γG(x̂ − x)) + Σμ|x̃|
        let inner = 2.0 * &sums1.grad - &gx + gamma * &gd;
        let tentative_objective = 0.5 * xtilde.dot(&inner) + mu.weighted_l1(&xtilde);
        let reset_taken = tentative_objective > 0.0;
        self.x = if reset_taken { DVector::zeros(k) } else { xtilde };
        let t = self.t;
        self.t += 1;
        RoundSummary { t, gamma, tentative_objective, reset_taken }
    }
}

/// Fixed-order elementwise sum of payloads.
fn reduce(messages: &[NodeMessage]) -> Vec<f64> {
    let mut acc = vec![0.0; messages[0].payload.len()];
    for m in messages {
        for (a, v) in acc.iter_mut().zip(&m.payload) {
            *a += v;
        }
    }
    acc
}

fn for_each_node<I: Sync, T: Send, F>(items: &[I], mode: ExecutionMode, f: F) -> Vec<T>
where
    F: Fn(&I) -> T + Sync,
{
    match mode {
        ExecutionMode::Lockstep => items.iter().map(&f).collect(),
        ExecutionMode::Threaded => std::thread::scope(|scope| {
            let handles: Vec<_> = items.iter().map(|n| scope.spawn(|| f(n))).collect();
            handles.into_iter().map(|h| h.join().expect("sensor thread panicked")).collect()
        }),
    }
}

#[derive(Debug, Clone)]
pub struct FusionFreeRun {
    /// `node_trajectories[n][t − 1]` is sensor `n + 1`'s iterate after instance `t`.
    pub node_trajectories: Vec<Trajectory>,
    pub rounds: Vec<RoundSummary>,
    pub ledger: SignalingLedger,
}

/// Runs the two-phase exchange protocol for the whole horizon.
pub fn run_fusion_free(cfg: &NetworkConfig) -> Result<FusionFreeRun> {
    cfg.estimator.validate()?;
    if cfg.estimator.schedule.is_weighted() {
        return Err(Error::Unsupported("weighted schedule needs the pooled RLS estimate".into()));
    }
    let k = cfg.scenario.k;
    let n = cfg.scenario.n;
    let mut nodes = (1..=n).map(|id| SensorNode::new(id, k, cfg.forgetting)).collect::<Result<Vec<_>>>()?;
    let mut ledger = SignalingLedger::new(Architecture::FusionFree);
    let mut node_trajectories = vec![Vec::with_capacity(cfg.scenario.horizon); n];
    let mut rounds = Vec::with_capacity(cfg.scenario.horizon);

    for inst in Scenario::new(cfg.scenario.clone())? {
        let t = inst.t;
        for node in nodes.iter_mut() {
            let own: Vec<RegressionSample> =
                inst.samples.iter().filter(|s| s.sensor_id == node.sensor_id()).cloned().collect();
            node.ingest(&own)?;
        }
        let mu = Penalty::Uniform(cfg.estimator.schedule.mu(t));

        let phase1 = for_each_node(&nodes, cfg.mode, SensorNode::phase_one);
        let sum1 = reduce(&phase1);
        let sums1 =
            PhaseOneSums { diag: DVector::from_column_slice(&sum1[..k]), grad: DVector::from_column_slice(&sum1[k..]) };

        let pending = for_each_node(&nodes, cfg.mode, |node| node.best_response(&sums1, &mu, &cfg.estimator))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let pairs: Vec<(&SensorNode, &Pending)> = nodes.iter().zip(&pending).collect();
        let phase2 = for_each_node(&pairs, cfg.mode, |(node, p)| node.phase_two(p));
        let sum2 = reduce(&phase2);

        for (node, (m1, m2)) in nodes.iter().zip(phase1.iter().zip(&phase2)) {
            ledger.record(t, node.sensor_id(), m1.payload.len(), m2.payload.len());
        }

        let summaries: Vec<RoundSummary> =
            nodes.iter_mut().zip(pending).map(|(node, p)| node.finish(&sums1, &sum2, p, &mu, &cfg.estimator)).collect();

        let reference = nodes[0].x();
        let deviation = nodes.iter().map(|node| (node.x() - reference).amax()).fold(0.0, f64::max);
        if deviation > 1e-12 * reference.amax().max(1.0) || summaries.iter().any(|s| *s != summaries[0]) {
            return Err(Error::NodeDisagreement { t, deviation });
        }
        for (traj, node) in node_trajectories.iter_mut().zip(&nodes) {
            traj.push(node.x().clone());
        }
        rounds.push(summaries[0]);
    }
    Ok(FusionFreeRun { node_trajectories, rounds, ledger })
}

/// Largest `‖a_t − b_t‖_∞ / max(‖b_t‖_∞, floor)` over a pair of trajectories.
pub fn max_relative_deviation(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).amax() / y.amax().max(f64::MIN_POSITIVE)).fold(0.0, f64::max)
}

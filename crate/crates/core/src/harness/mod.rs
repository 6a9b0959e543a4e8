//! Experiment presets, the Monte-Carlo runner and its CSV output.
//!
//! Every experiment produces long-format rows
//! `t,algorithm,run,metric_name,value`. Run `r` (0-based) uses scenario
//! seed `seed + r`. Metrics at instance `t` are taken on the estimate that
//! has absorbed the samples of instance `t`.

pub mod invariants;
pub mod metrics;

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::baselines::{exact_linesearch, lasso_oracle, rls_solve, OracleConfig, SequentialEstimator};
use crate::error::{Error, Result};
use crate::estimator::{
    evaluate_objective, Estimator, EstimatorConfig, ProximalWeights, RegularizationSchedule, StepsizeRule,
};
use crate::signal::{Scenario, ScenarioConfig, TimeVarying};
use crate::stats::SufficientStats;
use metrics::{metric_relative_square_error, metric_stepsize_error, objective_error_from_values};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Fig1ObjectiveError,
    Fig2SquareError,
    Fig3SignalRecovery,
    Fig4StepsizeError,
    Fig5WeightFactor,
    Fig6TimeVarying,
    Custom,
}

impl Preset {
    pub const ALL: [Preset; 7] = [
        Preset::Fig1ObjectiveError,
        Preset::Fig2SquareError,
        Preset::Fig3SignalRecovery,
        Preset::Fig4StepsizeError,
        Preset::Fig5WeightFactor,
        Preset::Fig6TimeVarying,
        Preset::Custom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Fig1ObjectiveError => "fig1_objective_error",
            Preset::Fig2SquareError => "fig2_square_error",
            Preset::Fig3SignalRecovery => "fig3_signal_recovery",
            Preset::Fig4StepsizeError => "fig4_stepsize_error",
            Preset::Fig5WeightFactor => "fig5_weight_factor",
            Preset::Fig6TimeVarying => "fig6_time_varying",
            Preset::Custom => "custom",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| Error::UnknownPreset(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Parallel,
    ParallelExactLs,
    Sequential,
    Rls,
    LassoOracle,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Parallel,
        Algorithm::ParallelExactLs,
        Algorithm::Sequential,
        Algorithm::Rls,
        Algorithm::LassoOracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Parallel => "parallel",
            Algorithm::ParallelExactLs => "parallel_exact_ls",
            Algorithm::Sequential => "sequential",
            Algorithm::Rls => "rls",
            Algorithm::LassoOracle => "lasso_oracle",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown algorithm `{s}`")))
    }
}

pub mod metric_names {
    pub const REL_OBJECTIVE_ERROR: &str = "rel_objective_error";
    pub const REL_OBJECTIVE_ERROR_SIGNED: &str = "rel_objective_error_signed";
    pub const REL_SQUARE_ERROR: &str = "rel_square_error";
    pub const STEPSIZE_SIMPLIFIED: &str = "stepsize_simplified";
    pub const STEPSIZE_OPTIMAL: &str = "stepsize_optimal";
    pub const STEPSIZE_ERROR_PCT: &str = "stepsize_error_pct";
    /// Suffixed with `[k]`, zero-based element index.
    pub const ESTIMATE: &str = "estimate";
    pub const TRUTH: &str = "truth";
    pub const WEIGHT_FACTOR: &str = "weight_factor";
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub preset: Preset,
    pub scenario: ScenarioConfig,
    pub algorithms: Vec<Algorithm>,
    pub runs: usize,
    pub output_path: Option<PathBuf>,
    pub schedule: RegularizationSchedule,
    pub forgetting: f64,
    pub proximal: f64,
    pub oracle: OracleConfig,
}

impl ExperimentSpec {
    /// The pinned parameter block of a preset at desk scale (20 runs).
    pub fn preset(preset: Preset) -> Self {
        let base = ScenarioConfig {
            k: 100,
            n: 1,
            density: 0.1,
            noise_variance: 0.2,
            horizon: 1000,
            seed: 1,
            nonnegative: false,
            leading_support: false,
            time_varying: None,
        };
        let mut spec = ExperimentSpec {
            preset,
            scenario: base,
            algorithms: vec![
                Algorithm::Parallel,
                Algorithm::ParallelExactLs,
                Algorithm::Sequential,
                Algorithm::LassoOracle,
            ],
            runs: 20,
            output_path: None,
            schedule: RegularizationSchedule::Plain { scale: 10.0, exponent: 1.0 },
            forgetting: 1.0,
            proximal: 1e-6,
            oracle: OracleConfig::default(),
        };
        match preset {
            Preset::Fig1ObjectiveError | Preset::Custom => {}
            Preset::Fig2SquareError => {
                spec.algorithms =
                    vec![Algorithm::Parallel, Algorithm::Sequential, Algorithm::Rls, Algorithm::LassoOracle];
            }
            Preset::Fig3SignalRecovery => {
                spec.algorithms = vec![Algorithm::Parallel];
                spec.runs = 1;
            }
            Preset::Fig4StepsizeError => {
                spec.algorithms = vec![Algorithm::Parallel];
            }
            Preset::Fig5WeightFactor => {
                spec.algorithms = vec![Algorithm::Parallel];
                spec.scenario.leading_support = true;
                spec.scenario.horizon = 2000;
                spec.runs = 1;
                spec.schedule = RegularizationSchedule::Weighted { scale: 1.0, exponent: 0.4, a: 2.0 };
            }
            Preset::Fig6TimeVarying => {
                spec.algorithms = vec![Algorithm::Parallel, Algorithm::Sequential, Algorithm::LassoOracle];
                spec.scenario.horizon = 2000;
                spec.scenario.time_varying = Some(TimeVarying { alpha: 0.99 });
                spec.forgetting = 0.9;
            }
        }
        spec
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.schedule.validate()?;
        self.oracle.validate()?;
        let mismatch = |msg: &str| Err(Error::InvalidConfig(format!("{}: {msg}", self.preset)));
        if self.runs == 0 {
            return mismatch("runs must be at least 1");
        }
        if self.algorithms.is_empty() {
            return mismatch("no algorithms selected");
        }
        if !(0.0..=1.0).contains(&self.forgetting) {
            return mismatch("forgetting factor outside [0, 1]");
        }
        if self.schedule.is_weighted() && self.algorithms.contains(&Algorithm::Sequential) {
            return mismatch("the sequential baseline takes a plain schedule");
        }
        match self.preset {
            Preset::Fig5WeightFactor if !self.schedule.is_weighted() => mismatch("needs a weighted schedule"),
            Preset::Fig4StepsizeError | Preset::Fig5WeightFactor | Preset::Fig3SignalRecovery
                if !self.algorithms.contains(&Algorithm::Parallel) =>
            {
                mismatch("needs the parallel algorithm")
            }
            Preset::Fig6TimeVarying if self.scenario.time_varying.is_none() => {
                mismatch("needs a time-varying scenario")
            }
            _ => Ok(()),
        }
    }

    fn estimator_config(&self, stepsize: StepsizeRule) -> EstimatorConfig {
        EstimatorConfig {
            proximal: ProximalWeights::Constant(self.proximal),
            schedule: self.schedule,
            nonnegative: self.scenario.nonnegative,
            stepsize,
            rls_ridge: self.oracle.ridge_eps_numerator,
            ..Default::default()
        }
    }

    fn wants_objective_error(&self) -> bool {
        matches!(self.preset, Preset::Fig1ObjectiveError | Preset::Custom)
    }

    /// Loads a custom experiment: scenario keys at the top level plus an
    /// optional `[experiment]` table.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text)?;
        let extra: ExperimentFile = match table.remove("experiment") {
            Some(v) => v.try_into()?,
            None => ExperimentFile::default(),
        };
        let scenario: ScenarioConfig = toml::Value::Table(table).try_into()?;
        let mut spec = ExperimentSpec::preset(Preset::Custom);
        spec.scenario = scenario;
        extra.apply(&mut spec)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }
}

/// Optional `[experiment]` table of a custom config file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    pub runs: Option<usize>,
    pub algorithms: Option<Vec<Algorithm>>,
    pub mu_scale: Option<f64>,
    pub mu_exponent: Option<f64>,
    pub weight_a: Option<f64>,
    pub forgetting: Option<f64>,
    pub proximal: Option<f64>,
    pub output_path: Option<PathBuf>,
}

impl ExperimentFile {
    pub fn apply(&self, spec: &mut ExperimentSpec) -> Result<()> {
        if let Some(r) = self.runs {
            spec.runs = r;
        }
        if let Some(a) = &self.algorithms {
            spec.algorithms = a.clone();
        }
        let (mut scale, mut exponent) = match spec.schedule {
            RegularizationSchedule::Plain { scale, exponent } => (scale, exponent),
            RegularizationSchedule::Weighted { scale, exponent, .. } => (scale, exponent),
        };
        scale = self.mu_scale.unwrap_or(scale);
        exponent = self.mu_exponent.unwrap_or(exponent);
        let weight_a = self.weight_a.or(match spec.schedule {
            RegularizationSchedule::Weighted { a, .. } => Some(a),
            RegularizationSchedule::Plain { .. } => None,
        });
        spec.schedule = match weight_a {
            Some(a) => RegularizationSchedule::Weighted { scale, exponent, a },
            None => RegularizationSchedule::Plain { scale, exponent },
        };
        if let Some(f) = self.forgetting {
            spec.forgetting = f;
        }
        if let Some(c) = self.proximal {
            spec.proximal = c;
        }
        if let Some(p) = &self.output_path {
            spec.output_path = Some(p.clone());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub t: usize,
    pub algorithm: Algorithm,
    pub run: usize,
    pub metric_name: String,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub rows: Vec<Row>,
    /// Rows left out because the metric was undefined at that point.
    pub skipped: usize,
    /// Oracle solves that hit `max_sweeps`.
    pub oracle_unconverged: usize,
}

impl Dataset {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    /// Mean over runs of `metric` for `algorithm` at each `t` (averages of
    /// per-run values; runs without a row at `t` are left out).
    pub fn mean_by_t(&self, algorithm: Algorithm, metric: &str) -> BTreeMap<usize, f64> {
        let mut acc: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
        for r in self.rows.iter().filter(|r| r.algorithm == algorithm && r.metric_name == metric) {
            let e = acc.entry(r.t).or_insert((0.0, 0));
            e.0 += r.value;
            e.1 += 1;
        }
        acc.into_iter().map(|(t, (s, n))| (t, s / n as f64)).collect()
    }

    pub fn values(&self, algorithm: Algorithm, metric: &str) -> impl Iterator<Item = &Row> + '_ {
        let metric = metric.to_string();
        self.rows.iter().filter(move |r| r.algorithm == algorithm && r.metric_name == metric)
    }
}

/// Runs every Monte-Carlo repetition of `spec`.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut data = Dataset::default();
    for run in 0..spec.runs {
        run_single(spec, run, &mut data)?;
    }
    if let Some(path) = &spec.output_path {
        data.save(path)?;
    }
    Ok(data)
}

enum Runner {
    Parallel(Box<Estimator>),
    Sequential(SequentialEstimator),
    Rls,
    Oracle,
}

fn run_single(spec: &ExperimentSpec, run: usize, data: &mut Dataset) -> Result<()> {
    let scenario_cfg = ScenarioConfig { seed: spec.scenario.seed.wrapping_add(run as u64), ..spec.scenario.clone() };
    let k = scenario_cfg.k;
    let horizon = scenario_cfg.horizon;
    let mut stats = SufficientStats::with_forgetting(k, spec.forgetting)?;
    // Supplies the regularizer used by the oracle and the metrics.
    let reference = Estimator::new(k, spec.estimator_config(StepsizeRule::Simplified))?;

    let mut runners = spec
        .algorithms
        .iter()
        .map(|&a| {
            Ok((
                a,
                match a {
                    Algorithm::Parallel => {
                        Runner::Parallel(Box::new(Estimator::new(k, spec.estimator_config(StepsizeRule::Simplified))?))
                    }
                    Algorithm::ParallelExactLs => Runner::Parallel(Box::new(Estimator::new(
                        k,
                        spec.estimator_config(StepsizeRule::ExactLineSearch),
                    )?)),
                    Algorithm::Sequential => Runner::Sequential(SequentialEstimator::new(k, spec.schedule)?),
                    Algorithm::Rls => Runner::Rls,
                    Algorithm::LassoOracle => Runner::Oracle,
                },
            ))
        })
        .collect::<Result<Vec<_>>>()?;

    let need_oracle = spec.wants_objective_error() || spec.algorithms.contains(&Algorithm::LassoOracle);
    let mut oracle_x: Option<DVector<f64>> = None;

    for inst in Scenario::new(scenario_cfg)? {
        let t = inst.t;
        stats.update(&inst.samples)?;
        let (penalty, _) = reference.penalty_for(&stats)?;
        let mut optimum = None;
        if need_oracle {
            let sol = lasso_oracle(&stats, &penalty, &spec.oracle, oracle_x.as_ref());
            if !sol.converged {
                data.oracle_unconverged += 1;
            }
            optimum = Some(sol.objective);
            oracle_x = Some(sol.x);
        }
        let truth = inst.truth.values();
        let last = t == horizon;

        for (alg, runner) in runners.iter_mut() {
            let alg = *alg;
            let push = |data: &mut Dataset, metric: String, value: f64| {
                data.rows.push(Row { t, algorithm: alg, run, metric_name: metric, value });
            };
            let estimate: DVector<f64> = match runner {
                Runner::Parallel(est) => {
                    let before = est.x().clone();
                    let report = est.step(&stats)?;
                    if spec.preset == Preset::Fig4StepsizeError && alg == Algorithm::Parallel {
                        let optimal = exact_linesearch(&stats, &before, &report.best_response, &report.penalty);
                        push(data, metric_names::STEPSIZE_SIMPLIFIED.into(), report.gamma);
                        push(data, metric_names::STEPSIZE_OPTIMAL.into(), optimal);
                        match metric_stepsize_error(report.gamma, optimal) {
                            Some(e) => push(data, metric_names::STEPSIZE_ERROR_PCT.into(), e),
                            None => data.skipped += 1,
                        }
                    }
                    if spec.preset == Preset::Fig5WeightFactor {
                        if let Some(w) = &report.weights {
                            for (i, v) in w.iter().enumerate() {
                                push(data, format!("{}[{i}]", metric_names::WEIGHT_FACTOR), *v);
                            }
                        }
                    }
                    est.x().clone()
                }
                Runner::Sequential(seq) => {
                    seq.step(&stats)?;
                    seq.x().clone()
                }
                Runner::Rls => rls_solve(&stats, spec.oracle.ridge_eps_numerator),
                Runner::Oracle => oracle_x.clone().expect("oracle solved above"),
            };

            push(data, metric_names::REL_SQUARE_ERROR.into(), metric_relative_square_error(&estimate, truth)?);
            if spec.wants_objective_error() {
                let value = evaluate_objective(&stats, &penalty, &estimate);
                match objective_error_from_values(value, optimum.expect("oracle solved above")) {
                    Some(e) => {
                        push(data, metric_names::REL_OBJECTIVE_ERROR.into(), e.magnitude);
                        push(data, metric_names::REL_OBJECTIVE_ERROR_SIGNED.into(), e.signed);
                    }
                    None => data.skipped += 1,
                }
            }
            if spec.preset == Preset::Fig3SignalRecovery && last {
                for i in 0..k {
                    push(data, format!("{}[{i}]", metric_names::ESTIMATE), estimate[i]);
                    push(data, format!("{}[{i}]", metric_names::TRUTH), truth[i]);
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_names_roundtrip() {
        for p in Preset::ALL {
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
        }
        assert!(matches!("fig9".parse::<Preset>(), Err(Error::UnknownPreset(_))));
    }

    #[test]
    fn fig1_parameter_block() {
        let s = ExperimentSpec::preset(Preset::Fig1ObjectiveError);
        assert_eq!((s.scenario.k, s.scenario.n), (100, 1));
        assert_eq!(s.scenario.density, 0.1);
        assert_eq!(s.scenario.noise_variance, 0.2);
        assert_eq!(s.schedule, RegularizationSchedule::Plain { scale: 10.0, exponent: 1.0 });
        assert_eq!(s.runs, 20);
        assert_eq!(s.scenario.horizon, 1000);
    }

    #[test]
    fn fig5_and_fig6_parameter_blocks() {
        let s5 = ExperimentSpec::preset(Preset::Fig5WeightFactor);
        assert_eq!(s5.schedule, RegularizationSchedule::Weighted { scale: 1.0, exponent: 0.4, a: 2.0 });
        assert!(s5.scenario.leading_support);
        let s6 = ExperimentSpec::preset(Preset::Fig6TimeVarying);
        assert_eq!(s6.scenario.time_varying, Some(TimeVarying { alpha: 0.99 }));
        assert_eq!(s6.forgetting, 0.9);
    }

    #[test]
    fn fig5_without_weighting_is_rejected() {
        let mut s = ExperimentSpec::preset(Preset::Fig5WeightFactor);
        s.schedule = RegularizationSchedule::Plain { scale: 1.0, exponent: 0.4 };
        assert!(s.validate().is_err());
    }

    #[test]
    fn custom_file_parses() {
        let text = r#"
            K = 8
            N = 2
            density = 0.25
            noise_variance = 0.1
            horizon = 5
            seed = 3

            [experiment]
            runs = 2
            algorithms = ["parallel", "rls"]
            mu_scale = 2.0
        "#;
        let s = ExperimentSpec::from_toml_str(text).unwrap();
        assert_eq!(s.preset, Preset::Custom);
        assert_eq!(s.algorithms, vec![Algorithm::Parallel, Algorithm::Rls]);
        assert_eq!(s.schedule, RegularizationSchedule::Plain { scale: 2.0, exponent: 1.0 });
        assert_eq!(s.runs, 2);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = "K = 8\nN = 1\ndensity = 0.25\nnoise_variance = 0.1\nhorizon = 5\nseed = 3\nbogus = 1\n";
        assert!(ExperimentSpec::from_toml_str(text).is_err());
    }
}

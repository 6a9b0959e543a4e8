//! Acceptance gates. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use sparse_rls::baselines::{lasso_oracle, OracleConfig};
use sparse_rls::distnet::{run_centralized, run_fusion_center, run_fusion_free, NetworkConfig};
use sparse_rls::estimator::{stepsize_simplified, Estimator, EstimatorConfig, Penalty, RegularizationSchedule};
use sparse_rls::harness::metric_names as m;
use sparse_rls::harness::{run_experiment, Algorithm, Dataset, ExperimentSpec, Preset};
use sparse_rls::signal::{Scenario, ScenarioConfig};
use sparse_rls::stats::SufficientStats;

struct Verdict {
    id: usize,
    name: &'static str,
    passed: bool,
    detail: String,
}

fn first_passage(data: &Dataset, alg: Algorithm, threshold: f64) -> Option<usize> {
    data.mean_by_t(alg, m::REL_OBJECTIVE_ERROR).into_iter().find(|&(_, v)| v < threshold).map(|(t, _)| t)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn criterion_1(fig1: &Dataset, elapsed: Duration) -> Verdict {
    let par = first_passage(fig1, Algorithm::Parallel, 1e-2);
    let seq = first_passage(fig1, Algorithm::Sequential, 1e-2);
    let passed = match par {
        Some(p) => p <= 300 && seq.is_none_or(|s| s >= 2 * p) && elapsed <= Duration::from_secs(120),
        None => false,
    };
    Verdict {
        id: 1,
        name: "convergence-speed ordering",
        passed,
        detail: format!(
            "parallel below 1e-2 at t={par:?}, sequential at t={seq:?}, preset run {:.1}s",
            elapsed.as_secs_f64()
        ),
    }
}

fn criterion_2(fig1: &Dataset) -> sparse_rls::Result<Verdict> {
    let simplified = fig1.mean_by_t(Algorithm::Parallel, m::REL_OBJECTIVE_ERROR)[&1000];
    let exact = fig1.mean_by_t(Algorithm::ParallelExactLs, m::REL_OBJECTIVE_ERROR)[&1000];
    let ratio = if simplified == exact { 1.0 } else { (simplified / exact).max(exact / simplified) };

    let fig4 = run_experiment(&ExperimentSpec::preset(Preset::Fig4StepsizeError))?;
    let errs: Vec<f64> =
        fig4.values(Algorithm::Parallel, m::STEPSIZE_ERROR_PCT).filter(|r| r.t >= 50).map(|r| r.value).collect();
    let inside = errs.iter().filter(|e| e.abs() <= 5.0).count() as f64 / errs.len() as f64;
    Ok(Verdict {
        id: 2,
        name: "simplified vs exact stepsize",
        passed: ratio <= 2.0 && inside >= 0.9,
        detail: format!(
            "error ratio at t=1000 {ratio:.4} (simplified {simplified:.3e}, exact {exact:.3e}); \
             {:.2}% of {} stepsize errors within ±5%",
            100.0 * inside,
            errs.len()
        ),
    })
}

fn criterion_3() -> sparse_rls::Result<Verdict> {
    let scenario = ScenarioConfig { horizon: 500, ..ExperimentSpec::preset(Preset::Fig1ObjectiveError).scenario };
    let mut stats = SufficientStats::new(scenario.k);
    let mut est = Estimator::new(scenario.k, EstimatorConfig { check_invariants: true, ..Default::default() })?;
    let mut violation = None;
    let mut steps = 0;
    for inst in Scenario::new(scenario)? {
        stats.update(&inst.samples)?;
        match est.step(&stats) {
            Ok(_) => steps += 1,
            Err(e) => {
                violation = Some(e.to_string());
                break;
            }
        }
    }
    Ok(Verdict {
        id: 3,
        name: "descent and reset invariants",
        passed: violation.is_none() && steps == 500,
        detail: match violation {
            None => format!("{steps} checked steps, no violations"),
            Some(v) => format!("violation after {steps} steps: {v}"),
        },
    })
}

/// Minimizes a unimodal function on `[0, 1]` to an interval below `tol`.
fn golden_section(f: impl Fn(f64) -> f64, tol: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0f64, 1.0f64);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    while b - a > tol {
        if f(c) <= f(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - r * (b - a);
        d = a + r * (b - a);
    }
    0.5 * (a + b)
}

fn criterion_4() -> sparse_rls::Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let k = rng.random_range(1..=20);
        let rows = rng.random_range(1..=2 * k);
        let a = DMatrix::<f64>::from_fn(rows, k, |_, _| rng.sample(StandardNormal));
        let g = a.transpose() * &a / rows as f64;
        let b = DVector::<f64>::from_fn(k, |_, _| rng.sample(StandardNormal));
        let x = DVector::<f64>::from_fn(k, |_, _| rng.sample(StandardNormal));
        let xhat = DVector::<f64>::from_fn(k, |_, _| rng.sample(StandardNormal));
        let mu = Penalty::Uniform(rng.random_range(0.0..1.0));
        let stats = SufficientStats::from_parts(g.clone(), b.clone(), 1)?;

        let d = &xhat - &x;
        let quad = d.dot(&(&g * &d));
        let lin = (&g * &x - &b).dot(&d);
        let l1 = mu.weighted_l1(&xhat) - mu.weighted_l1(&x);
        let bound = |gamma: f64| gamma * (lin + l1) + 0.5 * gamma * gamma * quad;

        let closed = stepsize_simplified(&stats, &x, &xhat, &mu, false);
        let searched = golden_section(bound, 1e-10);
        let best_of = bound(searched).min(bound(0.0)).min(bound(1.0));
        worst = worst.max(bound(closed) - best_of);
    }
    Ok(Verdict {
        id: 4,
        name: "closed-form stepsize optimality",
        passed: worst <= 1e-8,
        detail: format!("10000 instances, worst objective excess over golden section {worst:.3e}"),
    })
}

fn criterion_5() -> sparse_rls::Result<Verdict> {
    let scenario = ScenarioConfig { horizon: 200, ..ExperimentSpec::preset(Preset::Fig1ObjectiveError).scenario };
    let mut stats = SufficientStats::new(scenario.k);
    let mut est = Estimator::new(scenario.k, EstimatorConfig::default())?;
    let oracle = OracleConfig::default();
    let mut warm: Option<DVector<f64>> = None;
    let mut broken = Vec::new();
    for inst in Scenario::new(scenario)? {
        stats.update(&inst.samples)?;
        let r = est.step(&stats)?;
        let sol = lasso_oracle(&stats, &r.penalty, &oracle, warm.as_ref());
        if !(r.objective_before >= r.objective_tentative
            && r.objective_tentative >= r.objective_after
            && r.objective_after >= sol.objective - 1e-8)
        {
            broken.push(inst.t);
        }
        warm = Some(sol.x);
    }
    Ok(Verdict {
        id: 5,
        name: "monotone chain and oracle dominance",
        passed: broken.is_empty(),
        detail: format!("200 instances, out of order at {broken:?}"),
    })
}

fn criterion_6() -> sparse_rls::Result<Verdict> {
    let scenario =
        ScenarioConfig { k: 100, n: 3, horizon: 50, ..ExperimentSpec::preset(Preset::Fig1ObjectiveError).scenario };
    let net = NetworkConfig::new(scenario, EstimatorConfig::default());
    let central = run_centralized(&net)?;
    let ff = run_fusion_free(&net)?;
    let fc = run_fusion_center(&net)?;
    let mut worst = 0.0f64;
    for traj in &ff.node_trajectories {
        for (x, y) in traj.iter().zip(&central) {
            let scale = y.amax();
            let dev = (x - y).amax();
            worst = worst.max(if scale > 0.0 { dev / scale } else { dev });
        }
    }
    let ff_counts: BTreeSet<usize> = ff.ledger.entries.iter().map(|e| e.total_reals).collect();
    let fc_counts: BTreeSet<usize> = fc.ledger.entries.iter().map(|e| e.total_reals).collect();
    let complete = ff.ledger.entries.len() == 150 && fc.ledger.entries.len() == 150;
    let passed = worst <= 1e-12 && complete && ff_counts == BTreeSet::from([400]) && fc_counts == BTreeSet::from([201]);
    Ok(Verdict {
        id: 6,
        name: "distributed equivalence and signaling",
        passed,
        detail: format!(
            "max relative deviation {worst:.3e}; reals per node per instance: fusion-free {ff_counts:?}, fusion-center {fc_counts:?}"
        ),
    })
}

fn criterion_7() -> sparse_rls::Result<Verdict> {
    let mut spec = ExperimentSpec::preset(Preset::Custom);
    spec.scenario = ScenarioConfig { k: 20, density: 0.2, horizon: 2000, ..spec.scenario };
    spec.schedule = RegularizationSchedule::Plain { scale: 20f64.sqrt(), exponent: 1.0 };
    spec.algorithms = vec![Algorithm::Parallel, Algorithm::LassoOracle];
    spec.runs = 20;
    let data = run_experiment(&spec)?;
    let share = |alg| {
        let finals: Vec<f64> = data.values(alg, m::REL_SQUARE_ERROR).filter(|r| r.t == 2000).map(|r| r.value).collect();
        finals.iter().filter(|v| **v <= 1e-2).count() as f64 / finals.len() as f64
    };
    let (par, ora) = (share(Algorithm::Parallel), share(Algorithm::LassoOracle));
    Ok(Verdict {
        id: 7,
        name: "desk-scale strong consistency",
        passed: par >= 0.9 && ora >= 0.9,
        detail: format!("seeds with error ≤ 1e-2 at t=2000: parallel {:.0}%, oracle {:.0}%", 100.0 * par, 100.0 * ora),
    })
}

fn criterion_8() -> sparse_rls::Result<Verdict> {
    let spec = ExperimentSpec::preset(Preset::Fig5WeightFactor);
    let support: BTreeSet<usize> = Scenario::new(spec.scenario.clone())?.signal().support().into_iter().collect();
    let horizon = spec.scenario.horizon;
    let window_start = horizon - horizon / 10 + 1;
    let data = run_experiment(&spec)?;
    let prefix = format!("{}[", m::WEIGHT_FACTOR);
    let mut wrong = BTreeSet::new();
    let mut seen = 0;
    for r in data.rows.iter().filter(|r| r.t >= window_start && r.metric_name.starts_with(&prefix)) {
        let k: usize = r.metric_name[prefix.len()..r.metric_name.len() - 1].parse().expect("element index");
        let expected = if support.contains(&k) { 0.0 } else { 1.0 };
        seen += 1;
        if r.value != expected {
            wrong.insert(k);
        }
    }
    Ok(Verdict {
        id: 8,
        name: "weighted-lasso weight behavior",
        passed: wrong.is_empty() && seen == spec.scenario.k * (horizon - window_start + 1),
        detail: format!("t in [{window_start}, {horizon}], support {support:?}, elements off target {wrong:?}"),
    })
}

fn criterion_9() -> sparse_rls::Result<Verdict> {
    let scenario = ScenarioConfig {
        horizon: 200,
        nonnegative: true,
        ..ExperimentSpec::preset(Preset::Fig1ObjectiveError).scenario
    };
    let mut stats = SufficientStats::new(scenario.k);
    let mut est = Estimator::new(scenario.k, EstimatorConfig { nonnegative: true, ..Default::default() })?;
    let mut negative = 0;
    let mut gap = 0.0f64;
    for inst in Scenario::new(scenario)? {
        stats.update(&inst.samples)?;
        let x = est.x().clone();
        let r = est.step(&stats)?;
        let general = stepsize_simplified(&stats, &x, &r.best_response, &r.penalty, false);
        let orthant = stepsize_simplified(&stats, &x, &r.best_response, &r.penalty, true);
        gap = gap.max((general - orthant).abs());
        if est.x().iter().any(|v| *v < 0.0) {
            negative += 1;
        }
    }
    Ok(Verdict {
        id: 9,
        name: "nonnegative mode",
        passed: negative == 0 && gap <= 1e-12,
        detail: format!("200 steps, {negative} with a negative element, largest stepsize gap {gap:.3e}"),
    })
}

fn criterion_10() -> sparse_rls::Result<Verdict> {
    let spec = ExperimentSpec::preset(Preset::Fig6TimeVarying);
    let horizon = spec.scenario.horizon;
    let start = horizon - horizon / 4 + 1;
    let data = run_experiment(&spec)?;
    let steady =
        |alg| median(data.values(alg, m::REL_SQUARE_ERROR).filter(|r| r.t >= start).map(|r| r.value).collect());
    let (par, seq) = (steady(Algorithm::Parallel), steady(Algorithm::Sequential));
    Ok(Verdict {
        id: 10,
        name: "time-varying tracking",
        passed: par <= seq,
        detail: format!("median relative square error for t ≥ {start}: parallel {par:.4}, sequential {seq:.4}"),
    })
}

fn run() -> sparse_rls::Result<Vec<Verdict>> {
    let clock = Instant::now();
    let fig1 = run_experiment(&ExperimentSpec::preset(Preset::Fig1ObjectiveError))?;
    let elapsed = clock.elapsed();
    Ok(vec![
        criterion_1(&fig1, elapsed),
        criterion_2(&fig1)?,
        criterion_3()?,
        criterion_4()?,
        criterion_5()?,
        criterion_6()?,
        criterion_7()?,
        criterion_8()?,
        criterion_9()?,
        criterion_10()?,
    ])
}

fn main() -> ExitCode {
    match run() {
        Ok(verdicts) => {
            for v in &verdicts {
                let tag = if v.passed { "PASS" } else { "FAIL" };
                println!("{tag} criterion {:>2} {}: {}", v.id, v.name, v.detail);
            }
            let failed = verdicts.iter().filter(|v| !v.passed).count();
            println!("acceptance: {} passed, {failed} failed", verdicts.len() - failed);
            if failed == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            println!("FAIL acceptance aborted: {e}");
            ExitCode::FAILURE
        }
    }
}

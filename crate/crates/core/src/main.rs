use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sparse_rls::estimator::RegularizationSchedule;
use sparse_rls::harness::{invariants, run_experiment, Algorithm, ExperimentSpec, Preset};
use sparse_rls::signal::TimeVarying;
use sparse_rls::{Error, Result};

#[derive(Parser)]
#[command(name = "sparse-rls", version, about = "Online parallel sparse signal estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a preset (fig1_objective_error … fig6_time_varying) or `custom --config FILE`.
    Run(Box<RunArgs>),
    /// Run the seeded invariant checks and print one line per check.
    Invariants {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    preset: String,
    /// TOML scenario file, required for `custom`.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long = "k")]
    k: Option<usize>,
    #[arg(long = "n")]
    n: Option<usize>,
    #[arg(long)]
    density: Option<f64>,
    #[arg(long)]
    noise_variance: Option<f64>,
    #[arg(long)]
    nonnegative: bool,
    #[arg(long)]
    leading_support: bool,
    /// Signal correlation for a time-varying scenario.
    #[arg(long)]
    alpha: Option<f64>,
    /// Forgetting factor β of the statistics.
    #[arg(long)]
    forgetting: Option<f64>,
    #[arg(long)]
    mu_scale: Option<f64>,
    #[arg(long)]
    mu_exponent: Option<f64>,
    /// Switches to the weighted schedule with this `a`.
    #[arg(long)]
    weight_a: Option<f64>,
    /// Comma-separated subset of parallel,parallel_exact_ls,sequential,rls,lasso_oracle.
    #[arg(long, value_delimiter = ',')]
    algorithms: Option<Vec<String>>,
}

impl RunArgs {
    fn spec(&self) -> Result<ExperimentSpec> {
        let preset: Preset = self.preset.parse()?;
        let mut spec = match (preset, &self.config) {
            (Preset::Custom, Some(path)) => ExperimentSpec::load(path)?,
            (Preset::Custom, None) => return Err(Error::InvalidConfig("custom needs --config <file>".into())),
            (_, Some(_)) => return Err(Error::InvalidConfig("--config is only read by `custom`".into())),
            (p, None) => ExperimentSpec::preset(p),
        };
        let sc = &mut spec.scenario;
        if let Some(v) = self.seed {
            sc.seed = v;
        }
        if let Some(v) = self.horizon {
            sc.horizon = v;
        }
        if let Some(v) = self.k {
            sc.k = v;
        }
        if let Some(v) = self.n {
            sc.n = v;
        }
        if let Some(v) = self.density {
            sc.density = v;
        }
        if let Some(v) = self.noise_variance {
            sc.noise_variance = v;
        }
        sc.nonnegative |= self.nonnegative;
        sc.leading_support |= self.leading_support;
        if let Some(alpha) = self.alpha {
            sc.time_varying = Some(TimeVarying { alpha });
        }
        if let Some(v) = self.runs {
            spec.runs = v;
        }
        if let Some(v) = self.forgetting {
            spec.forgetting = v;
        }
        let (scale, exponent, a) = match spec.schedule {
            RegularizationSchedule::Plain { scale, exponent } => (scale, exponent, None),
            RegularizationSchedule::Weighted { scale, exponent, a } => (scale, exponent, Some(a)),
        };
        let scale = self.mu_scale.unwrap_or(scale);
        let exponent = self.mu_exponent.unwrap_or(exponent);
        spec.schedule = match self.weight_a.or(a) {
            Some(a) => RegularizationSchedule::Weighted { scale, exponent, a },
            None => RegularizationSchedule::Plain { scale, exponent },
        };
        if let Some(names) = &self.algorithms {
            spec.algorithms = names.iter().map(|n| n.parse::<Algorithm>()).collect::<Result<_>>()?;
        }
        if self.out.is_some() {
            spec.output_path = self.out.clone();
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn run(args: &RunArgs) -> Result<()> {
    let spec = args.spec()?;
    let data = run_experiment(&spec)?;
    if spec.output_path.is_none() {
        data.write_csv(std::io::stdout().lock())?;
    }
    eprintln!(
        "{}: {} rows, {} undefined metric rows skipped, {} oracle solves unconverged",
        spec.preset,
        data.rows.len(),
        data.skipped,
        data.oracle_unconverged
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => run(args).map(|_| true),
        Command::Invariants { seed } => invariants::run_suite(*seed).map(|outcomes| {
            for o in &outcomes {
                println!("{o}");
            }
            outcomes.iter().all(|o| o.passed)
        }),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

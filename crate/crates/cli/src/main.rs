//! `churnpool`: staged churn-modeling pipeline.
//!
//! ```text
//! churnpool gen-data        simulate or resample SME datasets
//! churnpool pretrain        boosted trees on the public corpus
//! churnpool extract-priors  attribution-based coefficient prior
//! churnpool fit             hierarchical posterior by NUTS
//! churnpool calibrate       conformal threshold on held-out rows
//! churnpool predict         per-customer probabilities and sets
//! churnpool evaluate        K-fold comparison against baselines
//! ```
//!
//! Exit codes: 0 success, 2 config error, 3 diagnostic failure, 4 data error.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::Layout;
use config::{DataMode, RunConfig};
use error::CliResult;

#[derive(Debug, Parser)]
#[command(name = "churnpool", version, about = "Hierarchical churn modeling for networks of small businesses")]
struct Cli {
    /// TOML run configuration; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Run directory holding every stage's artifacts.
    #[arg(long, global = true, default_value = "run")]
    out: PathBuf,

    /// Overwrite existing artifacts.
    #[arg(long, global = true)]
    force: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    GenData(GenDataArgs),
    Pretrain(PretrainArgs),
    ExtractPriors(PriorArgs),
    Fit(FitArgs),
    Calibrate(CalibrateArgs),
    Predict(PredictArgs),
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
struct GenDataArgs {
    #[arg(long, value_enum)]
    mode: Option<DataMode>,
    #[arg(long)]
    n_smes: Option<usize>,
    #[arg(long)]
    n_per: Option<usize>,
    #[arg(long)]
    n_features: Option<usize>,
    #[arg(long)]
    sigma_true: Option<f64>,
    #[arg(long)]
    mu_scale: Option<f64>,
    #[arg(long)]
    source_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PretrainArgs {
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    tree_depth: Option<usize>,
    #[arg(long)]
    early_stopping_rounds: Option<usize>,
}

#[derive(Debug, Args)]
struct PriorArgs {
    /// Prior variance scaling.
    #[arg(long)]
    prior_scaling: Option<f64>,
}

#[derive(Debug, Args)]
struct SamplerArgs {
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    chains: Option<usize>,
    #[arg(long)]
    warmup: Option<usize>,
    #[arg(long)]
    draws: Option<usize>,
    #[arg(long)]
    target_accept: Option<f64>,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    sampler: SamplerArgs,
    #[arg(long)]
    calibration_split: Option<f64>,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    #[arg(long)]
    alpha: Option<f64>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    /// CSV of customers to score; defaults to every SME row.
    #[arg(long)]
    input: Option<PathBuf>,
    /// SME for input rows that lack an `sme_id` column.
    #[arg(long)]
    sme: Option<String>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[command(flatten)]
    sampler: SamplerArgs,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    folds: Option<usize>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl SamplerArgs {
    fn apply(self, c: &mut RunConfig) {
        let h = &mut c.hierarchical;
        set(&mut h.tau, self.tau);
        set(&mut h.number_of_chains, self.chains);
        set(&mut h.mcmc_warmup_iterations, self.warmup);
        set(&mut h.mcmc_sampling_iterations, self.draws);
        set(&mut h.target_accept_rate, self.target_accept);
    }
}

fn resolve(cli: &Cli) -> CliResult<RunConfig> {
    let mut c = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    set(&mut c.seed, cli.seed);
    Ok(c)
}

fn run(cli: Cli) -> CliResult<()> {
    let mut config = resolve(&cli)?;
    let layout = Layout::new(&cli.out);
    let force = cli.force;
    match cli.command {
        Command::GenData(a) => {
            let d = &mut config.data;
            set(&mut d.mode, a.mode);
            set(&mut d.n_smes, a.n_smes);
            set(&mut d.n_per, a.n_per);
            set(&mut d.n_features, a.n_features);
            set(&mut d.sigma_true, a.sigma_true);
            set(&mut d.mu_scale, a.mu_scale);
            if a.source_csv.is_some() {
                d.source_csv = a.source_csv;
            }
            config.validate()?;
            commands::gen_data(&config, &layout, force)
        }
        Command::Pretrain(a) => {
            let g = &mut config.gbdt;
            set(&mut g.iterations, a.iterations);
            set(&mut g.learning_rate, a.learning_rate);
            set(&mut g.tree_depth, a.tree_depth);
            set(&mut g.early_stopping_rounds, a.early_stopping_rounds);
            config.validate()?;
            commands::pretrain(&config, &layout, force)
        }
        Command::ExtractPriors(a) => {
            set(&mut config.hierarchical.prior_scaling, a.prior_scaling);
            config.validate()?;
            commands::extract(&config, &layout, force)
        }
        Command::Fit(a) => {
            a.sampler.apply(&mut config);
            set(&mut config.conformal.calibration_split, a.calibration_split);
            config.validate()?;
            commands::fit(&config, &layout, force)
        }
        Command::Calibrate(a) => {
            set(&mut config.conformal.miscoverage_rate, a.alpha);
            config.validate()?;
            commands::calibrate(&config, &layout, force)
        }
        Command::Predict(a) => {
            config.validate()?;
            commands::predict(&config, &layout, force, a.input.as_deref(), a.sme.as_deref())
        }
        Command::Evaluate(a) => {
            a.sampler.apply(&mut config);
            set(&mut config.conformal.miscoverage_rate, a.alpha);
            set(&mut config.evaluate.folds, a.folds);
            config.validate()?;
            commands::evaluate(&config, &layout, force)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}


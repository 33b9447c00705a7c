use std::path::PathBuf;
use std::process::ExitCode;

use broil::config::{Cell, ExperimentConfig, PosteriorConfig, PosteriorSource, ScriptedDemos};
use broil::harness::{self, Prepared};
use broil::io::{self, Checkpoint};
use broil::{HarnessError, Result};
use broil_core::broil::{Algorithm, Metric};
use broil_core::env::demos::{scripted_demos, DemoVariant};
use broil_core::env::{EnvKind, Environment};
use broil_core::eval::{self, evaluate};
use broil_core::posterior::McmcConfig;
use broil_core::risk::RiskMeasure;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "broil", version, about = "Soft-robust policy optimization under reward uncertainty")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one policy (the first λ, α and seed of the config) and evaluate it.
    Train(RunArgs),
    /// Train and evaluate every (λ, α, seed) cell and write the frontier.
    Sweep(RunArgs),
    /// Run MCMC over a preference file or scripted demonstrations.
    InferPosterior(InferArgs),
    /// Evaluate a saved checkpoint.
    Evaluate(EvaluateArgs),
    /// Write scripted TrashBot preference data.
    MakeDemos(DemoArgs),
    /// Print the default config for an environment.
    PrintConfig {
        #[arg(long, value_enum)]
        env: EnvArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum EnvArg {
    Cartpole,
    Pointmass,
    Trashbot,
}

impl From<EnvArg> for EnvKind {
    fn from(e: EnvArg) -> Self {
        match e {
            EnvArg::Cartpole => EnvKind::CartPole,
            EnvArg::Pointmass => EnvKind::Pointmass,
            EnvArg::Trashbot => EnvKind::TrashBot,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum RiskArg {
    Cvar,
    Erm,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    ExpectedReturn,
    BaselineRegret,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgoArg {
    Vanilla,
    Ppo,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    All,
    TrashVsIdle,
    WhiteVsGray,
    TradeOff,
}

impl From<VariantArg> for DemoVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::All => DemoVariant::All,
            VariantArg::TrashVsIdle => DemoVariant::TrashVsIdle,
            VariantArg::WhiteVsGray => DemoVariant::WhiteVsGray,
            VariantArg::TradeOff => DemoVariant::TradeOff,
        }
    }
}

/// Config source plus overrides. List flags accept comma-separated values.
#[derive(Args)]
struct RunArgs {
    /// Environment preset (ignored when --config is given, except as a check).
    #[arg(long, value_enum)]
    env: Option<EnvArg>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    alpha: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    lambda: Vec<f64>,
    #[arg(long, value_enum)]
    risk: Option<RiskArg>,
    #[arg(long, value_enum)]
    metric: Option<MetricArg>,
    #[arg(long, value_enum)]
    algo: Option<AlgoArg>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    seed: Vec<u64>,
    /// Evaluation episodes per cell.
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut c = match (&self.config, self.env) {
            (Some(path), env) => {
                let c = ExperimentConfig::load(path)?;
                if let Some(e) = env {
                    if c.env.kind() != EnvKind::from(e) {
                        return Err(HarnessError::config("--env does not match the config file"));
                    }
                }
                c
            }
            (None, Some(env)) => ExperimentConfig::preset(env.into()),
            (None, None) => return Err(HarnessError::config("give --env or --config")),
        };
        if !self.alpha.is_empty() {
            c.sweep.alphas = self.alpha.clone();
        }
        if !self.lambda.is_empty() {
            c.sweep.lambdas = self.lambda.clone();
        }
        if !self.seed.is_empty() {
            c.sweep.seeds = self.seed.clone();
        }
        if let Some(r) = self.risk {
            c.optimizer.risk.measure = match r {
                RiskArg::Cvar => RiskMeasure::Cvar,
                RiskArg::Erm => RiskMeasure::Erm,
            };
        }
        if let Some(m) = self.metric {
            c.optimizer.metric = match m {
                MetricArg::ExpectedReturn => Metric::ExpectedReturn,
                MetricArg::BaselineRegret => Metric::BaselineRegret,
            };
        }
        if let Some(a) = self.algo {
            c.optimizer.algorithm = match a {
                AlgoArg::Vanilla => Algorithm::Vanilla,
                AlgoArg::Ppo => Algorithm::Ppo,
            };
        }
        if let Some(e) = self.epochs {
            c.optimizer.epochs = e;
        }
        if let Some(n) = self.episodes {
            c.evaluation.episodes = n;
        }
        if let Some(out) = &self.out {
            c.output_dir = out.clone();
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args)]
struct InferArgs {
    /// Preference JSON file; without it, scripted demos for --env are used.
    #[arg(long)]
    prefs: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "trashbot")]
    env: EnvArg,
    #[arg(long, value_enum, default_value = "all")]
    variant: VariantArg,
    #[arg(long, default_value_t = 0)]
    demo_seed: u64,
    /// Chain seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    steps: Option<usize>,
    /// Posterior JSON to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Config supplying environment, posterior and risk settings; defaults to
    /// the preset of the checkpoint's environment.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the evaluation rollouts as CSV.
    #[arg(long)]
    trajectories: Option<PathBuf>,
}

#[derive(Args)]
struct DemoArgs {
    #[arg(long, value_enum, default_value = "trashbot")]
    env: EnvArg,
    #[arg(long, value_enum, default_value = "all")]
    variant: VariantArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn print_row(r: &harness::FrontierRow) {
    println!(
        "lambda={} alpha={} seed={} exp_return={} risk_value={} gray_steps={} trash={} |x|_mean={}",
        r.cell.lambda,
        r.cell.alpha,
        r.cell.seed,
        r.exp_return,
        r.risk_value,
        io::fmt_opt(r.gray_steps),
        io::fmt_opt(r.trash),
        io::fmt_opt(r.abs_x_mean)
    );
}

fn train(args: &RunArgs) -> Result<()> {
    let mut config = args.resolve()?;
    config.sweep.lambdas.truncate(1);
    config.sweep.alphas.truncate(1);
    config.sweep.seeds.truncate(1);
    let report = harness::sweep(&config, |_| {})?;
    report.rows.iter().for_each(print_row);
    Ok(())
}

fn sweep(args: &RunArgs) -> Result<()> {
    let config = args.resolve()?;
    let report = harness::sweep(&config, |r| eprintln!("finished {}", r.cell.tag()))?;
    report.rows.iter().for_each(print_row);
    eprintln!("wrote {}", config.output_dir.join("frontier.csv").display());
    Ok(())
}

fn infer(args: &InferArgs) -> Result<()> {
    let mut cfg = PosteriorConfig::of(PosteriorSource::Preferences);
    cfg.mcmc = McmcConfig { seed: args.seed, ..McmcConfig::default() };
    if let Some(steps) = args.steps {
        cfg.mcmc.steps = steps;
    }
    match &args.prefs {
        Some(p) => cfg.path = Some(p.clone()),
        None => cfg.demos = Some(ScriptedDemos { variant: args.variant.into(), seed: args.demo_seed }),
    }
    let env = broil_core::env::EnvConfig::default_for(args.env.into());
    let built = broil::error_at_startup(harness::build_posterior(&cfg, &env))?;
    io::write_posterior(&args.out, &built.posterior)?;
    eprintln!("wrote {} hypotheses to {}", built.posterior.len(), args.out.display());
    Ok(())
}

fn evaluate_checkpoint(args: &EvaluateArgs) -> Result<()> {
    let ckpt = Checkpoint::read(&args.checkpoint)?;
    let mut config = match &args.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::preset(ckpt.env),
    };
    if config.env.kind() != ckpt.env {
        return Err(HarnessError::config("checkpoint and config are for different environments"));
    }
    if let Some(n) = args.episodes {
        config.evaluation.episodes = n;
    }
    config.sweep.lambdas = vec![ckpt.lambda];
    config.sweep.alphas = vec![ckpt.alpha];
    let Prepared { posterior, config, .. } = harness::prepare(&config)?;
    let policy = ckpt.policy()?;
    let mut env = config.env.build()?;
    if policy.observation_dim() != env.observation_dim() || policy.action_space() != env.action_space() {
        return Err(HarnessError::config("checkpoint does not fit the environment"));
    }
    let opt = harness::optimizer_for(&config.optimizer, Cell { lambda: ckpt.lambda, alpha: ckpt.alpha, seed: args.seed });
    let episodes = config.evaluation.episodes;
    let gt = config.evaluation.ground_truth.as_deref();
    let ev = evaluate(&policy, &mut env, &posterior, &opt.risk, episodes, args.seed, gt)?;
    if let Some(path) = &args.trajectories {
        let trajs = eval::rollouts(&mut env, episodes, args.seed, |obs, rng| policy.sample_action(obs, rng))?;
        io::write_atomic(path, &io::trajectories_csv(&trajs)?)?;
    }
    let row = harness::FrontierRow {
        cell: Cell { lambda: ckpt.lambda, alpha: ckpt.alpha, seed: args.seed },
        exp_return: ev.expected_return,
        risk_value: ev.risk_value,
        gray_steps: ev.metrics.gray_steps,
        trash: ev.metrics.trash,
        abs_x_mean: ev.metrics.abs_x_mean,
        ground_truth: ev.ground_truth,
        rho: ev.rho,
    };
    print_row(&row);
    Ok(())
}

fn make_demos(args: &DemoArgs) -> Result<()> {
    let kind: EnvKind = args.env.into();
    let data = broil::error_at_startup(scripted_demos(kind, args.variant.into(), args.seed).map_err(Into::into))?;
    let names = broil_core::env::EnvConfig::default_for(kind).build()?.feature_names();
    io::write_preferences(&args.out, &data, &names)?;
    eprintln!("wrote {} trajectories, {} preferences", data.trajectories.len(), data.preferences.len());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => train(&a),
        Command::Sweep(a) => sweep(&a),
        Command::InferPosterior(a) => infer(&a),
        Command::Evaluate(a) => evaluate_checkpoint(&a),
        Command::MakeDemos(a) => make_demos(&a),
        Command::PrintConfig { env } => {
            print!("{}", ExperimentConfig::preset(env.into()).to_toml()?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

use anyhow::{Context, Result};
use aor_cli::artifacts::RunDir;
use aor_cli::config::{ConfigError, Method, RunConfig};
use aor_cli::{oracle_report, stages, TinyShape};
use aor_core::RewardSpec;
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "aor", version, about = "Active object recognition experiments")]
struct Cli {
    /// Run configuration (TOML). Defaults to the built-in experiment.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Replicate to operate on for single-stage commands.
    #[arg(long, global = true, default_value_t = 0)]
    replicate: usize,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the world, its scores and the train/test split.
    Generate,
    /// Label every training image with planner action-values.
    Plan,
    /// Train one policy.
    Train {
        /// One of rnd, nfq, nfq-guided, ac, ac-guided, lstm.
        method: String,
    },
    /// Evaluate every configured policy on the test images.
    Evaluate,
    /// Run one observation-model reweighting iteration.
    Reweight,
    /// Every stage for every replicate, then a pooled table.
    Pipeline,
    /// Exact values of a random tiny instance at the uniform belief.
    Oracle {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        states: usize,
        #[arg(long, default_value_t = 2)]
        actions: usize,
        #[arg(long, default_value_t = 4)]
        observations: usize,
        #[arg(long, default_value_t = 3)]
        horizon: usize,
        #[arg(long, default_value_t = 0.9)]
        gamma: f64,
    },
    /// Print the built-in configuration as TOML.
    DefaultConfig,
}

fn load_config(cli: &Cli) -> Result<(RunConfig, String)> {
    let (mut config, text) = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            (RunConfig::from_toml(&text)?, text)
        }
        None => {
            let config = RunConfig::default();
            let text = config.to_toml();
            (config, text)
        }
    };
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    Ok((config, text))
}

fn run(cli: Cli) -> Result<()> {
    if let Command::Oracle {
        seed,
        states,
        actions,
        observations,
        horizon,
        gamma,
    } = cli.command
    {
        let reward = RewardSpec {
            gamma,
            ..RewardSpec::default()
        };
        let shape = TinyShape {
            states,
            actions,
            observations,
            horizon,
        };
        print!("{}", oracle_report(seed, shape, reward)?);
        return Ok(());
    }
    if let Command::DefaultConfig = cli.command {
        print!("{}", RunConfig::default().to_toml());
        return Ok(());
    }
    let (config, text) = load_config(&cli)?;
    let out = config.output_dir.clone();
    if let Command::Pipeline = cli.command {
        let table = stages::pipeline(&config, &text, &out)?;
        print!("{}", table.summary());
        return Ok(());
    }
    let dir = RunDir::prepare(&out, &text, &config, cli.replicate)?;
    match cli.command {
        Command::Generate => stages::generate(&config, &dir)?,
        Command::Plan => stages::plan(&config, &dir)?,
        Command::Train { method } => {
            let method = Method::from_name(&method).ok_or_else(|| {
                let names: Vec<&str> = Method::ALL.iter().map(|m| m.name()).collect();
                anyhow::anyhow!("unknown method '{method}'; expected one of {}", names.join(", "))
            })?;
            stages::train(&config, &dir, method)?;
        }
        Command::Evaluate => print!("{}", stages::evaluate_methods(&config, &dir)?.summary()),
        Command::Reweight => println!("{}", aor_core::obsopt::describe(&stages::reweight(&config, &dir)?)),
        Command::Pipeline | Command::Oracle { .. } | Command::DefaultConfig => unreachable!("handled above"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

//! `sht`: train, evaluate and analyse hypergraph-transformer recommenders.

mod commands;
mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{parse_overrides, RunConfig, UsageError};

#[derive(Parser)]
#[command(name = "sht", version, about = "Hypergraph-transformer collaborative filtering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Key overrides, written `--key value` or `--key=value`. `sht keys` lists them.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model; writes checkpoints, per-epoch metrics and final reports.
    Train(Common),
    /// Evaluate a checkpoint (`checkpoint`) on a split at `cutoffs`.
    Evaluate(Common),
    /// Retrain on graphs with a share of edges replaced by noise (`ratios`).
    NoiseTest(Common),
    /// Metrics per interaction-count bucket (`boundaries`, `axis`).
    SparsityReport(Common),
    /// Train the full model and each ablation in `flags`.
    Ablate(Common),
    /// Time naive against factorized attention for each of `bench_nodes`.
    Bench(Common),
    /// Export one RGB color per item from a checkpoint (`palette`).
    Colorize(Common),
    /// Vary one training key at a time over `grid`.
    Sweep(Common),
    /// Write a block-model interaction file (`synthetic`).
    Synth(Common),
    /// Print the effective configuration.
    Config(Common),
    /// List every configuration key.
    Keys,
}

fn resolve(c: &Common) -> anyhow::Result<RunConfig> {
    let overrides = parse_overrides(&c.overrides)?;
    RunConfig::resolve(c.config.as_deref(), &overrides)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let (common, action): (&Common, fn(&RunConfig) -> anyhow::Result<()>) = match &cli.command {
        Command::Train(c) => (c, commands::train),
        Command::Evaluate(c) => (c, commands::evaluate_cmd),
        Command::NoiseTest(c) => (c, commands::noise_test),
        Command::SparsityReport(c) => (c, commands::sparsity),
        Command::Ablate(c) => (c, commands::ablate),
        Command::Bench(c) => (c, commands::bench),
        Command::Colorize(c) => (c, commands::colorize),
        Command::Sweep(c) => (c, commands::sweep),
        Command::Synth(c) => (c, commands::synth),
        Command::Config(c) => {
            print!("{}", resolve(c)?.to_kv_string());
            return Ok(());
        }
        Command::Keys => {
            for k in RunConfig::keys() {
                println!("{k}");
            }
            return Ok(());
        }
    };
    action(&resolve(common)?)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().find(|l| !l.trim().is_empty()).unwrap_or("invalid arguments");
            eprintln!("{}", first.trim());
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = if e.downcast_ref::<UsageError>().is_some() { 1 } else { 2 };
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::from(code)
        }
    }
}

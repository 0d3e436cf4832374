use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ilos::{Overrides, RunConfig, Stage};

#[derive(Parser)]
#[command(name = "ilos", version, about = "Imminent loss-of-signal forecasting pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic telemetry and the outage log.
    Synth(Common),
    /// Parse PM tables into port-level series.
    Ingest(Common),
    /// Window, label, filter and split; merge the mega dataset.
    Build(Common),
    /// Train per-network models.
    Train(Common),
    /// Train models on the mega dataset.
    Pretrain(Common),
    /// Fine-tune the pre-trained recurrent model per network.
    Finetune(Common),
    /// Score every trained model on its test split and subsets.
    Evaluate(Common),
    /// Write the comparison table and PR-curve figure.
    Report(Common),
    /// Run every stage in order.
    All(Common),
    /// Print a complete config with default values.
    DefaultConfig {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "workspace")]
        workspace: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Artifact directory, overriding the config.
    #[arg(long, env = "ILOS_WORKSPACE")]
    workspace: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads, overriding the config.
    #[arg(long, env = "ILOS_THREADS")]
    threads: Option<usize>,
}

fn run(stages: &[Stage], c: &Common) -> ilos::Result<()> {
    let overrides = Overrides { workspace: c.workspace.clone(), inputs: None, threads: c.threads, seed: c.seed };
    let cfg = RunConfig::load(&c.config, &overrides)?;
    for &stage in stages {
        if stages.len() > 1 && stage == Stage::Synth && !cfg.paths.inputs.is_empty() {
            continue;
        }
        let out = ilos::run(stage, &cfg)?;
        eprintln!("{}: ok ({} outputs)", stage.as_str(), out.outputs.len());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (stages, common): (Vec<Stage>, Common) = match cli.command {
        Command::DefaultConfig { seed, workspace } => {
            print!("{}", RunConfig::new(seed, workspace).to_toml());
            return ExitCode::SUCCESS;
        }
        Command::Synth(c) => (vec![Stage::Synth], c),
        Command::Ingest(c) => (vec![Stage::Ingest], c),
        Command::Build(c) => (vec![Stage::Build], c),
        Command::Train(c) => (vec![Stage::Train], c),
        Command::Pretrain(c) => (vec![Stage::Pretrain], c),
        Command::Finetune(c) => (vec![Stage::Finetune], c),
        Command::Evaluate(c) => (vec![Stage::Evaluate], c),
        Command::Report(c) => (vec![Stage::Report], c),
        Command::All(c) => (Stage::ALL.to_vec(), c),
    };
    match run(&stages, &common) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use purelab::config::Config;
use purelab::pipeline::Pipeline;

/// Dilution-series imaging pipeline: simulate acquisitions, normalize them to
/// transmittance, train a patch classifier, and report per-run accuracy.
#[derive(Parser)]
#[command(name = "purelab", version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// TOML config describing geometry, optics, training, and runs.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (defaults to the config's `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed; rewrites every seed in the config deterministically.
    #[arg(long)]
    seed: Option<u64>,
    /// Suppress progress lines (warnings still go to stderr).
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize raw acquisition stacks for every flavor and fraction.
    Simulate(CommonArgs),
    /// Convert raw stacks into masked transmittance images.
    Normalize(CommonArgs),
    /// Sample classification patches and the pretraining corpus.
    Patch(CommonArgs),
    /// Reconstruction-pretrain the network on the corpus.
    Pretrain(CommonArgs),
    /// Fine-tune per run and write the accuracy report.
    Finetune(CommonArgs),
    /// Re-score saved fine-tuned networks without retraining.
    Eval(CommonArgs),
    /// Colorimetric distributions and transmittance maps per image.
    Analyze(CommonArgs),
    /// The whole pipeline end to end.
    Run(CommonArgs),
}

impl Command {
    fn common(&self) -> &CommonArgs {
        match self {
            Command::Simulate(c)
            | Command::Normalize(c)
            | Command::Patch(c)
            | Command::Pretrain(c)
            | Command::Finetune(c)
            | Command::Eval(c)
            | Command::Analyze(c)
            | Command::Run(c) => c,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let common = cli.cmd.common();

    let mut cfg = match Config::load(&common.config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(master) = common.seed {
        cfg.override_master_seed(master);
    }

    let pipeline = match Pipeline::new(cfg, common.out.clone(), common.quiet) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code());
        }
    };
    let result = match &cli.cmd {
        Command::Simulate(_) => pipeline.cmd_simulate(),
        Command::Normalize(_) => pipeline.cmd_normalize(),
        Command::Patch(_) => pipeline.cmd_patch(),
        Command::Pretrain(_) => pipeline.cmd_pretrain(),
        Command::Finetune(_) => pipeline.cmd_finetune(),
        Command::Eval(_) => pipeline.cmd_eval(),
        Command::Analyze(_) => pipeline.cmd_analyze(),
        Command::Run(_) => pipeline.cmd_run(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

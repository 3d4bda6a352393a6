//! `cam`: train, specialize, evaluate and self-check from the command line.
//!
//! Exit codes: 0 on success, 1 on a runtime failure, 2 when the
//! configuration or the inputs are invalid.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "cam", version, about = "Population self-play with per-agent specialization")]
struct Cli {
    /// Worker threads for episode collection and evaluation.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the shared conditional policy.
    TrainMia {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides `master_seed` from the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fine-tune one specialist per agent against a trained shared policy.
    TrainCam {
        /// Run directory written by `train-mia`.
        #[arg(long)]
        mia: PathBuf,
        /// Defaults to the config stored in the shared-policy run.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Evaluation games per opponent slot.
        #[arg(long)]
        games: Option<usize>,
    },
    /// Evaluate checkpoints.
    Eval {
        #[arg(value_enum)]
        what: EvalKind,
        #[command(flatten)]
        args: EvalArgs,
    },
    /// Run the built-in gradient or oracle checks.
    Check {
        #[arg(value_enum)]
        what: CheckKind,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum EvalKind {
    Matrix,
    Diversity,
    Mi,
}

#[derive(Clone, Copy, ValueEnum)]
enum CheckKind {
    Gradients,
    Oracle,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint files or run directories. A directory contributes its
    /// specialists if it has any, otherwise its latest generation.
    #[arg(long, num_args = 1.., required = true)]
    inputs: Vec<PathBuf>,
    /// Second population: opponents for `matrix`, the population compared
    /// against for `diversity`.
    #[arg(long, num_args = 1..)]
    compare: Vec<PathBuf>,
    /// Fixed opponent for `diversity`; defaults to `baseline.ckpt` next to
    /// the inputs, or the inputs' own shared policy.
    #[arg(long)]
    opponent: Option<PathBuf>,
    /// Defaults to `config.toml` next to the first input.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Games per pairing (matrix, mi) or episodes per matchup (diversity).
    #[arg(long)]
    games: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::TrainMia { config, out, seed } => commands::train_mia(&config, &out, seed),
        Command::TrainCam {
            mia,
            config,
            out,
            seed,
            games,
        } => commands::train_cam(&mia, config.as_deref(), &out, seed, games),
        Command::Eval { what, args } => match what {
            EvalKind::Matrix => commands::eval_matrix(&args),
            EvalKind::Diversity => commands::eval_diversity(&args),
            EvalKind::Mi => commands::eval_mi(&args),
        },
        Command::Check { what } => commands::check(matches!(what, CheckKind::Gradients)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}

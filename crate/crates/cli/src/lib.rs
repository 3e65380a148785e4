//! Batch pipeline: `mutate -> annotate -> train -> score / evaluate / sweep`,
//! driven by one TOML config file.

pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::Summary;
pub use config::{Overrides, RunConfig};
pub use error::{CliError, CliResult};

use commands::score::ScoreInput;

#[derive(Debug, Parser)]
#[command(name = "pcs", version, about = "Perceived confidence scores for black-box LLM classifiers")]
pub struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Root seed; overrides `seed` in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output directory; overrides `output_dir` in the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write metamorphic variants of every sample to variants.jsonl.
    Mutate,
    /// Label every variant with every backend into annotations.json.
    Annotate,
    /// Fit MR and backend weights into the weights file.
    Train,
    /// Score the annotated dataset, one text, or a file of texts.
    Score {
        #[arg(long, conflicts_with = "input")]
        text: Option<String>,
        /// File with one text per line.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Ignore the weights file and weight everything equally.
        #[arg(long)]
        uniform: bool,
    },
    /// Compare PCS with zero-shot and majority-vote baselines.
    Evaluate {
        /// Build the report from a CSV of per-row AUROC values instead.
        #[arg(long)]
        replay: Option<PathBuf>,
    },
    /// Held-out AUROC against calibration-set size.
    Sweep {
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<usize>,
        #[arg(long)]
        repeats: Option<usize>,
    },
}

impl Cli {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            output_dir: self.out.clone(),
        }
    }

    fn load_config(&self) -> CliResult<RunConfig> {
        let path = self
            .config
            .as_ref()
            .ok_or_else(|| CliError::Config("--config is required for this command".into()))?;
        RunConfig::load(path, &self.overrides())
    }
}

/// Execute one command.
pub fn run(cli: &Cli) -> CliResult<Summary> {
    if let Command::Evaluate { replay: Some(csv) } = &cli.command {
        let output_dir = match (&cli.out, &cli.config) {
            (Some(out), _) => out.clone(),
            (None, Some(_)) => cli.load_config()?.output_dir,
            (None, None) => PathBuf::from("out"),
        };
        return commands::evaluate::replay(csv, &output_dir);
    }
    let cfg = cli.load_config()?;
    match &cli.command {
        Command::Mutate => commands::mutate::run(&cfg),
        Command::Annotate => commands::annotate::run(&cfg),
        Command::Train => commands::train::run(&cfg),
        Command::Score { text, input, uniform } => {
            let input = match (text, input) {
                (Some(t), _) => ScoreInput::Text(t.clone()),
                (None, Some(p)) => ScoreInput::File(p.clone()),
                (None, None) => ScoreInput::Dataset,
            };
            commands::score::run(&cfg, &input, *uniform)
        }
        Command::Evaluate { .. } => commands::evaluate::run(&cfg),
        Command::Sweep { sizes, repeats } => commands::sweep::run(&cfg, sizes, *repeats),
    }
}

//! `gibberlex` drives the corpus-synthesis and evaluation pipeline stage by
//! stage, with deterministic artifacts on disk.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 missing or
//! corrupt upstream artifact, 3 transport failure or budget abort.

mod config;
mod stages;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use config::{load_file_config, PipelineConfig};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, bad config, or invalid inputs. Exit 1.
    Usage(String),
    /// A required pipeline artifact is missing or unreadable. Exit 2.
    Stage(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Stage(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) | CliError::Stage(msg) => f.write_str(msg),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "gibberlex",
    version,
    about = "Synthesize parallel English/gibberish domain corpora and evaluate answer backends on ontology-learning tasks"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

/// Every config value can be overridden here; flags win over the file.
#[derive(Debug, Args)]
pub struct GlobalOpts {
    /// Path to the pipeline config (TOML)
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Corpus seed; all stage randomness derives from it
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Lexicon file (line-delimited concept records)
    #[arg(long, global = true)]
    pub lexicon: Option<PathBuf>,
    /// Output directory for pipeline artifacts
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Display name for stats rows
    #[arg(long, global = true)]
    pub domain_name: Option<String>,
    /// Root concept ids
    #[arg(long, global = true, value_delimiter = ',')]
    pub roots: Option<Vec<String>>,
    /// Maximal exploration depth
    #[arg(long, global = true)]
    pub depth: Option<usize>,
    /// Relations to traverse (hyponym, hypernym, derivation, topic)
    #[arg(long, global = true, value_delimiter = ',')]
    pub relations: Option<Vec<String>>,
    /// Follow taxonomy edges towards subclasses (default true)
    #[arg(long, global = true)]
    pub descend_taxonomy: Option<bool>,
    /// Walk derivation/topic edges in both directions (default true)
    #[arg(long, global = true)]
    pub bidirectional_lateral: Option<bool>,
    /// Also match plural surfaces when linking (breaks invertibility)
    #[arg(long, global = true)]
    pub plural_tolerant: Option<bool>,
    /// Relation-extraction prompt header file
    #[arg(long, global = true)]
    pub re_template: Option<PathBuf>,
    /// Taxonomy-discovery prompt header file
    #[arg(long, global = true)]
    pub td_template: Option<PathBuf>,
    /// Backend kind: gold-oracle, english-only-oracle, fixed, replay, remote
    #[arg(long, global = true)]
    pub backend: Option<String>,
    /// Constant answer for the fixed backend
    #[arg(long, global = true)]
    pub fixed_answer: Option<String>,
    /// Predictions file to replay
    #[arg(long, global = true)]
    pub replay_from: Option<PathBuf>,
    /// Chat-completions URL for the remote backend
    #[arg(long, global = true)]
    pub endpoint: Option<String>,
    /// Model name for the remote backend
    #[arg(long, global = true)]
    pub model: Option<String>,
    /// Environment variable holding the endpoint key
    #[arg(long, global = true)]
    pub api_key_env: Option<String>,
    /// Price per 1000 prompt tokens
    #[arg(long, global = true)]
    pub input_price: Option<f64>,
    /// Price per 1000 completion tokens
    #[arg(long, global = true)]
    pub output_price: Option<f64>,
    /// Cost ceiling; instances beyond it are skipped
    #[arg(long, global = true)]
    pub budget: Option<f64>,
    /// Maximum concurrent backend calls
    #[arg(long, global = true)]
    pub max_in_flight: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Mine the domain from the lexicon (writes domain.json)
    Mine,
    /// Link in-domain mentions inside definitions (writes links.jsonl)
    Link,
    /// Generate the gibberish corpus (writes form_map.jsonl, corpus.jsonl)
    Gibberify,
    /// Build evaluation instances for both tasks and variants
    BuildTasks,
    /// Execute instances against the configured backend
    Run,
    /// Score predictions in all three settings
    Score,
    /// Export the fine-tuning split
    ExportFinetune,
    /// Print a dataset statistics row
    Stats,
    /// Run every stage in order
    Pipeline,
}

fn dispatch(cli: Cli) -> CliResult<()> {
    let file = load_file_config(cli.global.config.as_deref())?;
    let config = PipelineConfig::resolve(file, &cli.global)?;
    match cli.command {
        Command::Mine => stages::stage_mine(&config),
        Command::Link => stages::stage_link(&config),
        Command::Gibberify => stages::stage_gibberify(&config),
        Command::BuildTasks => stages::stage_build_tasks(&config),
        Command::Run => finish_run(stages::stage_run(&config)?),
        Command::Score => stages::stage_score(&config),
        Command::ExportFinetune => stages::stage_export_finetune(&config),
        Command::Stats => stages::stage_stats(&config),
        Command::Pipeline => finish_run(stages::stage_pipeline(&config)?),
    }
}

fn finish_run(clean: bool) -> CliResult<()> {
    if clean {
        Ok(())
    } else {
        // predictions were written; surface the abort through the exit code
        eprintln!("run incomplete: some instances failed or were skipped");
        std::process::exit(3);
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err)
            if matches!(
                err.kind(),
                ErrorKind::DisplayHelp
                    | ErrorKind::DisplayVersion
                    | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand
            ) =>
        {
            print!("{err}");
            return ExitCode::SUCCESS;
        }
        Err(err) => {
            eprint!("{err}");
            return ExitCode::from(1);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.code())
        }
    }
}

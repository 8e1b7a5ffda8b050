use std::path::PathBuf;

use cfkit_core::backends::MockTask;
use cfkit_core::metrics::LabelMode;
use cfkit_core::ControlCode;
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Counterfactual perturbation toolkit.
#[derive(Debug, Parser)]
#[command(name = "cfkit", version, about)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalOpts {
    /// TOML configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Seed for blank placement and generation.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Base URL of the generation, scoring and prediction backend.
    #[arg(long, global = true, value_name = "URL")]
    pub backend_url: Option<String>,
    /// Use the built-in deterministic mock backend.
    #[arg(long, global = true)]
    pub mock: bool,
    /// Task the mock backend imitates (overrides the config file).
    #[arg(long, global = true, value_enum)]
    pub mock_task: Option<TaskArg>,
    /// Log at debug level (RUST_LOG overrides).
    #[arg(short, long, global = true)]
    pub verbose: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TaskArg {
    Sentiment,
    Nli,
    Qqp,
}

impl From<TaskArg> for MockTask {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Sentiment => MockTask::Sentiment,
            TaskArg::Nli => MockTask::Nli,
            TaskArg::Qqp => MockTask::Qqp,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    Diversity,
    Surprise,
    Contrast,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LabelModeArg {
    Deprel,
    Upos,
    DeprelUpos,
}

impl From<LabelModeArg> for LabelMode {
    fn from(m: LabelModeArg) -> Self {
        match m {
            LabelModeArg::Deprel => LabelMode::Deprel,
            LabelModeArg::Upos => LabelMode::Upos,
            LabelModeArg::DeprelUpos => LabelMode::DeprelUpos,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Assign control codes to sentence pairs (pairs JSONL or CoNLL-U with revisions).
    Classify {
        input: PathBuf,
        /// Output JSONL (stdout when omitted).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Emit training prompts for every pair, or generation prompts for every original.
    Prompts {
        corpus: PathBuf,
        /// Generation prompts instead of training prompts.
        #[arg(long)]
        generation: bool,
        /// Codes to request in generation mode (default: all eight).
        #[arg(long, value_delimiter = ',')]
        codes: Option<Vec<ControlCode>>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Generate candidate counterfactuals for the originals of a corpus.
    Generate {
        corpus: PathBuf,
        /// Restrict to these sentence ids.
        #[arg(long, value_delimiter = ',')]
        ids: Option<Vec<String>>,
        #[arg(long, value_delimiter = ',')]
        codes: Option<Vec<ControlCode>>,
        /// Skip task-model predictions.
        #[arg(long)]
        no_predict: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Split candidates into fluent (kept) and rejected.
    Filter {
        corpus: PathBuf,
        candidates: PathBuf,
        /// Maximum tolerated log-probability drop.
        #[arg(long)]
        threshold: Option<f64>,
        /// Kept candidates (stdout when omitted).
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Where to write rejected and undecided candidates.
        #[arg(long)]
        rejected: Option<PathBuf>,
    },
    /// Choose a subset of candidates.
    Select {
        /// Candidates JSONL, or labeled rows for the contrast strategy.
        input: PathBuf,
        #[arg(long, value_enum)]
        strategy: StrategyArg,
        /// Corpus holding the originals (diversity and surprise).
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Candidates kept per original (diversity).
        #[arg(short, long)]
        k: Option<usize>,
        /// JSONL of `{"id", "weights"}` attribution maps (surprise).
        #[arg(long)]
        attribution: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Intrinsic diversity and closeness metrics.
    Metrics {
        /// Candidates JSONL, or sets as `{"original", "revisions"}` lines.
        input: PathBuf,
        /// Corpus holding the originals of candidate input.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, value_enum)]
        label_mode: Option<LabelModeArg>,
        /// Print a text table instead of JSON.
        #[arg(long)]
        table: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Mine perturbation templates and their flip rates as TSV.
    Templates {
        corpus: PathBuf,
        candidates: PathBuf,
        /// Fraction of candidates the chosen templates must cover.
        #[arg(long)]
        budget: Option<f64>,
        /// Emit the full mining result as JSON instead of TSV.
        #[arg(long)]
        json: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run the HTTP analysis service.
    Serve {
        #[arg(long, env = "CFKIT_PORT", default_value_t = cfkit_service::DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Session storage directory.
        #[arg(long, env = "CFKIT_DATA_DIR", default_value = "cfkit-data")]
        data_dir: PathBuf,
    },
    /// Serve the mock backend over HTTP.
    MockBackend {
        #[arg(long, default_value_t = 8090)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
}

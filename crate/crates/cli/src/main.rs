mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mgspan::ErrorClass;

#[derive(Parser)]
#[command(name = "mgspan", version, about = "Multi-granular gated propaganda span identification")]
struct Cli {
    /// Log progress (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a corpus and write token-level labels.
    Ingest(IngestArgs),
    /// Build the feature extractor from a run config and report its dimensions.
    Featurize(FeaturizeArgs),
    /// Train one model per seed, keeping the best dev span-F1 checkpoint.
    Train(TrainArgs),
    /// Predict spans for a directory of articles.
    Predict(PredictArgs),
    /// Character-level majority vote over several prediction files.
    Ensemble(EnsembleArgs),
    /// Gap merging, boundary trimming and loaded-language labelling.
    Postprocess(PostprocessArgs),
    /// Span-level normalized precision, recall and F1.
    Score(ScoreArgs),
    /// Generate the synthetic marker-word corpus and a run config for it.
    MakeFixtures(FixtureArgs),
}

#[derive(Args)]
pub struct IngestArgs {
    /// Directory of article<ID>.txt files.
    #[arg(long)]
    pub articles: PathBuf,
    /// Gold spans TSV: article_id, start, end.
    #[arg(long)]
    pub labels: PathBuf,
    /// Optional sentence bounds TSV: article_id, start, end.
    #[arg(long)]
    pub sentences: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct FeaturizeArgs {
    /// Run config JSON (see docs/config.schema.json).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Run config JSON (see docs/config.schema.json).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Random seed; overrides the config. [default: 1]
    #[arg(long, conflicts_with = "seeds")]
    pub seed: Option<u64>,
    /// Comma-separated seeds, one run each, e.g. 1,2,3,12,123,1234,12345.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    /// Sentences per optimizer step. [default: 8]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Maximum epochs. [default: 20]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Adam learning rate. [default: 0.001]
    #[arg(long)]
    pub lr: Option<f64>,
    /// Sentence-loss share of the joint loss. [default: 0.9]
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Decoupled L2 weight decay. [default: 0.0001]
    #[arg(long)]
    pub l2_beta: Option<f64>,
    /// Epochs without dev span-F1 improvement before stopping. [default: 9]
    #[arg(long)]
    pub patience: Option<usize>,
    /// Stop once dev span F1 reaches this value.
    #[arg(long)]
    pub target_f1: Option<f64>,
    /// Train without class weights.
    #[arg(long)]
    pub unweighted: bool,
    /// Add one to every class count before computing class weights.
    #[arg(long)]
    pub smoothing: bool,
    /// Concurrent training runs when several seeds are given.
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
}

#[derive(Args)]
pub struct PredictArgs {
    /// Trained model (model.json from `train`).
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub articles: PathBuf,
    /// Parse-path sidecar TSV.
    #[arg(long)]
    pub parse: Option<PathBuf>,
    /// POS sidecar TSV.
    #[arg(long)]
    pub pos: Option<PathBuf>,
    #[arg(long)]
    pub sentences: Option<PathBuf>,
    /// Label a token Prop when its probability reaches this value, instead of argmax.
    #[arg(long)]
    pub min_prob: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct EnsembleArgs {
    /// Prediction TSV of one member; repeat per member.
    #[arg(long = "pred", required = true)]
    pub preds: Vec<PathBuf>,
    #[arg(long)]
    pub articles: PathBuf,
    /// Votes needed to keep a character. [default: strict majority]
    #[arg(long)]
    pub quorum: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct PostprocessArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub articles: PathBuf,
    /// Stopword list, one per line. [default: built-in 50-word list]
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
    /// Loaded-language word list; matching tokens become spans.
    #[arg(long)]
    pub loaded_language: Option<PathBuf>,
    /// Merge spans separated by at most this many words.
    #[arg(long, default_value_t = 2)]
    pub max_gap: usize,
    /// Allow gap merging across sentence boundaries.
    #[arg(long)]
    pub across_sentences: bool,
    /// Keep stopwords at span edges.
    #[arg(long)]
    pub no_trim: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gold: PathBuf,
    /// Articles to validate span offsets against.
    #[arg(long)]
    pub articles: Option<PathBuf>,
    /// Also write score.csv and score.json here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct FixtureArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub articles: usize,
    #[arg(long, default_value_t = 20)]
    pub sentences: usize,
    /// Share of sentences containing a marker-word span.
    #[arg(long, default_value_t = 0.3)]
    pub prop_rate: f64,
    /// Share of marker runs wrapped in quotes.
    #[arg(long, default_value_t = 0.15)]
    pub quote_rate: f64,
    #[arg(long, default_value_t = 0.2)]
    pub dev_fraction: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Ingest(a) => commands::ingest(a),
        Command::Featurize(a) => commands::featurize(a),
        Command::Train(a) => commands::train(a),
        Command::Predict(a) => commands::predict(a),
        Command::Ensemble(a) => commands::ensemble(a),
        Command::Postprocess(a) => commands::postprocess(a),
        Command::Score(a) => commands::score(a),
        Command::MakeFixtures(a) => commands::make_fixtures(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (class, code) = match e.class() {
                ErrorClass::Input => ("input", 2),
                ErrorClass::Validation => ("validation", 3),
                ErrorClass::Internal => ("internal", 1),
            };
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{class}]: {msg}");
            ExitCode::from(code)
        }
    }
}

//! `pretrand` command-line driver.
//!
//! Machine-readable results (CSV or `key=value` lines) go to stdout; logs and
//! the resolved configuration go to stderr. Exit status is 0 on success, 1
//! on usage errors and 2 on data or runtime errors.

mod analyze;
mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "pretrand",
    version,
    about = "Sequence tagger with random units grafted onto a pre-trained branch"
)]
struct Cli {
    /// Worker threads for independent runs (1 gives strictly sequential,
    /// reproducible execution) [default: all cores]
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a base tagger on a source corpus.
    Pretrain(PretrainArgs),
    /// Train a scheme on a target corpus, optionally from a source checkpoint.
    Finetune(FinetuneArgs),
    /// Token accuracy of a checkpoint on a tagged file.
    Eval(EvalArgs),
    /// Activation, correlation and weight analyses.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
    /// Dev accuracy over nested subsets of the training data.
    Curve(CurveArgs),
    /// Trainable-scalar counts per component.
    CountParams(CountParamsArgs),
    /// Print the header, configuration and block shapes of a checkpoint.
    InspectCheckpoint(InspectArgs),
}

/// Hyperparameter overrides shared by the training commands. Flags win over
/// `--config`, which wins over the base configuration.
#[derive(Debug, Clone, Default, Args)]
pub struct TrainFlags {
    /// `key=value` configuration file; `#` starts a comment [default: none]
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seed for initialization, shuffling and dropout [default: 1]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Random-branch units per direction [default: 200]
    #[arg(long)]
    pub k: Option<usize>,
    /// Order of the per-branch logit normalization [default: 2]
    #[arg(long = "p-norm", value_name = "P")]
    pub p_norm: Option<f64>,
    /// Learning rate [default: 0.015]
    #[arg(long)]
    pub lr: Option<f64>,
    /// SGD momentum [default: 0.9]
    #[arg(long)]
    pub momentum: Option<f64>,
    /// Sentences per mini-batch [default: 8]
    #[arg(long)]
    pub batch: Option<usize>,
    /// Upper bound on joint-training epochs [default: 100]
    #[arg(long = "max-epochs")]
    pub max_epochs: Option<usize>,
    /// Epochs without dev improvement before stopping [default: 10]
    #[arg(long)]
    pub patience: Option<usize>,
    /// Epochs of random-branch-only warm-up [default: 5]
    #[arg(long = "random-pp-epochs")]
    pub random_pp_epochs: Option<usize>,
    /// Word vectors, one `token v1 … vD` line each [default: none]
    #[arg(long, value_name = "PATH")]
    pub vectors: Option<PathBuf>,
}

/// Switches that progressively ablate the merged model.
#[derive(Debug, Clone, Copy, Default, Args)]
pub struct AblationFlags {
    /// Merge the two branches without per-branch normalization [default: off]
    #[arg(long = "no-l2-norm")]
    pub no_l2_norm: bool,
    /// Skip the random-branch warm-up [default: off]
    #[arg(long = "no-random-pp")]
    pub no_random_pp: bool,
    /// Drop the learnable per-class branch weights [default: off]
    #[arg(long = "no-learn-vect")]
    pub no_learn_vect: bool,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    /// Source training corpus
    #[arg(long, value_name = "PATH")]
    pub train: PathBuf,
    /// Source dev corpus [default: 10% of train held out]
    #[arg(long, value_name = "PATH")]
    pub dev: Option<PathBuf>,
    /// Checkpoint to write
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    #[command(flatten)]
    pub flags: TrainFlags,
}

#[derive(Debug, Args)]
pub struct FinetuneArgs {
    /// random200, random400, finetune, ensemble-2rand, ensemble-pretrand or
    /// pretrand (optionally with -learnvect, -randompp, -l2norm suffixes)
    #[arg(long)]
    pub scheme: String,
    /// Source checkpoint; required by schemes built on a pre-trained model [default: none]
    #[arg(long, value_name = "PATH")]
    pub init: Option<PathBuf>,
    /// Target training corpus
    #[arg(long, value_name = "PATH")]
    pub train: PathBuf,
    /// Target dev corpus [default: 10% of train held out]
    #[arg(long, value_name = "PATH")]
    pub dev: Option<PathBuf>,
    /// Checkpoint to write
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    #[command(flatten)]
    pub flags: TrainFlags,
    #[command(flatten)]
    pub ablation: AblationFlags,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Checkpoint to evaluate
    #[arg(long, value_name = "PATH")]
    pub model: PathBuf,
    /// Tagged corpus
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum AnalyzeCommand {
    /// Pearson correlations between the units of two layers (CSV).
    Correlations(CorrelationsArgs),
    /// Highest-activating words of a layer's units (CSV).
    TopWords(TopWordsArgs),
    /// Random units weakly correlated with every pre-trained unit.
    UniqueUnits(UniqueUnitsArgs),
    /// Histograms of weight blocks over shared bins (CSV).
    WeightHist(WeightHistArgs),
    /// Per-class accuracy change between two checkpoints (CSV).
    PerClass(PerClassArgs),
}

#[derive(Debug, Args)]
pub struct CorrelationsArgs {
    /// Checkpoint providing the row units
    #[arg(long, value_name = "PATH")]
    pub before: PathBuf,
    /// Checkpoint providing the column units
    #[arg(long, value_name = "PATH")]
    pub after: PathBuf,
    /// Probing corpus
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,
    /// Layer of --before: phi or phi_r
    #[arg(long, default_value = "phi")]
    pub layer: String,
    /// Layer of --after [default: same as --layer]
    #[arg(long = "after-layer")]
    pub after_layer: Option<String>,
    /// Write the matrix here and print a key=value summary instead [default: stdout]
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TopWordsArgs {
    /// Checkpoint to probe
    #[arg(long, value_name = "PATH")]
    pub model: PathBuf,
    /// Probing corpus
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,
    /// phi or phi_r
    #[arg(long, default_value = "phi")]
    pub layer: String,
    /// Comma-separated unit ids [default: every unit]
    #[arg(long, value_delimiter = ',')]
    pub units: Vec<usize>,
    /// Words per unit
    #[arg(long = "top", default_value_t = 10)]
    pub top: usize,
}

#[derive(Debug, Args)]
pub struct UniqueUnitsArgs {
    /// Checkpoint with a random branch
    #[arg(long, value_name = "PATH")]
    pub model: PathBuf,
    /// Probing corpus
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,
    /// Largest absolute correlation a unique unit may reach
    #[arg(long, default_value_t = 0.4)]
    pub threshold: f64,
}

#[derive(Debug, Args)]
pub struct WeightHistArgs {
    /// Checkpoint; repeat to compare blocks across runs
    #[arg(long, value_name = "PATH", required = true)]
    pub model: Vec<PathBuf>,
    /// Comma-separated block names [default: psi.W and psi_r.W when present]
    #[arg(long, value_delimiter = ',')]
    pub blocks: Vec<String>,
    /// Bins shared by every histogram
    #[arg(long, default_value_t = 50)]
    pub bins: usize,
}

#[derive(Debug, Args)]
pub struct PerClassArgs {
    /// Baseline checkpoint
    #[arg(long, value_name = "PATH")]
    pub a: PathBuf,
    /// Compared checkpoint
    #[arg(long, value_name = "PATH")]
    pub b: PathBuf,
    /// Tagged corpus
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    /// Source checkpoint; required by schemes built on a pre-trained model [default: none]
    #[arg(long, value_name = "PATH")]
    pub init: Option<PathBuf>,
    /// Target training corpus
    #[arg(long, value_name = "PATH")]
    pub train: PathBuf,
    /// Target dev corpus [default: 10% of train held out]
    #[arg(long, value_name = "PATH")]
    pub dev: Option<PathBuf>,
    /// Comma-separated schemes
    #[arg(long, value_delimiter = ',', default_value = "random200,finetune,pretrand")]
    pub schemes: Vec<String>,
    /// Comma-separated train fractions in (0, 1]
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.25,0.5,0.75,1")]
    pub fractions: Vec<f64>,
    /// Comma-separated run seeds [default: the configured seed]
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    #[command(flatten)]
    pub flags: TrainFlags,
    #[command(flatten)]
    pub ablation: AblationFlags,
}

#[derive(Debug, Args)]
pub struct CountParamsArgs {
    /// Count a saved model [default: closed form from the configuration]
    #[arg(long, value_name = "PATH")]
    pub model: Option<PathBuf>,
    /// Scheme whose architecture is counted without --model
    #[arg(long, default_value = "pretrand")]
    pub scheme: String,
    /// Word vocabulary size including the reserved ids, without --model
    #[arg(long, default_value_t = 2)]
    pub words: usize,
    /// Character vocabulary size including the unknown slot, without --model
    #[arg(long, default_value_t = 1)]
    pub chars: usize,
    /// Number of tags, without --model
    #[arg(long, default_value_t = 17)]
    pub classes: usize,
    #[command(flatten)]
    pub flags: TrainFlags,
    #[command(flatten)]
    pub ablation: AblationFlags,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    /// Checkpoint to describe
    #[arg(long, value_name = "PATH")]
    pub model: PathBuf,
}

/// Failure classes, mapped onto exit codes.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Runtime(e.into())
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

fn run(cli: Cli) -> CliResult {
    settings::init_threads(cli.threads)?;
    let mut out = std::io::stdout().lock();
    match cli.command {
        Command::Pretrain(a) => commands::pretrain(a, &mut out),
        Command::Finetune(a) => commands::finetune(a, &mut out),
        Command::Eval(a) => commands::eval(a, &mut out),
        Command::Analyze(a) => analyze::run(a, &mut out),
        Command::Curve(a) => commands::curve(a, &mut out),
        Command::CountParams(a) => commands::count_params(a, &mut out),
        Command::InspectCheckpoint(a) => commands::inspect(a, &mut out),
    }
}

/// The error chain joined by `: `, skipping causes whose text the previous
/// message already contains.
fn describe(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    let mut last = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !last.contains(&text) {
            if !msg.is_empty() {
                msg.push_str(": ");
            }
            msg.push_str(&text);
        }
        last = text;
    }
    msg
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
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
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(2)
        }
    }
}

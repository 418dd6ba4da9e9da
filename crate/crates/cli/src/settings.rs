//! Path resolution, configuration precedence and loading helpers. Every
//! error produced here names the file or flag it concerns.

use std::path::{Path, PathBuf};

use anyhow::Context;
use pretrand::corpus::{load_conll, load_vectors, PretrainedVectors, SplitKind, TagSet, TagSetPolicy, TaggedCorpus};
use pretrand::training::{load_checkpoint, Ablation, Checkpoint, Scheme, TaskData, TrainConfig};

use crate::{AblationFlags, CliError, CliResult, TrainFlags};

pub const DATA_DIR_VAR: &str = "PRETRAND_DATA_DIR";

/// `--threads n` sizes the global pool; 1 runs everything on one worker.
pub fn init_threads(threads: Option<usize>) -> CliResult {
    let Some(n) = threads else { return Ok(()) };
    if n == 0 {
        return Err(CliError::Usage("--threads: must be at least 1".into()));
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("--threads: cannot build the worker pool")?;
    Ok(())
}

/// An input path as given when it exists, else joined onto
/// `$PRETRAND_DATA_DIR` when that exists. Falls back to the original so the
/// eventual error names what the user typed.
pub fn input_path(path: &Path) -> PathBuf {
    if path.exists() || path.is_absolute() {
        return path.to_path_buf();
    }
    if let Some(dir) = std::env::var_os(DATA_DIR_VAR) {
        let candidate = Path::new(&dir).join(path);
        if candidate.exists() {
            return candidate;
        }
    }
    path.to_path_buf()
}

pub fn checkpoint(path: &Path) -> anyhow::Result<Checkpoint> {
    let path = input_path(path);
    load_checkpoint(&path).with_context(|| format!("cannot load checkpoint {}", path.display()))
}

/// Training corpus with its tag-set built from train; dev tags not seen in
/// train are appended.
pub fn task_corpus(train: &Path, dev: Option<&Path>) -> anyhow::Result<TaggedCorpus> {
    let train = input_path(train);
    let mut corpus = load_conll(&train, &TagSetPolicy::Build)
        .with_context(|| format!("cannot load training corpus {}", train.display()))?;
    if let Some(dev) = dev {
        let dev = input_path(dev);
        corpus
            .load_split(SplitKind::Dev, &dev, true)
            .with_context(|| format!("cannot load dev corpus {}", dev.display()))?;
    }
    Ok(corpus)
}

pub fn task_data(train: &Path, dev: Option<&Path>, cfg: &TrainConfig) -> anyhow::Result<TaskData> {
    let corpus = task_corpus(train, dev)?;
    for (split, tokens) in corpus.token_counts() {
        log::info!("{split}: {tokens} tokens");
    }
    TaskData::from_corpus(&corpus, cfg.seed).context("cannot build train/dev splits")
}

/// Sentences of a file whose tags must all belong to `tagset`.
pub fn labelled(path: &Path, tagset: &TagSet) -> anyhow::Result<Vec<pretrand::corpus::Sentence>> {
    let path = input_path(path);
    let corpus = load_conll(&path, &TagSetPolicy::Fixed(tagset.clone()))
        .with_context(|| format!("cannot load {}", path.display()))?;
    Ok(corpus.train.sentences)
}

pub fn vectors(flags: &TrainFlags, cfg: &TrainConfig) -> anyhow::Result<Option<PretrainedVectors>> {
    let Some(path) = &flags.vectors else { return Ok(None) };
    let path = input_path(path);
    let v = load_vectors(&path, cfg.word_dim).with_context(|| format!("--vectors {}", path.display()))?;
    log::info!("loaded {} vectors of dimension {}", v.len(), v.dim());
    Ok(Some(v))
}

/// Applies the `--config` file and then the explicit flags on top of `base`.
pub fn resolve(base: TrainConfig, flags: &TrainFlags) -> CliResult<TrainConfig> {
    let mut cfg = base;
    if let Some(path) = &flags.config {
        let path = input_path(path);
        let text = std::fs::read_to_string(&path).with_context(|| format!("--config {}", path.display()))?;
        cfg.apply_kv(&text)
            .with_context(|| format!("--config {}", path.display()))?;
    }
    let overrides: [(&str, Option<String>); 9] = [
        ("seed", flags.seed.map(|v| v.to_string())),
        ("k", flags.k.map(|v| v.to_string())),
        ("p-norm", flags.p_norm.map(|v| v.to_string())),
        ("lr", flags.lr.map(|v| v.to_string())),
        ("momentum", flags.momentum.map(|v| v.to_string())),
        ("batch", flags.batch.map(|v| v.to_string())),
        ("max-epochs", flags.max_epochs.map(|v| v.to_string())),
        ("patience", flags.patience.map(|v| v.to_string())),
        ("random-pp-epochs", flags.random_pp_epochs.map(|v| v.to_string())),
    ];
    for (key, value) in overrides {
        if let Some(value) = value {
            cfg.set(key, &value)
                .map_err(|e| CliError::Usage(format!("--{key}: {e}")))?;
        }
    }
    cfg.validate()
        .map_err(|e| CliError::Usage(format!("resolved configuration: {e}")))?;
    for line in cfg.to_kv().lines() {
        log::info!("config {line}");
    }
    Ok(cfg)
}

/// Parses `--scheme` and folds the ablation toggles into it. Toggles are
/// only meaningful for the merged model.
pub fn scheme(name: &str, ablation: &AblationFlags) -> CliResult<Scheme> {
    let scheme: Scheme = name.parse().map_err(|e| CliError::Usage(format!("--scheme: {e}")))?;
    apply_ablation(scheme, ablation, "--scheme")
}

pub fn apply_ablation(scheme: Scheme, ablation: &AblationFlags, flag: &str) -> CliResult<Scheme> {
    let any = ablation.no_l2_norm || ablation.no_random_pp || ablation.no_learn_vect;
    match scheme {
        Scheme::PretRand(a) => Ok(Scheme::PretRand(Ablation {
            learn_vect: a.learn_vect && !ablation.no_learn_vect,
            random_pp: a.random_pp && !ablation.no_random_pp,
            l2_norm: a.l2_norm && !ablation.no_l2_norm,
        })),
        other if any => Err(CliError::Usage(format!(
            "--no-l2-norm, --no-random-pp and --no-learn-vect only apply to pretrand, not {flag} {}",
            other.label()
        ))),
        other => Ok(other),
    }
}

//! Pretraining, the target-task training schemes, the random++ warm-up,
//! early stopping, evaluation, checkpoints and learning curves.
//!
//! Every run draws all of its randomness from one [`Rng`](crate::rng::Rng)
//! seeded with `TrainConfig::seed`; independent runs started by the same
//! call (ensemble members, curve subsets, dev hold-out) derive their seeds
//! with the offsets in [`crate::rng`].

mod checkpoint;
mod config;
mod curve;
mod eval;
mod fit;
mod schemes;

pub use checkpoint::{
    load_checkpoint, read_checkpoint, restore_into, save_checkpoint, write_checkpoint, Checkpoint, CheckpointError,
    CheckpointMeta, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use config::{parse_kv, Ablation, ConfigError, Scheme, TrainConfig, K_GRID};
pub use curve::{learning_curve, nested_subset, write_curve_csv, CurvePoint};
pub use eval::{evaluate, evaluate_with, ClassCount, EnsembleModel, Evaluation, Predictor};
pub use fit::{EpochRecord, Phase, TrainReport};
pub use schemes::{finetune, pretrain, run_random_pp, transfer, write_metrics_csv, Trained};

use crate::corpus::{CorpusError, Sentence, TagSet, TaggedCorpus};
use crate::numerics::NumericsError;
use crate::rng::{self, HOLDOUT_OFFSET};
use crate::tagger::ModelError;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("{0} is empty")]
    Empty(&'static str),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("training diverged in {phase} epoch {epoch}, batch {batch}: {detail}")]
    Diverged {
        phase: &'static str,
        epoch: usize,
        batch: usize,
        detail: String,
    },
    #[error("checkpoint/config dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("scheme `{0}` needs a pre-trained checkpoint")]
    MissingCheckpoint(String),
    #[error("fraction {fraction} of {sentences} sentences selects no sentence")]
    ZeroSubset { fraction: f64, sentences: usize },
}

/// Train and dev sentences of one task with their tag-set.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskData {
    pub tagset: TagSet,
    pub train: Vec<Sentence>,
    pub dev: Vec<Sentence>,
}

impl TaskData {
    pub fn new(tagset: TagSet, train: Vec<Sentence>, dev: Vec<Sentence>) -> Result<Self, TrainError> {
        if train.is_empty() {
            return Err(TrainError::Empty("training split"));
        }
        if dev.is_empty() {
            return Err(TrainError::Empty("dev split"));
        }
        Ok(TaskData { tagset, train, dev })
    }

    /// Uses the corpus dev split, or holds out 10% of train (at least one
    /// sentence, seeded with `seed + HOLDOUT_OFFSET`) when there is none.
    pub fn from_corpus(corpus: &TaggedCorpus, seed: u64) -> Result<Self, TrainError> {
        let train = &corpus.train.sentences;
        if let Some(dev) = &corpus.dev {
            return TaskData::new(corpus.tagset.clone(), train.clone(), dev.sentences.clone());
        }
        if train.len() < 2 {
            return Err(TrainError::Empty("training split after dev hold-out"));
        }
        let (train, dev) = holdout(train, seed);
        log::info!(
            "no dev split: held out {} of {} train sentences",
            dev.len(),
            train.len() + dev.len()
        );
        TaskData::new(corpus.tagset.clone(), train, dev)
    }
}

/// Deterministic 10% dev hold-out; both parts keep corpus order.
pub fn holdout(sentences: &[Sentence], seed: u64) -> (Vec<Sentence>, Vec<Sentence>) {
    let n = sentences.len();
    let n_dev = ((n as f64 * 0.1).round() as usize).clamp(1, n.saturating_sub(1).max(1));
    let mut order: Vec<usize> = (0..n).collect();
    rng::shuffle(&mut rng::seeded(seed.wrapping_add(HOLDOUT_OFFSET)), &mut order);
    let mut is_dev = vec![false; n];
    for &i in &order[..n_dev] {
        is_dev[i] = true;
    }
    let (mut train, mut dev) = (Vec::new(), Vec::new());
    for (s, d) in sentences.iter().zip(is_dev) {
        if d {
            dev.push(s.clone())
        } else {
            train.push(s.clone())
        }
    }
    (train, dev)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sent(i: usize) -> Sentence {
        Sentence {
            tokens: vec![format!("w{i}")],
            tags: vec![0],
        }
    }

    #[test]
    fn holdout_is_ten_percent_and_seeded() {
        let all: Vec<Sentence> = (0..50).map(sent).collect();
        let (t, d) = holdout(&all, 7);
        assert_eq!((t.len(), d.len()), (45, 5));
        assert_eq!(holdout(&all, 7), (t.clone(), d.clone()));
        let mut back: Vec<_> = t.iter().chain(&d).map(|s| s.tokens[0].clone()).collect();
        back.sort();
        let mut orig: Vec<_> = all.iter().map(|s| s.tokens[0].clone()).collect();
        orig.sort();
        assert_eq!(back, orig);
    }
}

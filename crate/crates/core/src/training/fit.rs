use crate::corpus::Sentence;
use crate::encoder::TokenIds;
use crate::numerics::{self, sgd_step, NumericsError, Tape};
use crate::par;
use crate::rng::{self, Rng};
use crate::tagger::{Dropout, TaggerModel};

use super::{Evaluation, TrainConfig, TrainError};

/// A sentence mapped through one model's vocabulary.
pub(crate) struct Encoded {
    pub ids: Vec<TokenIds>,
    pub tags: Vec<usize>,
}

pub(crate) fn encode_all(model: &TaggerModel, sentences: &[Sentence]) -> Vec<Encoded> {
    sentences
        .iter()
        .map(|s| Encoded {
            ids: model.sentence_ids(&s.tokens),
            tags: s.tags.clone(),
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Phase {
    /// Warm-up of the random branch with everything else frozen.
    RandomPP,
    /// Ordinary (joint) training.
    Joint,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::RandomPP => "random_pp",
            Phase::Joint => "joint",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub phase: Phase,
    /// 1-based within the phase.
    pub epoch: usize,
    /// Mean token loss over the epoch.
    pub train_loss: f64,
    /// Mean token loss of the epoch's first batch.
    pub first_batch_loss: f64,
    pub dev_accuracy: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    pub history: Vec<EpochRecord>,
    /// Joint-phase epoch whose weights were kept (0 if none ran).
    pub best_epoch: usize,
    pub best_dev_accuracy: f64,
    /// Joint-phase epochs actually run.
    pub epochs_run: usize,
}

pub(crate) fn accuracy_encoded(model: &TaggerModel, data: &[Encoded]) -> Result<f64, NumericsError> {
    let preds = par::map(data, |e| model.predict(&e.ids));
    let preds = preds.into_iter().collect::<Result<Vec<_>, _>>()?;
    let eval = Evaluation::from_predictions(
        model.classes(),
        preds.iter().zip(data).map(|(p, e)| (p.as_slice(), e.tags.as_slice())),
    );
    Ok(eval.accuracy())
}

fn diverged(phase: Phase, epoch: usize, batch: usize) -> impl Fn(NumericsError) -> TrainError {
    move |e| match e {
        NumericsError::NonFinite { .. } | NumericsError::NonFiniteGradient(_) => TrainError::Diverged {
            phase: phase.as_str(),
            epoch,
            batch,
            detail: e.to_string(),
        },
        other => TrainError::Numerics(other),
    }
}

/// One pass over `data` in a fresh shuffled order. Returns
/// `(mean token loss, first batch mean token loss)`.
pub(crate) fn run_epoch(
    model: &mut TaggerModel,
    data: &[Encoded],
    cfg: &TrainConfig,
    rng: &mut Rng,
    phase: Phase,
    epoch: usize,
) -> Result<(f64, f64), TrainError> {
    let mut order: Vec<usize> = (0..data.len()).collect();
    rng::shuffle(rng, &mut order);
    let mut total_loss = 0.0;
    let mut total_tokens = 0usize;
    let mut first_batch = f64::NAN;
    for (b, batch) in order.chunks(cfg.batch_sentences).enumerate() {
        let tokens: usize = batch.iter().map(|&i| data[i].tags.len()).sum();
        let mut batch_loss = 0.0;
        for &i in batch {
            let grads = {
                let dropout = (cfg.dropout > 0.0).then_some(Dropout {
                    rate: cfg.dropout,
                    rng: &mut *rng,
                });
                let mut tape = Tape::new(&model.store);
                let loss = model
                    .loss(&mut tape, &data[i].ids, &data[i].tags, dropout)
                    .map_err(diverged(phase, epoch, b))?;
                batch_loss += tape.value(loss).data()[0];
                tape.backward_scaled(loss, 1.0 / tokens as f64)
                    .map_err(diverged(phase, epoch, b))?
            };
            model.store.accumulate(&grads);
        }
        if !batch_loss.is_finite() {
            return Err(TrainError::Diverged {
                phase: phase.as_str(),
                epoch,
                batch: b,
                detail: format!("batch loss {batch_loss}"),
            });
        }
        if b == 0 {
            first_batch = batch_loss / tokens as f64;
        }
        total_loss += batch_loss;
        total_tokens += tokens;
        if cfg.clip_norm > 0.0 {
            model.store.clip_grad_norm(cfg.clip_norm);
        }
        sgd_step(&mut model.store, cfg.lr, cfg.momentum);
    }
    Ok((total_loss / total_tokens.max(1) as f64, first_batch))
}

/// Trains for a fixed number of epochs without model selection.
pub(crate) fn fixed_epochs(
    model: &mut TaggerModel,
    train: &[Encoded],
    dev: &[Encoded],
    cfg: &TrainConfig,
    rng: &mut Rng,
    phase: Phase,
    epochs: usize,
) -> Result<Vec<EpochRecord>, TrainError> {
    let mut history = Vec::with_capacity(epochs);
    for epoch in 1..=epochs {
        let (train_loss, first_batch_loss) = run_epoch(model, train, cfg, rng, phase, epoch)?;
        let dev_accuracy = accuracy_encoded(model, dev)?;
        log::debug!(
            "{} epoch {epoch}: loss={train_loss:.5} dev_acc={dev_accuracy:.4}",
            phase.as_str()
        );
        history.push(EpochRecord {
            phase,
            epoch,
            train_loss,
            first_batch_loss,
            dev_accuracy,
        });
    }
    Ok(history)
}

/// Joint training with early stopping on dev accuracy. The weights of the
/// best dev epoch (earliest on ties) are restored before returning.
pub(crate) fn fit(
    model: &mut TaggerModel,
    train: &[Encoded],
    dev: &[Encoded],
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<TrainReport, TrainError> {
    let mut report = TrainReport::default();
    let mut best: Option<Vec<numerics::Tensor>> = None;
    let mut since_best = 0;
    for epoch in 1..=cfg.max_epochs {
        let (train_loss, first_batch_loss) = run_epoch(model, train, cfg, rng, Phase::Joint, epoch)?;
        let dev_accuracy = accuracy_encoded(model, dev)?;
        log::debug!("epoch {epoch}: loss={train_loss:.5} dev_acc={dev_accuracy:.4}");
        report.history.push(EpochRecord {
            phase: Phase::Joint,
            epoch,
            train_loss,
            first_batch_loss,
            dev_accuracy,
        });
        report.epochs_run = epoch;
        if best.is_none() || dev_accuracy > report.best_dev_accuracy {
            report.best_dev_accuracy = dev_accuracy;
            report.best_epoch = epoch;
            best = Some(model.store.snapshot());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    if let Some(snapshot) = best {
        model.store.restore(snapshot);
    }
    Ok(report)
}

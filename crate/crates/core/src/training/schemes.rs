use std::io::Write;

use crate::corpus::{build_vocab, PretrainedVectors, Sentence, TagSet};
use crate::numerics::Tensor;
use crate::par;
use crate::rng::{self, Rng, ENSEMBLE_MEMBER_OFFSET};
use crate::tagger::{MergeConfig, TaggerModel};

use super::fit::{encode_all, fit, fixed_epochs, Phase};
use super::{EnsembleModel, EpochRecord, Predictor, Scheme, TaskData, TrainConfig, TrainError, TrainReport};

/// Result of one scheme: the predictor plus one report per member.
#[derive(Clone, Debug)]
pub struct Trained {
    pub scheme: Scheme,
    pub config: TrainConfig,
    pub predictor: Predictor,
    pub reports: Vec<TrainReport>,
}

impl Trained {
    /// Dev accuracy of the kept weights. For ensembles, the averaged
    /// predictor is re-evaluated rather than taking a member's score.
    pub fn dev_accuracy(&self, data: &TaskData) -> Result<f64, TrainError> {
        match &self.predictor {
            Predictor::Single(_) => Ok(self.reports[0].best_dev_accuracy),
            Predictor::Ensemble(_) => Ok(super::evaluate(&self.predictor, &data.dev, &data.tagset)?.accuracy()),
        }
    }
}

fn fresh_model(
    data: &TaskData,
    cfg: &TrainConfig,
    hidden: usize,
    vectors: Option<&PretrainedVectors>,
    rng: &mut Rng,
) -> Result<TaggerModel, TrainError> {
    let vocab = build_vocab(&data.train, cfg.min_count);
    Ok(TaggerModel::new(
        cfg.model_dims(hidden, 0),
        vocab,
        data.tagset.clone(),
        MergeConfig::default(),
        vectors,
        cfg.precision,
        rng,
    )?)
}

fn train_base(
    data: &TaskData,
    cfg: &TrainConfig,
    hidden: usize,
    vectors: Option<&PretrainedVectors>,
) -> Result<(TaggerModel, TrainReport), TrainError> {
    let mut rng = rng::seeded(cfg.seed);
    let mut model = fresh_model(data, cfg, hidden, vectors, &mut rng)?;
    let train = encode_all(&model, &data.train);
    let dev = encode_all(&model, &data.dev);
    let report = fit(&mut model, &train, &dev, cfg, &mut rng)?;
    Ok((model, report))
}

/// Trains a randomly initialized base model (no random branch) on the
/// source task, keeping the best dev epoch.
pub fn pretrain(
    data: &TaskData,
    cfg: &TrainConfig,
    vectors: Option<&PretrainedVectors>,
) -> Result<Trained, TrainError> {
    cfg.validate()?;
    let (model, report) = train_base(data, cfg, cfg.hidden, vectors)?;
    Ok(Trained {
        scheme: Scheme::Random200,
        config: cfg.clone(),
        predictor: Predictor::Single(model),
        reports: vec![report],
    })
}

fn check_dims(source: &TaggerModel, cfg: &TrainConfig) -> Result<(), TrainError> {
    let want = cfg.encoder_dims();
    let have = source.dims.encoder;
    if want != have || cfg.hidden != source.dims.hidden {
        return Err(TrainError::DimensionMismatch(format!(
            "checkpoint has word-dim={} char-dim={} char-hidden={} hidden={}, config has word-dim={} char-dim={} \
             char-hidden={} hidden={}",
            have.word_dim,
            have.char_dim,
            have.char_hidden,
            source.dims.hidden,
            want.word_dim,
            want.char_dim,
            want.char_hidden,
            cfg.hidden
        )));
    }
    Ok(())
}

fn copy_prefix_rows(target: &mut TaggerModel, source: &TaggerModel, name: &str) -> Result<(), TrainError> {
    let src = source.store.value(source.store.id(name).expect("block exists"));
    let id = target.store.id(name).expect("block exists");
    let mut value = target.store.value(id).clone();
    let cols = src.cols();
    let n = src.data().len();
    if value.cols() != cols || value.data().len() < n {
        return Err(TrainError::DimensionMismatch(format!(
            "block `{name}` cannot take the source rows"
        )));
    }
    let mut data = value.data().to_vec();
    data[..n].copy_from_slice(src.data());
    value = Tensor::new(value.shape().to_vec(), data)?;
    target.store.set_value(id, value)?;
    Ok(())
}

/// Builds a target-task base model from a source model.
///
/// The source vocabulary is extended with the target training words and
/// characters (source ids keep their rows). The word and character tables,
/// the character biLSTM and Φ are copied; Ψ is freshly initialized for the
/// target tag-set.
pub fn transfer(
    source: &TaggerModel,
    tagset: &TagSet,
    train: &[Sentence],
    cfg: &TrainConfig,
    vectors: Option<&PretrainedVectors>,
    rng: &mut Rng,
) -> Result<TaggerModel, TrainError> {
    check_dims(source, cfg)?;
    let mut vocab = source.vocab().clone();
    vocab.extend_from(train, cfg.min_count);
    let mut model = TaggerModel::new(
        source.dims,
        vocab,
        tagset.clone(),
        MergeConfig::default(),
        vectors,
        cfg.precision,
        rng,
    )?;
    model.dims.random_hidden = 0;
    copy_prefix_rows(&mut model, source, "encoder.word")?;
    copy_prefix_rows(&mut model, source, "encoder.char_embed")?;
    let copied: Vec<(String, Tensor)> = source
        .store
        .iter()
        .filter(|(_, name, _)| name.starts_with("encoder.char.") || name.starts_with("phi."))
        .map(|(_, name, p)| (name.to_string(), p.value.clone()))
        .collect();
    for (name, value) in copied {
        let id = model.store.id(&name).expect("same architecture");
        model.store.set_value(id, value)?;
    }
    Ok(model)
}

/// The random++ warm-up: only Φr, Ψr, u and v are updated for
/// `cfg.random_pp_epochs` epochs. The encoder, Φ and Ψ are frozen (the word
/// table stays trainable when `freeze_embeddings_in_random_pp` is false).
/// All parameters are unfrozen on return.
pub fn run_random_pp(
    model: &mut TaggerModel,
    train: &[Sentence],
    dev: &[Sentence],
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<Vec<EpochRecord>, TrainError> {
    if !model.has_random_branch() {
        return Err(crate::tagger::ModelError::MissingRandomBranch.into());
    }
    let train = encode_all(model, train);
    let dev = encode_all(model, dev);
    for id in model.pretrained_param_ids() {
        model.store.set_frozen(id, true);
    }
    if !cfg.freeze_embeddings_in_random_pp {
        for id in model.encoder.word_param_ids() {
            model.store.set_frozen(id, false);
        }
    }
    let result = fixed_epochs(model, &train, &dev, cfg, rng, Phase::RandomPP, cfg.random_pp_epochs);
    model.store.unfreeze_all();
    result
}

fn single(
    source: Option<&TaggerModel>,
    data: &TaskData,
    scheme: Scheme,
    cfg: &TrainConfig,
    vectors: Option<&PretrainedVectors>,
) -> Result<(TaggerModel, TrainReport), TrainError> {
    match scheme {
        Scheme::Random200 => train_base(data, cfg, cfg.hidden, vectors),
        Scheme::Random400 => train_base(data, cfg, 2 * cfg.hidden, vectors),
        Scheme::StandardFinetune | Scheme::PretRand(_) => {
            let source = source.ok_or_else(|| TrainError::MissingCheckpoint(scheme.label()))?;
            let mut rng = rng::seeded(cfg.seed);
            let mut model = transfer(source, &data.tagset, &data.train, cfg, vectors, &mut rng)?;
            let mut warmup = Vec::new();
            if let Scheme::PretRand(ablation) = scheme {
                model.attach_random_branch(cfg.k, ablation.merge(cfg.p), &mut rng);
                if ablation.random_pp {
                    warmup = run_random_pp(&mut model, &data.train, &data.dev, cfg, &mut rng)?;
                }
            }
            let train = encode_all(&model, &data.train);
            let dev = encode_all(&model, &data.dev);
            let mut report = fit(&mut model, &train, &dev, cfg, &mut rng)?;
            warmup.append(&mut report.history);
            report.history = warmup;
            Ok((model, report))
        }
        Scheme::Ensemble2Rand | Scheme::EnsemblePretRand => unreachable!("ensembles are dispatched by finetune"),
    }
}

/// Trains `scheme` on the target task. Schemes other than `Random200` and
/// `Random400` (and `Ensemble2Rand`) need the pre-trained `source`.
///
/// Ensemble members are independent runs; the second member uses
/// `seed + ENSEMBLE_MEMBER_OFFSET`. `Ensemble2Rand` pairs two `Random200`
/// models; `EnsemblePretRand` pairs a fine-tuned model with a `Random200`.
pub fn finetune(
    source: Option<&TaggerModel>,
    data: &TaskData,
    scheme: Scheme,
    cfg: &TrainConfig,
    vectors: Option<&PretrainedVectors>,
) -> Result<Trained, TrainError> {
    cfg.validate()?;
    let (predictor, reports) = match scheme {
        Scheme::Ensemble2Rand | Scheme::EnsemblePretRand => {
            let first = if scheme == Scheme::Ensemble2Rand {
                Scheme::Random200
            } else {
                Scheme::StandardFinetune
            };
            if first == Scheme::StandardFinetune && source.is_none() {
                return Err(TrainError::MissingCheckpoint(scheme.label()));
            }
            let mut second_cfg = cfg.clone();
            second_cfg.seed = cfg.seed.wrapping_add(ENSEMBLE_MEMBER_OFFSET);
            let (a, b) = par::join(
                || single(source, data, first, cfg, vectors),
                || single(source, data, Scheme::Random200, &second_cfg, vectors),
            );
            let ((ma, ra), (mb, rb)) = (a?, b?);
            (Predictor::Ensemble(EnsembleModel::new(vec![ma, mb])), vec![ra, rb])
        }
        _ => {
            let (m, r) = single(source, data, scheme, cfg, vectors)?;
            (Predictor::Single(m), vec![r])
        }
    };
    Ok(Trained {
        scheme,
        config: cfg.clone(),
        predictor,
        reports,
    })
}

/// Writes `scheme,split,seed,epoch,accuracy` rows under `label`: one `dev`
/// row per epoch of every member (epochs numbered across phases from 1),
/// then one `best` row per member with the kept epoch and its accuracy.
/// Without a header when `header` is false.
pub fn write_metrics_csv<W: Write>(out: &mut W, trained: &Trained, label: &str, header: bool) -> std::io::Result<()> {
    if header {
        writeln!(out, "scheme,split,seed,epoch,accuracy")?;
    }
    for (m, report) in trained.reports.iter().enumerate() {
        let seed = trained.config.seed.wrapping_add(m as u64 * ENSEMBLE_MEMBER_OFFSET);
        let warmup = report.history.iter().filter(|r| r.phase == Phase::RandomPP).count();
        for (i, r) in report.history.iter().enumerate() {
            writeln!(out, "{label},dev,{seed},{},{:.6}", i + 1, r.dev_accuracy)?;
        }
        writeln!(
            out,
            "{label},best,{seed},{},{:.6}",
            warmup + report.best_epoch,
            report.best_dev_accuracy
        )?;
    }
    Ok(())
}

//! Training, evaluation and inspection subcommands.

use std::io::Write;

use anyhow::Context;
use pretrand::par::Execution;
use pretrand::tagger::{ModelDims, ParamCounts, TaggerModel};
use pretrand::training::{
    self, evaluate, learning_curve, save_checkpoint, write_curve_csv, write_metrics_csv, Checkpoint, Scheme,
    TrainConfig, Trained, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};

use crate::settings::{self, apply_ablation};
use crate::{CliError, CliResult, CountParamsArgs, CurveArgs, EvalArgs, FinetuneArgs, InspectArgs, PretrainArgs};

/// Keys that fix the encoder and Φ shapes; a source checkpoint dictates them.
const ARCHITECTURE_KEYS: [&str; 6] = [
    "word-dim",
    "char-dim",
    "char-hidden",
    "hidden",
    "precision",
    "min-count",
];

/// Defaults, with the architecture of the source checkpoint when there is one.
fn base_config(source: Option<&Checkpoint>) -> TrainConfig {
    let mut cfg = TrainConfig::default();
    if let Some(ck) = source {
        let theirs = ck.config.to_kv();
        for (key, value) in training::parse_kv(&theirs).expect("serialized config parses") {
            if ARCHITECTURE_KEYS.contains(&key.as_str()) {
                cfg.set(&key, &value).expect("serialized config values parse");
            }
        }
    }
    cfg
}

fn save(out: &std::path::Path, trained: &Trained, label: &str) -> anyhow::Result<()> {
    save_checkpoint(out, &Checkpoint::from_trained(trained, label))
        .with_context(|| format!("--out {}: cannot write checkpoint", out.display()))?;
    log::info!("wrote {}", out.display());
    Ok(())
}

pub fn pretrain(a: PretrainArgs, out: &mut impl Write) -> CliResult {
    let cfg = settings::resolve(TrainConfig::default(), &a.flags)?;
    let data = settings::task_data(&a.train, a.dev.as_deref(), &cfg)?;
    let vectors = settings::vectors(&a.flags, &cfg)?;
    let trained = training::pretrain(&data, &cfg, vectors.as_ref())?;
    save(&a.out, &trained, "pretrain")?;
    write_metrics_csv(out, &trained, "pretrain", true)?;
    Ok(())
}

fn source(init: Option<&std::path::Path>, schemes: &[Scheme]) -> CliResult<Option<Checkpoint>> {
    match init {
        Some(path) => Ok(Some(settings::checkpoint(path)?)),
        None => match schemes.iter().find(|s| s.needs_checkpoint()) {
            Some(s) => Err(CliError::Usage(format!(
                "--init: scheme {} needs a source checkpoint",
                s.label()
            ))),
            None => Ok(None),
        },
    }
}

pub fn finetune(a: FinetuneArgs, out: &mut impl Write) -> CliResult {
    let scheme = settings::scheme(&a.scheme, &a.ablation)?;
    let source = source(a.init.as_deref(), &[scheme])?;
    let cfg = settings::resolve(base_config(source.as_ref()), &a.flags)?;
    let data = settings::task_data(&a.train, a.dev.as_deref(), &cfg)?;
    let vectors = settings::vectors(&a.flags, &cfg)?;
    let model = source.as_ref().map(|ck| ck.predictor.primary());
    let trained = training::finetune(model, &data, scheme, &cfg, vectors.as_ref())?;
    let label = scheme.label();
    save(&a.out, &trained, &label)?;
    write_metrics_csv(out, &trained, &label, true)?;
    Ok(())
}

pub fn eval(a: EvalArgs, out: &mut impl Write) -> CliResult {
    let ck = settings::checkpoint(&a.model)?;
    let sentences = settings::labelled(&a.data, ck.tagset())?;
    let e = evaluate(&ck.predictor, &sentences, ck.tagset())?;
    writeln!(out, "accuracy={:.6}", e.accuracy())?;
    writeln!(out, "correct={}", e.correct)?;
    writeln!(out, "tokens={}", e.total)?;
    Ok(())
}

pub fn curve(a: CurveArgs, out: &mut impl Write) -> CliResult {
    let mut schemes = Vec::new();
    for name in &a.schemes {
        let s: Scheme = name.parse().map_err(|e| CliError::Usage(format!("--schemes: {e}")))?;
        // toggles reach only the merged schemes of the list
        let s = match s {
            Scheme::PretRand(_) => apply_ablation(s, &a.ablation, "--schemes")?,
            other => other,
        };
        schemes.push(s);
    }
    if schemes.is_empty() {
        return Err(CliError::Usage("--schemes: at least one scheme is required".into()));
    }
    if let Some(f) = a.fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
        return Err(CliError::Usage(format!("--fractions: {f} is outside (0, 1]")));
    }
    let source = source(a.init.as_deref(), &schemes)?;
    let cfg = settings::resolve(base_config(source.as_ref()), &a.flags)?;
    let seeds = if a.seeds.is_empty() {
        vec![cfg.seed]
    } else {
        a.seeds.clone()
    };
    let data = settings::task_data(&a.train, a.dev.as_deref(), &cfg)?;
    let vectors = settings::vectors(&a.flags, &cfg)?;
    let model = source.as_ref().map(|ck| ck.predictor.primary());
    let points = learning_curve(
        Execution::available(),
        model,
        &data,
        &schemes,
        &a.fractions,
        &seeds,
        &cfg,
        vectors.as_ref(),
    )?;
    write_curve_csv(out, &points)?;
    Ok(())
}

fn write_counts(out: &mut impl Write, prefix: &str, counts: &ParamCounts) -> std::io::Result<()> {
    for (name, n) in counts.rows() {
        writeln!(out, "{prefix}{name}={n}")?;
    }
    Ok(())
}

fn member_prefix(i: usize, members: usize) -> String {
    if members > 1 {
        format!("member{i}.")
    } else {
        String::new()
    }
}

/// Architectures of a scheme's members under `cfg`.
fn scheme_members(scheme: Scheme, cfg: &TrainConfig) -> Vec<(ModelDims, pretrand::tagger::MergeConfig)> {
    let base = |hidden| (cfg.model_dims(hidden, 0), Default::default());
    match scheme {
        Scheme::Random200 | Scheme::StandardFinetune => vec![base(cfg.hidden)],
        Scheme::Random400 => vec![base(2 * cfg.hidden)],
        Scheme::Ensemble2Rand | Scheme::EnsemblePretRand => vec![base(cfg.hidden), base(cfg.hidden)],
        Scheme::PretRand(a) => vec![(cfg.model_dims(cfg.hidden, cfg.k), a.merge(cfg.p))],
    }
}

pub fn count_params(a: CountParamsArgs, out: &mut impl Write) -> CliResult {
    if let Some(path) = &a.model {
        let ck = settings::checkpoint(path)?;
        let members: &[TaggerModel] = ck.predictor.members();
        for (i, m) in members.iter().enumerate() {
            write_counts(out, &member_prefix(i, members.len()), &m.count_params())?;
        }
        return Ok(());
    }
    let scheme = settings::scheme(&a.scheme, &a.ablation)?;
    let cfg = settings::resolve(TrainConfig::default(), &a.flags)?;
    if a.words < 2 {
        return Err(CliError::Usage("--words: must count the 2 reserved ids".into()));
    }
    if a.chars < 1 {
        return Err(CliError::Usage("--chars: must count the unknown slot".into()));
    }
    if a.classes < 2 {
        return Err(CliError::Usage("--classes: at least 2 tags are needed".into()));
    }
    let members = scheme_members(scheme, &cfg);
    for (i, (dims, merge)) in members.iter().enumerate() {
        let counts = ParamCounts::for_config(dims, a.words, a.chars, a.classes, merge);
        write_counts(out, &member_prefix(i, members.len()), &counts)?;
    }
    Ok(())
}

pub fn inspect(a: InspectArgs, out: &mut impl Write) -> CliResult {
    let ck = settings::checkpoint(&a.model)?;
    writeln!(out, "magic={}", String::from_utf8_lossy(CHECKPOINT_MAGIC))?;
    writeln!(out, "version={CHECKPOINT_VERSION}")?;
    writeln!(out, "scheme={}", ck.meta.scheme)?;
    writeln!(out, "epochs_run={}", ck.meta.epochs_run)?;
    writeln!(out, "best_epoch={}", ck.meta.best_epoch)?;
    writeln!(out, "best_dev_accuracy={:.6}", ck.meta.best_dev_accuracy)?;
    writeln!(out, "tags={}", ck.tagset().names().join(","))?;
    for line in ck.config.to_kv().lines() {
        writeln!(out, "config.{line}")?;
    }
    let members = ck.predictor.members();
    writeln!(out, "members={}", members.len())?;
    for (i, m) in members.iter().enumerate() {
        let p = format!("member{i}.");
        writeln!(out, "{p}words={}", m.vocab().word_count())?;
        writeln!(out, "{p}chars={}", m.vocab().char_count())?;
        writeln!(out, "{p}hidden={}", m.dims.hidden)?;
        writeln!(out, "{p}random_hidden={}", m.dims.random_hidden)?;
        writeln!(out, "{p}use_norm={}", m.merge.use_norm)?;
        writeln!(out, "{p}p_norm={}", m.merge.p)?;
        writeln!(out, "{p}use_vectors={}", m.merge.use_vectors)?;
        writeln!(out, "{p}scalars={}", m.store.num_scalars())?;
        for (_, name, param) in m.store.iter() {
            let shape: Vec<String> = param.value.shape().iter().map(|d| d.to_string()).collect();
            writeln!(out, "{p}block.{name}={}", shape.join("x"))?;
        }
    }
    Ok(())
}

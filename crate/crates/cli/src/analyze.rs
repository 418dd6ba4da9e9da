//! `analyze` subcommands. Probing corpora are read for their tokens only,
//! so their tags need not match either model.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::Context;
use pretrand::analysis::{
    diagonal_dominance, histograms, mean_abs, pearson_matrix, per_class_delta, record_activations, top_k_words,
    unique_units, write_correlation_csv, write_histogram_csv, write_per_class_csv, write_top_words_csv,
    ActivationMatrix, TopWordsRow,
};
use pretrand::corpus::{load_conll, Sentence, TagSetPolicy};
use pretrand::tagger::{Layer, TaggerModel};
use pretrand::training::evaluate;

use crate::settings::{self, input_path};
use crate::{
    AnalyzeCommand, CliError, CliResult, CorrelationsArgs, PerClassArgs, TopWordsArgs, UniqueUnitsArgs, WeightHistArgs,
};

pub fn run(cmd: AnalyzeCommand, out: &mut impl Write) -> CliResult {
    match cmd {
        AnalyzeCommand::Correlations(a) => correlations(a, out),
        AnalyzeCommand::TopWords(a) => top_words(a, out),
        AnalyzeCommand::UniqueUnits(a) => unique(a, out),
        AnalyzeCommand::WeightHist(a) => weight_hist(a, out),
        AnalyzeCommand::PerClass(a) => per_class(a, out),
    }
}

fn probe(path: &Path) -> anyhow::Result<Vec<Sentence>> {
    let path = input_path(path);
    let corpus =
        load_conll(&path, &TagSetPolicy::Build).with_context(|| format!("--data {}: cannot load", path.display()))?;
    Ok(corpus.train.sentences)
}

fn layer(flag: &str, value: &str) -> CliResult<Layer> {
    value.parse().map_err(|e| CliError::Usage(format!("{flag}: {e}")))
}

fn activations(model: &TaggerModel, data: &[Sentence], layer: Layer, path: &Path) -> anyhow::Result<ActivationMatrix> {
    record_activations(model, data, layer, &path.display().to_string())
        .with_context(|| format!("{}: cannot record activations", path.display()))
}

fn correlations(a: CorrelationsArgs, out: &mut impl Write) -> CliResult {
    let before_layer = layer("--layer", &a.layer)?;
    let after_layer = match &a.after_layer {
        Some(l) => layer("--after-layer", l)?,
        None => before_layer,
    };
    let before = settings::checkpoint(&a.before)?;
    let after = settings::checkpoint(&a.after)?;
    let data = probe(&a.data)?;
    let am = activations(before.predictor.primary(), &data, before_layer, &a.before)?;
    let bm = activations(after.predictor.primary(), &data, after_layer, &a.after)?;
    let corr = pearson_matrix(&am, &bm)?;
    for i in &corr.degenerate_a {
        log::warn!("{}: unit {i} is constant on the probing data", a.before.display());
    }
    for j in &corr.degenerate_b {
        log::warn!("{}: unit {j} is constant on the probing data", a.after.display());
    }
    let Some(path) = &a.out else {
        write_correlation_csv(out, &corr.values)?;
        return Ok(());
    };
    let file = File::create(path).with_context(|| format!("--out {}", path.display()))?;
    write_correlation_csv(BufWriter::new(file), &corr.values).with_context(|| format!("--out {}", path.display()))?;
    writeln!(out, "rows={}", corr.values.rows())?;
    writeln!(out, "cols={}", corr.values.cols())?;
    writeln!(out, "tokens={}", am.tokens())?;
    writeln!(out, "degenerate_before={}", corr.degenerate_a.len())?;
    writeln!(out, "degenerate_after={}", corr.degenerate_b.len())?;
    if corr.values.rows() == corr.values.cols() {
        let n = corr.values.rows();
        let mean_diag = (0..n).map(|i| corr.get(i, i)).sum::<f64>() / n.max(1) as f64;
        writeln!(out, "mean_diagonal={mean_diag:.6}")?;
        writeln!(out, "diagonal_dominance={:.6}", diagonal_dominance(&corr)?)?;
    }
    Ok(())
}

fn top_words(a: TopWordsArgs, out: &mut impl Write) -> CliResult {
    let layer = layer("--layer", &a.layer)?;
    if a.top == 0 {
        return Err(CliError::Usage("--top: must be at least 1".into()));
    }
    let ck = settings::checkpoint(&a.model)?;
    let data = probe(&a.data)?;
    let am = activations(ck.predictor.primary(), &data, layer, &a.model)?;
    let units: Vec<usize> = if a.units.is_empty() {
        (0..am.units()).collect()
    } else {
        a.units.clone()
    };
    let mut rows = Vec::new();
    for unit in units {
        let words = top_k_words(&am, unit, a.top).map_err(|e| CliError::Usage(format!("--units: {e}")))?;
        rows.extend(
            words
                .into_iter()
                .enumerate()
                .map(|(r, (surface, activation))| TopWordsRow {
                    unit,
                    rank: r + 1,
                    surface,
                    activation,
                }),
        );
    }
    write_top_words_csv(out, &rows)?;
    Ok(())
}

fn unique(a: UniqueUnitsArgs, out: &mut impl Write) -> CliResult {
    if !(a.threshold > 0.0 && a.threshold <= 1.0) {
        return Err(CliError::Usage(format!(
            "--threshold: {} is outside (0, 1]",
            a.threshold
        )));
    }
    let ck = settings::checkpoint(&a.model)?;
    let model = ck.predictor.primary();
    if !model.has_random_branch() {
        return Err(CliError::Runtime(anyhow::anyhow!(
            "--model {}: no random branch",
            a.model.display()
        )));
    }
    let data = probe(&a.data)?;
    let random = activations(model, &data, Layer::PhiR, &a.model)?;
    let pretrained = activations(model, &data, Layer::Phi, &a.model)?;
    let u = unique_units(&random, &pretrained, a.threshold)?;
    writeln!(out, "threshold={}", a.threshold)?;
    writeln!(out, "random_units={}", random.units())?;
    writeln!(out, "unique_units={}", u.units.len())?;
    writeln!(out, "fraction={:.6}", u.fraction)?;
    let ids: Vec<String> = u.units.iter().map(|i| i.to_string()).collect();
    writeln!(out, "units={}", ids.join(","))?;
    Ok(())
}

fn weight_hist(a: WeightHistArgs, out: &mut impl Write) -> CliResult {
    if a.bins == 0 {
        return Err(CliError::Usage("--bins: must be at least 1".into()));
    }
    let mut blocks: Vec<(String, Vec<f64>)> = Vec::new();
    for path in &a.model {
        let ck = settings::checkpoint(path)?;
        let m = ck.predictor.primary();
        let names: Vec<String> = if a.blocks.is_empty() {
            ["psi.W", "psi_r.W"]
                .into_iter()
                .filter(|n| m.store.id(n).is_some())
                .map(String::from)
                .collect()
        } else {
            a.blocks.clone()
        };
        for name in names {
            let id = m
                .store
                .id(&name)
                .ok_or_else(|| CliError::Usage(format!("--blocks: {} has no block `{name}`", path.display())))?;
            let label = if a.model.len() > 1 {
                format!("{}:{name}", path.display())
            } else {
                name
            };
            blocks.push((label, m.store.value(id).data().to_vec()));
        }
    }
    for (label, values) in &blocks {
        log::info!("{label}: {} values, mean |w| = {:.6}", values.len(), mean_abs(values));
    }
    let refs: Vec<(&str, &[f64])> = blocks.iter().map(|(n, v)| (n.as_str(), v.as_slice())).collect();
    write_histogram_csv(out, &histograms(&refs, a.bins))?;
    Ok(())
}

fn per_class(a: PerClassArgs, out: &mut impl Write) -> CliResult {
    let ca = settings::checkpoint(&a.a)?;
    let cb = settings::checkpoint(&a.b)?;
    ca.tagset()
        .ensure_same(cb.tagset())
        .with_context(|| format!("--a {} and --b {} use different tag-sets", a.a.display(), a.b.display()))?;
    let data = settings::labelled(&a.data, ca.tagset())?;
    let ea = evaluate(&ca.predictor, &data, ca.tagset())?;
    let eb = evaluate(&cb.predictor, &data, cb.tagset())?;
    let d = per_class_delta(ca.tagset(), &ea, cb.tagset(), &eb)?;
    for c in &d.excluded {
        log::info!("class {c} has no gold tokens in {} and is excluded", a.data.display());
    }
    write_per_class_csv(out, &d)?;
    Ok(())
}

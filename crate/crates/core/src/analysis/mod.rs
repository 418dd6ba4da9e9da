//! Unit-level interpretability: activation records, Pearson correlation
//! between layers, top activating words, unique-unit detection, weight
//! histograms and per-class accuracy deltas, with CSV import/export.

mod csvio;

pub use csvio::{
    parse_correlation_csv, parse_histogram_csv, parse_per_class_csv, parse_top_words_csv, write_correlation_csv,
    write_histogram_csv, write_per_class_csv, write_top_words_csv, TopWordsRow,
};

use crate::corpus::{Sentence, TagSet};
use crate::numerics::Tensor;
use crate::par;
use crate::tagger::{Layer, ModelError, TaggerModel};
use crate::training::Evaluation;

/// Rows whose standard deviation falls below this are treated as constant.
pub const DEGENERATE_STD: f64 = 1e-12;
/// Correlation magnitude below which a random unit counts as unique.
pub const UNIQUE_THRESHOLD: f64 = 0.4;
pub const HISTOGRAM_BINS: usize = 50;

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("column mismatch: {left} vs {right} token columns")]
    ColumnMismatch { left: usize, right: usize },
    #[error("unit {unit} out of range ({units} units)")]
    UnitOutOfRange { unit: usize, units: usize },
    #[error("unknown parameter block `{0}`")]
    UnknownBlock(String),
    #[error("tag-set mismatch: {0}")]
    TagSetMismatch(String),
    #[error("correlation matrix is not square ({0} × {1})")]
    NotSquare(usize, usize),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("csv: {0}")]
    Csv(String),
}

/// Units × token-occurrences activations of one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationMatrix {
    /// `units × tokens`.
    pub values: Tensor,
    pub layer: String,
    /// Token surface of each column, in corpus order.
    pub surfaces: Vec<String>,
    pub model_id: String,
}

impl ActivationMatrix {
    pub fn units(&self) -> usize {
        self.values.rows()
    }

    pub fn tokens(&self) -> usize {
        self.values.cols()
    }

    pub fn row(&self, unit: usize) -> &[f64] {
        self.values.row(unit)
    }
}

/// Forward-only pass over `sentences`, one column per token occurrence.
/// Rows are the layer's units: the forward-direction block first, then the
/// backward block.
pub fn record_activations(
    model: &TaggerModel,
    sentences: &[Sentence],
    layer: Layer,
    model_id: &str,
) -> Result<ActivationMatrix, AnalysisError> {
    let per_sentence = par::map(sentences, |s| {
        model.layer_activations(&model.sentence_ids(&s.tokens), layer)
    });
    let per_sentence = per_sentence.into_iter().collect::<Result<Vec<_>, _>>()?;
    let units = match layer {
        Layer::Phi => model.phi.output_dim(),
        Layer::PhiR => model.random.as_ref().map_or(0, |r| r.phi.output_dim()),
    };
    let tokens: usize = per_sentence.iter().map(|t| t.rows()).sum();
    let mut data = vec![0.0; units * tokens];
    let mut col = 0;
    for act in &per_sentence {
        for t in 0..act.rows() {
            for (u, &v) in act.row(t).iter().enumerate() {
                data[u * tokens + col] = v;
            }
            col += 1;
        }
    }
    let values = Tensor::new(vec![units, tokens], data).map_err(ModelError::from)?;
    Ok(ActivationMatrix {
        values,
        layer: match layer {
            Layer::Phi => "phi".into(),
            Layer::PhiR => "phi_r".into(),
        },
        surfaces: sentences.iter().flat_map(|s| s.tokens.iter().cloned()).collect(),
        model_id: model_id.to_string(),
    })
}

/// Pearson coefficients between the rows of two activation matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationMatrix {
    /// `units(a) × units(b)`, entries in `[-1, 1]`.
    pub values: Tensor,
    /// Constant rows of `a` (their entries are 0).
    pub degenerate_a: Vec<usize>,
    pub degenerate_b: Vec<usize>,
    pub source_id: String,
    pub target_id: String,
}

impl CorrelationMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values.at(i, j)
    }

    pub fn has_degenerate_rows(&self) -> bool {
        !self.degenerate_a.is_empty() || !self.degenerate_b.is_empty()
    }
}

/// Rows centred and scaled to unit ℓ2 norm; constant rows become zero.
fn standardize(m: &Tensor) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut degenerate = Vec::new();
    let n = m.cols() as f64;
    let rows = (0..m.rows())
        .map(|i| {
            let r = m.row(i);
            let mean = r.iter().sum::<f64>() / n;
            let centred: Vec<f64> = r.iter().map(|x| x - mean).collect();
            let norm = centred.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm / n.sqrt() < DEGENERATE_STD {
                degenerate.push(i);
                vec![0.0; centred.len()]
            } else {
                centred.into_iter().map(|x| x / norm).collect()
            }
        })
        .collect();
    (rows, degenerate)
}

pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let ta = Tensor::matrix(1, a.len(), a.to_vec()).ok()?;
    let tb = Tensor::matrix(1, b.len(), b.to_vec()).ok()?;
    let (sa, da) = standardize(&ta);
    let (sb, db) = standardize(&tb);
    if !da.is_empty() || !db.is_empty() || a.len() != b.len() {
        return None;
    }
    Some(dot(&sa[0], &sb[0]).clamp(-1.0, 1.0))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn pearson_matrix(a: &ActivationMatrix, b: &ActivationMatrix) -> Result<CorrelationMatrix, AnalysisError> {
    if a.tokens() != b.tokens() {
        return Err(AnalysisError::ColumnMismatch {
            left: a.tokens(),
            right: b.tokens(),
        });
    }
    let (sa, degenerate_a) = standardize(&a.values);
    let (sb, degenerate_b) = standardize(&b.values);
    let rows = par::map(&sa, |ra| {
        sb.iter().map(|rb| dot(ra, rb).clamp(-1.0, 1.0)).collect::<Vec<_>>()
    });
    let values = Tensor::new(vec![sa.len(), sb.len()], rows.concat()).map_err(ModelError::from)?;
    Ok(CorrelationMatrix {
        values,
        degenerate_a,
        degenerate_b,
        source_id: format!("{}:{}", a.model_id, a.layer),
        target_id: format!("{}:{}", b.model_id, b.layer),
    })
}

/// The `k` surfaces with the highest activation of `unit`. A surface's score
/// is its maximum over occurrences; equal scores keep first-occurrence order.
pub fn top_k_words(am: &ActivationMatrix, unit: usize, k: usize) -> Result<Vec<(String, f64)>, AnalysisError> {
    if unit >= am.units() {
        return Err(AnalysisError::UnitOutOfRange {
            unit,
            units: am.units(),
        });
    }
    let mut best: Vec<(String, f64)> = Vec::new();
    let mut index = std::collections::HashMap::new();
    for (surface, &v) in am.surfaces.iter().zip(am.row(unit)) {
        match index.get(surface) {
            Some(&i) => {
                let e: &mut (String, f64) = &mut best[i];
                if v > e.1 {
                    e.1 = v;
                }
            }
            None => {
                index.insert(surface.clone(), best.len());
                best.push((surface.clone(), v));
            }
        }
    }
    // stable sort keeps first-occurrence order among ties
    best.sort_by(|x, y| y.1.total_cmp(&x.1));
    best.truncate(k);
    Ok(best)
}

#[derive(Clone, Debug, PartialEq)]
pub struct UniqueUnits {
    pub units: Vec<usize>,
    /// `units.len() / random units`.
    pub fraction: f64,
    /// Per random unit, `max_j |corr(r_i, p_j)|`.
    pub max_abs_corr: Vec<f64>,
}

/// Random units whose largest absolute correlation with any pre-trained unit
/// stays below `threshold`.
pub fn unique_units(
    random: &ActivationMatrix,
    pretrained: &ActivationMatrix,
    threshold: f64,
) -> Result<UniqueUnits, AnalysisError> {
    let corr = pearson_matrix(random, pretrained)?;
    let max_abs_corr: Vec<f64> = (0..random.units())
        .map(|i| corr.values.row(i).iter().fold(0.0_f64, |m, c| m.max(c.abs())))
        .collect();
    let units: Vec<usize> = (0..random.units()).filter(|&i| max_abs_corr[i] < threshold).collect();
    let fraction = if random.units() == 0 {
        0.0
    } else {
        units.len() as f64 / random.units() as f64
    };
    Ok(UniqueUnits {
        units,
        fraction,
        max_abs_corr,
    })
}

/// Fraction of units `i` whose before/after self-correlation `c[i][i]` is
/// strictly larger than every other entry of row `i` and column `i`.
pub fn diagonal_dominance(corr: &CorrelationMatrix) -> Result<f64, AnalysisError> {
    let (r, c) = (corr.values.rows(), corr.values.cols());
    if r != c {
        return Err(AnalysisError::NotSquare(r, c));
    }
    if r == 0 {
        return Ok(0.0);
    }
    let dominant = (0..r)
        .filter(|&i| {
            let d = corr.get(i, i);
            (0..r)
                .filter(|&j| j != i)
                .all(|j| d > corr.get(i, j) && d > corr.get(j, i))
        })
        .count();
    Ok(dominant as f64 / r as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub block: String,
    /// `bins + 1` ascending edges, shared across blocks of one call.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Histograms of the named parameter blocks over shared bins spanning the
/// joint min/max of all values. The last bin is closed on the right. When
/// all values are equal the range is `[v, v + 1]`.
pub fn weight_distribution(model: &TaggerModel, blocks: &[&str], bins: usize) -> Result<Vec<Histogram>, AnalysisError> {
    let values: Vec<(&str, &[f64])> = blocks
        .iter()
        .map(|&name| {
            let id = model
                .store
                .id(name)
                .ok_or_else(|| AnalysisError::UnknownBlock(name.to_string()))?;
            Ok((name, model.store.value(id).data()))
        })
        .collect::<Result<_, AnalysisError>>()?;
    Ok(histograms(&values, bins))
}

pub fn histograms(blocks: &[(&str, &[f64])], bins: usize) -> Vec<Histogram> {
    let bins = bins.max(1);
    let all = blocks.iter().flat_map(|(_, v)| v.iter().copied());
    let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), x| (l.min(x), h.max(x)));
    let (lo, hi) = if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi > lo {
        (lo, hi)
    } else {
        (lo, lo + 1.0)
    };
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins)
        .map(|i| if i == bins { hi } else { lo + width * i as f64 })
        .collect();
    blocks
        .iter()
        .map(|(name, vals)| {
            let mut counts = vec![0; bins];
            for &x in *vals {
                let b = (((x - lo) / width).floor() as usize).min(bins - 1);
                counts[b] += 1;
            }
            Histogram {
                block: name.to_string(),
                edges: edges.clone(),
                counts,
            }
        })
        .collect()
}

/// Mean absolute value of a block.
pub fn mean_abs(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().map(|x| x.abs()).sum::<f64>() / values.len() as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PerClassDelta {
    /// `(class, accuracy_b − accuracy_a)`, descending.
    pub deltas: Vec<(String, f64)>,
    /// Classes without gold tokens.
    pub excluded: Vec<String>,
}

/// Per-gold-class accuracy change from `a` to `b`, evaluated on the same
/// split. Equal deltas keep tag-set order.
pub fn per_class_delta(
    tagset: &TagSet,
    a: &Evaluation,
    tagset_b: &TagSet,
    b: &Evaluation,
) -> Result<PerClassDelta, AnalysisError> {
    tagset
        .ensure_same(tagset_b)
        .map_err(|e| AnalysisError::TagSetMismatch(e.to_string()))?;
    if a.per_class.len() != tagset.len() || b.per_class.len() != tagset.len() {
        return Err(AnalysisError::TagSetMismatch(
            "evaluation class count differs from tag-set".into(),
        ));
    }
    let mut deltas = Vec::new();
    let mut excluded = Vec::new();
    for c in 0..tagset.len() {
        match (a.class_accuracy(c), b.class_accuracy(c)) {
            (Some(x), Some(y)) => deltas.push((tagset.name(c).to_string(), y - x)),
            _ => excluded.push(tagset.name(c).to_string()),
        }
    }
    deltas.sort_by(|x, y| y.1.total_cmp(&x.1));
    Ok(PerClassDelta { deltas, excluded })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn am(rows: &[&[f64]], surfaces: &[&str]) -> ActivationMatrix {
        let cols = rows[0].len();
        ActivationMatrix {
            values: Tensor::matrix(rows.len(), cols, rows.concat()).unwrap(),
            layer: "phi".into(),
            surfaces: surfaces.iter().map(|s| s.to_string()).collect(),
            model_id: "m".into(),
        }
    }

    #[test]
    fn pearson_basics() {
        let a = am(
            &[&[1.0, 2.0, 3.0], &[-1.0, -2.0, -3.0], &[5.0, 5.0, 5.0]],
            &["a", "b", "c"],
        );
        let b = am(&[&[2.0, 4.0, 6.0]], &["a", "b", "c"]);
        let c = pearson_matrix(&a, &b).unwrap();
        assert!((c.get(0, 0) - 1.0).abs() < 1e-12);
        assert!((c.get(1, 0) + 1.0).abs() < 1e-12);
        assert_eq!(c.get(2, 0), 0.0);
        assert_eq!(c.degenerate_a, vec![2]);
        let short = am(&[&[1.0, 2.0]], &["a", "b"]);
        assert!(matches!(
            pearson_matrix(&a, &short),
            Err(AnalysisError::ColumnMismatch { .. })
        ));
    }

    #[test]
    fn top_k_examples() {
        let m = am(&[&[0.1, 0.9, 0.5]], &["a", "b", "c"]);
        assert_eq!(
            top_k_words(&m, 0, 2).unwrap(),
            vec![("b".into(), 0.9), ("c".into(), 0.5)]
        );
        assert_eq!(top_k_words(&m, 0, 10).unwrap().len(), 3);
        let dup = am(&[&[0.7, 0.2, 0.9]], &["na", "x", "na"]);
        assert_eq!(top_k_words(&dup, 0, 10).unwrap()[0], ("na".into(), 0.9));
        assert!(top_k_words(&m, 1, 1).is_err());
    }

    #[test]
    fn histogram_of_constant_block() {
        let h = histograms(&[("b", &[0.5, 0.5, 0.5][..])], HISTOGRAM_BINS);
        assert_eq!(h[0].counts.iter().filter(|&&c| c > 0).count(), 1);
        assert_eq!(h[0].counts.iter().sum::<usize>(), 3);
        assert_eq!(h[0].edges.len(), HISTOGRAM_BINS + 1);
    }

    #[test]
    fn dominance_of_identity() {
        let a = am(&[&[1.0, 2.0, 3.0, 1.0], &[0.0, 1.0, 0.0, 1.0]], &["a"; 4]);
        let c = pearson_matrix(&a, &a).unwrap();
        assert_eq!(diagonal_dominance(&c).unwrap(), 1.0);
    }
}

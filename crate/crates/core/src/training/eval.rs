use crate::corpus::{Sentence, TagSet};
use crate::numerics::{self, NumericsError, Tensor};
use crate::par::{self, Execution};
use crate::tagger::TaggerModel;

use super::TrainError;

/// Independently trained models whose per-token softmax outputs are averaged.
#[derive(Clone, Debug)]
pub struct EnsembleModel {
    pub members: Vec<TaggerModel>,
}

impl EnsembleModel {
    pub fn new(members: Vec<TaggerModel>) -> Self {
        assert!(members.len() >= 2, "an ensemble needs at least two members");
        for m in &members[1..] {
            assert_eq!(m.tagset, members[0].tagset, "ensemble members must share a tag-set");
        }
        EnsembleModel { members }
    }

    /// Mean of the members' `n × C` probability matrices.
    pub fn probabilities(&self, tokens: &[String]) -> Result<Tensor, NumericsError> {
        let mut acc: Option<Tensor> = None;
        for m in &self.members {
            let p = m.probabilities(&m.sentence_ids(tokens))?;
            match &mut acc {
                Some(a) => a.add_assign(&p),
                None => acc = Some(p),
            }
        }
        let k = self.members.len() as f64;
        Ok(acc.expect("non-empty ensemble").map(|x| x / k))
    }
}

/// Anything that tags sentences: one model or an ensemble.
#[derive(Clone, Debug)]
#[allow(clippy::large_enum_variant)] // held once per run, never in bulk
pub enum Predictor {
    Single(TaggerModel),
    Ensemble(EnsembleModel),
}

impl Predictor {
    pub fn tagset(&self) -> &TagSet {
        &self.members()[0].tagset
    }

    pub fn members(&self) -> &[TaggerModel] {
        match self {
            Predictor::Single(m) => std::slice::from_ref(m),
            Predictor::Ensemble(e) => &e.members,
        }
    }

    /// First (or only) model.
    pub fn primary(&self) -> &TaggerModel {
        &self.members()[0]
    }

    pub fn predict_tokens(&self, tokens: &[String]) -> Result<Vec<usize>, NumericsError> {
        match self {
            Predictor::Single(m) => m.predict(&m.sentence_ids(tokens)),
            Predictor::Ensemble(e) => {
                let p = e.probabilities(tokens)?;
                Ok(p.data().chunks(p.cols()).map(numerics::argmax).collect())
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ClassCount {
    pub correct: usize,
    pub total: usize,
}

/// Token-level accuracy with per-gold-class counts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Evaluation {
    pub correct: usize,
    pub total: usize,
    pub per_class: Vec<ClassCount>,
}

impl Evaluation {
    pub fn from_predictions<'a>(classes: usize, pairs: impl IntoIterator<Item = (&'a [usize], &'a [usize])>) -> Self {
        let mut per_class = vec![ClassCount::default(); classes];
        let (mut correct, mut total) = (0, 0);
        for (pred, gold) in pairs {
            for (&p, &g) in pred.iter().zip(gold) {
                per_class[g].total += 1;
                total += 1;
                if p == g {
                    per_class[g].correct += 1;
                    correct += 1;
                }
            }
        }
        Evaluation {
            correct,
            total,
            per_class,
        }
    }

    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }

    /// `None` for classes without gold tokens.
    pub fn class_accuracy(&self, class: usize) -> Option<f64> {
        let c = self.per_class[class];
        (c.total > 0).then(|| c.correct as f64 / c.total as f64)
    }
}

/// Tags every sentence and compares against gold. Sentences are processed
/// in parallel when available; counts are exact integers so the result does
/// not depend on scheduling.
pub fn evaluate(predictor: &Predictor, sentences: &[Sentence], tagset: &TagSet) -> Result<Evaluation, TrainError> {
    evaluate_with(Execution::available(), predictor, sentences, tagset)
}

pub fn evaluate_with(
    mode: Execution,
    predictor: &Predictor,
    sentences: &[Sentence],
    tagset: &TagSet,
) -> Result<Evaluation, TrainError> {
    predictor.tagset().ensure_same(tagset)?;
    let preds = par::map_with(mode, sentences, |s| predictor.predict_tokens(&s.tokens));
    let preds = preds.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(Evaluation::from_predictions(
        tagset.len(),
        preds
            .iter()
            .zip(sentences)
            .map(|(p, s)| (p.as_slice(), s.tags.as_slice())),
    ))
}

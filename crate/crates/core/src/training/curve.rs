use std::io::Write;

use crate::corpus::{PretrainedVectors, Sentence};
use crate::par::{self, Execution};
use crate::rng::{self, CURVE_SAMPLING_OFFSET};
use crate::tagger::TaggerModel;

use super::{finetune, Scheme, TaskData, TrainConfig, TrainError};

#[derive(Clone, Debug, PartialEq)]
pub struct CurvePoint {
    pub fraction: f64,
    pub scheme: String,
    pub seed: u64,
    pub train_sentences: usize,
    pub dev_accuracy: f64,
}

/// The first `round(fraction · n)` entries of a permutation seeded with
/// `seed + CURVE_SAMPLING_OFFSET`, returned in corpus order. For one seed,
/// smaller fractions select subsets of larger ones and 1.0 selects the
/// whole corpus in its original order.
pub fn nested_subset(sentences: &[Sentence], fraction: f64, seed: u64) -> Result<Vec<Sentence>, TrainError> {
    let n = sentences.len();
    let take = (fraction * n as f64).round() as usize;
    if !(fraction > 0.0 && fraction <= 1.0) || take == 0 {
        return Err(TrainError::ZeroSubset { fraction, sentences: n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    rng::shuffle(&mut rng::seeded(seed.wrapping_add(CURVE_SAMPLING_OFFSET)), &mut order);
    let mut picked = order[..take].to_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| sentences[i].clone()).collect())
}

/// Trains every `(fraction, scheme, seed)` combination on the matching
/// nested train subset and reports dev accuracy. Points are independent runs
/// and execute in parallel under `mode`; rows come back in
/// fraction-major, then scheme, then seed order.
#[allow(clippy::too_many_arguments)]
pub fn learning_curve(
    mode: Execution,
    source: Option<&TaggerModel>,
    data: &TaskData,
    schemes: &[Scheme],
    fractions: &[f64],
    seeds: &[u64],
    cfg: &TrainConfig,
    vectors: Option<&PretrainedVectors>,
) -> Result<Vec<CurvePoint>, TrainError> {
    let mut jobs = Vec::new();
    for &f in fractions {
        for &s in schemes {
            for &seed in seeds {
                jobs.push((f, s, seed));
            }
        }
    }
    // fail fast on empty subsets before any training
    for &f in fractions {
        nested_subset(&data.train, f, cfg.seed)?;
    }
    let results = par::map_with(mode, &jobs, |&(fraction, scheme, seed)| {
        let train = nested_subset(&data.train, fraction, cfg.seed)?;
        let subset = TaskData::new(data.tagset.clone(), train, data.dev.clone())?;
        let mut run_cfg = cfg.clone();
        run_cfg.seed = seed;
        let trained = finetune(source, &subset, scheme, &run_cfg, vectors)?;
        Ok(CurvePoint {
            fraction,
            scheme: scheme.label(),
            seed,
            train_sentences: subset.train.len(),
            dev_accuracy: trained.dev_accuracy(&subset)?,
        })
    });
    results.into_iter().collect()
}

/// `fraction,scheme,seed,train_sentences,dev_accuracy` with a header row.
pub fn write_curve_csv<W: Write>(out: &mut W, points: &[CurvePoint]) -> std::io::Result<()> {
    writeln!(out, "fraction,scheme,seed,train_sentences,dev_accuracy")?;
    for p in points {
        writeln!(
            out,
            "{},{},{},{},{:.6}",
            p.fraction, p.scheme, p.seed, p.train_sentences, p.dev_accuracy
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(n: usize) -> Vec<Sentence> {
        (0..n)
            .map(|i| Sentence {
                tokens: vec![format!("w{i}")],
                tags: vec![0],
            })
            .collect()
    }

    #[test]
    fn subsets_nest_and_full_keeps_order() {
        let c = corpus(40);
        let quarter = nested_subset(&c, 0.25, 3).unwrap();
        let half = nested_subset(&c, 0.5, 3).unwrap();
        assert_eq!((quarter.len(), half.len()), (10, 20));
        assert!(quarter.iter().all(|s| half.contains(s)));
        assert_eq!(nested_subset(&c, 1.0, 3).unwrap(), c);
    }

    #[test]
    fn zero_subset_is_an_error() {
        let c = corpus(4);
        assert!(matches!(nested_subset(&c, 0.1, 1), Err(TrainError::ZeroSubset { .. })));
        assert!(nested_subset(&c, 0.0, 1).is_err());
        assert!(nested_subset(&c, 1.5, 1).is_err());
    }
}

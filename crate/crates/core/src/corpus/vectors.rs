use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::CorpusError;

/// Word vectors keyed by lower-cased token.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PretrainedVectors {
    dim: usize,
    table: HashMap<String, Vec<f64>>,
    /// Entries overwritten by a later line with the same (lower-cased) token.
    pub duplicates: usize,
}

impl PretrainedVectors {
    pub fn empty(dim: usize) -> Self {
        PretrainedVectors {
            dim,
            ..Default::default()
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.table.get(&word.to_lowercase()).map(Vec::as_slice)
    }

    pub fn insert(&mut self, word: &str, vector: Vec<f64>) {
        assert_eq!(vector.len(), self.dim);
        if self.table.insert(word.to_lowercase(), vector).is_some() {
            self.duplicates += 1;
        }
    }
}

/// Parses `token v1 .. vD` lines. A leading `count dim` header line (as
/// written by word2vec tools) is skipped; blank lines are ignored.
/// Duplicate tokens: the last occurrence wins and a warning is logged.
pub fn parse_vectors(text: &str, dim: usize, path: &Path) -> Result<PretrainedVectors, CorpusError> {
    let mut out = PretrainedVectors::empty(dim);
    for (i, line) in text.lines().enumerate() {
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else { continue };
        let values: Vec<&str> = fields.collect();
        if i == 0 && values.len() == 1 && token.parse::<usize>().is_ok() && values[0].parse::<usize>() == Ok(dim) {
            continue;
        }
        if values.len() != dim {
            return Err(CorpusError::Dimension {
                path: path.to_path_buf(),
                line: i + 1,
                expected: dim,
                found: values.len(),
            });
        }
        let vector = values
            .iter()
            .map(|v| match v.parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(x),
                _ => Err(CorpusError::BadNumber {
                    path: path.to_path_buf(),
                    line: i + 1,
                    value: v.to_string(),
                }),
            })
            .collect::<Result<Vec<_>, _>>()?;
        if out.get(token).is_some() {
            log::warn!(
                "{}:{}: duplicate vector for `{}`, keeping the later one",
                path.display(),
                i + 1,
                token
            );
        }
        out.insert(token, vector);
    }
    Ok(out)
}

pub fn load_vectors(path: impl AsRef<Path>, dim: usize) -> Result<PretrainedVectors, CorpusError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let v = parse_vectors(&text, dim, path)?;
    log::info!("{}: loaded {} vectors of dimension {}", path.display(), v.len(), dim);
    Ok(v)
}

//! Tagged corpora, tag-sets, vocabularies and pretrained word vectors.

mod conll;
mod tagset;
mod vectors;
mod vocab;

use std::path::PathBuf;

use thiserror::Error;

pub use conll::{
    load_conll, parse_conll, serialize_conll, write_conll, Sentence, Split, SplitKind, TagSetPolicy, TaggedCorpus,
};
pub use tagset::TagSet;
pub use vectors::{load_vectors, parse_vectors, PretrainedVectors};
pub use vocab::{build_vocab, Vocab, PAD, UNK};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: expected 2 columns (token, tag), found {found}")]
    Malformed { path: PathBuf, line: usize, found: usize },
    #[error("{path}:{line}: tag `{tag}` is not in the fixed tag-set")]
    UnknownTag { path: PathBuf, line: usize, tag: String },
    #[error("{0}: no sentences")]
    Empty(PathBuf),
    #[error("a tag-set needs at least 2 distinct tags, got {0}")]
    TooFewTags(usize),
    #[error("duplicate tag `{0}`")]
    DuplicateTag(String),
    #[error("{path}:{line}: expected {expected} values, found {found}")]
    Dimension {
        path: PathBuf,
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("{path}:{line}: cannot parse `{value}` as a real number")]
    BadNumber { path: PathBuf, line: usize, value: String },
    #[error("tag-sets differ: {0}")]
    TagSetMismatch(String),
}

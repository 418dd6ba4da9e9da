//! Shared token representation: a lower-cased word embedding joined with a
//! character biLSTM encoding of the cased surface.

mod lstm;

pub(crate) use lstm::glorot;
pub use lstm::{BiLstm, BiLstmOutput, LstmCell};

use crate::corpus::{PretrainedVectors, Vocab, PAD};
use crate::numerics::{NumericsError, ParamId, ParamStore, Tape, Tensor, Var};
use crate::rng::{self, Rng};

/// Range of the uniform init for word rows without a pretrained vector, and
/// for character embeddings.
pub const EMBED_INIT_RANGE: f64 = 0.25;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EncoderDims {
    pub word_dim: usize,
    pub char_dim: usize,
    /// Per direction; the char encoding is `2 · char_hidden` wide.
    pub char_hidden: usize,
}

impl EncoderDims {
    pub fn output_dim(&self) -> usize {
        self.word_dim + 2 * self.char_hidden
    }
}

/// Vocabulary ids of one token.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenIds {
    pub word: usize,
    pub chars: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct Encoder {
    pub dims: EncoderDims,
    pub vocab: Vocab,
    pub word_table: ParamId,
    pub char_table: ParamId,
    pub char_lstm: BiLstm,
}

/// Result of [`init_word_embeddings`].
#[derive(Clone, Debug)]
pub struct WordInit {
    pub table: Tensor,
    /// Non-reserved words that received a pretrained vector.
    pub covered: usize,
    pub coverage: f64,
}

/// Builds the `|V| × dim` word table: pretrained rows where available,
/// `Uniform(−0.25, 0.25)` otherwise, and an all-zero padding row.
pub fn init_word_embeddings(
    vocab: &Vocab,
    vectors: Option<&PretrainedVectors>,
    dim: usize,
    rng: &mut Rng,
) -> Result<WordInit, NumericsError> {
    if let Some(v) = vectors {
        if v.dim() != dim {
            return Err(NumericsError::ShapeMismatch {
                op: "init_word_embeddings",
                left: vec![vocab.word_count(), dim],
                right: vec![v.len(), v.dim()],
            });
        }
    }
    let mut data = Vec::with_capacity(vocab.word_count() * dim);
    let mut covered = 0;
    for (id, word) in vocab.words().iter().enumerate() {
        if id == PAD {
            data.extend(std::iter::repeat_n(0.0, dim));
            continue;
        }
        match vectors.and_then(|v| v.get(word)) {
            Some(row) if id != crate::corpus::UNK => {
                covered += 1;
                data.extend_from_slice(row);
            }
            _ => data.extend((0..dim).map(|_| rng::uniform(rng, -EMBED_INIT_RANGE, EMBED_INIT_RANGE))),
        }
    }
    let regular = vocab.word_count().saturating_sub(2);
    let coverage = if regular == 0 {
        0.0
    } else {
        covered as f64 / regular as f64
    };
    Ok(WordInit {
        table: Tensor::matrix(vocab.word_count(), dim, data)?,
        covered,
        coverage,
    })
}

impl Encoder {
    pub fn new(
        store: &mut ParamStore,
        dims: EncoderDims,
        vocab: Vocab,
        vectors: Option<&PretrainedVectors>,
        rng: &mut Rng,
    ) -> Result<Self, NumericsError> {
        let init = init_word_embeddings(&vocab, vectors, dims.word_dim, rng)?;
        if vectors.is_some() {
            log::info!(
                "pretrained vectors cover {}/{} words ({:.1}%)",
                init.covered,
                vocab.word_count().saturating_sub(2),
                100.0 * init.coverage
            );
        }
        let word_table = store.add("encoder.word", init.table);
        let chars = (0..vocab.char_count() * dims.char_dim)
            .map(|_| rng::uniform(rng, -EMBED_INIT_RANGE, EMBED_INIT_RANGE))
            .collect();
        let char_table = store.add(
            "encoder.char_embed",
            Tensor::matrix(vocab.char_count(), dims.char_dim, chars)?,
        );
        let char_lstm = BiLstm::new(store, "encoder.char", dims.char_dim, dims.char_hidden, rng);
        Ok(Encoder {
            dims,
            vocab,
            word_table,
            char_table,
            char_lstm,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.dims.output_dim()
    }

    pub fn token_ids(&self, word: &str) -> TokenIds {
        TokenIds {
            word: self.vocab.word_id(word),
            chars: self.vocab.char_ids(word),
        }
    }

    pub fn sentence_ids(&self, tokens: &[String]) -> Vec<TokenIds> {
        tokens.iter().map(|t| self.token_ids(t)).collect()
    }

    /// Ids of the word-table and the char-table parameter blocks.
    pub fn word_param_ids(&self) -> Vec<ParamId> {
        vec![self.word_table]
    }

    pub fn char_param_ids(&self) -> Vec<ParamId> {
        let mut ids = vec![self.char_table];
        ids.extend(self.char_lstm.param_ids());
        ids
    }

    /// `1 × 2·Hc` char encoding of one token.
    fn encode_chars(&self, tape: &mut Tape, chars: &[usize]) -> Result<Var, NumericsError> {
        let unk = [self.vocab.char_unk()];
        let chars = if chars.is_empty() { &unk[..] } else { chars };
        let xs = tape.gather(self.char_table, chars)?;
        Ok(self.char_lstm.run(tape, xs)?.last)
    }

    /// `n × (Dw + 2·Hc)` representations of a sentence.
    pub fn encode(&self, tape: &mut Tape, tokens: &[TokenIds]) -> Result<Var, NumericsError> {
        if tokens.is_empty() {
            return Err(NumericsError::InvalidShape(vec![0, self.output_dim()]));
        }
        let words: Vec<usize> = tokens.iter().map(|t| t.word).collect();
        let word_rows = tape.gather(self.word_table, &words)?;
        let char_rows = tokens
            .iter()
            .map(|t| self.encode_chars(tape, &t.chars))
            .collect::<Result<Vec<_>, _>>()?;
        let chars = tape.concat(&char_rows, 0)?;
        tape.concat(&[word_rows, chars], 1)
    }

    /// Representation of a single surface form.
    pub fn embed_token(&self, tape: &mut Tape, word: &str) -> Result<Var, NumericsError> {
        self.encode(tape, &[self.token_ids(word)])
    }
}

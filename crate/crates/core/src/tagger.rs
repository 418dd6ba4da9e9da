//! The two-branch tagger.
//!
//! The pre-trained branch is `Ψ ∘ Φ` over the shared encoder output. The
//! optional random branch `Ψr ∘ Φr` reads the same token representations.
//! Per token, each branch's logit vector is optionally ℓp-normalized on its
//! own, optionally scaled by a learnable per-class vector (`u` for the
//! pre-trained side, `v` for the random side), and the two are summed.

use crate::corpus::{PretrainedVectors, Sentence, TagSet, Vocab};
use crate::encoder::{glorot, BiLstm, Encoder, EncoderDims, TokenIds};
use crate::numerics::{self, NumericsError, ParamId, ParamStore, Precision, Tape, Tensor, Var, NORM_EPS};
use crate::rng::{self, Rng};

/// Fully connected classifier: `logits = h·Wᵀ + b` with `W: C × in`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, prefix: &str, input: usize, output: usize, rng: &mut Rng) -> Self {
        let w = store.add(&format!("{prefix}.W"), glorot(rng, output, input));
        let b = store.add(&format!("{prefix}.b"), Tensor::zeros(&[output]));
        Linear { w, b, input, output }
    }

    pub fn param_count(input: usize, output: usize) -> usize {
        output * input + output
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        vec![self.w, self.b]
    }

    pub fn apply(&self, tape: &mut Tape, x: Var) -> Result<Var, NumericsError> {
        let w = tape.param(self.w);
        let b = tape.param(self.b);
        let xw = tape.matmul_nt(x, w)?;
        tape.add_row(xw, b)
    }
}

/// How the two branches' logits are combined.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MergeConfig {
    /// Normalize each branch's logits independently before merging.
    pub use_norm: bool,
    /// Norm order.
    pub p: f64,
    /// Scale by the learnable per-class vectors `u`, `v`.
    pub use_vectors: bool,
}

impl Default for MergeConfig {
    fn default() -> Self {
        MergeConfig {
            use_norm: true,
            p: 2.0,
            use_vectors: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RandomBranch {
    pub phi: BiLstm,
    pub psi: Linear,
    /// Present iff the merge uses weighting vectors.
    pub u: Option<ParamId>,
    pub v: Option<ParamId>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelDims {
    pub encoder: EncoderDims,
    /// Φ hidden size per direction.
    pub hidden: usize,
    /// Φr hidden size per direction; zero means no random branch.
    pub random_hidden: usize,
}

/// Which biLSTM layer to read activations from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layer {
    Phi,
    PhiR,
}

impl std::str::FromStr for Layer {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "phi" => Ok(Layer::Phi),
            "phi_r" | "phi-r" => Ok(Layer::PhiR),
            other => Err(format!("unknown layer `{other}` (expected phi or phi_r)")),
        }
    }
}

/// Test and analysis hooks applied inside the forward pass.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ForwardHooks {
    /// Multiplies pre-trained branch logits before normalization.
    pub pretrained_scale: f64,
    /// Multiplies random branch logits before normalization.
    pub random_scale: f64,
}

impl Default for ForwardHooks {
    fn default() -> Self {
        ForwardHooks {
            pretrained_scale: 1.0,
            random_scale: 1.0,
        }
    }
}

/// Values recorded by one forward pass.
pub struct ForwardOutput {
    /// Final `n × C` logits (merged when a random branch is active).
    pub logits: Var,
    pub pretrained_logits: Var,
    pub random_logits: Option<Var>,
    /// `n × 2H` outputs of Φ.
    pub phi: Var,
    pub phi_r: Option<Var>,
}

/// Dropout applied during training forward passes.
pub struct Dropout<'r> {
    pub rate: f64,
    pub rng: &'r mut Rng,
}

#[derive(Clone, Debug)]
pub struct TaggerModel {
    pub store: ParamStore,
    pub encoder: Encoder,
    pub phi: BiLstm,
    pub psi: Linear,
    pub random: Option<RandomBranch>,
    pub merge: MergeConfig,
    pub tagset: TagSet,
    pub dims: ModelDims,
}

/// Exact trainable-scalar counts per component.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ParamCounts {
    pub word_embedding: usize,
    pub char_encoder: usize,
    pub phi: usize,
    pub psi: usize,
    pub phi_r: usize,
    pub psi_r: usize,
    pub u: usize,
    pub v: usize,
}

impl ParamCounts {
    pub fn embeddings(&self) -> usize {
        self.word_embedding + self.char_encoder
    }

    pub fn total(&self) -> usize {
        self.embeddings() + self.phi + self.psi + self.phi_r + self.psi_r + self.u + self.v
    }

    /// Total without the word table, which dominates at realistic vocab sizes.
    pub fn total_without_word_embedding(&self) -> usize {
        self.total() - self.word_embedding
    }

    pub fn rows(&self) -> Vec<(&'static str, usize)> {
        vec![
            ("word_embedding", self.word_embedding),
            ("char_encoder", self.char_encoder),
            ("phi", self.phi),
            ("psi", self.psi),
            ("phi_r", self.phi_r),
            ("psi_r", self.psi_r),
            ("u", self.u),
            ("v", self.v),
            ("total", self.total()),
            ("total_without_word_embedding", self.total_without_word_embedding()),
        ]
    }
}

impl ParamCounts {
    /// Closed-form counts for a configuration, without building a model.
    pub fn for_config(
        dims: &ModelDims,
        word_count: usize,
        char_count: usize,
        classes: usize,
        merge: &MergeConfig,
    ) -> Self {
        let e = &dims.encoder;
        let x = e.output_dim();
        let with_random = dims.random_hidden > 0;
        let vectors = if with_random && merge.use_vectors { classes } else { 0 };
        ParamCounts {
            word_embedding: word_count * e.word_dim,
            char_encoder: char_count * e.char_dim + BiLstm::param_count(e.char_dim, e.char_hidden),
            phi: BiLstm::param_count(x, dims.hidden),
            psi: Linear::param_count(2 * dims.hidden, classes),
            phi_r: if with_random {
                BiLstm::param_count(x, dims.random_hidden)
            } else {
                0
            },
            psi_r: if with_random {
                Linear::param_count(2 * dims.random_hidden, classes)
            } else {
                0
            },
            u: vectors,
            v: vectors,
        }
    }
}

impl TaggerModel {
    /// A freshly initialized model. `dims.random_hidden > 0` adds the random
    /// branch.
    pub fn new(
        dims: ModelDims,
        vocab: Vocab,
        tagset: TagSet,
        merge: MergeConfig,
        vectors: Option<&PretrainedVectors>,
        precision: Precision,
        rng: &mut Rng,
    ) -> Result<Self, NumericsError> {
        let mut store = ParamStore::new(precision);
        let encoder = Encoder::new(&mut store, dims.encoder, vocab, vectors, rng)?;
        let x = encoder.output_dim();
        let classes = tagset.len();
        let phi = BiLstm::new(&mut store, "phi", x, dims.hidden, rng);
        let psi = Linear::new(&mut store, "psi", 2 * dims.hidden, classes, rng);
        let mut model = TaggerModel {
            store,
            encoder,
            phi,
            psi,
            random: None,
            merge,
            tagset,
            dims: ModelDims {
                random_hidden: 0,
                ..dims
            },
        };
        if dims.random_hidden > 0 {
            model.attach_random_branch(dims.random_hidden, merge, rng);
        }
        Ok(model)
    }

    /// Adds `Φr` with `k` units per direction, a fresh `Ψr`, and all-ones
    /// `u`, `v` when the merge uses them.
    pub fn attach_random_branch(&mut self, k: usize, merge: MergeConfig, rng: &mut Rng) {
        assert!(self.random.is_none(), "random branch already attached");
        let x = self.encoder.output_dim();
        let classes = self.tagset.len();
        let phi = BiLstm::new(&mut self.store, "phi_r", x, k, rng);
        let psi = Linear::new(&mut self.store, "psi_r", 2 * k, classes, rng);
        let (u, v) = if merge.use_vectors {
            (
                Some(self.store.add("u", Tensor::filled(&[classes], 1.0))),
                Some(self.store.add("v", Tensor::filled(&[classes], 1.0))),
            )
        } else {
            (None, None)
        };
        self.random = Some(RandomBranch { phi, psi, u, v });
        self.merge = merge;
        self.dims.random_hidden = k;
    }

    pub fn classes(&self) -> usize {
        self.tagset.len()
    }

    pub fn vocab(&self) -> &Vocab {
        &self.encoder.vocab
    }

    pub fn has_random_branch(&self) -> bool {
        self.random.is_some()
    }

    pub fn sentence_ids(&self, tokens: &[String]) -> Vec<TokenIds> {
        self.encoder.sentence_ids(tokens)
    }

    pub fn count_params(&self) -> ParamCounts {
        let count = |ids: &[ParamId]| ids.iter().map(|&id| self.store.get(id).numel()).sum::<usize>();
        let mut c = ParamCounts {
            word_embedding: count(&self.encoder.word_param_ids()),
            char_encoder: count(&self.encoder.char_param_ids()),
            phi: count(&self.phi.param_ids()),
            psi: count(&self.psi.param_ids()),
            ..Default::default()
        };
        if let Some(r) = &self.random {
            c.phi_r = count(&r.phi.param_ids());
            c.psi_r = count(&r.psi.param_ids());
            c.u = r.u.map_or(0, |id| self.store.get(id).numel());
            c.v = r.v.map_or(0, |id| self.store.get(id).numel());
        }
        c
    }

    /// Parameter ids of the pre-trained side: encoder, Φ and Ψ.
    pub fn pretrained_param_ids(&self) -> Vec<ParamId> {
        let mut ids = self.encoder.word_param_ids();
        ids.extend(self.encoder.char_param_ids());
        ids.extend(self.phi.param_ids());
        ids.extend(self.psi.param_ids());
        ids
    }

    pub fn random_param_ids(&self) -> Vec<ParamId> {
        let Some(r) = &self.random else { return Vec::new() };
        let mut ids = r.phi.param_ids();
        ids.extend(r.psi.param_ids());
        ids.extend(r.u);
        ids.extend(r.v);
        ids
    }

    fn maybe_dropout(tape: &mut Tape, x: Var, dropout: &mut Option<Dropout<'_>>) -> Result<Var, NumericsError> {
        let Some(d) = dropout.as_mut() else { return Ok(x) };
        if d.rate <= 0.0 {
            return Ok(x);
        }
        let keep = 1.0 - d.rate;
        let shape = tape.value(x).shape().to_vec();
        let n: usize = shape.iter().product();
        let mask = (0..n)
            .map(|_| {
                if rng::uniform(d.rng, 0.0, 1.0) < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            })
            .collect();
        let mask = tape.constant(Tensor::new(shape, mask)?);
        tape.mul(x, mask)
    }

    /// Full forward pass. With `base_only` the random branch is skipped even
    /// when present.
    pub fn forward_with(
        &self,
        tape: &mut Tape,
        tokens: &[TokenIds],
        base_only: bool,
        hooks: &ForwardHooks,
        mut dropout: Option<Dropout<'_>>,
    ) -> Result<ForwardOutput, NumericsError> {
        let x = self.encoder.encode(tape, tokens)?;
        let x = Self::maybe_dropout(tape, x, &mut dropout)?;
        let phi = self.phi.run(tape, x)?.states;
        let phi_in = Self::maybe_dropout(tape, phi, &mut dropout)?;
        let pretrained_logits = self.psi.apply(tape, phi_in)?;

        let random = if base_only { None } else { self.random.as_ref() };
        let Some(r) = random else {
            return Ok(ForwardOutput {
                logits: pretrained_logits,
                pretrained_logits,
                random_logits: None,
                phi,
                phi_r: None,
            });
        };
        let phi_r = r.phi.run(tape, x)?.states;
        let phi_r_in = Self::maybe_dropout(tape, phi_r, &mut dropout)?;
        let random_logits = r.psi.apply(tape, phi_r_in)?;

        let mut yp = pretrained_logits;
        let mut yr = random_logits;
        if hooks.pretrained_scale != 1.0 {
            yp = tape.scale(yp, hooks.pretrained_scale)?;
        }
        if hooks.random_scale != 1.0 {
            yr = tape.scale(yr, hooks.random_scale)?;
        }
        if self.merge.use_norm {
            yp = tape.lp_normalize_rows(yp, self.merge.p, NORM_EPS)?;
            yr = tape.lp_normalize_rows(yr, self.merge.p, NORM_EPS)?;
        }
        if let (Some(u), Some(v)) = (r.u, r.v) {
            let u = tape.param(u);
            let v = tape.param(v);
            yp = tape.mul_row(yp, u)?;
            yr = tape.mul_row(yr, v)?;
        }
        let logits = tape.add(yp, yr)?;
        Ok(ForwardOutput {
            logits,
            pretrained_logits,
            random_logits: Some(random_logits),
            phi,
            phi_r: Some(phi_r),
        })
    }

    /// `n × C` logits of the pre-trained branch alone.
    pub fn forward_base(&self, tape: &mut Tape, tokens: &[TokenIds]) -> Result<Var, NumericsError> {
        Ok(self
            .forward_with(tape, tokens, true, &ForwardHooks::default(), None)?
            .logits)
    }

    /// `n × C` merged logits; requires the random branch.
    pub fn forward_pretrand(&self, tape: &mut Tape, tokens: &[TokenIds]) -> Result<Var, ModelError> {
        if self.random.is_none() {
            return Err(ModelError::MissingRandomBranch);
        }
        Ok(self
            .forward_with(tape, tokens, false, &ForwardHooks::default(), None)?
            .logits)
    }

    /// Final logits: merged when the random branch exists, base otherwise.
    pub fn forward(&self, tape: &mut Tape, tokens: &[TokenIds]) -> Result<Var, NumericsError> {
        Ok(self
            .forward_with(tape, tokens, false, &ForwardHooks::default(), None)?
            .logits)
    }

    /// Summed token cross-entropy of one sentence.
    pub fn loss(
        &self,
        tape: &mut Tape,
        tokens: &[TokenIds],
        tags: &[usize],
        dropout: Option<Dropout<'_>>,
    ) -> Result<Var, NumericsError> {
        let out = self.forward_with(tape, tokens, false, &ForwardHooks::default(), dropout)?;
        tape.softmax_cross_entropy(out.logits, tags)
    }

    /// Final logits as a plain tensor.
    pub fn logits(&self, tokens: &[TokenIds]) -> Result<Tensor, NumericsError> {
        let mut tape = Tape::new(&self.store);
        let out = self.forward(&mut tape, tokens)?;
        Ok(tape.value(out).clone())
    }

    /// Per-token class probabilities (`n × C`).
    pub fn probabilities(&self, tokens: &[TokenIds]) -> Result<Tensor, NumericsError> {
        let logits = self.logits(tokens)?;
        let c = logits.cols();
        let data = logits.data().chunks(c).flat_map(numerics::softmax).collect();
        Tensor::new(logits.shape().to_vec(), data)
    }

    /// Argmax tag per token; ties go to the lowest tag id.
    pub fn predict(&self, tokens: &[TokenIds]) -> Result<Vec<usize>, NumericsError> {
        let logits = self.logits(tokens)?;
        Ok(logits.data().chunks(logits.cols()).map(numerics::argmax).collect())
    }

    pub fn predict_sentence(&self, sentence: &Sentence) -> Result<Vec<usize>, NumericsError> {
        self.predict(&self.sentence_ids(&sentence.tokens))
    }

    /// `n × 2H` outputs of the requested biLSTM layer.
    pub fn layer_activations(&self, tokens: &[TokenIds], layer: Layer) -> Result<Tensor, ModelError> {
        if layer == Layer::PhiR && self.random.is_none() {
            return Err(ModelError::UnknownLayer("phi_r".into()));
        }
        let mut tape = Tape::new(&self.store);
        let out = self.forward_with(&mut tape, tokens, layer == Layer::Phi, &ForwardHooks::default(), None)?;
        let v = match layer {
            Layer::Phi => out.phi,
            Layer::PhiR => out.phi_r.expect("random branch present"),
        };
        Ok(tape.value(v).clone())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("model has no random branch")]
    MissingRandomBranch,
    #[error("unknown layer `{0}`")]
    UnknownLayer(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::build_vocab;

    fn toy(random_hidden: usize, merge: MergeConfig) -> (TaggerModel, Vec<TokenIds>) {
        let sent = Sentence {
            tokens: ["the", "Cat", "sat", "on", "a", "mat", "!"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            tags: vec![0; 7],
        };
        let vocab = build_vocab([&sent], 1);
        let tags = TagSet::new((0..17).map(|i| format!("T{i}"))).unwrap();
        let dims = ModelDims {
            encoder: EncoderDims {
                word_dim: 6,
                char_dim: 3,
                char_hidden: 2,
            },
            hidden: 4,
            random_hidden,
        };
        let model = TaggerModel::new(dims, vocab, tags, merge, None, Precision::F64, &mut rng::seeded(11)).unwrap();
        let ids = model.sentence_ids(&sent.tokens);
        (model, ids)
    }

    #[test]
    fn base_logit_shape() {
        let (model, ids) = toy(0, MergeConfig::default());
        let mut tape = Tape::new(&model.store);
        let y = model.forward_base(&mut tape, &ids).unwrap();
        assert_eq!(tape.value(y).shape(), &[7, 17]);
    }

    #[test]
    fn zero_classifier_outputs_bias() {
        let (mut model, ids) = toy(0, MergeConfig::default());
        let bias: Vec<f64> = (0..17).map(|i| i as f64 * 0.1).collect();
        model.store.set_value(model.psi.w, Tensor::zeros(&[17, 8])).unwrap();
        model
            .store
            .set_value(model.psi.b, Tensor::vector(bias.clone()).unwrap())
            .unwrap();
        let logits = model.logits(&ids).unwrap();
        for r in 0..7 {
            assert_eq!(logits.row(r), bias.as_slice());
        }
    }

    #[test]
    fn pretrand_requires_branch() {
        let (model, ids) = toy(0, MergeConfig::default());
        let mut tape = Tape::new(&model.store);
        assert!(matches!(
            model.forward_pretrand(&mut tape, &ids),
            Err(ModelError::MissingRandomBranch)
        ));
    }

    #[test]
    fn param_counts_match_closed_form() {
        let merge = MergeConfig::default();
        let (model, _) = toy(3, merge);
        let counts = model.count_params();
        assert_eq!(counts.total(), model.store.num_scalars());
        let closed = ParamCounts::for_config(
            &model.dims,
            model.vocab().word_count(),
            model.vocab().char_count(),
            17,
            &merge,
        );
        assert_eq!(counts, closed);
        assert_eq!(counts.u + counts.v, 34);
        assert_eq!(Linear::param_count(400, 17), 6_817);
    }

    #[test]
    fn ablated_vectors_are_not_allocated() {
        let merge = MergeConfig {
            use_vectors: false,
            ..Default::default()
        };
        let (model, _) = toy(3, merge);
        assert_eq!(model.count_params().u, 0);
        assert!(model.store.id("u").is_none());
    }

    #[test]
    fn layer_parse() {
        assert_eq!("phi".parse::<Layer>().unwrap(), Layer::Phi);
        assert!("psi".parse::<Layer>().is_err());
    }
}

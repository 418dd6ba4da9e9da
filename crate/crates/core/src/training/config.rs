use std::fmt;
use std::str::FromStr;

use crate::encoder::EncoderDims;
use crate::numerics::Precision;
use crate::tagger::{MergeConfig, ModelDims};

/// Components of the full method that can be switched off one by one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Ablation {
    /// Learnable per-class weighting vectors.
    pub learn_vect: bool,
    /// Warm-up phase that trains only the random branch.
    pub random_pp: bool,
    /// Independent ℓp normalization of each branch's logits.
    pub l2_norm: bool,
}

impl Default for Ablation {
    fn default() -> Self {
        Ablation {
            learn_vect: true,
            random_pp: true,
            l2_norm: true,
        }
    }
}

impl Ablation {
    /// The progressive ablation grid: full, then learnable vectors off, then
    /// also random++ off, then also normalization off.
    pub fn progressive() -> [Ablation; 4] {
        [
            Ablation::default(),
            Ablation {
                learn_vect: false,
                ..Default::default()
            },
            Ablation {
                learn_vect: false,
                random_pp: false,
                l2_norm: true,
            },
            Ablation {
                learn_vect: false,
                random_pp: false,
                l2_norm: false,
            },
        ]
    }

    pub fn merge(&self, p: f64) -> MergeConfig {
        MergeConfig {
            use_norm: self.l2_norm,
            p,
            use_vectors: self.learn_vect,
        }
    }

    pub fn label(&self) -> String {
        let mut parts = vec!["pretrand".to_string()];
        if !self.learn_vect {
            parts.push("-learnvect".into());
        }
        if !self.random_pp {
            parts.push("-randompp".into());
        }
        if !self.l2_norm {
            parts.push("-l2norm".into());
        }
        parts.concat()
    }
}

/// Training scheme for the target task.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// Randomly initialized base model with `hidden` units per direction.
    Random200,
    /// Randomly initialized base model with `2 · hidden` units per direction.
    Random400,
    /// Pre-trained encoder and Φ, fresh Ψ, joint training.
    StandardFinetune,
    /// Mean of the softmax outputs of two independently trained random models.
    Ensemble2Rand,
    /// Same with one fine-tuned and one random member.
    EnsemblePretRand,
    PretRand(Ablation),
}

impl Scheme {
    pub fn needs_checkpoint(&self) -> bool {
        matches!(
            self,
            Scheme::StandardFinetune | Scheme::EnsemblePretRand | Scheme::PretRand(_)
        )
    }

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Random200 => "random200",
            Scheme::Random400 => "random400",
            Scheme::StandardFinetune => "finetune",
            Scheme::Ensemble2Rand => "ensemble-2rand",
            Scheme::EnsemblePretRand => "ensemble-pretrand",
            Scheme::PretRand(_) => "pretrand",
        }
    }

    /// Name with ablation markers, e.g. `pretrand-learnvect-randompp`.
    pub fn label(&self) -> String {
        match self {
            Scheme::PretRand(a) => a.label(),
            other => other.name().to_string(),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for Scheme {
    type Err = String;

    /// Accepts the names produced by [`Scheme::label`].
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.to_ascii_lowercase();
        Ok(match s.as_str() {
            "random200" | "random-200" => Scheme::Random200,
            "random400" | "random-400" => Scheme::Random400,
            "finetune" | "standard-finetune" | "fine-tuning" => Scheme::StandardFinetune,
            "ensemble-2rand" | "ensemble2rand" => Scheme::Ensemble2Rand,
            "ensemble-pretrand" | "ensemblepretrand" => Scheme::EnsemblePretRand,
            _ if s.starts_with("pretrand") => {
                let mut a = Ablation::default();
                let mut rest = &s["pretrand".len()..];
                while !rest.is_empty() {
                    if let Some(r) = rest.strip_prefix("-learnvect") {
                        a.learn_vect = false;
                        rest = r;
                    } else if let Some(r) = rest.strip_prefix("-randompp") {
                        a.random_pp = false;
                        rest = r;
                    } else if let Some(r) = rest.strip_prefix("-l2norm") {
                        a.l2_norm = false;
                        rest = r;
                    } else {
                        return Err(format!("unknown scheme `{s}`"));
                    }
                }
                Scheme::PretRand(a)
            }
            _ => return Err(format!("unknown scheme `{s}`")),
        })
    }
}

/// Every hyperparameter of a run. Serialized verbatim into checkpoints.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub momentum: f64,
    pub batch_sentences: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Random-branch units per direction.
    pub k: usize,
    /// Norm order for the independent normalization.
    pub p: f64,
    pub random_pp_epochs: usize,
    pub seed: u64,
    pub precision: Precision,
    /// Global gradient-norm clip; zero disables.
    pub clip_norm: f64,
    pub word_dim: usize,
    pub char_dim: usize,
    /// Per direction.
    pub char_hidden: usize,
    /// Φ units per direction.
    pub hidden: usize,
    pub min_count: usize,
    pub dropout: f64,
    /// Keep the word table frozen during random++.
    pub freeze_embeddings_in_random_pp: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.015,
            momentum: 0.9,
            batch_sentences: 8,
            max_epochs: 100,
            patience: 10,
            k: 200,
            p: 2.0,
            random_pp_epochs: 5,
            seed: 1,
            precision: Precision::F32,
            clip_norm: 5.0,
            word_dim: 300,
            char_dim: 50,
            char_hidden: 100,
            hidden: 200,
            min_count: 1,
            dropout: 0.0,
            freeze_embeddings_in_random_pp: true,
        }
    }
}

/// Values of `k` swept in the reference experiments.
pub const K_GRID: [usize; 4] = [50, 100, 150, 200];

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid value `{value}` for `{key}`: {reason}")]
    InvalidValue { key: String, value: String, reason: String },
    #[error("line {line}: expected `key=value`, got `{text}`")]
    Syntax { line: usize, text: String },
}

impl TrainConfig {
    /// Accepted keys, in serialization order.
    pub const KEYS: [&'static str; 19] = [
        "lr",
        "momentum",
        "batch",
        "max-epochs",
        "patience",
        "k",
        "p-norm",
        "random-pp-epochs",
        "seed",
        "precision",
        "clip-norm",
        "word-dim",
        "char-dim",
        "char-hidden",
        "hidden",
        "min-count",
        "dropout",
        "freeze-embeddings-in-random-pp",
        "version",
    ];

    pub fn encoder_dims(&self) -> EncoderDims {
        EncoderDims {
            word_dim: self.word_dim,
            char_dim: self.char_dim,
            char_hidden: self.char_hidden,
        }
    }

    pub fn model_dims(&self, hidden: usize, random_hidden: usize) -> ModelDims {
        ModelDims {
            encoder: self.encoder_dims(),
            hidden,
            random_hidden,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, value: String, reason: &str| {
            Err(ConfigError::InvalidValue {
                key: key.into(),
                value,
                reason: reason.into(),
            })
        };
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad("lr", self.lr.to_string(), "must be a finite value >= 0");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum", self.momentum.to_string(), "must lie in [0, 1)");
        }
        if self.batch_sentences == 0 {
            return bad("batch", "0".into(), "must be >= 1");
        }
        if !(self.p >= 1.0 && self.p.is_finite()) {
            return bad("p-norm", self.p.to_string(), "must be >= 1");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout", self.dropout.to_string(), "must lie in [0, 1)");
        }
        for (key, v) in [
            ("word-dim", self.word_dim),
            ("char-dim", self.char_dim),
            ("char-hidden", self.char_hidden),
            ("hidden", self.hidden),
            ("k", self.k),
        ] {
            if v == 0 {
                return bad(key, "0".into(), "must be >= 1");
            }
        }
        Ok(())
    }

    /// Sets one field from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
        where
            T::Err: fmt::Display,
        {
            value.trim().parse::<T>().map_err(|e| ConfigError::InvalidValue {
                key: key.into(),
                value: value.into(),
                reason: e.to_string(),
            })
        }
        match key {
            "lr" => self.lr = parse(key, value)?,
            "momentum" => self.momentum = parse(key, value)?,
            "batch" => self.batch_sentences = parse(key, value)?,
            "max-epochs" => self.max_epochs = parse(key, value)?,
            "patience" => self.patience = parse(key, value)?,
            "k" => self.k = parse(key, value)?,
            "p-norm" => self.p = parse(key, value)?,
            "random-pp-epochs" => self.random_pp_epochs = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "precision" => self.precision = parse(key, value)?,
            "clip-norm" => self.clip_norm = parse(key, value)?,
            "word-dim" => self.word_dim = parse(key, value)?,
            "char-dim" => self.char_dim = parse(key, value)?,
            "char-hidden" => self.char_hidden = parse(key, value)?,
            "hidden" => self.hidden = parse(key, value)?,
            "min-count" => self.min_count = parse(key, value)?,
            "dropout" => self.dropout = parse(key, value)?,
            "freeze-embeddings-in-random-pp" => self.freeze_embeddings_in_random_pp = parse(key, value)?,
            "version" => {
                let v: u32 = parse(key, value)?;
                if v != 1 {
                    return Err(ConfigError::InvalidValue {
                        key: key.into(),
                        value: value.into(),
                        reason: "only version 1 is supported".into(),
                    });
                }
            }
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// `key=value` lines in [`TrainConfig::KEYS`] order.
    pub fn to_kv(&self) -> String {
        let pairs: [(&str, String); 19] = [
            ("lr", self.lr.to_string()),
            ("momentum", self.momentum.to_string()),
            ("batch", self.batch_sentences.to_string()),
            ("max-epochs", self.max_epochs.to_string()),
            ("patience", self.patience.to_string()),
            ("k", self.k.to_string()),
            ("p-norm", self.p.to_string()),
            ("random-pp-epochs", self.random_pp_epochs.to_string()),
            ("seed", self.seed.to_string()),
            ("precision", self.precision.as_str().to_string()),
            ("clip-norm", self.clip_norm.to_string()),
            ("word-dim", self.word_dim.to_string()),
            ("char-dim", self.char_dim.to_string()),
            ("char-hidden", self.char_hidden.to_string()),
            ("hidden", self.hidden.to_string()),
            ("min-count", self.min_count.to_string()),
            ("dropout", self.dropout.to_string()),
            (
                "freeze-embeddings-in-random-pp",
                self.freeze_embeddings_in_random_pp.to_string(),
            ),
            ("version", "1".to_string()),
        ];
        pairs.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// Applies `key=value` lines on top of `self`. `#` starts a comment;
    /// blank lines are ignored; unknown keys are errors.
    pub fn apply_kv(&mut self, text: &str) -> Result<(), ConfigError> {
        for (key, value) in parse_kv(text)? {
            self.set(&key, &value)?;
        }
        Ok(())
    }

    pub fn from_kv(text: &str) -> Result<Self, ConfigError> {
        let mut c = TrainConfig::default();
        c.apply_kv(text)?;
        Ok(c)
    }
}

/// Splits `key=value` lines, dropping comments and blank lines.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ConfigError::Syntax {
                line: i + 1,
                text: raw.to_string(),
            });
        };
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

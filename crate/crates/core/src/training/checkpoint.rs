//! Single-file binary checkpoints.
//!
//! All integers are little-endian. A `str` is a `u32` byte length followed by
//! UTF-8 bytes.
//!
//! ```text
//! magic    8 bytes  "PRTRNDCK"
//! version  u32      1
//! config   str      TrainConfig as key=value lines
//! meta     str      scheme, epochs-run, best-epoch, best-dev-accuracy as key=value lines
//! tagset   u32 count, then count × str
//! members  u32 count (1, or 2 for ensembles), then per member:
//!   model  str      word-dim, char-dim, char-hidden, hidden, random-hidden,
//!                   use-norm, p-norm, use-vectors, precision as key=value lines
//!   words  u32 count, then count × str       (ids 0 and 1 are <pad>, <unk>)
//!   chars  u32 count, then count × u32 code point (id 0 is the unknown slot)
//!   blocks u32 count, then per block:
//!     name  str
//!     dtype u8       0 = f32, 1 = f64
//!     rank  u32, then rank × u32 dims
//!     data  product(dims) values of dtype, row-major
//! ```
//!
//! Blocks are written in parameter-creation order. Nothing time-dependent is
//! stored, so identical runs produce identical files.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::corpus::{TagSet, Vocab};
use crate::encoder::EncoderDims;
use crate::numerics::{Precision, Tensor};
use crate::rng;
use crate::tagger::{MergeConfig, ModelDims, TaggerModel};

use super::config::parse_kv;
use super::{ConfigError, EnsembleModel, Predictor, TrainConfig, Trained};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"PRTRNDCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported checkpoint version: {0}")]
    Version(String),
    #[error("checkpoint truncated while reading {0}")]
    Truncated(&'static str),
    #[error("shape mismatch in block `{block}`: {detail}")]
    Shape { block: String, detail: String },
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("checkpoint config: {0}")]
    Config(#[from] ConfigError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointMeta {
    pub scheme: String,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_dev_accuracy: f64,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub meta: CheckpointMeta,
    pub predictor: Predictor,
}

impl Checkpoint {
    /// Metadata comes from the first member's report.
    pub fn from_trained(trained: &Trained, scheme: &str) -> Self {
        let r = &trained.reports[0];
        Checkpoint {
            config: trained.config.clone(),
            meta: CheckpointMeta {
                scheme: scheme.to_string(),
                epochs_run: r.epochs_run,
                best_epoch: r.best_epoch,
                best_dev_accuracy: r.best_dev_accuracy,
            },
            predictor: trained.predictor.clone(),
        }
    }

    pub fn tagset(&self) -> &TagSet {
        self.predictor.tagset()
    }
}

fn put_u32<W: Write>(w: &mut W, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn put_len<W: Write>(w: &mut W, n: usize) -> std::io::Result<()> {
    let n = u32::try_from(n).map_err(|_| std::io::Error::other("length exceeds u32"))?;
    put_u32(w, n)
}

fn put_str<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    put_len(w, s.len())?;
    w.write_all(s.as_bytes())
}

fn model_kv(m: &TaggerModel) -> String {
    let e = m.dims.encoder;
    format!(
        "word-dim={}\nchar-dim={}\nchar-hidden={}\nhidden={}\nrandom-hidden={}\nuse-norm={}\np-norm={}\n\
         use-vectors={}\nprecision={}\n",
        e.word_dim,
        e.char_dim,
        e.char_hidden,
        m.dims.hidden,
        m.dims.random_hidden,
        m.merge.use_norm,
        m.merge.p,
        m.merge.use_vectors,
        m.store.precision().as_str()
    )
}

fn write_member<W: Write>(w: &mut W, m: &TaggerModel) -> std::io::Result<()> {
    put_str(w, &model_kv(m))?;
    let vocab = m.vocab();
    put_len(w, vocab.words().len())?;
    for word in vocab.words() {
        put_str(w, word)?;
    }
    put_len(w, vocab.chars().len())?;
    for &c in vocab.chars() {
        put_u32(w, c as u32)?;
    }
    put_len(w, m.store.len())?;
    let f64_mode = m.store.precision() == Precision::F64;
    for (_, name, p) in m.store.iter() {
        put_str(w, name)?;
        w.write_all(&[u8::from(f64_mode)])?;
        put_len(w, p.value.shape().len())?;
        for &d in p.value.shape() {
            put_len(w, d)?;
        }
        for &x in p.value.data() {
            if f64_mode {
                w.write_all(&x.to_le_bytes())?;
            } else {
                w.write_all(&(x as f32).to_le_bytes())?;
            }
        }
    }
    Ok(())
}

pub fn write_checkpoint<W: Write>(w: &mut W, ck: &Checkpoint) -> std::io::Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    put_u32(w, CHECKPOINT_VERSION)?;
    put_str(w, &ck.config.to_kv())?;
    let meta = format!(
        "scheme={}\nepochs-run={}\nbest-epoch={}\nbest-dev-accuracy={}\n",
        ck.meta.scheme, ck.meta.epochs_run, ck.meta.best_epoch, ck.meta.best_dev_accuracy
    );
    put_str(w, &meta)?;
    let tags = ck.tagset();
    put_len(w, tags.len())?;
    for name in tags.names() {
        put_str(w, name)?;
    }
    let members = ck.predictor.members();
    put_len(w, members.len())?;
    for m in members {
        write_member(w, m)?;
    }
    Ok(())
}

pub fn save_checkpoint(path: impl AsRef<Path>, ck: &Checkpoint) -> Result<(), CheckpointError> {
    let path = path.as_ref();
    let io = |source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    write_checkpoint(&mut w, ck).map_err(io)?;
    w.flush().map_err(io)
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes(&mut self, n: usize, what: &'static str) -> Result<Vec<u8>, CheckpointError> {
        let mut buf = Vec::new();
        (&mut self.inner)
            .take(n as u64)
            .read_to_end(&mut buf)
            .map_err(|source| CheckpointError::Io {
                path: PathBuf::from("<checkpoint>"),
                source,
            })?;
        if buf.len() < n {
            return Err(CheckpointError::Truncated(what));
        }
        Ok(buf)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, CheckpointError> {
        let b = self.bytes(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    fn len(&mut self, what: &'static str) -> Result<usize, CheckpointError> {
        Ok(self.u32(what)? as usize)
    }

    fn str(&mut self, what: &'static str) -> Result<String, CheckpointError> {
        let n = self.len(what)?;
        String::from_utf8(self.bytes(n, what)?).map_err(|_| CheckpointError::Malformed(format!("{what} is not UTF-8")))
    }
}

fn kv_map(text: &str) -> Result<Vec<(String, String)>, CheckpointError> {
    Ok(parse_kv(text)?)
}

fn lookup<'a>(kv: &'a [(String, String)], key: &str, section: &str) -> Result<&'a str, CheckpointError> {
    kv.iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| CheckpointError::Malformed(format!("{section} lacks `{key}`")))
}

fn parse_field<T: std::str::FromStr>(kv: &[(String, String)], key: &str, section: &str) -> Result<T, CheckpointError> {
    let v = lookup(kv, key, section)?;
    v.parse()
        .map_err(|_| CheckpointError::Malformed(format!("{section} has invalid `{key}={v}`")))
}

/// Copies named blocks into `model`, which must have exactly the same set of
/// blocks with the same shapes.
pub fn restore_into(model: &mut TaggerModel, blocks: Vec<(String, Tensor)>) -> Result<(), CheckpointError> {
    if blocks.len() != model.store.len() {
        let names: Vec<&str> = blocks.iter().map(|(n, _)| n.as_str()).collect();
        let missing = model
            .store
            .iter()
            .find(|(_, n, _)| !names.contains(n))
            .map(|(_, n, _)| n.to_string());
        return Err(CheckpointError::Shape {
            block: missing.unwrap_or_else(|| "<extra>".into()),
            detail: format!(
                "checkpoint has {} blocks, model has {}",
                blocks.len(),
                model.store.len()
            ),
        });
    }
    for (name, value) in blocks {
        let Some(id) = model.store.id(&name) else {
            return Err(CheckpointError::Shape {
                block: name,
                detail: "not present in the model".into(),
            });
        };
        let want = model.store.value(id).shape().to_vec();
        if value.shape() != want.as_slice() {
            return Err(CheckpointError::Shape {
                detail: format!("checkpoint {:?}, model {:?}", value.shape(), want),
                block: name,
            });
        }
        model
            .store
            .set_value(id, value)
            .map_err(|e| CheckpointError::Malformed(e.to_string()))?;
    }
    Ok(())
}

fn read_member<R: Read>(r: &mut Reader<R>, tagset: &TagSet) -> Result<TaggerModel, CheckpointError> {
    let kv = kv_map(&r.str("model header")?)?;
    let s = "model header";
    let dims = ModelDims {
        encoder: EncoderDims {
            word_dim: parse_field(&kv, "word-dim", s)?,
            char_dim: parse_field(&kv, "char-dim", s)?,
            char_hidden: parse_field(&kv, "char-hidden", s)?,
        },
        hidden: parse_field(&kv, "hidden", s)?,
        random_hidden: parse_field(&kv, "random-hidden", s)?,
    };
    let merge = MergeConfig {
        use_norm: parse_field(&kv, "use-norm", s)?,
        p: parse_field(&kv, "p-norm", s)?,
        use_vectors: parse_field(&kv, "use-vectors", s)?,
    };
    let precision: Precision = parse_field(&kv, "precision", s)?;

    let n_words = r.len("vocabulary")?;
    let words = (0..n_words)
        .map(|_| r.str("vocabulary"))
        .collect::<Result<Vec<_>, _>>()?;
    let n_chars = r.len("characters")?;
    let chars = (0..n_chars)
        .map(|i| {
            let cp = r.u32("characters")?;
            // slot 0 is a placeholder that may not be a valid scalar value
            if i == 0 {
                return Ok('\u{0}');
            }
            char::from_u32(cp).ok_or_else(|| CheckpointError::Malformed(format!("invalid code point {cp}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let vocab =
        Vocab::from_parts(words, chars).ok_or_else(|| CheckpointError::Malformed("invalid vocabulary".into()))?;

    let n_blocks = r.len("block count")?;
    let mut blocks = Vec::with_capacity(n_blocks);
    for _ in 0..n_blocks {
        let name = r.str("block name")?;
        let dtype = r.bytes(1, "block dtype")?[0];
        let rank = r.len("block rank")?;
        let shape = (0..rank).map(|_| r.len("block shape")).collect::<Result<Vec<_>, _>>()?;
        let n: usize = shape.iter().product();
        let data: Vec<f64> = match dtype {
            0 => r
                .bytes(4 * n, "block data")?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
                .collect(),
            1 => r
                .bytes(8 * n, "block data")?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect(),
            other => return Err(CheckpointError::Malformed(format!("block `{name}` has dtype {other}"))),
        };
        let t = Tensor::new(shape, data).map_err(|e| CheckpointError::Shape {
            block: name.clone(),
            detail: e.to_string(),
        })?;
        blocks.push((name, t));
    }

    let mut model = TaggerModel::new(
        ModelDims {
            random_hidden: 0,
            ..dims
        },
        vocab,
        tagset.clone(),
        merge,
        None,
        precision,
        &mut rng::seeded(0),
    )
    .map_err(|e| CheckpointError::Malformed(e.to_string()))?;
    if dims.random_hidden > 0 {
        model.attach_random_branch(dims.random_hidden, merge, &mut rng::seeded(0));
    }
    restore_into(&mut model, blocks)?;
    Ok(model)
}

pub fn read_checkpoint<R: Read>(input: R) -> Result<Checkpoint, CheckpointError> {
    let mut r = Reader { inner: input };
    let magic = r.bytes(8, "magic")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(CheckpointError::Version(format!("bad magic bytes {magic:02x?}")));
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version(format!(
            "{version} (expected {CHECKPOINT_VERSION})"
        )));
    }
    let config = TrainConfig::from_kv(&r.str("config")?)?;
    let meta_kv = kv_map(&r.str("metadata")?)?;
    let meta = CheckpointMeta {
        scheme: lookup(&meta_kv, "scheme", "metadata")?.to_string(),
        epochs_run: parse_field(&meta_kv, "epochs-run", "metadata")?,
        best_epoch: parse_field(&meta_kv, "best-epoch", "metadata")?,
        best_dev_accuracy: parse_field(&meta_kv, "best-dev-accuracy", "metadata")?,
    };
    let n_tags = r.len("tag-set")?;
    let names = (0..n_tags).map(|_| r.str("tag-set")).collect::<Result<Vec<_>, _>>()?;
    let tagset = TagSet::new(names).map_err(|e| CheckpointError::Malformed(e.to_string()))?;
    let n_members = r.len("member count")?;
    if !(1..=16).contains(&n_members) {
        return Err(CheckpointError::Malformed(format!("{n_members} members")));
    }
    let members = (0..n_members)
        .map(|_| read_member(&mut r, &tagset))
        .collect::<Result<Vec<_>, _>>()?;
    if !r.bytes(1, "end").map(|b| b.is_empty()).unwrap_or(true) {
        return Err(CheckpointError::Malformed("trailing bytes".into()));
    }
    let predictor = if members.len() == 1 {
        Predictor::Single(members.into_iter().next().expect("one member"))
    } else {
        Predictor::Ensemble(EnsembleModel::new(members))
    };
    Ok(Checkpoint {
        config,
        meta,
        predictor,
    })
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint, CheckpointError> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_checkpoint(BufReader::new(f)).map_err(|e| match e {
        CheckpointError::Io { source, .. } => CheckpointError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{CorpusError, TagSet};

/// One tagged sentence. `tokens` and `tags` always have equal, non-zero length.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sentence {
    pub tokens: Vec<String>,
    pub tags: Vec<usize>,
}

impl Sentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Split {
    pub sentences: Vec<Sentence>,
    pub path: Option<PathBuf>,
}

impl Split {
    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Sentence::len).sum()
    }
}

/// Sentences of one or more splits sharing a tag-set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaggedCorpus {
    pub tagset: TagSet,
    pub train: Split,
    pub dev: Option<Split>,
    pub test: Option<Split>,
}

impl TaggedCorpus {
    /// Per-split token counts, in `train, dev, test` order.
    pub fn token_counts(&self) -> Vec<(&'static str, usize)> {
        let mut out = vec![("train", self.train.token_count())];
        if let Some(d) = &self.dev {
            out.push(("dev", d.token_count()));
        }
        if let Some(t) = &self.test {
            out.push(("test", t.token_count()));
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitKind {
    Dev,
    Test,
}

/// How a loader treats tag names.
#[derive(Clone, Debug)]
pub enum TagSetPolicy {
    /// Collect tags in order of first appearance.
    Build,
    /// Start from the given set and append unseen tags.
    Extend(TagSet),
    /// Every tag must already be in the set.
    Fixed(TagSet),
}

struct RawSentence {
    tokens: Vec<String>,
    tags: Vec<(String, usize)>,
}

fn parse_raw(text: &str, path: &Path) -> Result<Vec<RawSentence>, CorpusError> {
    let mut out = Vec::new();
    let mut current = RawSentence {
        tokens: Vec::new(),
        tags: Vec::new(),
    };
    for (i, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            if !current.tokens.is_empty() {
                out.push(std::mem::replace(
                    &mut current,
                    RawSentence {
                        tokens: Vec::new(),
                        tags: Vec::new(),
                    },
                ));
            }
            continue;
        }
        if fields.len() != 2 {
            return Err(CorpusError::Malformed {
                path: path.to_path_buf(),
                line: i + 1,
                found: fields.len(),
            });
        }
        current.tokens.push(fields[0].to_string());
        current.tags.push((fields[1].to_string(), i + 1));
    }
    if !current.tokens.is_empty() {
        out.push(current);
    }
    if out.is_empty() {
        return Err(CorpusError::Empty(path.to_path_buf()));
    }
    Ok(out)
}

fn resolve(raw: Vec<RawSentence>, policy: &TagSetPolicy, path: &Path) -> Result<(TagSet, Vec<Sentence>), CorpusError> {
    let (mut names, fixed): (Vec<String>, bool) = match policy {
        TagSetPolicy::Build => (Vec::new(), false),
        TagSetPolicy::Extend(t) => (t.names().to_vec(), false),
        TagSetPolicy::Fixed(t) => (t.names().to_vec(), true),
    };
    let mut index: std::collections::HashMap<String, usize> =
        names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
    let mut sentences = Vec::with_capacity(raw.len());
    for s in raw {
        let mut tags = Vec::with_capacity(s.tags.len());
        for (tag, line) in s.tags {
            let id = match index.get(&tag) {
                Some(&id) => id,
                None if fixed => {
                    return Err(CorpusError::UnknownTag {
                        path: path.to_path_buf(),
                        line,
                        tag,
                    })
                }
                None => {
                    names.push(tag.clone());
                    index.insert(tag, names.len() - 1);
                    names.len() - 1
                }
            };
            tags.push(id);
        }
        sentences.push(Sentence { tokens: s.tokens, tags });
    }
    Ok((TagSet::new(names)?, sentences))
}

/// Parses two-column text (`token tag` per line, blank line between
/// sentences). Columns may be separated by tabs or spaces.
pub fn parse_conll(text: &str, path: &Path, policy: &TagSetPolicy) -> Result<(TagSet, Vec<Sentence>), CorpusError> {
    resolve(parse_raw(text, path)?, policy, path)
}

fn read(path: &Path) -> Result<String, CorpusError> {
    fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads one file as the train split of a new corpus.
pub fn load_conll(path: impl AsRef<Path>, policy: &TagSetPolicy) -> Result<TaggedCorpus, CorpusError> {
    let path = path.as_ref();
    let (tagset, sentences) = parse_conll(&read(path)?, path, policy)?;
    Ok(TaggedCorpus {
        tagset,
        train: Split {
            sentences,
            path: Some(path.to_path_buf()),
        },
        dev: None,
        test: None,
    })
}

impl TaggedCorpus {
    /// Loads another file into `dev` or `test`. Under `extend` unseen tags are
    /// appended to the tag-set, otherwise they are errors.
    pub fn load_split(&mut self, which: SplitKind, path: impl AsRef<Path>, extend: bool) -> Result<(), CorpusError> {
        let path = path.as_ref();
        let policy = if extend {
            TagSetPolicy::Extend(self.tagset.clone())
        } else {
            TagSetPolicy::Fixed(self.tagset.clone())
        };
        let (tagset, sentences) = parse_conll(&read(path)?, path, &policy)?;
        self.tagset = tagset;
        let split = Some(Split {
            sentences,
            path: Some(path.to_path_buf()),
        });
        match which {
            SplitKind::Dev => self.dev = split,
            SplitKind::Test => self.test = split,
        }
        Ok(())
    }
}

/// Writes sentences in the format [`load_conll`] reads, tab-separated.
pub fn write_conll<W: Write>(out: &mut W, sentences: &[Sentence], tagset: &TagSet) -> std::io::Result<()> {
    for (i, s) in sentences.iter().enumerate() {
        if i > 0 {
            writeln!(out)?;
        }
        for (tok, &tag) in s.tokens.iter().zip(&s.tags) {
            writeln!(out, "{}\t{}", tok, tagset.name(tag))?;
        }
    }
    Ok(())
}

/// Writes the train split of `corpus` to `path`.
pub fn serialize_conll(corpus: &TaggedCorpus, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let io = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::create(path).map_err(io)?;
    let mut w = BufWriter::new(file);
    write_conll(&mut w, &corpus.train.sentences, &corpus.tagset).map_err(io)?;
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIXTURE: &str = "the\tN\ndog\tN\nruns\tV\n\nit\tN\nbarks\tV\n";

    fn parse(text: &str, policy: &TagSetPolicy) -> Result<(TagSet, Vec<Sentence>), CorpusError> {
        parse_conll(text, Path::new("fixture.conll"), policy)
    }

    #[test]
    fn two_sentence_fixture() {
        let (tags, sents) = parse(FIXTURE, &TagSetPolicy::Build).unwrap();
        assert_eq!(sents.len(), 2);
        assert_eq!(tags.len(), 2);
        assert_eq!(sents.iter().map(Sentence::len).sum::<usize>(), 5);
        assert_eq!(sents[0].tags, vec![0, 0, 1]);
    }

    #[test]
    fn three_columns_names_line() {
        let err = parse("a\tN\nb\tV\textra\n", &TagSetPolicy::Build).unwrap_err();
        assert!(matches!(err, CorpusError::Malformed { line: 2, found: 3, .. }));
        assert!(err.to_string().contains("fixture.conll:2"));
    }

    #[test]
    fn unknown_tag_under_fixed_set() {
        let fixed = TagSet::new(["N", "V"]).unwrap();
        let err = parse("a\tN\nb\tADJ\n", &TagSetPolicy::Fixed(fixed)).unwrap_err();
        assert!(matches!(err, CorpusError::UnknownTag { line: 2, .. }));
    }

    #[test]
    fn empty_input() {
        assert!(matches!(
            parse("\n\n", &TagSetPolicy::Build),
            Err(CorpusError::Empty(_))
        ));
    }

    #[test]
    fn extend_appends_new_tags() {
        let base = TagSet::new(["N", "V"]).unwrap();
        let (tags, _) = parse("a\tADJ\nb\tN\n", &TagSetPolicy::Extend(base)).unwrap();
        assert_eq!(tags.names(), &["N", "V", "ADJ"]);
    }

    #[test]
    fn crlf_and_repeated_blank_lines() {
        let (_, sents) = parse("a N\r\nb V\r\n\r\n\r\nc N\r\n", &TagSetPolicy::Build).unwrap();
        assert_eq!(sents.len(), 2);
    }

    #[test]
    fn round_trip_through_file() {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("in.conll");
        fs::write(&src, FIXTURE).unwrap();
        let corpus = load_conll(&src, &TagSetPolicy::Build).unwrap();
        let out = dir.path().join("out.conll");
        serialize_conll(&corpus, &out).unwrap();
        let back = load_conll(&out, &TagSetPolicy::Fixed(corpus.tagset.clone())).unwrap();
        assert_eq!(back.tagset, corpus.tagset);
        assert_eq!(back.train.sentences, corpus.train.sentences);
    }
}

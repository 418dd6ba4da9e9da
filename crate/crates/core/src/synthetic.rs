//! A generated source/target tagging pair for tests and benchmarks.
//!
//! Open-class words are built from random stems plus class suffixes, and a
//! share of them is fresh at every occurrence, so tagging unseen words needs
//! both characters and context. Some suffixes are shared between classes
//! (`-al` nouns and adjectives, `-en` verbs and adjectives).
//!
//! The source resembles edited text: sentence-initial capitals and
//! capitalized proper nouns. The target resembles social-media text with its
//! own tag-set: proper nouns mostly lower-case, common nouns sometimes
//! capitalized, respelled suffixes, contractions split into two tokens
//! (`gon na`, `wan na`, `got ta`) whose second half is a particle,
//! interjections and `@` mentions.

use crate::corpus::{Sentence, TagSet};
use crate::rng::{self, Rng};
use crate::training::{TaskData, TrainConfig, TrainError};
use rand::Rng as _;

pub const SOURCE_TAGS: [&str; 9] = ["DET", "ADJ", "NOUN", "PROPN", "VERB", "ADP", "PRON", "CONJ", "PUNCT"];
pub const TARGET_TAGS: [&str; 11] = [
    "DET", "ADJ", "NOUN", "PROPN", "VERB", "ADP", "PRON", "CONJ", "PUNCT", "PRT", "INTJ",
];

const DETS: &[&str] = &["the", "a", "this", "that", "every", "some"];
const ADPS: &[&str] = &["in", "on", "with", "at", "near", "from", "like"];
const PRONS: &[&str] = &["i", "you", "we", "they", "he", "she"];
const CONJS: &[&str] = &["and", "but", "or"];
const INTJS: &[&str] = &["lol", "omg", "haha", "wow", "ugh"];
const SPLITS: &[(&str, &str)] = &[("gon", "na"), ("wan", "na"), ("got", "ta")];
const CONSONANTS: &[char] = &['b', 'd', 'f', 'g', 'k', 'l', 'm', 'n', 'p', 'r', 's', 't', 'v', 'z'];
const VOWELS: &[char] = &['a', 'e', 'i', 'o', 'u'];
const NOUN_SUFFIXES: &[&str] = &["tion", "ment", "ness", "er", "ity", "al"];
/// `(third person singular, base form)`.
const VERB_SUFFIXES: &[(&str, &str)] = &[("izes", "ize"), ("ates", "ate"), ("ifies", "ify"), ("ens", "en")];
const ADJ_SUFFIXES: &[&str] = &["ous", "ful", "ive", "al", "ic", "en"];
const NAME_ENDINGS: &[&str] = &["son", "ia", "ez", "ton", "ov", "ard"];
/// Target-only respellings of suffixes.
const RESPELLINGS: &[(&str, &str)] = &[
    ("tion", "shun"),
    ("ness", "nes"),
    ("ment", "mnt"),
    ("izes", "izez"),
    ("ous", "us"),
    ("ful", "fl"),
    ("ity", "iti"),
];

#[derive(Clone, Copy)]
enum Slot {
    Det,
    Adj,
    OptAdj,
    Noun,
    Name,
    Verb,
    VerbBase,
    Adp,
    Pron,
    Conj,
    Punct,
    Split,
    Intj,
    Mention,
}

use Slot::*;

const SHARED_TEMPLATES: &[&[Slot]] = &[
    &[Det, OptAdj, Noun, Verb, Det, OptAdj, Noun, Punct],
    &[Name, Verb, Det, OptAdj, Noun, Adp, Det, Noun, Punct],
    &[Pron, Verb, Name, Adp, Name, Punct],
    &[Name, Conj, Name, Verb, Det, Noun, Punct],
    &[Det, Noun, Adp, Name, Verb, Pron, Punct],
    &[Pron, Verb, Det, Adj, Noun, Conj, Pron, Verb, Name, Punct],
    &[Name, Verb, Name, Adp, Det, Adj, Noun, Punct],
    &[Pron, Verb, Adj, Noun, Adp, Name, Punct],
    &[Name, Verb, Noun, Conj, Noun, Punct],
    &[Det, Adj, Adj, Noun, Verb, Name, Punct],
];

const TARGET_TEMPLATES: &[&[Slot]] = &[
    &[Pron, Split, VerbBase, Name, Punct],
    &[Intj, Pron, Verb, Name, Punct],
    &[Mention, Pron, Split, VerbBase, Det, Noun, Adp, Name],
    &[Name, Split, VerbBase, Det, OptAdj, Noun, Intj],
    &[Pron, Split, VerbBase, Adp, Name, Conj, Name],
];

/// Sizes and style rates of the generated pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub source_train: usize,
    pub source_dev: usize,
    pub target_train: usize,
    pub target_dev: usize,
    /// Stems per open class in the shared lexicon.
    pub lexicon_size: usize,
    /// Probability that an open-class word is a fresh stem.
    pub novel_words: f64,
    /// Probability that a target proper noun is written in lower case.
    pub target_lowercase_names: f64,
    /// Probability that a target common noun is capitalized.
    pub target_capitalized_nouns: f64,
    /// Probability that a target suffix with a respelling uses it.
    pub target_respell: f64,
    /// Probability that a target sentence uses a target-only template.
    pub target_only_templates: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            source_train: 400,
            source_dev: 80,
            target_train: 300,
            target_dev: 400,
            lexicon_size: 60,
            novel_words: 0.3,
            target_lowercase_names: 0.8,
            target_capitalized_nouns: 0.25,
            target_respell: 0.5,
            target_only_templates: 0.3,
        }
    }
}

/// Small dimensions and a step size that train the generated task in a few
/// seconds per run on one core. Everything else keeps its default.
pub fn desk_config() -> TrainConfig {
    TrainConfig {
        word_dim: 16,
        char_dim: 8,
        char_hidden: 12,
        hidden: 8,
        k: 8,
        max_epochs: 60,
        patience: 10,
        lr: 0.1,
        random_pp_epochs: 3,
        ..TrainConfig::default()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticTask {
    pub source: TaskData,
    pub target: TaskData,
}

fn pick<'a>(rng: &mut Rng, xs: &[&'a str]) -> &'a str {
    xs[rng.gen_range(0..xs.len())]
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn stem(rng: &mut Rng) -> String {
    let syllables = rng.gen_range(2..=3);
    let mut s = String::new();
    for _ in 0..syllables {
        s.push(CONSONANTS[rng.gen_range(0..CONSONANTS.len())]);
        s.push(VOWELS[rng.gen_range(0..VOWELS.len())]);
    }
    s
}

struct Lexicon {
    nouns: Vec<String>,
    /// `(third person singular, base form)`.
    verbs: Vec<(String, String)>,
    adjs: Vec<String>,
}

impl Lexicon {
    fn new(rng: &mut Rng, size: usize) -> Self {
        Lexicon {
            nouns: (0..size).map(|_| stem(rng) + pick(rng, NOUN_SUFFIXES)).collect(),
            verbs: (0..size).map(|_| verb(rng)).collect(),
            adjs: (0..size).map(|_| stem(rng) + pick(rng, ADJ_SUFFIXES)).collect(),
        }
    }
}

fn verb(rng: &mut Rng) -> (String, String) {
    let st = stem(rng);
    let (s3, base) = VERB_SUFFIXES[rng.gen_range(0..VERB_SUFFIXES.len())];
    (format!("{st}{s3}"), format!("{st}{base}"))
}

struct Style {
    target: bool,
    spec: SyntheticSpec,
}

impl Style {
    fn respell(&self, rng: &mut Rng, word: String) -> String {
        if !self.target {
            return word;
        }
        for (from, to) in RESPELLINGS {
            if word.ends_with(from) {
                if rng.gen_bool(self.spec.target_respell) {
                    return format!("{}{to}", &word[..word.len() - from.len()]);
                }
                break;
            }
        }
        word
    }
}

fn realize(rng: &mut Rng, lex: &Lexicon, template: &[Slot], style: &Style, tags: &TagSet) -> Sentence {
    let novel = style.spec.novel_words;
    let mut out: Vec<(String, &str)> = Vec::new();
    let adj = |rng: &mut Rng| {
        let w = if rng.gen_bool(novel) {
            stem(rng) + pick(rng, ADJ_SUFFIXES)
        } else {
            lex.adjs[rng.gen_range(0..lex.adjs.len())].clone()
        };
        (style.respell(rng, w), "ADJ")
    };
    let verb_form = |rng: &mut Rng, base: bool| {
        let (s3, b) = if rng.gen_bool(novel) {
            verb(rng)
        } else {
            lex.verbs[rng.gen_range(0..lex.verbs.len())].clone()
        };
        (style.respell(rng, if base { b } else { s3 }), "VERB")
    };
    for &slot in template {
        match slot {
            Det => out.push((pick(rng, DETS).into(), "DET")),
            Adj => out.push(adj(rng)),
            OptAdj => {
                if rng.gen_bool(0.5) {
                    out.push(adj(rng));
                }
            }
            Noun => {
                let w = if rng.gen_bool(novel) {
                    stem(rng) + pick(rng, NOUN_SUFFIXES)
                } else {
                    lex.nouns[rng.gen_range(0..lex.nouns.len())].clone()
                };
                let w = style.respell(rng, w);
                let w = if style.target && rng.gen_bool(style.spec.target_capitalized_nouns) {
                    capitalize(&w)
                } else {
                    w
                };
                out.push((w, "NOUN"));
            }
            Name => {
                let n = stem(rng) + pick(rng, NAME_ENDINGS);
                let n = if style.target && rng.gen_bool(style.spec.target_lowercase_names) {
                    n
                } else {
                    capitalize(&n)
                };
                out.push((n, "PROPN"));
            }
            Verb => out.push(verb_form(rng, false)),
            VerbBase => out.push(verb_form(rng, true)),
            Adp => out.push((pick(rng, ADPS).into(), "ADP")),
            Pron => out.push((pick(rng, PRONS).into(), "PRON")),
            Conj => out.push((pick(rng, CONJS).into(), "CONJ")),
            Punct => out.push((pick(rng, &[".", "!", "?"]).into(), "PUNCT")),
            Split => {
                let (a, b) = SPLITS[rng.gen_range(0..SPLITS.len())];
                out.push((a.into(), "VERB"));
                out.push((b.into(), "PRT"));
            }
            Intj => out.push((pick(rng, INTJS).into(), "INTJ")),
            Mention => out.push((format!("@{}", stem(rng)), "PROPN")),
        }
    }
    if !style.target {
        out[0].0 = capitalize(&out[0].0);
    }
    Sentence {
        tags: out.iter().map(|(_, t)| tags.id(t).expect("tag in set")).collect(),
        tokens: out.into_iter().map(|(w, _)| w).collect(),
    }
}

fn sentences(
    rng: &mut Rng,
    lex: &Lexicon,
    n: usize,
    target: bool,
    spec: &SyntheticSpec,
    tags: &TagSet,
) -> Vec<Sentence> {
    let style = Style { target, spec: *spec };
    (0..n)
        .map(|_| {
            let template = if target && rng.gen_bool(spec.target_only_templates) {
                TARGET_TEMPLATES[rng.gen_range(0..TARGET_TEMPLATES.len())]
            } else {
                SHARED_TEMPLATES[rng.gen_range(0..SHARED_TEMPLATES.len())]
            };
            realize(rng, lex, template, &style, tags)
        })
        .collect()
}

/// Generates the pair from `seed`; the same seed always gives the same data.
pub fn generate(spec: &SyntheticSpec, seed: u64) -> Result<SyntheticTask, TrainError> {
    let mut rng = rng::seeded(seed);
    let lex = Lexicon::new(&mut rng, spec.lexicon_size.max(1));
    let source_tags = TagSet::new(SOURCE_TAGS)?;
    let target_tags = TagSet::new(TARGET_TAGS)?;
    let source_train = sentences(&mut rng, &lex, spec.source_train, false, spec, &source_tags);
    let source_dev = sentences(&mut rng, &lex, spec.source_dev, false, spec, &source_tags);
    let target_train = sentences(&mut rng, &lex, spec.target_train, true, spec, &target_tags);
    let target_dev = sentences(&mut rng, &lex, spec.target_dev, true, spec, &target_tags);
    Ok(SyntheticTask {
        source: TaskData::new(source_tags, source_train, source_dev)?,
        target: TaskData::new(target_tags, target_train, target_dev)?,
    })
}

/// `n` source-style sentences over the source tag-set.
pub fn source_corpus(n: usize, seed: u64) -> Result<(TagSet, Vec<Sentence>), TrainError> {
    let mut rng = rng::seeded(seed);
    let spec = SyntheticSpec::default();
    let lex = Lexicon::new(&mut rng, spec.lexicon_size);
    let tags = TagSet::new(SOURCE_TAGS)?;
    let s = sentences(&mut rng, &lex, n, false, &spec, &tags);
    Ok((tags, s))
}

use std::collections::HashMap;

use super::Sentence;

/// Word id reserved for padding. Its embedding row stays zero.
pub const PAD: usize = 0;
/// Word id for anything not in the vocabulary; also the unknown-char id.
pub const UNK: usize = 1;
const CHAR_UNK: usize = 0;

pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Lower-cased word ids plus case-preserving character ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    words: Vec<String>,
    word_index: HashMap<String, usize>,
    chars: Vec<char>,
    char_index: HashMap<char, usize>,
}

impl Default for Vocab {
    fn default() -> Self {
        Self::empty()
    }
}

impl Vocab {
    /// Only the reserved entries.
    pub fn empty() -> Self {
        let words = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
        let word_index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Vocab {
            words,
            word_index,
            // slot 0 is the unknown char; its placeholder is never looked up
            chars: vec!['\u{0}'],
            char_index: HashMap::new(),
        }
    }

    /// Rebuilds a vocabulary from its stored word and char lists.
    pub fn from_parts(words: Vec<String>, chars: Vec<char>) -> Option<Self> {
        if words.len() < 2 || words[PAD] != PAD_TOKEN || words[UNK] != UNK_TOKEN || chars.is_empty() {
            return None;
        }
        let word_index: HashMap<String, usize> = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        let char_index: HashMap<char, usize> = chars.iter().enumerate().skip(1).map(|(i, &c)| (c, i)).collect();
        if word_index.len() != words.len() || char_index.len() != chars.len() - 1 {
            return None;
        }
        Some(Vocab {
            words,
            word_index,
            chars,
            char_index,
        })
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn word_count(&self) -> usize {
        self.words.len()
    }

    pub fn char_count(&self) -> usize {
        self.chars.len()
    }

    /// Id of `word` after lower-casing; [`UNK`] when absent.
    pub fn word_id(&self, word: &str) -> usize {
        self.word_index.get(&word.to_lowercase()).copied().unwrap_or(UNK)
    }

    pub fn contains_word(&self, word: &str) -> bool {
        self.word_index.contains_key(&word.to_lowercase())
    }

    /// Case-preserving char ids of `word`.
    pub fn char_ids(&self, word: &str) -> Vec<usize> {
        word.chars()
            .map(|c| self.char_index.get(&c).copied().unwrap_or(CHAR_UNK))
            .collect()
    }

    pub fn char_unk(&self) -> usize {
        CHAR_UNK
    }

    /// Adds a lower-cased word if missing; returns its id.
    pub fn insert_word(&mut self, word: &str) -> usize {
        let key = word.to_lowercase();
        if let Some(&id) = self.word_index.get(&key) {
            return id;
        }
        self.words.push(key.clone());
        self.word_index.insert(key, self.words.len() - 1);
        self.words.len() - 1
    }

    pub fn insert_char(&mut self, c: char) -> usize {
        if let Some(&id) = self.char_index.get(&c) {
            return id;
        }
        self.chars.push(c);
        self.char_index.insert(c, self.chars.len() - 1);
        self.chars.len() - 1
    }

    /// Appends words seen at least `min_count` times (and every char) from
    /// `sentences`, in first-appearance order. Existing ids are unchanged.
    pub fn extend_from<'a>(&mut self, sentences: impl IntoIterator<Item = &'a Sentence>, min_count: usize) {
        let mut counts: HashMap<String, usize> = HashMap::new();
        let mut order = Vec::new();
        for s in sentences {
            for tok in &s.tokens {
                let key = tok.to_lowercase();
                let c = counts.entry(key.clone()).or_insert(0);
                if *c == 0 {
                    order.push(key);
                }
                *c += 1;
                for ch in tok.chars() {
                    self.insert_char(ch);
                }
            }
        }
        for w in order {
            if counts[&w] >= min_count.max(1) {
                self.insert_word(&w);
            }
        }
    }
}

/// Builds a vocabulary from `sentences`. Words seen fewer than `min_count`
/// times map to [`UNK`]; chars come from the raw, cased surfaces.
pub fn build_vocab<'a>(sentences: impl IntoIterator<Item = &'a Sentence>, min_count: usize) -> Vocab {
    let mut v = Vocab::empty();
    v.extend_from(sentences, min_count);
    v
}

use std::collections::HashMap;

use super::CorpusError;

/// Ordered set of tag names; a tag's id is its position.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TagSet {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl TagSet {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self, CorpusError> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        let mut index = HashMap::with_capacity(names.len());
        for (i, n) in names.iter().enumerate() {
            if index.insert(n.clone(), i).is_some() {
                return Err(CorpusError::DuplicateTag(n.clone()));
            }
        }
        if names.len() < 2 {
            return Err(CorpusError::TooFewTags(names.len()));
        }
        Ok(TagSet { names, index })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn ensure_same(&self, other: &TagSet) -> Result<(), CorpusError> {
        if self != other {
            return Err(CorpusError::TagSetMismatch(format!(
                "[{}] vs [{}]",
                self.names.join(" "),
                other.names.join(" ")
            )));
        }
        Ok(())
    }
}

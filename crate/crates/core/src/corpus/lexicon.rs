use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use super::{AnnotatedSentence, ConsolidatedSentence, CorpusError, RawRecord};

/// The bundled default cue list.
pub const DEFAULT_CUE_LEXICON: &str = include_str!("../../data/cue_lexicon.txt");

/// Lowercase single-word cues for vagueness.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CueLexicon {
    terms: BTreeSet<String>,
}

impl CueLexicon {
    /// Parses one term per line; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, CorpusError> {
        let mut terms = BTreeSet::new();
        for line in text.lines() {
            let term = line.split('#').next().unwrap_or("").trim();
            if term.is_empty() {
                continue;
            }
            if term.to_lowercase() != term {
                return Err(CorpusError::LexiconCase(term.to_string()));
            }
            terms.insert(term.to_string());
        }
        if terms.is_empty() {
            return Err(CorpusError::EmptyLexicon);
        }
        Ok(Self { terms })
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn default_lexicon() -> Self {
        Self::parse(DEFAULT_CUE_LEXICON).expect("bundled lexicon is valid")
    }

    pub fn from_terms<S: AsRef<str>>(terms: &[S]) -> Result<Self, CorpusError> {
        let joined: Vec<&str> = terms.iter().map(AsRef::as_ref).collect();
        Self::parse(&joined.join("\n"))
    }

    /// Case-insensitive membership test.
    pub fn contains(&self, word: &str) -> bool {
        self.terms.contains(&word.to_lowercase())
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.terms.iter().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

/// Anything with a token sequence.
pub trait Tokenized {
    fn token_texts(&self) -> Vec<&str>;
}

impl Tokenized for AnnotatedSentence {
    fn token_texts(&self) -> Vec<&str> {
        self.texts()
    }
}

impl Tokenized for ConsolidatedSentence {
    fn token_texts(&self) -> Vec<&str> {
        self.texts()
    }
}

impl Tokenized for RawRecord {
    fn token_texts(&self) -> Vec<&str> {
        self.tokens.iter().map(String::as_str).collect()
    }
}

impl Tokenized for Vec<String> {
    fn token_texts(&self) -> Vec<&str> {
        self.iter().map(String::as_str).collect()
    }
}

/// Keeps sentences with at least one cue token, in input order.
pub fn filter_by_cues<T: Tokenized + Clone>(sentences: &[T], lexicon: &CueLexicon) -> Vec<T> {
    sentences
        .iter()
        .filter(|s| s.token_texts().iter().any(|t| lexicon.contains(t)))
        .cloned()
        .collect()
}

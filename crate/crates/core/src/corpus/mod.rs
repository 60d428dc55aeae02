//! Annotated privacy-policy sentences: loading, cue filtering, label
//! consolidation, agreement statistics and cross-validation folds.

mod consolidate;
mod io;
mod lexicon;
mod split;
mod stats;
mod tokenize;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use consolidate::{consolidate, consolidate_sentence, consolidate_word_labels, covering_annotators};
pub use io::{
    load_consolidated, load_corpus, load_raw, parse_corpus, read_jsonl_lines, write_consolidated, ConsolidatedRecord,
    CorpusRecord, RawRecord, ScoreRecord, SelectionRecord,
};
pub use lexicon::{filter_by_cues, CueLexicon, Tokenized, DEFAULT_CUE_LEXICON};
pub use split::{kfold_split, Fold};
pub use stats::{corpus_stats, StatsReport, TermFrequency};
pub use tokenize::{split_sentences, tokenize};

/// Maximum length of one annotated vague term, in tokens.
pub const MAX_SPAN_LEN: usize = 5;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: malformed record: {cause}")]
    MalformedRecord { line: usize, cause: String },
    #[error("line {line}: span {start}..{end} invalid for sentence {id} with {len} tokens")]
    SpanOutOfBounds {
        line: usize,
        id: String,
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("line {line}: score {score} outside [1, 5] in sentence {id}")]
    ScoreOutOfRange { line: usize, id: String, score: f64 },
    #[error("sentence {0} has no vagueness scores")]
    NoAnnotations(String),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("corpus of {size} items cannot be split into {k} folds")]
    CorpusTooSmall { size: usize, k: usize },
    #[error("cue lexicon is empty")]
    EmptyLexicon,
    #[error("cue lexicon term {0:?} is not lowercase")]
    LexiconCase(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub index: usize,
}

impl Token {
    pub fn lower(&self) -> String {
        self.text.to_lowercase()
    }
}

/// Builds indexed tokens from strings.
pub fn tokens_from<S: AsRef<str>>(texts: &[S]) -> Vec<Token> {
    texts
        .iter()
        .enumerate()
        .map(|(index, t)| Token {
            text: t.as_ref().to_string(),
            index,
        })
        .collect()
}

/// Half-open `[start, end)` token range marked vague by one annotator.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AnnotatorWordSelection {
    pub annotator_id: String,
    pub start: usize,
    pub end: usize,
}

impl AnnotatorWordSelection {
    pub fn new(annotator_id: &str, start: usize, end: usize) -> Self {
        Self {
            annotator_id: annotator_id.to_string(),
            start,
            end,
        }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn covers(&self, index: usize) -> bool {
        self.start <= index && index < self.end
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SentenceAnnotation {
    pub annotator_id: String,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedSentence {
    pub id: String,
    pub tokens: Vec<Token>,
    pub word_selections: Vec<AnnotatorWordSelection>,
    pub sentence_annotations: Vec<SentenceAnnotation>,
}

impl AnnotatedSentence {
    pub fn texts(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.text.as_str()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsolidatedSentence {
    pub id: String,
    pub tokens: Vec<Token>,
    pub word_labels: Vec<u8>,
    pub mean_score: f64,
    pub class: VaguenessClass,
}

impl ConsolidatedSentence {
    pub fn texts(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.text.as_str()).collect()
    }

    pub fn vague_word_count(&self) -> usize {
        self.word_labels.iter().filter(|&&l| l == 1).count()
    }
}

/// Four-way sentence vagueness level, ordered from clearest to vaguest.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VaguenessClass {
    Clear,
    SomewhatClear,
    Vague,
    ExtremelyVague,
}

impl VaguenessClass {
    pub const ALL: [VaguenessClass; 4] = [
        VaguenessClass::Clear,
        VaguenessClass::SomewhatClear,
        VaguenessClass::Vague,
        VaguenessClass::ExtremelyVague,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Buckets `[1,2) [2,3) [3,4) [4,5]`. Returns `None` outside `[1, 5]`.
    pub fn from_score(score: f64) -> Option<Self> {
        if !(1.0..=5.0).contains(&score) {
            return None;
        }
        Some(if score < 2.0 {
            Self::Clear
        } else if score < 3.0 {
            Self::SomewhatClear
        } else if score < 4.0 {
            Self::Vague
        } else {
            Self::ExtremelyVague
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Clear => "clear",
            Self::SomewhatClear => "somewhat-clear",
            Self::Vague => "vague",
            Self::ExtremelyVague => "extremely-vague",
        }
    }
}

impl fmt::Display for VaguenessClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for VaguenessClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown class {s:?}"))
    }
}

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    tokens_from, AnnotatedSentence, AnnotatorWordSelection, ConsolidatedSentence, CorpusError, SentenceAnnotation,
    VaguenessClass, MAX_SPAN_LEN,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionRecord {
    pub annotator: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreRecord {
    pub annotator: String,
    pub score: f64,
}

/// One line of the annotated corpus file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusRecord {
    pub id: String,
    pub tokens: Vec<String>,
    #[serde(default)]
    pub word_selections: Vec<SelectionRecord>,
    #[serde(default)]
    pub scores: Vec<ScoreRecord>,
}

impl From<&AnnotatedSentence> for CorpusRecord {
    fn from(s: &AnnotatedSentence) -> Self {
        Self {
            id: s.id.clone(),
            tokens: s.tokens.iter().map(|t| t.text.clone()).collect(),
            word_selections: s
                .word_selections
                .iter()
                .map(|w| SelectionRecord {
                    annotator: w.annotator_id.clone(),
                    start: w.start,
                    end: w.end,
                })
                .collect(),
            scores: s
                .sentence_annotations
                .iter()
                .map(|a| ScoreRecord {
                    annotator: a.annotator_id.clone(),
                    score: a.score,
                })
                .collect(),
        }
    }
}

/// One line of a raw (unannotated) corpus file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub id: String,
    pub tokens: Vec<String>,
}

/// One line of a consolidated gold file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsolidatedRecord {
    pub id: String,
    pub tokens: Vec<String>,
    pub word_labels: Vec<u8>,
    pub mean_score: f64,
    pub class: VaguenessClass,
}

fn read(path: &Path) -> Result<String, CorpusError> {
    fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Non-blank lines with their 1-based line numbers.
pub fn read_jsonl_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn check_tokens(line: usize, tokens: &[String]) -> Result<(), CorpusError> {
    if tokens.is_empty() {
        return Err(CorpusError::MalformedRecord {
            line,
            cause: "tokens must be non-empty".into(),
        });
    }
    if let Some(t) = tokens
        .iter()
        .find(|t| t.is_empty() || t.chars().any(char::is_whitespace))
    {
        return Err(CorpusError::MalformedRecord {
            line,
            cause: format!("invalid token {t:?}"),
        });
    }
    Ok(())
}

fn validate(line: usize, rec: CorpusRecord) -> Result<AnnotatedSentence, CorpusError> {
    check_tokens(line, &rec.tokens)?;
    let len = rec.tokens.len();
    let mut seen = HashSet::new();
    let mut selections = Vec::with_capacity(rec.word_selections.len());
    for sel in rec.word_selections {
        let span_len = sel.end.saturating_sub(sel.start);
        if sel.end > len || span_len == 0 || span_len > MAX_SPAN_LEN {
            return Err(CorpusError::SpanOutOfBounds {
                line,
                id: rec.id,
                start: sel.start,
                end: sel.end,
                len,
            });
        }
        if !seen.insert((sel.annotator.clone(), sel.start, sel.end)) {
            return Err(CorpusError::MalformedRecord {
                line,
                cause: format!("annotator {} selects {}..{} twice", sel.annotator, sel.start, sel.end),
            });
        }
        selections.push(AnnotatorWordSelection {
            annotator_id: sel.annotator,
            start: sel.start,
            end: sel.end,
        });
    }
    let mut annotations = Vec::with_capacity(rec.scores.len());
    for s in rec.scores {
        if !(1.0..=5.0).contains(&s.score) {
            return Err(CorpusError::ScoreOutOfRange {
                line,
                id: rec.id,
                score: s.score,
            });
        }
        annotations.push(SentenceAnnotation {
            annotator_id: s.annotator,
            score: s.score,
        });
    }
    Ok(AnnotatedSentence {
        id: rec.id,
        tokens: tokens_from(&rec.tokens),
        word_selections: selections,
        sentence_annotations: annotations,
    })
}

/// Parses annotated-corpus JSONL text, validating every record.
pub fn parse_corpus(text: &str) -> Result<Vec<AnnotatedSentence>, CorpusError> {
    read_jsonl_lines(text)
        .map(|(line, l)| {
            let rec: CorpusRecord = serde_json::from_str(l).map_err(|e| CorpusError::MalformedRecord {
                line,
                cause: e.to_string(),
            })?;
            validate(line, rec)
        })
        .collect()
}

pub fn load_corpus(path: &Path) -> Result<Vec<AnnotatedSentence>, CorpusError> {
    parse_corpus(&read(path)?)
}

/// Loads raw sentences. Annotated records are accepted; their annotations are
/// ignored.
pub fn load_raw(path: &Path) -> Result<Vec<RawRecord>, CorpusError> {
    read_jsonl_lines(&read(path)?)
        .map(|(line, l)| {
            let rec: RawRecord = serde_json::from_str(l).map_err(|e| CorpusError::MalformedRecord {
                line,
                cause: e.to_string(),
            })?;
            check_tokens(line, &rec.tokens)?;
            Ok(rec)
        })
        .collect()
}

pub fn load_consolidated(path: &Path) -> Result<Vec<ConsolidatedSentence>, CorpusError> {
    read_jsonl_lines(&read(path)?)
        .map(|(line, l)| {
            let rec: ConsolidatedRecord = serde_json::from_str(l).map_err(|e| CorpusError::MalformedRecord {
                line,
                cause: e.to_string(),
            })?;
            check_tokens(line, &rec.tokens)?;
            if rec.word_labels.len() != rec.tokens.len() || rec.word_labels.iter().any(|&l| l > 1) {
                return Err(CorpusError::MalformedRecord {
                    line,
                    cause: "word_labels must be 0/1, one per token".into(),
                });
            }
            if VaguenessClass::from_score(rec.mean_score).is_none() {
                return Err(CorpusError::ScoreOutOfRange {
                    line,
                    id: rec.id,
                    score: rec.mean_score,
                });
            }
            Ok(ConsolidatedSentence {
                id: rec.id,
                tokens: tokens_from(&rec.tokens),
                word_labels: rec.word_labels,
                mean_score: rec.mean_score,
                class: rec.class,
            })
        })
        .collect()
}

pub fn write_consolidated(path: &Path, sentences: &[ConsolidatedSentence]) -> Result<(), CorpusError> {
    let mut out = Vec::new();
    for s in sentences {
        let rec = ConsolidatedRecord {
            id: s.id.clone(),
            tokens: s.tokens.iter().map(|t| t.text.clone()).collect(),
            word_labels: s.word_labels.clone(),
            mean_score: s.mean_score,
            class: s.class,
        };
        serde_json::to_writer(&mut out, &rec).expect("serializable");
        out.push(b'\n');
    }
    let io = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(&out).map_err(io)
}

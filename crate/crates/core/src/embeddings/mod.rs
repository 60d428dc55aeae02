//! Token vocabulary and word-embedding matrices: building, skip-gram
//! training and the plain-text vector format.

mod skipgram;

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

pub use skipgram::{train_skipgram, SkipGramConfig, SkipGramReport};

use crate::tensor::{xavier_init, Rng, Tensor, TensorError};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const EOS: usize = 2;
pub const RESERVED: [&str; 3] = ["<pad>", "<unk>", "<eos>"];
pub const DEFAULT_MAX_VOCAB: usize = 10_000;

#[derive(Debug, thiserror::Error)]
pub enum EmbeddingError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("corpus has {tokens} tokens; skip-gram needs at least {needed}")]
    CorpusTooSmall { tokens: usize, needed: usize },
    #[error("line {line}: expected dimension {expected}, found {found}")]
    DimensionMismatch { line: usize, expected: usize, found: usize },
    #[error("line {line}: {cause}")]
    MalformedLine { line: usize, cause: String },
    #[error("invalid vocabulary: {0}")]
    BadVocabulary(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Lowercased token ↔ id map with reserved PAD, UNK and EOS ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Keeps the `max_size - 3` most frequent lowercased tokens, breaking
    /// frequency ties lexicographically.
    pub fn build<S: AsRef<str>>(corpus: &[Vec<S>], max_size: usize) -> Result<Self, EmbeddingError> {
        if corpus.iter().all(|s| s.is_empty()) {
            return Err(EmbeddingError::EmptyCorpus);
        }
        let mut counts: HashMap<String, usize> = HashMap::new();
        for sentence in corpus {
            for tok in sentence {
                let key = tok.as_ref().to_lowercase();
                if !RESERVED.contains(&key.as_str()) {
                    *counts.entry(key).or_default() += 1;
                }
            }
        }
        let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(max_size.saturating_sub(RESERVED.len()));
        let tokens = RESERVED
            .iter()
            .map(|s| s.to_string())
            .chain(ranked.into_iter().map(|(t, _)| t))
            .collect();
        Self::from_tokens(tokens)
    }

    /// Rebuilds a vocabulary from its id-ordered token list.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self, EmbeddingError> {
        if tokens.len() < RESERVED.len() || tokens[..RESERVED.len()] != RESERVED {
            return Err(EmbeddingError::BadVocabulary(
                "first entries must be the reserved tokens".into(),
            ));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(EmbeddingError::BadVocabulary(format!("duplicate token {t:?}")));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Id of the lowercased token, or UNK.
    pub fn id(&self, token: &str) -> usize {
        self.get(token).unwrap_or(UNK)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(&token.to_lowercase()).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode<S: AsRef<str>>(&self, sentence: &[S]) -> Vec<usize> {
        sentence.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().map(|&i| self.tokens[i].clone()).collect()
    }
}

/// `(|V|, d)` matrix of word vectors, row `i` for token id `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix {
    pub matrix: Tensor,
}

impl EmbeddingMatrix {
    pub fn new(matrix: Tensor) -> Result<Self, EmbeddingError> {
        if matrix.shape().len() != 2 {
            return Err(TensorError::BadShape(format!("{:?}", matrix.shape())).into());
        }
        Ok(Self { matrix })
    }

    pub fn xavier(rows: usize, dim: usize, rng: &mut Rng) -> Result<Self, EmbeddingError> {
        Self::new(xavier_init(&[rows, dim], rng)?)
    }

    pub fn rows(&self) -> usize {
        self.matrix.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.matrix.shape()[1]
    }

    pub fn vector(&self, id: usize) -> &[f64] {
        self.matrix.row_slice(id)
    }

    pub fn cosine(&self, a: usize, b: usize) -> f64 {
        let (x, y) = (self.vector(a), self.vector(b));
        let dot: f64 = x.iter().zip(y).map(|(p, q)| p * q).sum();
        let nx: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let ny: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        dot / (nx * ny).max(1e-300)
    }
}

/// Writes `<count> <dim>` then `token v1 .. vd` per row.
pub fn save_embeddings(m: &EmbeddingMatrix, vocab: &Vocabulary, path: &Path) -> Result<(), EmbeddingError> {
    let mut out = String::new();
    writeln!(out, "{} {}", m.rows(), m.dim()).expect("string write");
    for id in 0..m.rows() {
        out.push_str(vocab.token(id));
        for v in m.vector(id) {
            write!(out, " {v}").expect("string write");
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|source| EmbeddingError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parses the text vector format into `vocab` order. Rows for tokens absent
/// from the file keep a Xavier-uniform initialization.
pub fn parse_embeddings(
    text: &str,
    vocab: &Vocabulary,
    expected_dim: Option<usize>,
    rng: &mut Rng,
) -> Result<EmbeddingMatrix, EmbeddingError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or(EmbeddingError::MalformedLine {
        line: 1,
        cause: "missing header".into(),
    })?;
    let head: Vec<&str> = header.split_whitespace().collect();
    let parse_usize = |s: &str| s.parse::<usize>().ok();
    let (count, dim) = match head.as_slice() {
        [c, d] => match (parse_usize(c), parse_usize(d)) {
            (Some(c), Some(d)) if d > 0 => (c, d),
            _ => {
                return Err(EmbeddingError::MalformedLine {
                    line: 1,
                    cause: format!("bad header {header:?}"),
                })
            }
        },
        _ => {
            return Err(EmbeddingError::MalformedLine {
                line: 1,
                cause: format!("bad header {header:?}"),
            })
        }
    };
    if let Some(expected) = expected_dim {
        if expected != dim {
            return Err(EmbeddingError::DimensionMismatch {
                line: 1,
                expected,
                found: dim,
            });
        }
    }
    let mut m = xavier_init(&[vocab.len(), dim], rng)?;
    let mut seen = vec![false; vocab.len()];
    let mut rows = 0;
    for (line, l) in lines {
        if l.trim().is_empty() {
            continue;
        }
        rows += 1;
        let fields: Vec<&str> = l.split_whitespace().collect();
        if fields.len() != dim + 1 {
            return Err(EmbeddingError::MalformedLine {
                line,
                cause: format!("expected {} columns, found {}", dim + 1, fields.len()),
            });
        }
        let values = fields[1..]
            .iter()
            .map(|f| f.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| EmbeddingError::MalformedLine {
                line,
                cause: "non-numeric or non-finite value".into(),
            })?;
        if let Some(id) = vocab.get(fields[0]) {
            if !seen[id] {
                seen[id] = true;
                m.data_mut()[id * dim..(id + 1) * dim].copy_from_slice(&values);
            }
        }
    }
    if rows != count {
        return Err(EmbeddingError::MalformedLine {
            line: 1,
            cause: format!("header declares {count} rows, file has {rows}"),
        });
    }
    EmbeddingMatrix::new(m)
}

pub fn load_embeddings(
    path: &Path,
    vocab: &Vocabulary,
    expected_dim: Option<usize>,
    rng: &mut Rng,
) -> Result<EmbeddingMatrix, EmbeddingError> {
    let text = fs::read_to_string(path).map_err(|source| EmbeddingError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_embeddings(&text, vocab, expected_dim, rng)
}

//! Textual node representation from pre-trained word vectors.
//!
//! A node's name is tokenized, each token resolved to a vector (exact hit,
//! longest vocabulary prefix, or the mean of its letters' vectors), the result
//! truncated or zero-padded to `n` rows, and wrapped with a direction row on
//! top and the node's structural vector at the bottom.

use std::collections::HashMap;
use std::fmt;
use std::io::BufRead;

use ndarray::{s, Array2, ArrayView2};

use crate::error::{Error, ParseErrorKind, Result};
use crate::kg::for_each_line;

#[derive(Debug, Clone, Default)]
pub struct WordEmbeddings {
    vocabulary: HashMap<String, u32>,
    dim: usize,
    data: Vec<f32>,
    pub duplicates: usize,
}

impl WordEmbeddings {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            ..Self::default()
        }
    }

    /// Adds a word; returns false (and keeps the existing row) for duplicates.
    pub fn insert(&mut self, word: &str, vector: &[f32]) -> Result<bool> {
        if vector.len() != self.dim {
            return Err(Error::Shape(format!(
                "word `{word}` has {} values, expected {}",
                vector.len(),
                self.dim
            )));
        }
        if self.vocabulary.contains_key(word) {
            self.duplicates += 1;
            return Ok(false);
        }
        let row = self.vocabulary.len() as u32;
        self.vocabulary.insert(word.to_owned(), row);
        self.data.extend_from_slice(vector);
        Ok(true)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocabulary.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[f32]> {
        self.vocabulary.get(word).map(|&row| {
            let start = row as usize * self.dim;
            &self.data[start..start + self.dim]
        })
    }

    pub fn contains(&self, word: &str) -> bool {
        self.vocabulary.contains_key(word)
    }
}

/// Reads the standard text format: a token followed by `dim` space-separated
/// floats per line. The first occurrence of a duplicated token wins.
pub fn load_word_embeddings<R: BufRead>(reader: R, dim: usize) -> Result<WordEmbeddings> {
    let mut emb = WordEmbeddings::new(dim);
    let mut vector = Vec::with_capacity(dim);
    for_each_line(reader, |line, text| {
        let mut parts = text.trim_end().split(' ');
        let word = parts.next().unwrap_or_default();
        vector.clear();
        for p in parts {
            let v = p.parse::<f32>().map_err(|_| Error::Parse {
                line,
                kind: ParseErrorKind::BadFloat(p.to_owned()),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    kind: ParseErrorKind::BadFloat(p.to_owned()),
                });
            }
            vector.push(v);
        }
        if vector.len() != dim {
            return Err(Error::Parse {
                line,
                kind: ParseErrorKind::DimMismatch {
                    expected: dim,
                    found: vector.len(),
                },
            });
        }
        emb.insert(word, &vector)?;
        Ok(())
    })?;
    Ok(emb)
}

/// Lowercases, splits on whitespace, underscores and hyphens, and strips
/// punctuation from both ends of every piece.
pub fn tokenize(name: &str) -> Vec<String> {
    name.to_lowercase()
        .split(|c: char| c.is_whitespace() || c == '_' || c == '-')
        .map(|piece| piece.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|piece| !piece.is_empty())
        .map(str::to_owned)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Resolution {
    Direct,
    /// Matched the vocabulary prefix of this many characters.
    LongestMatch { prefix_chars: usize },
    /// Mean over the letters found in the vocabulary; zero letters means a
    /// zero vector.
    LetterAverage { letters_found: usize },
}

pub const MIN_PREFIX_CHARS: usize = 2;

/// Resolves a normalized word to a vector. Total: unknown words fall back to
/// letter averaging and finally to zeros.
pub fn resolve_word(word: &str, emb: &WordEmbeddings) -> (Vec<f32>, Resolution) {
    if let Some(v) = emb.get(word) {
        return (v.to_vec(), Resolution::Direct);
    }
    let boundaries: Vec<usize> = word
        .char_indices()
        .map(|(i, _)| i)
        .skip(1)
        .collect();
    // boundaries[k] is the byte end of the prefix with k + 1 chars
    for (chars, &end) in boundaries.iter().enumerate().rev().map(|(k, e)| (k + 1, e)) {
        if chars < MIN_PREFIX_CHARS {
            break;
        }
        if let Some(v) = emb.get(&word[..end]) {
            return (v.to_vec(), Resolution::LongestMatch { prefix_chars: chars });
        }
    }
    let mut sum = vec![0.0f32; emb.dim()];
    let mut found = 0;
    let mut buf = [0u8; 4];
    for c in word.chars() {
        if let Some(v) = emb.get(c.encode_utf8(&mut buf)) {
            for (s, x) in sum.iter_mut().zip(v) {
                *s += x;
            }
            found += 1;
        }
    }
    if found > 0 {
        sum.iter_mut().for_each(|s| *s /= found as f32);
    }
    (sum, Resolution::LetterAverage { letters_found: found })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeText {
    pub tokens: Vec<String>,
    pub resolutions: Vec<Resolution>,
}

/// `n × d`: the first `min(|tokens|, n)` rows hold resolved vectors, the rest
/// are zero.
pub fn encode_text(tokens: &[String], emb: &WordEmbeddings, n: usize) -> Array2<f32> {
    let mut m = Array2::zeros((n, emb.dim()));
    for (i, tok) in tokens.iter().take(n).enumerate() {
        let (v, _) = resolve_word(tok, emb);
        m.row_mut(i).assign(&ndarray::ArrayView1::from(&v));
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Head,
    Tail,
}

impl Role {
    pub fn sign(self) -> f32 {
        match self {
            Role::Head => 1.0,
            Role::Tail => -1.0,
        }
    }
}

/// `(n + 2) × d` rows: direction, `n` text rows, structural.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeRepresentation {
    pub rows: Array2<f32>,
    pub role: Role,
}

impl NodeRepresentation {
    pub fn text_rows(&self) -> usize {
        self.rows.nrows() - 2
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }
}

pub fn assemble_node(
    text: ArrayView2<'_, f32>,
    structural: &[f32],
    role: Role,
    direction: f32,
) -> Result<NodeRepresentation> {
    let (n, d) = text.dim();
    if structural.len() != d {
        return Err(Error::Shape(format!(
            "structural vector has {} values, text rows have {d}",
            structural.len()
        )));
    }
    let mut rows = Array2::zeros((n + 2, d));
    rows.row_mut(0).fill(role.sign() * direction);
    rows.slice_mut(s![1..n + 1, ..]).assign(&text);
    rows.row_mut(n + 1)
        .assign(&ndarray::ArrayView1::from(structural));
    Ok(NodeRepresentation { rows, role })
}

/// Counts of resolution kinds over word occurrences.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OovReport {
    pub direct: usize,
    pub longest_match: usize,
    pub letter_average: usize,
    pub zero: usize,
}

impl OovReport {
    pub fn record(&mut self, r: Resolution) {
        match r {
            Resolution::Direct => self.direct += 1,
            Resolution::LongestMatch { .. } => self.longest_match += 1,
            Resolution::LetterAverage { letters_found: 0 } => self.zero += 1,
            Resolution::LetterAverage { .. } => self.letter_average += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.direct + self.longest_match + self.letter_average + self.zero
    }

    /// Share of occurrences not resolved directly, in percent.
    pub fn oov_rate(&self) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            100.0 * (self.total() - self.direct) as f64 / self.total() as f64
        }
    }
}

impl fmt::Display for OovReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "words_direct={}", self.direct)?;
        writeln!(f, "words_longest_match={}", self.longest_match)?;
        writeln!(f, "words_letter_average={}", self.letter_average)?;
        writeln!(f, "words_zero={}", self.zero)?;
        write!(f, "oov_rate_percent={:.4}", self.oov_rate())
    }
}

/// Resolved name text for every entity, deduplicated by token so large
/// graphs do not store one matrix per node.
#[derive(Debug, Clone, PartialEq)]
pub struct EntityText {
    /// Resolved vector per distinct token, `U × d`.
    pub vectors: Array2<f32>,
    /// Per entity, the rows of `vectors` for its first `n` tokens.
    pub token_rows: Vec<Vec<u32>>,
    pub n: usize,
}

impl EntityText {
    /// Encodes entity names, returning the per-occurrence OOV report as well.
    pub fn build<'a>(
        names: impl IntoIterator<Item = &'a str>,
        emb: &WordEmbeddings,
        n: usize,
    ) -> (Self, OovReport) {
        let mut token_ids: HashMap<String, u32> = HashMap::new();
        let mut data: Vec<f32> = Vec::new();
        let mut report = OovReport::default();
        let mut resolved: Vec<Resolution> = Vec::new();
        let mut token_rows = Vec::new();
        for name in names {
            let tokens = tokenize(name);
            let mut rows = Vec::with_capacity(tokens.len().min(n));
            for (i, tok) in tokens.into_iter().enumerate() {
                let id = match token_ids.get(&tok) {
                    Some(&id) => id,
                    None => {
                        let (v, r) = resolve_word(&tok, emb);
                        let id = token_ids.len() as u32;
                        data.extend_from_slice(&v);
                        resolved.push(r);
                        token_ids.insert(tok, id);
                        id
                    }
                };
                report.record(resolved[id as usize]);
                if i < n {
                    rows.push(id);
                }
            }
            token_rows.push(rows);
        }
        let vectors = Array2::from_shape_vec((token_ids.len(), emb.dim()), data)
            .expect("rows have the embedding dimension");
        (
            Self {
                vectors,
                token_rows,
                n,
            },
            report,
        )
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    /// The `n × d` text matrix of one entity.
    pub fn matrix(&self, entity: u32) -> Array2<f32> {
        let mut m = Array2::zeros((self.n, self.dim()));
        for (i, &row) in self.token_rows[entity as usize].iter().enumerate() {
            m.row_mut(i).assign(&self.vectors.row(row as usize));
        }
        m
    }
}

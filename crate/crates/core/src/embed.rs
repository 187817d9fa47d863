//! Dense vectors for components, entities, queries and query elements.
//!
//! Vectors come from a JSON-lines embedding file written by an external
//! encoder. Anything missing falls back to a deterministic character-trigram
//! hash embedding, so lookups never fail.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::hash::Hasher;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Query;

pub const DEFAULT_HASH_DIM: usize = 64;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed embedding line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("dimension mismatch for `{key}`: expected {expected}, got {actual}")]
    DimensionMismatch {
        key: String,
        expected: usize,
        actual: usize,
    },
    #[error("duplicate embedding key `{0}`")]
    DuplicateKey(String),
    #[error("bad embedding key `{0}`")]
    BadKey(String),
    #[error("vector dimensions differ: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("question template has {slots} slots but query has {elements} elements")]
    SlotMismatch { slots: usize, elements: usize },
}

pub type Result<T, E = EmbedError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EmbeddingKind {
    Component,
    Entity,
    Query,
    QueryElement,
    /// Scalar `(component, query)` relevance in `[0, 1]`.
    EntailmentScore,
}

impl EmbeddingKind {
    pub fn code(self) -> &'static str {
        match self {
            EmbeddingKind::Component => "c",
            EmbeddingKind::Entity => "e",
            EmbeddingKind::Query => "q",
            EmbeddingKind::QueryElement => "qe",
            EmbeddingKind::EntailmentScore => "ent",
        }
    }

    fn from_code(code: &str) -> Option<Self> {
        Some(match code {
            "c" => EmbeddingKind::Component,
            "e" => EmbeddingKind::Entity,
            "q" => EmbeddingKind::Query,
            "qe" => EmbeddingKind::QueryElement,
            "ent" => EmbeddingKind::EntailmentScore,
            _ => return None,
        })
    }
}

/// `<kind>:<doc_id>/<local_id>[/<element_idx>]`. Entailment keys use
/// `<comp_id>@<query_id>` as the local id.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EmbeddingKey {
    pub kind: EmbeddingKind,
    pub doc_id: String,
    pub local_id: String,
    pub element_idx: Option<usize>,
}

impl EmbeddingKey {
    fn new(kind: EmbeddingKind, doc_id: &str, local_id: &str) -> Self {
        Self {
            kind,
            doc_id: doc_id.to_owned(),
            local_id: local_id.to_owned(),
            element_idx: None,
        }
    }

    pub fn component(doc_id: &str, comp_id: &str) -> Self {
        Self::new(EmbeddingKind::Component, doc_id, comp_id)
    }

    pub fn entity(doc_id: &str, ent_id: &str) -> Self {
        Self::new(EmbeddingKind::Entity, doc_id, ent_id)
    }

    pub fn query(doc_id: &str, query_id: &str) -> Self {
        Self::new(EmbeddingKind::Query, doc_id, query_id)
    }

    pub fn query_element(doc_id: &str, query_id: &str, idx: usize) -> Self {
        Self {
            element_idx: Some(idx),
            ..Self::new(EmbeddingKind::QueryElement, doc_id, query_id)
        }
    }

    pub fn entailment(doc_id: &str, comp_id: &str, query_id: &str) -> Self {
        Self::new(
            EmbeddingKind::EntailmentScore,
            doc_id,
            &format!("{comp_id}@{query_id}"),
        )
    }
}

impl fmt::Display for EmbeddingKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}/{}", self.kind.code(), self.doc_id, self.local_id)?;
        if let Some(i) = self.element_idx {
            write!(f, "/{i}")?;
        }
        Ok(())
    }
}

impl FromStr for EmbeddingKey {
    type Err = EmbedError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || EmbedError::BadKey(s.to_owned());
        let (code, rest) = s.split_once(':').ok_or_else(bad)?;
        let kind = EmbeddingKind::from_code(code).ok_or_else(bad)?;
        let parts: Vec<&str> = rest.split('/').collect();
        if parts.iter().any(|p| p.is_empty()) {
            return Err(bad());
        }
        let element_idx = match (kind, parts.len()) {
            (EmbeddingKind::QueryElement, 3) => Some(parts[2].parse().map_err(|_| bad())?),
            (EmbeddingKind::QueryElement, _) => return Err(bad()),
            (_, 2) => None,
            _ => return Err(bad()),
        };
        if kind == EmbeddingKind::EntailmentScore && !parts[1].contains('@') {
            return Err(bad());
        }
        Ok(Self {
            kind,
            doc_id: parts[0].to_owned(),
            local_id: parts[1].to_owned(),
            element_idx,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    dim: usize,
}

#[derive(Serialize, Deserialize)]
struct Record {
    id: String,
    vec: Vec<f64>,
}

/// Keyed vectors sharing one dimension (entailment scores are 1-dim).
#[derive(Debug, Default)]
pub struct EmbeddingStore {
    dim: usize,
    entries: BTreeMap<EmbeddingKey, Vec<f64>>,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl Clone for EmbeddingStore {
    fn clone(&self) -> Self {
        Self {
            dim: self.dim,
            entries: self.entries.clone(),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        }
    }
}

impl PartialEq for EmbeddingStore {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.entries == other.entries
    }
}

impl EmbeddingStore {
    /// An empty store: every lookup uses the hash fallback.
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            ..Self::default()
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = &EmbeddingKey> {
        self.entries.keys()
    }

    pub fn insert(&mut self, key: EmbeddingKey, vec: Vec<f64>) -> Result<()> {
        let expected = if key.kind == EmbeddingKind::EntailmentScore {
            1
        } else {
            self.dim
        };
        if vec.len() != expected {
            return Err(EmbedError::DimensionMismatch {
                key: key.to_string(),
                expected,
                actual: vec.len(),
            });
        }
        if key.kind == EmbeddingKind::EntailmentScore && !(0.0..=1.0).contains(&vec[0]) {
            return Err(EmbedError::BadKey(format!("{key} (score outside [0, 1])")));
        }
        if vec.iter().any(|x| !x.is_finite()) {
            return Err(EmbedError::BadKey(format!("{key} (non-finite value)")));
        }
        if self.entries.contains_key(&key) {
            return Err(EmbedError::DuplicateKey(key.to_string()));
        }
        self.entries.insert(key, vec);
        Ok(())
    }

    pub fn lookup(&self, key: &EmbeddingKey) -> Option<&[f64]> {
        self.entries.get(key).map(Vec::as_slice)
    }

    /// Stored vector, or the hash embedding of `fallback_text`.
    pub fn get(&self, key: &EmbeddingKey, fallback_text: &str) -> Vec<f64> {
        match self.entries.get(key) {
            Some(v) => {
                self.hits.fetch_add(1, Ordering::Relaxed);
                log::trace!("embedding hit {key}");
                v.clone()
            }
            None => {
                self.misses.fetch_add(1, Ordering::Relaxed);
                log::trace!("embedding miss {key}, hashing fallback text");
                hash_embed(fallback_text, self.dim)
            }
        }
    }

    pub fn entailment(&self, doc_id: &str, comp_id: &str, query_id: &str) -> Option<f64> {
        self.entries
            .get(&EmbeddingKey::entailment(doc_id, comp_id, query_id))
            .map(|v| v[0])
    }

    /// `(hits, misses)` since construction.
    pub fn lookup_counts(&self) -> (u64, u64) {
        (
            self.hits.load(Ordering::Relaxed),
            self.misses.load(Ordering::Relaxed),
        )
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io_err = |source| EmbedError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
        self.write_to(&mut w).map_err(io_err)?;
        w.flush().map_err(io_err)
    }

    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        serde_json::to_writer(&mut *w, &Header { dim: self.dim })?;
        writeln!(w)?;
        for (key, vec) in &self.entries {
            let rec = Record {
                id: key.to_string(),
                vec: vec.clone(),
            };
            serde_json::to_writer(&mut *w, &rec)?;
            writeln!(w)?;
        }
        Ok(())
    }
}

pub fn load_embeddings(path: impl AsRef<Path>, expected_dim: usize) -> Result<EmbeddingStore> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| EmbedError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_embeddings(BufReader::new(file), expected_dim)
}

/// Loads a file whose dimension is taken from its own header.
pub fn open_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingStore> {
    let path = path.as_ref();
    let io_err = |source| EmbedError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut reader = BufReader::new(File::open(path).map_err(io_err)?);
    let mut first = String::new();
    reader.read_line(&mut first).map_err(io_err)?;
    let header: Header = serde_json::from_str(&first).map_err(|e| EmbedError::Malformed {
        line: 1,
        message: format!("bad header: {e}"),
    })?;
    read_embeddings(first.as_bytes().chain(reader), header.dim)
}

pub fn read_embeddings(reader: impl BufRead, expected_dim: usize) -> Result<EmbeddingStore> {
    let mut lines = reader.lines().enumerate();
    let malformed = |line: usize, message: String| EmbedError::Malformed {
        line: line + 1,
        message,
    };
    let (_, header) = lines
        .next()
        .ok_or_else(|| malformed(0, "missing header".into()))?;
    let header = header.map_err(|e| malformed(0, e.to_string()))?;
    let header: Header =
        serde_json::from_str(&header).map_err(|e| malformed(0, format!("bad header: {e}")))?;
    if header.dim != expected_dim {
        return Err(EmbedError::DimensionMismatch {
            key: "header".into(),
            expected: expected_dim,
            actual: header.dim,
        });
    }
    let mut store = EmbeddingStore::new(header.dim);
    for (i, line) in lines {
        let line = line.map_err(|e| malformed(i, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| malformed(i, e.to_string()))?;
        let key: EmbeddingKey = rec.id.parse()?;
        store.insert(key, rec.vec)?;
    }
    Ok(store)
}

/// Character trigrams (with `#` boundary padding) feature-hashed by 64-bit
/// FNV-1a into `dim` signed buckets, then L2-normalized.
pub fn hash_embed(text: &str, dim: usize) -> Vec<f64> {
    assert!(dim >= 8, "hash embedding dimension must be at least 8");
    let mut v = vec![0.0; dim];
    let folded: String = text.trim().chars().flat_map(char::to_lowercase).collect();
    if folded.is_empty() {
        return v;
    }
    let chars: Vec<char> = std::iter::once('#')
        .chain(folded.chars())
        .chain(std::iter::once('#'))
        .collect();
    let mut buf = [0u8; 16];
    for w in chars.windows(3) {
        let mut h = FnvHasher::default();
        for c in w {
            h.write(c.encode_utf8(&mut buf).as_bytes());
        }
        let h = h.finish();
        let bucket = (h % dim as u64) as usize;
        let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
        v[bucket] += sign;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

pub fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

/// `u·v / (|u| |v|)`, zero when either vector is zero.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(EmbedError::DimMismatch(u.len(), v.len()));
    }
    let nu = dot(u, u).sqrt();
    let nv = dot(v, v).sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Ok(0.0);
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Cosine for vectors already known to share a dimension.
pub(crate) fn cos(u: &[f64], v: &[f64]) -> f64 {
    cosine(u, v).expect("store vectors share one dimension")
}

/// Fills `{1}`, `{2}`, ... with the query elements, or renders the default
/// question when the query has no template.
pub fn build_query_text(q: &Query) -> Result<String> {
    let Some(template) = &q.question_template else {
        return Ok(format!("What is the answer for {}?", q.elements.join(", ")));
    };
    let slot = regex::Regex::new(r"\{(\d+)\}").expect("static regex");
    let mut slots: Vec<usize> = slot
        .captures_iter(template)
        .map(|c| c[1].parse().unwrap_or(0))
        .collect();
    slots.sort_unstable();
    slots.dedup();
    let expected: Vec<usize> = (1..=q.elements.len()).collect();
    if slots != expected {
        return Err(EmbedError::SlotMismatch {
            slots: slots.len(),
            elements: q.elements.len(),
        });
    }
    Ok(slot
        .replace_all(template, |c: &regex::Captures| {
            let i: usize = c[1].parse().expect("validated slot");
            q.elements[i - 1].clone()
        })
        .into_owned())
}

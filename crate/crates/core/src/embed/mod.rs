//! Node vocabulary, embedding lookup, feature normalization and the
//! normalized dataset container.

mod dataset;

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::deps::NodeAttr;
use crate::gcn::DenseMatrix;
use crate::optimize::OptimizedGraph;

pub use dataset::{build_dataset, load_dataset, serialize_dataset, NormalizedDataset, DATASET_VERSION};

pub const UNK_TOKEN: &str = "<UNK>";

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("embedding matrix has {cols} columns but vocabulary has {vocab} entries")]
    DimensionMismatch { cols: usize, vocab: usize },
    #[error("non-finite value in row {row} of the feature matrix")]
    NonFiniteInput { row: usize },
    #[error("i/o failure on {path}: {source}")]
    IoFailure {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("schema mismatch in {path}: {detail}")]
    SchemaVersionMismatch { path: String, detail: String },
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
}

/// How a node becomes a vocabulary token.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TokenScheme {
    /// The node kind alone.
    #[default]
    Kind,
    /// Kind plus a bucket of the hashed name (or value), e.g. `Identifier#07`.
    KindWithNameBucket { buckets: u32 },
}

impl TokenScheme {
    pub fn token(&self, node: &NodeAttr) -> String {
        match *self {
            TokenScheme::Kind => node.n_type.clone(),
            TokenScheme::KindWithNameBucket { buckets } => {
                match node.n_name.as_deref().or(node.n_value.as_deref()) {
                    Some(text) if buckets > 0 => {
                        format!("{}#{:02}", node.n_type, fnv1a(text.as_bytes()) % u64::from(buckets))
                    }
                    _ => node.n_type.clone(),
                }
            }
        }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

/// Dense token index (`word2idx`). `<UNK>` always takes the last index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    word2idx: HashMap<String, usize>,
    scheme: TokenScheme,
}

impl Vocabulary {
    /// Builds a vocabulary from tokens listed in index order; the last one
    /// must be `<UNK>`.
    pub fn from_tokens(tokens: Vec<String>, scheme: TokenScheme) -> Result<Self, EmbedError> {
        if tokens.last().map(String::as_str) != Some(UNK_TOKEN) {
            return Err(EmbedError::InvalidDataset("vocabulary must end with <UNK>".into()));
        }
        let word2idx: HashMap<String, usize> = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        if word2idx.len() != tokens.len() {
            return Err(EmbedError::InvalidDataset("duplicate vocabulary token".into()));
        }
        Ok(Vocabulary { tokens, word2idx, scheme })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn unk_index(&self) -> usize {
        self.tokens.len() - 1
    }

    pub fn scheme(&self) -> TokenScheme {
        self.scheme
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn index_of(&self, token: &str) -> usize {
        self.word2idx.get(token).copied().unwrap_or_else(|| self.unk_index())
    }

    pub fn word2idx(&self) -> BTreeMap<&str, usize> {
        self.word2idx.iter().map(|(k, &v)| (k.as_str(), v)).collect()
    }

    pub fn index_of_node(&self, node: &NodeAttr) -> usize {
        self.index_of(&self.scheme.token(node))
    }
}

/// Counts node tokens over all graphs and indexes those seen at least
/// `min_count` times, most frequent first, ties broken lexicographically.
pub fn build_vocabulary(graphs: &[OptimizedGraph], min_count: usize, scheme: TokenScheme) -> Vocabulary {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for node in graphs.iter().flat_map(|g| g.nodes.values()) {
        *counts.entry(scheme.token(node)).or_default() += 1;
    }
    let mut frequent: Vec<(String, usize)> =
        counts.into_iter().filter(|(t, c)| *c >= min_count && t != UNK_TOKEN).collect();
    frequent.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let mut tokens: Vec<String> = frequent.into_iter().map(|(t, _)| t).collect();
    tokens.push(UNK_TOKEN.to_owned());
    Vocabulary::from_tokens(tokens, scheme).expect("tokens are unique and end with <UNK>")
}

/// Embedding matrix `M` of shape `embedding_dim × vocab_size`; a node's
/// feature vector is the column of its token.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub m: DenseMatrix,
}

impl EmbeddingMatrix {
    /// Entries drawn uniformly from `[-0.1, 0.1]`.
    pub fn seeded(embedding_dim: usize, vocab_size: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..embedding_dim * vocab_size).map(|_| rng.gen_range(-0.1..=0.1)).collect();
        EmbeddingMatrix { m: DenseMatrix::from_vec(embedding_dim, vocab_size, data) }
    }

    pub fn dim(&self) -> usize {
        self.m.rows()
    }

    pub fn vocab_size(&self) -> usize {
        self.m.cols()
    }

    /// Rows `M[:, idx]` for each index.
    pub fn lookup(&self, indices: &[usize]) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(indices.len(), self.dim());
        for (r, &idx) in indices.iter().enumerate() {
            for d in 0..self.dim() {
                out[(r, d)] = self.m[(d, idx)];
            }
        }
        out
    }
}

/// Feature matrix of a graph, one row per node in ascending id order.
pub fn embed_nodes(g: &OptimizedGraph, vocab: &Vocabulary, m: &EmbeddingMatrix) -> Result<DenseMatrix, EmbedError> {
    if m.vocab_size() != vocab.len() {
        return Err(EmbedError::DimensionMismatch { cols: m.vocab_size(), vocab: vocab.len() });
    }
    let indices: Vec<usize> = g.nodes.values().map(|n| vocab.index_of_node(n)).collect();
    Ok(m.lookup(&indices))
}

/// Scales every row to unit Euclidean norm; all-zero rows stay zero.
pub fn normalize_features(x: &DenseMatrix) -> Result<DenseMatrix, EmbedError> {
    let mut out = x.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        if row.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::NonFiniteInput { row: r });
        }
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|v| *v /= norm);
        }
    }
    Ok(out)
}

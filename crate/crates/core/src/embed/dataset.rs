use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use super::{embed_nodes, normalize_features, EmbedError, EmbeddingMatrix, TokenScheme, Vocabulary};
use crate::codec::{Reader, Writer};
use crate::gcn::DenseMatrix;
use crate::optimize::OptimizedGraph;

const MAGIC: &[u8; 4] = b"SGDS";
const END_MARKER: &[u8; 4] = b"SGDE";
pub const DATASET_VERSION: u32 = 1;

/// Concatenated normalized graphs ready for training.
///
/// Node rows of graph `g` occupy `graph_boundaries[g] = (start, end)`; edge
/// indices are global row indices and never cross a boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedDataset {
    pub node_ids: Vec<i64>,
    pub node_labels: Vec<String>,
    pub edge_list: Vec<(u32, u32)>,
    pub features: DenseMatrix,
    pub graph_boundaries: Vec<(usize, usize)>,
    pub graph_labels: Vec<Option<bool>>,
    pub graph_names: Vec<String>,
    pub vocabulary: Vocabulary,
    pub embedding: EmbeddingMatrix,
}

impl NormalizedDataset {
    pub fn num_graphs(&self) -> usize {
        self.graph_boundaries.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.node_ids.len()
    }

    /// Edges of graph `g` with indices local to the graph.
    pub fn graph_edges(&self, g: usize) -> Vec<(usize, usize)> {
        let (start, end) = self.graph_boundaries[g];
        self.edge_list
            .iter()
            .map(|&(i, j)| (i as usize, j as usize))
            .filter(|&(i, _)| i >= start && i < end)
            .map(|(i, j)| (i - start, j - start))
            .collect()
    }

    /// A dataset holding only the listed graphs, in the given order.
    pub fn subset(&self, graphs: &[usize]) -> NormalizedDataset {
        let dim = self.features.cols();
        let mut out = NormalizedDataset {
            node_ids: Vec::new(),
            node_labels: Vec::new(),
            edge_list: Vec::new(),
            features: DenseMatrix::zeros(0, dim),
            graph_boundaries: Vec::new(),
            graph_labels: Vec::new(),
            graph_names: Vec::new(),
            vocabulary: self.vocabulary.clone(),
            embedding: self.embedding.clone(),
        };
        let mut rows = Vec::new();
        for &g in graphs {
            let (start, end) = self.graph_boundaries[g];
            let new_start = out.node_ids.len();
            out.node_ids.extend_from_slice(&self.node_ids[start..end]);
            out.node_labels.extend_from_slice(&self.node_labels[start..end]);
            rows.extend_from_slice(&self.features.data()[start * dim..end * dim]);
            for (i, j) in self.graph_edges(g) {
                out.edge_list.push(((i + new_start) as u32, (j + new_start) as u32));
            }
            out.graph_boundaries.push((new_start, new_start + (end - start)));
            out.graph_labels.push(self.graph_labels[g]);
            out.graph_names.push(self.graph_names[g].clone());
        }
        out.features = DenseMatrix::from_vec(out.node_ids.len(), dim, rows);
        out
    }

    fn validate(&self) -> Result<(), EmbedError> {
        let n = self.node_ids.len();
        let bad = |m: &str| Err(EmbedError::InvalidDataset(m.to_owned()));
        if self.node_labels.len() != n || self.features.rows() != n {
            return bad("node section lengths disagree");
        }
        if self.graph_labels.len() != self.graph_boundaries.len() || self.graph_names.len() != self.graph_boundaries.len() {
            return bad("graph section lengths disagree");
        }
        let mut expected_start = 0;
        for &(start, end) in &self.graph_boundaries {
            if start != expected_start || end < start || end > n {
                return bad("graph boundaries are not contiguous");
            }
            expected_start = end;
        }
        if expected_start != n {
            return bad("graph boundaries do not cover all nodes");
        }
        if self.edge_list.iter().any(|&(i, j)| i as usize >= n || j as usize >= n) {
            return bad("edge index out of range");
        }
        if !self.features.is_finite() {
            return bad("non-finite feature");
        }
        if self.embedding.vocab_size() != self.vocabulary.len() {
            return bad("embedding does not match vocabulary");
        }
        Ok(())
    }
}

/// Embeds, normalizes and concatenates named graphs.
pub fn build_dataset(
    graphs: &[(String, OptimizedGraph)],
    vocab: &Vocabulary,
    m: &EmbeddingMatrix,
) -> Result<NormalizedDataset, EmbedError> {
    let dim = m.dim();
    let mut ds = NormalizedDataset {
        node_ids: Vec::new(),
        node_labels: Vec::new(),
        edge_list: Vec::new(),
        features: DenseMatrix::zeros(0, dim),
        graph_boundaries: Vec::new(),
        graph_labels: Vec::new(),
        graph_names: Vec::new(),
        vocabulary: vocab.clone(),
        embedding: m.clone(),
    };
    let mut rows: Vec<f64> = Vec::new();
    for (name, g) in graphs {
        let start = ds.node_ids.len();
        let features = normalize_features(&embed_nodes(g, vocab, m)?)?;
        rows.extend_from_slice(features.data());
        let local: BTreeMap<i64, usize> = g.nodes.keys().enumerate().map(|(i, &id)| (id, i)).collect();
        for node in g.nodes.values() {
            ds.node_ids.push(node.n_id);
            ds.node_labels.push(vocab.scheme().token(node));
        }
        let mut seen = HashSet::new();
        for e in &g.edges {
            let (Some(&i), Some(&j)) = (local.get(&e.e_start), local.get(&e.e_end)) else {
                continue;
            };
            let pair = ((start + i) as u32, (start + j) as u32);
            if seen.insert(pair) {
                ds.edge_list.push(pair);
            }
        }
        ds.graph_boundaries.push((start, ds.node_ids.len()));
        ds.graph_labels.push(g.graph_label);
        ds.graph_names.push(name.clone());
    }
    ds.features = DenseMatrix::from_vec(ds.node_ids.len(), dim, rows);
    Ok(ds)
}

fn encode(d: &NormalizedDataset) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(MAGIC);
    w.u32(DATASET_VERSION);

    w.u64(d.node_ids.len() as u64);
    d.node_ids.iter().for_each(|&id| w.i64(id));
    d.node_labels.iter().for_each(|l| w.str(l));

    w.u64(d.edge_list.len() as u64);
    for &(i, j) in &d.edge_list {
        w.u32(i);
        w.u32(j);
    }

    w.matrix(&d.features);

    w.u64(d.graph_boundaries.len() as u64);
    for ((&(start, end), label), name) in d.graph_boundaries.iter().zip(&d.graph_labels).zip(&d.graph_names) {
        w.u64(start as u64);
        w.u64(end as u64);
        w.u8(match label {
            Some(false) => 0,
            Some(true) => 1,
            None => 2,
        });
        w.str(name);
    }

    match d.vocabulary.scheme() {
        TokenScheme::Kind => {
            w.u8(0);
            w.u32(0);
        }
        TokenScheme::KindWithNameBucket { buckets } => {
            w.u8(1);
            w.u32(buckets);
        }
    }
    w.u64(d.vocabulary.len() as u64);
    d.vocabulary.tokens().iter().for_each(|t| w.str(t));
    w.matrix(&d.embedding.m);
    w.bytes(END_MARKER);
    w.finish()
}

fn decode(bytes: &[u8], path: &str) -> Result<NormalizedDataset, EmbedError> {
    let io = |source: std::io::Error| EmbedError::IoFailure { path: path.to_owned(), source };
    let schema = |detail: String| EmbedError::SchemaVersionMismatch { path: path.to_owned(), detail };
    let mut r = Reader::new(bytes);

    let magic = r.take(4).map_err(|_| schema("file too short for header".into()))?;
    if magic != MAGIC {
        return Err(schema(format!("bad magic {magic:?}")));
    }
    let version = r.u32().map_err(|_| schema("file too short for header".into()))?;
    if version != DATASET_VERSION {
        return Err(schema(format!("version {version}, expected {DATASET_VERSION}")));
    }

    let n = r.count(8).map_err(io)?;
    let node_ids = (0..n).map(|_| r.i64()).collect::<Result<Vec<_>, _>>().map_err(io)?;
    let node_labels = (0..n).map(|_| r.str()).collect::<Result<Vec<_>, _>>().map_err(io)?;

    let edges = r.count(8).map_err(io)?;
    let edge_list = (0..edges).map(|_| Ok((r.u32()?, r.u32()?))).collect::<Result<Vec<_>, std::io::Error>>().map_err(io)?;

    let features = r.matrix().map_err(io)?;

    let graphs = r.count(17).map_err(io)?;
    let mut graph_boundaries = Vec::with_capacity(graphs);
    let mut graph_labels = Vec::with_capacity(graphs);
    let mut graph_names = Vec::with_capacity(graphs);
    for _ in 0..graphs {
        graph_boundaries.push((r.u64().map_err(io)? as usize, r.u64().map_err(io)? as usize));
        graph_labels.push(match r.u8().map_err(io)? {
            0 => Some(false),
            1 => Some(true),
            2 => None,
            other => return Err(EmbedError::InvalidDataset(format!("label byte {other}"))),
        });
        graph_names.push(r.str().map_err(io)?);
    }

    let scheme = match (r.u8().map_err(io)?, r.u32().map_err(io)?) {
        (0, _) => TokenScheme::Kind,
        (1, buckets) => TokenScheme::KindWithNameBucket { buckets },
        (other, _) => return Err(EmbedError::InvalidDataset(format!("token scheme {other}"))),
    };
    let vocab_len = r.count(4).map_err(io)?;
    let tokens = (0..vocab_len).map(|_| r.str()).collect::<Result<Vec<_>, _>>().map_err(io)?;
    let vocabulary = Vocabulary::from_tokens(tokens, scheme)?;
    let embedding = EmbeddingMatrix { m: r.matrix().map_err(io)? };

    if r.take(4).map_err(io)? != END_MARKER {
        return Err(schema("missing end marker".into()));
    }
    let ds = NormalizedDataset {
        node_ids,
        node_labels,
        edge_list,
        features,
        graph_boundaries,
        graph_labels,
        graph_names,
        vocabulary,
        embedding,
    };
    ds.validate()?;
    Ok(ds)
}

/// Writes the `SGDS` container.
pub fn serialize_dataset(d: &NormalizedDataset, path: &Path) -> Result<(), EmbedError> {
    d.validate()?;
    std::fs::write(path, encode(d)).map_err(|source| EmbedError::IoFailure { path: path.display().to_string(), source })
}

pub fn load_dataset(path: &Path) -> Result<NormalizedDataset, EmbedError> {
    let bytes = std::fs::read(path).map_err(|source| EmbedError::IoFailure { path: path.display().to_string(), source })?;
    decode(&bytes, &path.display().to_string())
}

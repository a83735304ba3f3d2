//! `SGMD` checkpoint container: header, config block, vocabulary snapshot,
//! then every matrix as `(rows u32, cols u32, row-major f64)`, weights first
//! and the embedding last.

use std::path::Path;

use super::{DenseMatrix, GcnConfig, GcnError, GcnModel};
use crate::codec::{Reader, Writer};
use crate::embed::{EmbeddingMatrix, TokenScheme, Vocabulary};

const MAGIC: &[u8; 4] = b"SGMD";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_checkpoint(model: &GcnModel) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(MAGIC);
    w.u32(CHECKPOINT_VERSION);

    let c = &model.config;
    w.u32(c.embedding_dim as u32);
    w.u32(c.hidden_dims.len() as u32);
    c.hidden_dims.iter().for_each(|&d| w.u32(d as u32));
    w.u32(c.num_classes as u32);
    w.u64(c.seed);
    w.u8(u8::from(c.train_embedding));

    match model.vocabulary.scheme() {
        TokenScheme::Kind => {
            w.u8(0);
            w.u32(0);
        }
        TokenScheme::KindWithNameBucket { buckets } => {
            w.u8(1);
            w.u32(buckets);
        }
    }
    w.u32(model.vocabulary.len() as u32);
    model.vocabulary.tokens().iter().for_each(|t| w.str(t));

    w.u32(model.weights.len() as u32 + 1);
    model.weights.iter().for_each(|m| w.matrix(m));
    w.matrix(&model.embedding.m);
    w.finish()
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<GcnModel, GcnError> {
    let trunc = |e: std::io::Error| GcnError::InvalidCheckpoint(e.to_string());
    let mut r = Reader::new(bytes);
    let magic = r.take(4).map_err(|_| GcnError::SchemaVersionMismatch("file too short for header".into()))?;
    if magic != MAGIC {
        return Err(GcnError::SchemaVersionMismatch(format!("bad magic {magic:?}, expected SGMD")));
    }
    let version = r.u32().map_err(|_| GcnError::SchemaVersionMismatch("file too short for header".into()))?;
    if version != CHECKPOINT_VERSION {
        return Err(GcnError::SchemaVersionMismatch(format!("version {version}, expected {CHECKPOINT_VERSION}")));
    }

    let embedding_dim = r.u32().map_err(trunc)? as usize;
    let layers = r.u32().map_err(trunc)? as usize;
    if layers > r.remaining() / 4 {
        return Err(GcnError::InvalidCheckpoint("layer count exceeds file".into()));
    }
    let hidden_dims = (0..layers).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>().map_err(trunc)?;
    let num_classes = r.u32().map_err(trunc)? as usize;
    let seed = r.u64().map_err(trunc)?;
    let train_embedding = r.u8().map_err(trunc)? != 0;
    let config = GcnConfig { embedding_dim, hidden_dims, num_classes, seed, train_embedding };

    let scheme = match (r.u8().map_err(trunc)?, r.u32().map_err(trunc)?) {
        (0, _) => TokenScheme::Kind,
        (1, buckets) => TokenScheme::KindWithNameBucket { buckets },
        (other, _) => return Err(GcnError::InvalidCheckpoint(format!("token scheme {other}"))),
    };
    let vocab_len = r.u32().map_err(trunc)? as usize;
    if vocab_len > r.remaining() / 4 {
        return Err(GcnError::InvalidCheckpoint("vocabulary size exceeds file".into()));
    }
    let tokens = (0..vocab_len).map(|_| r.str()).collect::<Result<Vec<_>, _>>().map_err(trunc)?;
    let vocabulary =
        Vocabulary::from_tokens(tokens, scheme).map_err(|e| GcnError::InvalidCheckpoint(e.to_string()))?;

    let count = r.u32().map_err(trunc)? as usize;
    if count < 2 || count > r.remaining() / 8 {
        return Err(GcnError::InvalidCheckpoint(format!("{count} matrices")));
    }
    let mut matrices: Vec<DenseMatrix> = (0..count).map(|_| r.matrix()).collect::<Result<_, _>>().map_err(trunc)?;
    if r.remaining() != 0 {
        return Err(GcnError::InvalidCheckpoint(format!("{} trailing bytes", r.remaining())));
    }
    let embedding = EmbeddingMatrix { m: matrices.pop().expect("count >= 2") };
    let model = GcnModel { config, weights: matrices, embedding, vocabulary };
    model.check_structure()?;
    Ok(model)
}

pub fn save_checkpoint(model: &GcnModel, path: &Path) -> Result<(), GcnError> {
    std::fs::write(path, encode_checkpoint(model))
        .map_err(|source| GcnError::IoFailure { path: path.display().to_string(), source })
}

pub fn load_checkpoint(path: &Path) -> Result<GcnModel, GcnError> {
    let bytes = std::fs::read(path).map_err(|source| GcnError::IoFailure { path: path.display().to_string(), source })?;
    decode_checkpoint(&bytes)
}

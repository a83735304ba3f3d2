//! Smart-contract defect detection over compiler ASTs: ingestion, dependency
//! graphs, graph optimization, embeddings and a graph convolutional
//! classifier.

pub(crate) mod codec;

pub mod ast;
pub mod deps;
pub mod embed;
pub mod gcn;
pub mod optimize;
pub mod train;
pub mod pipeline;
pub mod synth;

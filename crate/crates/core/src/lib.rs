//! Graph auto-encoder for clustering companies from news co-mentions and
//! price co-movement.
//!
//! The pipeline: [`ingest`] raw CSVs, build the co-occurrence graph in
//! [`graph`] and return features in [`features`], train the encoder in
//! [`gae`] with the protocol in [`train`], then [`cluster`] the embedding.
//! [`pipeline`] wires the steps into commands and [`synth`] generates
//! planted-partition inputs.

pub mod cluster;
pub mod error;
pub mod features;
pub mod gae;
pub mod graph;
pub mod ingest;
pub mod linalg;
pub mod pipeline;
pub mod seed;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use graph::WeightedGraph;
pub use tensor::Matrix;

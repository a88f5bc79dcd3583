//! Topic discovery for short-text corpora.
//!
//! The pipeline turns raw documents into a TF-IDF term-document matrix,
//! removes exact duplicates, filters noise with an ensemble of a consensus
//! matrix and density-based voting, picks a topic count from the Laplacian
//! eigengap, and clusters the remaining documents with consensus k-means and
//! nonnegative matrix factorization.

pub mod config;
pub mod consensus;
pub mod corpus;
pub mod dbscan;
pub mod error;
pub mod export;
pub mod kmeans;
pub mod metrics;
pub mod nmf;
pub mod pipeline;
pub mod seed;
pub mod sparsemat;
pub mod spectral;
pub mod topics;

pub use config::PipelineConfig;
pub use consensus::{ConsensusMatrix, NoiseVerdict};
pub use corpus::{Document, StopList, TermDocMatrix, Vocabulary};
pub use dbscan::{DbscanParams, PointClass};
pub use error::{Error, Result};
pub use kmeans::ClusterAssignment;
pub use nmf::{FactorPair, NmfAlgorithm, NmfConfig};
pub use pipeline::{run_pipeline, RunManifest};
pub use sparsemat::DistanceMatrix;
pub use topics::TopicSummary;

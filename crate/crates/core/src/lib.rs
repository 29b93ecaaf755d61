//! Graph-regularized PCA for recommendation-aware embedding initialization,
//! loss-geometry diagnostics for softmax cross-entropy, and a small sequential
//! recommender used to observe how initialization and candidate normalization
//! shape training.
//!
//! The pipeline:
//!
//! 1. [`ingest`] reads interaction logs and embedding matrices (or synthesizes both).
//! 2. [`graph`] builds the item co-occurrence graph and its normalized Laplacian.
//! 3. [`recpca`] reduces embeddings while penalizing total variation on that graph.
//! 4. [`trainer`] trains a recommender from the reduced embeddings.
//! 5. [`conditioning`] measures coherence and Hessian condition numbers and checks
//!    them against the analytic bounds.

pub mod conditioning;
pub mod error;
pub mod graph;
pub mod ingest;
pub mod linalg;
pub mod matrix;
pub mod recpca;
pub mod trainer;

pub use error::{Error, Result};
pub use matrix::EmbeddingMatrix;

//! Staged theme-extraction pipeline for social-media corpora.
//!
//! The library walks a post corpus through eight stages: ingest (clean +
//! filter), embed (pluggable provider), compress (autoencoder trained per
//! compression ratio), factorize (truncated SVD with explained-variance rank
//! selection), cluster (k-means with elbow selection plus quality indices),
//! sample (Cochran-sized, silhouette-ranked representatives), themes (a
//! two-model generate/grade refinement loop), and report (word-cloud, Sankey,
//! metric-table, and curve data as JSON/CSV).
//!
//! Numeric code is generic over [`Scalar`] (f32 or f64); the pipeline itself
//! runs at [`Real`] precision and persists matrices as little-endian f32.

pub mod agentic;
pub mod autoencoder;
pub mod binio;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod latent;
pub mod pipeline;
pub mod report;
pub mod sampling;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Scalar type the pipeline stages run at.
pub type Real = f64;
/// Dense matrix at pipeline precision.
pub type RealMat = ndarray::Array2<Real>;
/// Dense vector at pipeline precision.
pub type RealVec = ndarray::Array1<Real>;

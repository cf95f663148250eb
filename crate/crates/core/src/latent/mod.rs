//! Latent-structure extraction: truncated SVD on the compressed matrix,
//! explained-variance rank selection, k-means with elbow selection, and the
//! three cluster-quality indices.

pub mod kmeans;
pub mod quality;
pub mod svd;

pub use kmeans::{elbow_select, kmeans, ClusterModel, ElbowResult};
pub use quality::{ch_index, cluster_quality, db_index, silhouette, ClusterQuality, SilhouetteScores};
pub use svd::{explained_variance, select_rank, truncated_svd, SvdFactors};

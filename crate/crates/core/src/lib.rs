//! Builds domain-filtered, edge-labeled knowledge graphs from sparse
//! autoencoder feature activations.

pub mod bundle;
pub mod client;
pub mod compress;
pub mod cooc;
pub mod error;
pub mod filter;
pub mod fixture;
pub mod hierarchy;
pub mod ids;
pub mod ingest;
pub mod mechanism;
pub mod metrics;
pub mod pipeline;
pub mod presence;
pub mod relate;
pub mod service;
pub mod util;
pub mod workspace;

pub use error::{Error, Result};
pub use ids::{FeatureId, Granularity, Site};

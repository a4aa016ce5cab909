//! Model-based clustering with regularized Gaussian mixtures.
//!
//! The crate fits full-covariance Gaussian mixture models by EM with pluggable
//! covariance shrinkage (fixed, Ledoit-Wolf, or OAS intensity), and wraps the
//! local search in three meta-strategies: multi-start, random swap, and a
//! hybrid genetic search with assignment-based crossover. A Lloyd k-means
//! baseline plugs into the same strategies. External validity metrics
//! (ARI, NMI, centroid index, Wilcoxon signed-rank), a separation-controlled
//! synthetic generator, and a benchmark harness round out the toolkit.

pub mod covariance;
pub mod datagen;
pub mod error;
pub mod exec;
pub mod gmm;
pub mod harness;
pub mod kmeans;
pub mod metrics;
pub mod search;

pub use error::{Error, Result};

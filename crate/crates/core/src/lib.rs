//! Toolkit for distributing new-period usages of polysemous words between
//! the old dictionary senses and automatically discovered novel senses.
//!
//! The pipeline works over precomputed embedding tables:
//!
//! - [`corpus`] parses the usage dataset and locates target-word occurrences.
//! - [`geometry`] stores embeddings and provides the distance kernels.
//! - [`disambiguation`] assigns each new usage its most similar old gloss.
//! - [`clustering`] implements agglomerative sense induction and AggloM.
//! - [`nsd`] is the novel sense detector (features, scaler, logistic regression).
//! - [`scm`] combines the above into Cluster2Sense and Outlier2Cluster.
//! - [`metrics`] scores predictions (ARI, shared-task F1, average precision).
//! - [`pipeline`] wires everything into the commands exposed by the CLI.

pub mod clustering;
pub mod corpus;
pub mod disambiguation;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod nsd;
pub mod parallel;
pub mod pipeline;
pub mod scm;
pub mod synth;

pub use error::{Error, Result};

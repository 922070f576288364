//! Extraction of causal patterns: several Granger-causal relationships that
//! alternate in time between a pair of multivariate series.
//!
//! The pipeline is
//! 1. [`preprocess`]: features, delay embeddings and PCA-reduced regression
//!    blocks (effect present, effect past, cause past);
//! 2. [`mppcca`]: a mixture of probabilistic partial CCA models fitted by EM,
//!    giving each sample a posterior over causal regimes;
//! 3. [`clustering`]: hard assignment, misallocation scoring against known
//!    regimes, and a Granger-causality index per recovered cluster via
//!    [`pcca`].
//!
//! [`synthgen`] produces seeded benchmark series with known regimes.

// `!(x > 0.0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod clustering;
pub mod dataset;
pub mod error;
pub mod io;
pub mod linalg;
pub mod mppcca;
pub mod pcca;
pub mod preprocess;
pub mod synthgen;

pub use dataset::RegressionDataset;
pub use error::{Error, Result};

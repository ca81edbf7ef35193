//! Direct association analysis for case/control microbiome abundance data.
//!
//! Abundances are modelled as a multivariate Gaussian maximum-entropy
//! distribution over log-abundances. Host-specific fields `h` and shared
//! taxon-taxon interactions `J` are inferred from the first two moments,
//! and association testing is done on the fields rather than on the means.

pub mod assoc;
pub mod classify;
pub mod cli;
pub mod error;
pub mod ingest;
pub mod linalg;
pub mod maxent;
pub mod network;
pub mod robustness;
pub mod seed;
pub mod stats;
pub mod synth;
pub mod transform;

pub use error::{Error, Result};

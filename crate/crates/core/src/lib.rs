//! Simulation engine for time-driven synchronous federated learning.
//!
//! Clients train for a fixed wall-clock interval, so the number of local SGD
//! iterations each one completes differs. The server aggregates at interval
//! boundaries with one of several weighting rules, including discriminative
//! model selection (DMS), which filters clients that fell below the interval's
//! mean iteration count and spaces the survivors' weights linearly in their
//! iteration counts.

// Negated float comparisons are used on purpose: they reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aggregation;
pub mod analysis;
pub mod error;
pub mod experiment;
pub mod rng;
pub mod scheduler;
pub mod training;
pub mod types;

pub use error::{Error, Result};
pub use types::*;

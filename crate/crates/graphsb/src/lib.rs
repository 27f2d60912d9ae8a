//! Imbalanced node classification on graphs via structural balance:
//! structure enhancement, relation diffusion with edge dropout, a GNN
//! learner with mixup-style minority synthesis, and a numerical theory
//! lab for the underlying propagation analysis.

pub mod balance;
pub mod error;
pub mod eval;
pub mod graph;
pub mod learner;
pub mod metrics;
pub mod synthesis;
pub mod theory;

pub use error::{Result, SbError};

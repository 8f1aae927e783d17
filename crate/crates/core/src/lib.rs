//! Training and evaluation of binary scorers on class-imbalanced data.
//!
//! The crate covers the whole pipeline:
//!
//! * [`dataio`]: synthetic imbalanced Gaussian data, CSV feature ingestion and
//!   stratified train/val/test splits.
//! * [`scorer`]: linear and tanh-MLP score functions with analytic gradients,
//!   a finite-difference checker and a text checkpoint format.
//! * [`losses`]: cross-entropy, pairwise squared hinge and the AUC min-max
//!   margin objective with its primal-dual update.
//! * [`training`]: stratified minibatching and the training loop with
//!   best-validation checkpointing.
//! * [`metrics`]: exact AUC, confusion-derived metrics and F1-optimal
//!   threshold selection.
//! * [`trust`]: confidence normalization and question-answer trust scores.
//! * [`report`] and [`ablation`]: JSON evaluation reports and the seeded
//!   loss-function ablation harness.

pub mod ablation;
pub mod config;
pub mod dataio;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod report;
pub(crate) mod rng;
pub mod scorer;
pub mod training;
pub mod trust;

pub use error::{Error, Result};

/// Version string written into reports and checkpoints.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

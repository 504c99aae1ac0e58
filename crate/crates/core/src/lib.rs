//! Deep fair discriminative clustering.
//!
//! A small feed-forward clustering network is trained by maximizing the
//! mutual information between inputs and soft cluster assignments, then
//! refined against "fair" pseudo-labels produced by an exact min-cost-flow
//! solver that moves as little probability mass as possible while forcing
//! every cluster to mirror the population's protected-group proportions.
//!
//! Module map:
//!
//! * [`tensornet`]: dense network, softmax head, reverse-mode gradients, Adam.
//! * [`objectives`]: clustering, fairness, and virtual-adversarial losses.
//! * [`fairsolve`]: quota planning, flow encoding, solver, oracles, TU checks.
//! * [`metrics`]: balance, fairness, accuracy, NMI.
//! * [`trainer`]: pretraining, fair refinement, stopping rule, prediction.
//! * [`dataio`]: CSV and binary matrix IO, standardization, splits, synthetic data.

pub mod dataio;
pub mod error;
pub mod fairsolve;
pub mod metrics;
pub mod objectives;
pub mod tensornet;
pub mod trainer;

pub use error::{Error, Infeasibility, Result};
pub use fairsolve::{GroupMembership, HardAssignment, QuotaPlan, SoftAssignment};

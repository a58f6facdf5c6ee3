//! Desk-scale laboratory for preference-based reward modeling.
//!
//! The crate covers the whole path from raw multi-annotator preference data
//! to aligned tabular policies:
//!
//! - [`prefdata`]: ingestion, most-similar-subset aggregation, filtering,
//!   quadratic-weighted kappa and distribution diagnostics.
//! - [`justif`]: sentence splitting, preference-statement parsing, keyword
//!   analysis and pairwise-justifier record building.
//! - [`losses`]: Regular / Margin / Scaled Bradley-Terry and MSE losses with
//!   exact gradients, plus the representative-scenario loss table.
//! - [`rmcore`]: a one-hidden-layer reward model with regression and BT heads,
//!   attribute-weight grid search and weight extrapolation.
//! - [`trainer`]: deterministic minibatch training and checkpoint selection.
//! - [`benchharness`]: category-weighted pairwise accuracy.
//! - [`rlhfsim`]: DPO variants and leave-one-out REINFORCE on tabular policies.
//! - [`synth`]: seeded synthetic corpora and brute-force oracles.

pub mod benchharness;
pub mod error;
pub mod io;
pub mod justif;
pub mod losses;
pub mod optim;
pub mod prefdata;
pub mod rlhfsim;
pub mod rmcore;
pub mod synth;
pub mod trainer;

pub use error::{Error, ErrorClass, Result};

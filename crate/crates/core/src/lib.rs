//! Ordered Chinese restaurant processes: exact finite laws, event-driven
//! up-down simulation, scaffolding-and-spindles constructions, nested
//! restaurants and alpha-gamma trees, with the statistical tooling used to
//! check them against each other.

// `!(x > 0.0)` style guards deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod config;
pub mod error;
pub mod experiments;
pub mod nested;
pub mod ocrp;
pub mod partition;
pub mod pcrp;
pub mod restaurant;
pub mod rng;
pub mod scaffold;
pub mod stats;
pub mod updown;

pub use error::{Error, Result};
pub use ocrp::{CrpParams, ExactLaw};
pub use partition::{Composition, IntervalPartition};

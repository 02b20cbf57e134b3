//! Airway taper-rate measurement from volumetric CT.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod centreline;
pub mod cross_section;
pub mod error;
pub mod exec;
pub mod phantom;
pub mod pipeline;
pub mod report;
pub mod skeleton;
pub mod stats;
pub mod taper;
pub mod volume;

pub use error::{Error, Result};
pub use exec::Execution;

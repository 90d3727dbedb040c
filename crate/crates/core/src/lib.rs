//! Decision-boundary discovery for black-box systems.
//!
//! An RL explorer perturbs the inputs of an opaque decision system and is
//! rewarded whenever the output flips. The reward-positive transitions are
//! logged, clustered with K-Means, and distilled into decision-tree rules
//! that locate the system's boundaries.

pub mod blackbox;
pub mod cluster;
pub mod env;
pub mod error;
pub mod harness;
pub mod nn;
pub mod pipeline;
pub mod rl;
pub mod rules;
pub mod trajectory;

pub use blackbox::{
    builtin_systems, make_builtin, make_external_system, make_system_1_threshold,
    make_system_2_combined, make_system_3_nonlinear, Bounds, InputVector, OutputValue, ParseMode,
    SystemUnderTest,
};
pub use error::{Error, Result};
pub use pipeline::{run_all, run_analyze, run_report, run_train, PipelineConfig};

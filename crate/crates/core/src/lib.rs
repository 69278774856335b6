//! Agent-based simulation of friction prompts and quality-recognition
//! learning in a social network with bounded news feeds.
//!
//! The pipeline is: [`netgen`] builds a directed follower network,
//! [`engine`] runs the post/share dynamics on it, [`metrics`] tracks feed
//! quality and rank correlation, and [`runner`] drives runs to convergence
//! and sweeps the (friction, learning) grid in parallel.

pub mod engine;
pub mod metrics;
pub mod netgen;
pub mod output;
pub mod runner;
pub mod sampling;

pub use engine::{Activation, SimParams, SimState, TauPopulation};
pub use netgen::Network;
pub use runner::{run_once, sweep, Axis, RunError, RunResult, SweepConfig, SweepOutput};
pub use sampling::RandomSource;

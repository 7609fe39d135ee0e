//! Class-incremental continual learning for video action recognition.
//!
//! The crate covers the full benchmark loop: manifests and class-disjoint task
//! splits, a frame-budgeted episodic memory, the continual-learning methods
//! (EWC, MAS, random replay, iCaRL, BiC and temporal-consistency training),
//! a sequential training harness, metrics and report emission.

pub mod commands;
pub mod dataset;
pub mod error;
pub mod harness;
pub mod memory;
pub mod methods;
pub mod metrics;
pub mod model;
pub mod plot;
pub mod seed;
pub mod store;

pub use error::{Error, Result};

//! Sequential task training and evaluation.

pub mod checkpoint;
pub mod config;
pub mod run;
pub mod sampling;

pub use config::{ExperimentConfig, MemorySpec, Method, MethodKind, RunConfig};
pub use run::{argmax, evaluate_task, run_sequence, Experiment, ExperimentResult, Predictor, TaskEvaluation};
pub use sampling::{segment_sample, SampleMode};

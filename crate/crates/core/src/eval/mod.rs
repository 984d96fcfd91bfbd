//! Evaluation protocol: corpus handling, experiment configuration, the
//! two experiment drivers and their reports.

pub mod config;
pub mod corpus;
pub mod harness;
pub mod report;

pub use config::ExperimentConfig;
pub use corpus::{synth_corpus, Manifest, SynthConfig};
pub use harness::{run_assignment_eval, run_sid_eval, Evaluator};
pub use report::{emit_report, EvalReport, Summary};

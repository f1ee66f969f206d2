//! The experiment protocol: obfuscate a whole dataset with one transform,
//! split it, train a reference network epoch by epoch and score top-1/top-5
//! on the equally obfuscated test set.

pub mod config;
pub mod data;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod report;
pub mod synthetic;

pub use config::{DatasetSource, ExperimentConfig};
pub use data::{obfuscate_dataset, Prepared};
pub use error::{Error, Result};
pub use experiment::{prepare_split, run_experiment, run_experiment_with, train_on, PreparedSplit};
pub use metrics::{evaluate_model, topk_accuracy, Evaluation};
pub use report::{read_report, write_report, EpochRecord, RunReport};

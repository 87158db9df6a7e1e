//! Experiment configuration, single runs, ordered parallel execution and
//! CSV reporting.

mod config;
mod run;

pub use config::{parse_real, DataSource, ExperimentConfig, GridValue, RunMethod, Sweep, SweepParam, KEYS};
pub use run::{
    build_dataset, evaluate_checkpoint, evaluate_inlp, run_once, run_ordered, summarize, RunOutput, RunResult,
    Splits, HISTORY_HEADER, RESULT_HEADER,
};

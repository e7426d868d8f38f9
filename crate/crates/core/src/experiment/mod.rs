//! Experiment driver: JSON configuration, paired strategy runs and the CSV/JSON
//! artifacts they leave behind.

mod config;
mod output;
mod runner;

pub use config::{parse_config, DataPaths, DatasetKind, ExperimentConfig, StrategyKind, SyntheticConfig, DATA_DIR_ENV};
pub use output::{write_curves_csv, write_rounds_csv, Checkpoint, Summary, CURVES_HEADER, ROUNDS_HEADER};
pub use runner::{
    compare, make_partition, make_twins, prepare_data, reduction_percent, run, run_prepared, train_config, Comparison,
    PreparedData, RunArtifacts, RunOptions,
};

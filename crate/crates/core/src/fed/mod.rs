//! Round orchestration for FedAvg and twin-guided client skipping.

mod aggregate;
mod client;
mod server;
mod skip;

pub use aggregate::{aggregate, aggregation_weights};
pub use client::{client_update, LocalTrainer, SgdTrainer};
pub use server::{
    payload_bytes, run_experiment, ClientRecord, ExperimentOutcome, Forecaster, RoundInputs, RoundLog, RunSummary,
    Server, Strategy, BYTES_PER_MB,
};
pub use skip::{skip_decision, Decision, SkipThresholds};

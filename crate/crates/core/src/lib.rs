//! Deterministic federated-learning simulator.
//!
//! Each client gets a server-side LSTM twin that forecasts the norm of the
//! client's next model update together with a Monte-Carlo-dropout uncertainty;
//! a dual-threshold rule uses the forecast to let confidently-small updates skip
//! the round. FedAvg runs through the same orchestrator as the baseline, and
//! every byte that crosses the simulated wire is accounted for.

pub mod data;
pub mod error;
pub mod experiment;
pub mod fed;
pub mod nn;
pub mod par;
pub mod rng;
pub mod twin;

pub use error::{Error, Result};

//! File formats written by an experiment run.
//!
//! `rounds.csv` has one row per (round, client):
//! `round,client_id,decision,pred_mag,uncertainty,actual_norm,bytes_up,bytes_down,global_accuracy,global_loss`.
//! Forecast columns are empty under FedAvg and `inf` for cold-start forecasts;
//! `actual_norm` is empty for skipped clients.
//!
//! `curves.csv` has one row per round: `round,accuracy,cumulative_mb,skip_rate`.
//!
//! Real numbers use the shortest representation that parses back to the same
//! `f64`. Files are UTF-8 with LF line endings.

use std::fs;
use std::path::Path;

use csv::{Terminator, WriterBuilder};
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::error::Result;
use crate::fed::{RoundLog, BYTES_PER_MB};
use crate::nn::ParameterVector;
use crate::twin::TwinModel;

pub const ROUNDS_HEADER: [&str; 10] = [
    "round",
    "client_id",
    "decision",
    "pred_mag",
    "uncertainty",
    "actual_norm",
    "bytes_up",
    "bytes_down",
    "global_accuracy",
    "global_loss",
];

pub const CURVES_HEADER: [&str; 4] = ["round", "accuracy", "cumulative_mb", "skip_rate"];

fn real(v: f64) -> String {
    format!("{v:?}")
}

fn opt_real(v: Option<f64>) -> String {
    v.map(real).unwrap_or_default()
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    Ok(WriterBuilder::new()
        .terminator(Terminator::Any(b'\n'))
        .from_path(path)?)
}

pub fn write_rounds_csv(path: &Path, logs: &[RoundLog]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(ROUNDS_HEADER)?;
    for log in logs {
        for c in &log.clients {
            w.write_record([
                log.round.to_string(),
                c.client_id.to_string(),
                c.decision.as_str().to_string(),
                opt_real(c.forecast.map(|f| f.predicted_magnitude)),
                opt_real(c.forecast.map(|f| f.uncertainty)),
                opt_real(c.actual_norm),
                c.bytes_up.to_string(),
                c.bytes_down.to_string(),
                real(log.global_accuracy),
                real(log.global_loss),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_curves_csv(path: &Path, logs: &[RoundLog]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(CURVES_HEADER)?;
    for log in logs {
        w.write_record([
            log.round.to_string(),
            real(log.global_accuracy),
            real(log.cumulative_bytes as f64 / BYTES_PER_MB),
            real(log.skip_rate()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub strategy: String,
    pub final_accuracy: f64,
    pub total_bytes: u64,
    pub total_mb: f64,
    pub mean_skip_rate: f64,
    pub per_round_skip_rates: Vec<f64>,
    pub wall_time_seconds: f64,
    pub config_hash: String,
    pub pairing_hash: String,
    pub config_echo: ExperimentConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub round: usize,
    pub params: ParameterVector,
    pub twins: Vec<TwinModel>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::aggregate::aggregate;
use super::client::LocalTrainer;
use super::skip::{skip_decision, Decision, SkipThresholds};
use crate::data::{LabeledDataset, Partition};
use crate::error::{Error, Result};
use crate::nn::{evaluate, l2_norm, ParameterVector};
use crate::par::{self, Execution};
use crate::twin::{TwinForecast, TwinModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Strategy {
    FedAvg,
    FedSkipTwin(SkipThresholds),
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::FedAvg => "fedavg",
            Strategy::FedSkipTwin(_) => "fedskiptwin",
        }
    }
}

/// Anything that can stand in for a client's twin inside the round loop.
pub trait Forecaster: Send + Sync {
    fn forecast(&self, round: usize) -> Result<TwinForecast>;
    fn observe(&mut self, norm: f64) -> Result<()>;
    fn history_len(&self) -> usize;
}

impl Forecaster for TwinModel {
    fn forecast(&self, round: usize) -> Result<TwinForecast> {
        self.predict(self.config.mc_passes, round as u64)
    }

    fn observe(&mut self, norm: f64) -> Result<()> {
        TwinModel::observe(self, norm)
    }

    fn history_len(&self) -> usize {
        self.history().len()
    }
}

/// Wire size of one model transfer: 32 bits per parameter.
pub fn payload_bytes(params: &ParameterVector) -> u64 {
    4 * params.len() as u64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientRecord {
    pub client_id: usize,
    pub decision: Decision,
    /// Absent under FedAvg, where no twin is consulted.
    pub forecast: Option<TwinForecast>,
    /// Present iff the client communicated.
    pub actual_norm: Option<f64>,
    pub bytes_up: u64,
    pub bytes_down: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: usize,
    pub clients: Vec<ClientRecord>,
    pub participants: Vec<usize>,
    pub global_accuracy: f64,
    pub global_loss: f64,
    pub cumulative_bytes: u64,
}

impl RoundLog {
    pub fn skips(&self) -> usize {
        self.clients.iter().filter(|c| c.decision == Decision::Skip).count()
    }

    pub fn skip_rate(&self) -> f64 {
        self.skips() as f64 / self.clients.len() as f64
    }

    pub fn round_bytes(&self) -> u64 {
        self.clients.iter().map(|c| c.bytes_up + c.bytes_down).sum()
    }
}

/// Read-only inputs shared by every round.
pub struct RoundInputs<'a, T: LocalTrainer> {
    pub strategy: Strategy,
    pub partition: &'a Partition,
    pub trainer: &'a T,
    pub test: &'a LabeledDataset,
    pub exec: Execution,
}

/// Orchestrator state carried between rounds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Server<F = TwinModel> {
    pub params: ParameterVector,
    pub twins: Vec<F>,
    pub logs: Vec<RoundLog>,
    cumulative_bytes: u64,
}

impl<F: Forecaster> Server<F> {
    pub fn new(params: ParameterVector, twins: Vec<F>) -> Self {
        Server {
            params,
            twins,
            logs: Vec::new(),
            cumulative_bytes: 0,
        }
    }

    pub fn cumulative_bytes(&self) -> u64 {
        self.cumulative_bytes
    }

    /// One round: forecast and decide per client, train the communicating
    /// clients (in parallel when enabled), aggregate their deltas by dataset size,
    /// retrain participants' twins on the observed delta norms in ascending
    /// client order, then evaluate on the global test set.
    pub fn run_round<T: LocalTrainer>(&mut self, round: usize, inputs: &RoundInputs<'_, T>) -> Result<&RoundLog> {
        if round == 0 {
            return Err(Error::Precondition("rounds are numbered from 1".into()));
        }
        let n = inputs.partition.clients.len();
        if self.twins.len() != n {
            return Err(Error::Consistency(format!(
                "{} twins for {n} clients",
                self.twins.len()
            )));
        }

        let forecasts: Vec<Option<TwinForecast>> = match inputs.strategy {
            Strategy::FedAvg => vec![None; n],
            Strategy::FedSkipTwin(_) => par::map(inputs.exec, &self.twins, |t| t.forecast(round))
                .into_iter()
                .map(|f| f.map(Some))
                .collect::<Result<_>>()?,
        };
        let decisions: Vec<Decision> = forecasts
            .iter()
            .map(|f| match (inputs.strategy, f) {
                (Strategy::FedSkipTwin(t), Some(f)) => skip_decision(f, &t),
                _ => Decision::Communicate,
            })
            .collect();
        let participants: Vec<usize> = (0..n).filter(|&i| decisions[i] == Decision::Communicate).collect();

        let global = &self.params;
        let locals = par::map(inputs.exec, &participants, |&id| {
            inputs.trainer.train(&inputs.partition.clients[id], global, round)
        });
        let mut deltas = Vec::with_capacity(participants.len());
        for (&id, local) in participants.iter().zip(locals) {
            deltas.push((id, local?.sub(global)?));
        }
        let sizes: BTreeMap<usize, usize> = participants
            .iter()
            .map(|&id| (id, inputs.partition.clients[id].size()))
            .collect();
        let next = aggregate(global, &deltas, &sizes)?;

        let norms: BTreeMap<usize, f64> = deltas.iter().map(|(id, d)| (*id, l2_norm(d))).collect();
        if let Strategy::FedSkipTwin(_) = inputs.strategy {
            for (&id, &norm) in &norms {
                self.twins[id].observe(norm)?;
            }
        }

        let payload = payload_bytes(&next);
        let clients: Vec<ClientRecord> = (0..n)
            .map(|i| {
                let talks = decisions[i] == Decision::Communicate;
                ClientRecord {
                    client_id: i,
                    decision: decisions[i],
                    forecast: forecasts[i],
                    actual_norm: norms.get(&i).copied(),
                    bytes_up: if talks { payload } else { 0 },
                    bytes_down: if talks { payload } else { 0 },
                }
            })
            .collect();
        self.cumulative_bytes += clients.iter().map(|c| c.bytes_up + c.bytes_down).sum::<u64>();
        self.params = next;

        let eval = evaluate(&self.params, inputs.test, inputs.exec)?;
        self.logs.push(RoundLog {
            round,
            clients,
            participants,
            global_accuracy: eval.accuracy,
            global_loss: eval.mean_loss,
            cumulative_bytes: self.cumulative_bytes,
        });
        Ok(self.logs.last().expect("just pushed"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub final_accuracy: f64,
    pub total_bytes: u64,
    pub total_mb: f64,
    pub mean_skip_rate: f64,
    pub per_round_skip_rates: Vec<f64>,
}

pub const BYTES_PER_MB: f64 = (1u64 << 20) as f64;

impl RunSummary {
    pub fn from_logs(logs: &[RoundLog]) -> Result<Self> {
        let last = logs
            .last()
            .ok_or_else(|| Error::Precondition("an experiment needs at least one round".into()))?;
        let slots: usize = logs.iter().map(|l| l.clients.len()).sum();
        let skips: usize = logs.iter().map(RoundLog::skips).sum();
        Ok(RunSummary {
            final_accuracy: last.global_accuracy,
            total_bytes: last.cumulative_bytes,
            total_mb: last.cumulative_bytes as f64 / BYTES_PER_MB,
            mean_skip_rate: skips as f64 / slots as f64,
            per_round_skip_rates: logs.iter().map(RoundLog::skip_rate).collect(),
        })
    }
}

pub struct ExperimentOutcome<F = TwinModel> {
    pub server: Server<F>,
    pub summary: RunSummary,
    /// Global parameters after each round, when requested.
    pub trajectory: Vec<ParameterVector>,
}

/// Runs `rounds` rounds from `initial` and summarizes them.
pub fn run_experiment<F: Forecaster, T: LocalTrainer>(
    initial: ParameterVector,
    twins: Vec<F>,
    inputs: &RoundInputs<'_, T>,
    rounds: usize,
    keep_trajectory: bool,
) -> Result<ExperimentOutcome<F>> {
    if rounds == 0 {
        return Err(Error::Precondition("rounds must be >= 1".into()));
    }
    let mut server = Server::new(initial, twins);
    let mut trajectory = Vec::new();
    for t in 1..=rounds {
        server.run_round(t, inputs)?;
        if keep_trajectory {
            trajectory.push(server.params.clone());
        }
    }
    let summary = RunSummary::from_logs(&server.logs)?;
    Ok(ExperimentOutcome {
        server,
        summary,
        trajectory,
    })
}

mod common;

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use common::synthetic_federation;
use fedskip::data::ClientDataset;
use fedskip::fed::{
    payload_bytes, run_experiment, Decision, Forecaster, LocalTrainer, RoundInputs, RoundLog, Server, SgdTrainer,
    SkipThresholds, Strategy,
};
use fedskip::nn::{build_model, Arch, ParameterVector};
use fedskip::par::Execution;
use fedskip::rng::{derive_seed, Stream};
use fedskip::twin::{TwinConfig, TwinForecast, TwinModel};
use fedskip::Result;

fn arch() -> Arch {
    Arch::HarMlp {
        input_dim: 8,
        num_classes: 4,
    }
}

fn twins(n: usize, seed: u64) -> Vec<TwinModel> {
    (0..n)
        .map(|i| TwinModel::new(TwinConfig::default(), derive_seed(seed, Stream::TwinInit, &[i as u64])))
        .collect()
}

fn assert_ledger(logs: &[RoundLog], payload: u64) {
    let communicated: u64 = logs
        .iter()
        .flat_map(|l| &l.clients)
        .filter(|c| c.decision == Decision::Communicate)
        .count() as u64;
    assert_eq!(logs.last().unwrap().cumulative_bytes, 2 * payload * communicated);
    for log in logs {
        let ids: BTreeSet<usize> = log
            .clients
            .iter()
            .filter(|c| c.decision == Decision::Communicate)
            .map(|c| c.client_id)
            .collect();
        assert_eq!(ids, log.participants.iter().copied().collect());
        for c in &log.clients {
            match c.decision {
                Decision::Skip => {
                    assert_eq!((c.bytes_up, c.bytes_down), (0, 0));
                    assert!(c.actual_norm.is_none());
                }
                Decision::Communicate => {
                    assert_eq!((c.bytes_up, c.bytes_down), (payload, payload));
                    assert!(c.actual_norm.is_some());
                }
            }
        }
    }
}

#[test]
fn never_skip_thresholds_reproduce_fedavg_bitwise() {
    let fed = synthetic_federation(5, 11);
    let trainer = SgdTrainer {
        train: &fed.train,
        config: fed.train_config,
    };
    let run = |strategy| {
        let inputs = RoundInputs {
            strategy,
            partition: &fed.partition,
            trainer: &trainer,
            test: &fed.test,
            exec: Execution::default(),
        };
        run_experiment(build_model(arch(), 11), twins(5, 11), &inputs, 5, true).unwrap()
    };
    let avg = run(Strategy::FedAvg);
    let skip = run(Strategy::FedSkipTwin(SkipThresholds::new(0.0, 1e9).unwrap()));
    assert_eq!(avg.trajectory.len(), 5);
    for (a, s) in avg.trajectory.iter().zip(&skip.trajectory) {
        let a_bits: Vec<u64> = a.flatten().iter().map(|v| v.to_bits()).collect();
        let s_bits: Vec<u64> = s.flatten().iter().map(|v| v.to_bits()).collect();
        assert_eq!(a_bits, s_bits);
    }
    let curve = |o: &fedskip::fed::ExperimentOutcome| -> Vec<u64> {
        o.server.logs.iter().map(|l| l.global_accuracy.to_bits()).collect()
    };
    assert_eq!(curve(&avg), curve(&skip));
    assert_eq!(avg.summary.total_bytes, skip.summary.total_bytes);
}

#[test]
fn ledger_is_exact_with_real_twins_and_skips() {
    let fed = synthetic_federation(6, 3);
    let trainer = SgdTrainer {
        train: &fed.train,
        config: fed.train_config,
    };
    // Generous thresholds so skips actually happen once twins warm up.
    let inputs = RoundInputs {
        strategy: Strategy::FedSkipTwin(SkipThresholds::new(10.0, 10.0).unwrap()),
        partition: &fed.partition,
        trainer: &trainer,
        test: &fed.test,
        exec: Execution::default(),
    };
    let initial = build_model(arch(), 3);
    let payload = payload_bytes(&initial);
    let out = run_experiment(initial, twins(6, 3), &inputs, 6, false).unwrap();
    assert!(out.server.logs.iter().any(|l| l.skips() > 0));
    assert_ledger(&out.server.logs, payload);
    // Rounds 1 and 2 are cold for every twin.
    assert_eq!(out.server.logs[0].skips(), 0);
    assert_eq!(out.server.logs[1].skips(), 0);
}

#[test]
fn fedavg_bytes_are_two_payloads_per_client_per_round() {
    let fed = synthetic_federation(4, 5);
    let trainer = SgdTrainer {
        train: &fed.train,
        config: fed.train_config,
    };
    let inputs = RoundInputs {
        strategy: Strategy::FedAvg,
        partition: &fed.partition,
        trainer: &trainer,
        test: &fed.test,
        exec: Execution::Sequential,
    };
    let initial = build_model(arch(), 5);
    let b = payload_bytes(&initial);
    let out = run_experiment(initial, twins(4, 5), &inputs, 3, false).unwrap();
    for (t, log) in out.server.logs.iter().enumerate() {
        assert_eq!(log.round_bytes(), 2 * 4 * b);
        assert_eq!(log.cumulative_bytes, (t as u64 + 1) * 2 * 4 * b);
        assert!(log.clients.iter().all(|c| c.forecast.is_none()));
    }
}

#[test]
fn skipping_never_costs_more_than_fedavg() {
    let fed = synthetic_federation(5, 8);
    let trainer = SgdTrainer {
        train: &fed.train,
        config: fed.train_config,
    };
    let total = |strategy| {
        let inputs = RoundInputs {
            strategy,
            partition: &fed.partition,
            trainer: &trainer,
            test: &fed.test,
            exec: Execution::default(),
        };
        run_experiment(build_model(arch(), 8), twins(5, 8), &inputs, 5, false)
            .unwrap()
            .summary
            .total_bytes
    };
    let avg = total(Strategy::FedAvg);
    for tau in [0.0, 0.1, 1.0, 10.0] {
        let skip = total(Strategy::FedSkipTwin(SkipThresholds::new(tau, tau).unwrap()));
        assert!(skip <= avg, "tau {tau}: {skip} > {avg}");
    }
}

/// Fixed forecast per client; records what it is told.
struct Stub {
    forecast: TwinForecast,
    seen: Vec<f64>,
}

impl Stub {
    fn confident_small() -> Self {
        Stub {
            forecast: TwinForecast {
                predicted_magnitude: 0.0,
                uncertainty: 0.0,
                cold_start: false,
            },
            seen: Vec::new(),
        }
    }

    fn cold() -> Self {
        Stub {
            forecast: TwinForecast::cold(),
            seen: Vec::new(),
        }
    }
}

impl Forecaster for Stub {
    fn forecast(&self, _round: usize) -> Result<TwinForecast> {
        Ok(self.forecast)
    }

    fn observe(&mut self, norm: f64) -> Result<()> {
        self.seen.push(norm);
        Ok(())
    }

    fn history_len(&self) -> usize {
        self.seen.len()
    }
}

/// Moves every parameter by a client-specific constant; client `poisoned`
/// returns NaNs and counts how often it was asked.
struct ShiftTrainer {
    poisoned: usize,
    poisoned_calls: AtomicUsize,
    calls: Mutex<Vec<(usize, usize)>>,
}

impl ShiftTrainer {
    fn new(poisoned: usize) -> Self {
        ShiftTrainer {
            poisoned,
            poisoned_calls: AtomicUsize::new(0),
            calls: Mutex::new(Vec::new()),
        }
    }
}

impl LocalTrainer for ShiftTrainer {
    fn train(&self, client: &ClientDataset, global: &ParameterVector, round: usize) -> Result<ParameterVector> {
        self.calls.lock().unwrap().push((round, client.client_id));
        let mut out = global.clone();
        if client.client_id == self.poisoned {
            self.poisoned_calls.fetch_add(1, Ordering::SeqCst);
            out.values_mut().iter_mut().for_each(|v| *v = f64::NAN);
        } else {
            let shift = (client.client_id + 1) as f64;
            out.values_mut().iter_mut().for_each(|v| *v += shift);
        }
        Ok(out)
    }
}

#[test]
fn skipped_client_is_not_trained_and_cannot_poison_the_model() {
    let fed = synthetic_federation(3, 2);
    let trainer = ShiftTrainer::new(1);
    let inputs = RoundInputs {
        strategy: Strategy::FedSkipTwin(SkipThresholds::new(0.5, 0.5).unwrap()),
        partition: &fed.partition,
        trainer: &trainer,
        test: &fed.test,
        exec: Execution::default(),
    };
    let initial = build_model(arch(), 2);
    let mut server = Server::new(
        initial.clone(),
        vec![Stub::cold(), Stub::confident_small(), Stub::cold()],
    );
    server.run_round(1, &inputs).unwrap();
    assert_eq!(trainer.poisoned_calls.load(Ordering::SeqCst), 0);
    assert!(server.params.flatten().iter().all(|v| v.is_finite()));

    // Only clients 0 and 2 contribute: shift = (n0·1 + n2·3) / (n0 + n2).
    let sizes = fed.partition.sizes();
    let shift = (sizes[0] as f64 * 1.0 + sizes[2] as f64 * 3.0) / (sizes[0] + sizes[2]) as f64;
    for (new, old) in server.params.flatten().iter().zip(initial.flatten()) {
        assert!((new - old - shift).abs() < 1e-12);
    }

    // History grows only for participants.
    assert_eq!(server.twins[0].history_len(), 1);
    assert_eq!(server.twins[1].history_len(), 0);
    assert_eq!(server.twins[2].history_len(), 1);
    let n = initial.len() as f64;
    assert!((server.twins[0].seen[0] - n.sqrt()).abs() < 1e-9);
    assert!((server.twins[2].seen[0] - 3.0 * n.sqrt()).abs() < 1e-9);
}

#[test]
fn all_skipped_round_leaves_the_model_untouched() {
    let fed = synthetic_federation(3, 4);
    let trainer = ShiftTrainer::new(usize::MAX);
    let inputs = RoundInputs {
        strategy: Strategy::FedSkipTwin(SkipThresholds::new(0.5, 0.5).unwrap()),
        partition: &fed.partition,
        trainer: &trainer,
        test: &fed.test,
        exec: Execution::default(),
    };
    let initial = build_model(arch(), 4);
    let mut server = Server::new(initial.clone(), (0..3).map(|_| Stub::confident_small()).collect());
    let log = server.run_round(1, &inputs).unwrap().clone();
    assert_eq!(log.skips(), 3);
    assert!(log.participants.is_empty());
    assert_eq!(log.round_bytes(), 0);
    assert_eq!(server.cumulative_bytes(), 0);
    assert_eq!(server.params, initial);
    assert!(trainer.calls.lock().unwrap().is_empty());
    assert!(server.twins.iter().all(|t| t.history_len() == 0));
}

#[test]
fn twin_histories_track_participation() {
    let fed = synthetic_federation(5, 6);
    let trainer = SgdTrainer {
        train: &fed.train,
        config: fed.train_config,
    };
    let inputs = RoundInputs {
        strategy: Strategy::FedSkipTwin(SkipThresholds::new(10.0, 10.0).unwrap()),
        partition: &fed.partition,
        trainer: &trainer,
        test: &fed.test,
        exec: Execution::default(),
    };
    let out = run_experiment(build_model(arch(), 6), twins(5, 6), &inputs, 6, false).unwrap();
    for (i, twin) in out.server.twins.iter().enumerate() {
        let communicated = out.server.logs.iter().filter(|l| l.participants.contains(&i)).count();
        assert_eq!(twin.history().len(), communicated.min(twin.config.window));
    }
}

#[test]
fn parallel_and_sequential_rounds_agree_bitwise() {
    let fed = synthetic_federation(6, 9);
    let trainer = SgdTrainer {
        train: &fed.train,
        config: fed.train_config,
    };
    let run = |exec| {
        let inputs = RoundInputs {
            strategy: Strategy::FedSkipTwin(SkipThresholds::new(5.0, 5.0).unwrap()),
            partition: &fed.partition,
            trainer: &trainer,
            test: &fed.test,
            exec,
        };
        run_experiment(build_model(arch(), 9), twins(6, 9), &inputs, 5, false).unwrap()
    };
    let seq = run(Execution::Sequential);
    let par = run(Execution::Parallel);
    assert_eq!(seq.server.params, par.server.params);
    assert_eq!(seq.server.logs, par.server.logs);
}

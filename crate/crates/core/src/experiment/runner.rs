use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::config::{DatasetKind, ExperimentConfig, StrategyKind};
use super::output::{write_curves_csv, write_json, write_rounds_csv, Checkpoint, Summary};
use crate::data::{dirichlet_partition, load_mnist, load_ucihar, make_synthetic, LabeledDataset, Partition};
use crate::error::Result;
use crate::fed::{RoundInputs, RoundLog, SgdTrainer};
use crate::nn::{build_model, Arch, TrainConfig};
use crate::par::{self, Execution};
use crate::rng::{derive_seed, stream_rng, Stream};
use crate::twin::TwinModel;

/// Runtime knobs that must not influence results.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub threads: Option<usize>,
    pub execution: Execution,
    /// Print one progress line per round to stderr.
    pub verbose: bool,
}

pub struct RunArtifacts {
    pub logs: Vec<RoundLog>,
    pub summary: Summary,
    pub output_dir: PathBuf,
}

/// Train/test data after loading and optional subsampling.
pub struct PreparedData {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub arch: Arch,
}

fn subsample(ds: LabeledDataset, k: Option<usize>, seed: u64, tag: u64) -> Result<LabeledDataset> {
    match k {
        Some(k) if k < ds.len() => {
            let mut rng = stream_rng(seed, Stream::Subsample, &[tag]);
            let mut picked = index::sample(&mut rng, ds.len(), k).into_vec();
            picked.sort_unstable();
            ds.subset(&picked)
        }
        _ => Ok(ds),
    }
}

pub fn prepare_data(cfg: &ExperimentConfig) -> Result<PreparedData> {
    let (train, test, arch) = match cfg.dataset {
        DatasetKind::Mnist => {
            let [a, b, c, d] = cfg.mnist_files()?;
            let (train, test) = load_mnist(&a, &b, &c, &d)?;
            (train, test, Arch::MnistCnn)
        }
        DatasetKind::Ucihar => {
            let (train, test) = load_ucihar(&cfg.dataset_root("UCI HAR Dataset")?)?;
            let arch = Arch::HarMlp {
                input_dim: train.sample_len(),
                num_classes: train.num_classes(),
            };
            (train, test, arch)
        }
        DatasetKind::Synthetic => {
            let s = cfg.synthetic;
            // One draw split in two keeps train and test on the same clusters.
            let all = make_synthetic(s.n_train + s.n_test, s.num_classes, s.dim, cfg.seed)?;
            let train = all.subset(&(0..s.n_train).collect::<Vec<_>>())?;
            let test = all.subset(&(s.n_train..s.n_train + s.n_test).collect::<Vec<_>>())?;
            let arch = Arch::HarMlp {
                input_dim: s.dim,
                num_classes: s.num_classes,
            };
            (train, test, arch)
        }
    };
    Ok(PreparedData {
        train: subsample(train, cfg.train_subsample, cfg.seed, 0)?,
        test: subsample(test, cfg.eval_subsample, cfg.seed, 1)?,
        arch,
    })
}

pub fn make_partition(cfg: &ExperimentConfig, train: &LabeledDataset) -> Result<Partition> {
    dirichlet_partition(train, cfg.n_clients, cfg.alpha, cfg.seed)
}

pub fn train_config(cfg: &ExperimentConfig) -> TrainConfig {
    TrainConfig {
        learning_rate: cfg.learning_rate,
        local_epochs: cfg.local_epochs,
        batch_size: cfg.batch_size,
        rng_seed: cfg.seed,
    }
}

pub fn make_twins(cfg: &ExperimentConfig) -> Vec<TwinModel> {
    (0..cfg.n_clients)
        .map(|i| TwinModel::new(cfg.twin, derive_seed(cfg.seed, Stream::TwinInit, &[i as u64])))
        .collect()
}

/// Runs one strategy on already-prepared data and writes its outputs.
pub fn run_prepared(cfg: &ExperimentConfig, data: &PreparedData, opts: RunOptions) -> Result<RunArtifacts> {
    cfg.validate_runtime()?;
    let started = Instant::now();
    let partition = make_partition(cfg, &data.train)?;
    let trainer = SgdTrainer {
        train: &data.train,
        config: train_config(cfg),
    };
    let inputs = RoundInputs {
        strategy: cfg.strategy()?,
        partition: &partition,
        trainer: &trainer,
        test: &data.test,
        exec: opts.execution,
    };
    let initial = build_model(data.arch, cfg.seed);
    let outcome = par::with_threads(opts.threads, || -> Result<_> {
        let mut server = crate::fed::Server::new(initial, make_twins(cfg));
        for t in 1..=cfg.rounds {
            let log = server.run_round(t, &inputs)?;
            if opts.verbose {
                eprintln!(
                    "[{}] round {t:>3}/{}: acc {:.4} loss {:.4} skipped {}/{} cum {:.3} MB",
                    cfg.strategy.name(),
                    cfg.rounds,
                    log.global_accuracy,
                    log.global_loss,
                    log.skips(),
                    log.clients.len(),
                    log.cumulative_bytes as f64 / crate::fed::BYTES_PER_MB
                );
            }
        }
        Ok(server)
    })?;
    let stats = crate::fed::RunSummary::from_logs(&outcome.logs)?;

    let out = cfg.output_dir.clone();
    fs::create_dir_all(&out)?;
    write_rounds_csv(&out.join("rounds.csv"), &outcome.logs)?;
    write_curves_csv(&out.join("curves.csv"), &outcome.logs)?;
    let summary = Summary {
        strategy: cfg.strategy.name().to_string(),
        final_accuracy: stats.final_accuracy,
        total_bytes: stats.total_bytes,
        total_mb: stats.total_mb,
        mean_skip_rate: stats.mean_skip_rate,
        per_round_skip_rates: stats.per_round_skip_rates,
        wall_time_seconds: started.elapsed().as_secs_f64(),
        config_hash: cfg.hash(),
        pairing_hash: cfg.pairing_hash(),
        config_echo: cfg.clone(),
    };
    write_json(&out.join("summary.json"), &summary)?;
    if cfg.checkpoint {
        write_json(
            &out.join("checkpoint.json"),
            &Checkpoint {
                round: cfg.rounds,
                params: outcome.params.clone(),
                twins: outcome.twins.clone(),
            },
        )?;
    }
    Ok(RunArtifacts {
        logs: outcome.logs,
        summary,
        output_dir: out,
    })
}

/// Loads data per `cfg`, runs its strategy and writes `rounds.csv`,
/// `curves.csv`, `summary.json` (and `checkpoint.json` when enabled).
pub fn run(cfg: &ExperimentConfig, opts: RunOptions) -> Result<RunArtifacts> {
    let data = prepare_data(cfg)?;
    run_prepared(cfg, &data, opts)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Comparison {
    pub fedavg: Summary,
    pub fedskiptwin: Summary,
    /// `100 · (1 − skip_bytes / avg_bytes)`.
    pub reduction_percent: f64,
    pub accuracy_delta_pp: f64,
    pub paired: bool,
}

impl Comparison {
    pub fn table(&self) -> String {
        let mut s = String::new();
        s.push_str("strategy      accuracy   communication_MB   reduction_%\n");
        s.push_str(&format!(
            "FedAvg        {:<10.4} {:<18.2} {:.1}\n",
            self.fedavg.final_accuracy, self.fedavg.total_mb, 0.0
        ));
        s.push_str(&format!(
            "FedSkipTwin   {:<10.4} {:<18.2} {:.1}\n",
            self.fedskiptwin.final_accuracy, self.fedskiptwin.total_mb, self.reduction_percent
        ));
        s
    }
}

pub fn reduction_percent(baseline_bytes: u64, candidate_bytes: u64) -> f64 {
    if baseline_bytes == 0 {
        return 0.0;
    }
    100.0 * (1.0 - candidate_bytes as f64 / baseline_bytes as f64)
}

/// Runs FedAvg and FedSkipTwin with identical seeds and data, writing each run
/// under `<output_dir>/<strategy>/` plus `comparison.json`.
pub fn compare(cfg: &ExperimentConfig, opts: RunOptions) -> Result<Comparison> {
    let data = prepare_data(cfg)?;
    let base_dir = cfg.output_dir.clone();
    let with = |kind: StrategyKind| ExperimentConfig {
        strategy: kind,
        output_dir: base_dir.join(kind.name()),
        ..cfg.clone()
    };
    let avg = run_prepared(&with(StrategyKind::Fedavg), &data, opts)?.summary;
    let skip = run_prepared(&with(StrategyKind::Fedskiptwin), &data, opts)?.summary;
    let comparison = Comparison {
        reduction_percent: reduction_percent(avg.total_bytes, skip.total_bytes),
        accuracy_delta_pp: 100.0 * (skip.final_accuracy - avg.final_accuracy),
        paired: avg.pairing_hash == skip.pairing_hash,
        fedavg: avg,
        fedskiptwin: skip,
    };
    write_json(&base_dir.join("comparison.json"), &comparison)?;
    Ok(comparison)
}

impl StrategyKind {
    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Fedavg => "fedavg",
            StrategyKind::Fedskiptwin => "fedskiptwin",
        }
    }
}

impl ExperimentConfig {
    /// Checks that do not touch the filesystem (data is already loaded).
    fn validate_runtime(&self) -> Result<()> {
        let mut probe = self.clone();
        probe.dataset = DatasetKind::Synthetic;
        probe.validate()
    }
}

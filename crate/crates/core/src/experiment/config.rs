use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fed::{SkipThresholds, Strategy};
use crate::twin::TwinConfig;

/// Environment variable naming a default dataset root.
pub const DATA_DIR_ENV: &str = "FEDSKIP_DATA_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Mnist,
    Ucihar,
    Synthetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    Fedavg,
    Fedskiptwin,
}

/// Dataset locations. For MNIST either `root` (conventional IDX names, optionally
/// gzipped) or all four explicit files; for UCI-HAR `root` is the dataset
/// directory holding `train/` and `test/`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataPaths {
    pub root: Option<PathBuf>,
    pub train_images: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub num_classes: usize,
    pub dim: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_train: 2000,
            n_test: 500,
            num_classes: 6,
            dim: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub dataset: DatasetKind,
    pub data_paths: DataPaths,
    pub synthetic: SyntheticConfig,
    pub n_clients: usize,
    pub alpha: f64,
    pub rounds: usize,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub strategy: StrategyKind,
    pub tau_mag: f64,
    pub tau_unc: f64,
    pub twin: TwinConfig,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub train_subsample: Option<usize>,
    pub eval_subsample: Option<usize>,
    pub checkpoint: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetKind::Synthetic,
            data_paths: DataPaths::default(),
            synthetic: SyntheticConfig::default(),
            n_clients: 10,
            alpha: 0.5,
            rounds: 20,
            local_epochs: 3,
            batch_size: 32,
            learning_rate: 0.01,
            strategy: StrategyKind::Fedskiptwin,
            tau_mag: 0.001,
            tau_unc: 0.001,
            twin: TwinConfig::default(),
            seed: 42,
            output_dir: PathBuf::from("out"),
            train_subsample: None,
            eval_subsample: None,
            checkpoint: false,
        }
    }
}

fn unknown_field(msg: &str) -> Option<&str> {
    let rest = msg.strip_prefix("unknown field `")?;
    rest.split('`').next()
}

impl ExperimentConfig {
    /// Parses a JSON object; absent keys take their defaults, unknown keys are rejected.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| {
            let at = format!("line {} column {}", e.line(), e.column());
            match e.classify() {
                serde_json::error::Category::Data => {
                    let msg = e.to_string();
                    let field = unknown_field(&msg).unwrap_or("config").to_string();
                    Error::validation(field, msg)
                }
                _ => Error::Parse(format!("{at}: {e}")),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_clients", self.n_clients),
            ("rounds", self.rounds),
            ("local_epochs", self.local_epochs),
            ("batch_size", self.batch_size),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(Error::validation(field, "must be >= 1"));
            }
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::validation("alpha", "must be positive and finite"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::validation("learning_rate", "must be finite and non-negative"));
        }
        SkipThresholds::new(self.tau_mag, self.tau_unc)?;
        self.twin.validate()?;
        for (field, v) in [
            ("train_subsample", self.train_subsample),
            ("eval_subsample", self.eval_subsample),
        ] {
            if v == Some(0) {
                return Err(Error::validation(field, "must be >= 1 when set"));
            }
        }
        match self.dataset {
            DatasetKind::Synthetic => {
                let s = &self.synthetic;
                for (field, v) in [
                    ("synthetic.n_train", s.n_train),
                    ("synthetic.n_test", s.n_test),
                    ("synthetic.num_classes", s.num_classes),
                    ("synthetic.dim", s.dim),
                ] {
                    if v == 0 {
                        return Err(Error::validation(field, "must be >= 1"));
                    }
                }
            }
            DatasetKind::Mnist => {
                for p in self.mnist_files()? {
                    let gz = PathBuf::from(format!("{}.gz", p.display()));
                    if !p.exists() && !gz.exists() {
                        return Err(Error::validation("data_paths", format!("{} not found", p.display())));
                    }
                }
            }
            DatasetKind::Ucihar => {
                let root = self.dataset_root("UCI HAR Dataset")?;
                if !root.is_dir() {
                    return Err(Error::validation(
                        "data_paths.root",
                        format!("{} not found", root.display()),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn strategy(&self) -> Result<Strategy> {
        Ok(match self.strategy {
            StrategyKind::Fedavg => Strategy::FedAvg,
            StrategyKind::Fedskiptwin => Strategy::FedSkipTwin(SkipThresholds::new(self.tau_mag, self.tau_unc)?),
        })
    }

    /// `data_paths.root`, else `$FEDSKIP_DATA_DIR/<default_subdir>`.
    pub fn dataset_root(&self, default_subdir: &str) -> Result<PathBuf> {
        if let Some(root) = &self.data_paths.root {
            return Ok(root.clone());
        }
        match std::env::var_os(DATA_DIR_ENV) {
            Some(dir) => Ok(Path::new(&dir).join(default_subdir)),
            None => Err(Error::validation(
                "data_paths.root",
                format!("not set and {DATA_DIR_ENV} is unset"),
            )),
        }
    }

    /// `[train images, train labels, test images, test labels]`.
    pub fn mnist_files(&self) -> Result<[PathBuf; 4]> {
        let d = &self.data_paths;
        if let (Some(a), Some(b), Some(c), Some(e)) = (&d.train_images, &d.train_labels, &d.test_images, &d.test_labels)
        {
            return Ok([a.clone(), b.clone(), c.clone(), e.clone()]);
        }
        let root = self.dataset_root("mnist")?;
        Ok([
            root.join("train-images-idx3-ubyte"),
            root.join("train-labels-idx1-ubyte"),
            root.join("t10k-images-idx3-ubyte"),
            root.join("t10k-labels-idx1-ubyte"),
        ])
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        digest(&serde_json::to_value(self).expect("config serializes"))
    }

    /// Hash ignoring the strategy and output directory: equal for the two halves
    /// of a paired comparison.
    pub fn pairing_hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("strategy");
            obj.remove("output_dir");
        }
        digest(&v)
    }
}

fn digest(v: &serde_json::Value) -> String {
    let bytes = serde_json::to_vec(v).expect("value serializes");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Reads and validates a config file.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    if !path.exists() {
        return Err(Error::Path(path.to_path_buf()));
    }
    let text = fs::read_to_string(path)?;
    ExperimentConfig::from_json(&text).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

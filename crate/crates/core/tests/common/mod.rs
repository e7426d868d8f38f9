#![allow(dead_code)]

use std::path::PathBuf;

use fedskip::data::{dirichlet_partition, make_synthetic, LabeledDataset, Partition};
use fedskip::experiment::DATA_DIR_ENV;
use fedskip::nn::{loss, loss_and_grad, Batch, LayerSpec, ParameterVector, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Largest per-coordinate relative error between the analytic gradient and a
/// central difference with step `h`. Coordinates where both are below `floor`
/// are compared absolutely against `floor`.
pub fn gradient_error(layers: &[LayerSpec], feature_shape: &[usize], batch: usize, seed: u64) -> (usize, f64) {
    const H: f64 = 1e-4;
    const FLOOR: f64 = 1e-8;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = ParameterVector::glorot(layers, seed);
    let per: usize = feature_shape.iter().product();
    let inputs: Vec<f64> = (0..batch * per).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let classes = match layers.iter().rev().find_map(|l| match l {
        LayerSpec::Dense { outputs, .. } => Some(*outputs),
        _ => None,
    }) {
        Some(c) => c,
        None => panic!("network needs a dense head"),
    };
    let labels: Vec<usize> = (0..batch).map(|_| rng.gen_range(0..classes)).collect();
    let b = Batch::new(&inputs, &labels, feature_shape).unwrap();
    let (_, grad) = loss_and_grad(&params, &b).unwrap();

    let mut worst: f64 = 0.0;
    let mut probe = params.clone();
    for i in 0..params.len() {
        let x = params.flatten()[i];
        probe.values_mut()[i] = x + H;
        let up = loss(&probe, &b).unwrap();
        probe.values_mut()[i] = x - H;
        let down = loss(&probe, &b).unwrap();
        probe.values_mut()[i] = x;
        let numeric = (up - down) / (2.0 * H);
        let analytic = grad.flatten()[i];
        let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR);
        worst = worst.max(err);
    }
    (params.len(), worst)
}

pub fn dense_net() -> (Vec<LayerSpec>, Vec<usize>) {
    (
        vec![
            LayerSpec::Dense { inputs: 6, outputs: 8 },
            LayerSpec::ReLU,
            LayerSpec::Dense { inputs: 8, outputs: 4 },
            LayerSpec::Softmax,
        ],
        vec![6],
    )
}

pub fn conv_net() -> (Vec<LayerSpec>, Vec<usize>) {
    (
        vec![
            LayerSpec::Conv2D {
                filters: 3,
                kernel_h: 3,
                kernel_w: 2,
                in_channels: 2,
            },
            LayerSpec::ReLU,
            LayerSpec::Flatten,
            LayerSpec::Dense {
                inputs: 3 * 4 * 5,
                outputs: 3,
            },
            LayerSpec::Softmax,
        ],
        vec![2, 6, 6],
    )
}

pub fn pool_net() -> (Vec<LayerSpec>, Vec<usize>) {
    (
        vec![
            LayerSpec::Conv2D {
                filters: 4,
                kernel_h: 3,
                kernel_w: 3,
                in_channels: 1,
            },
            LayerSpec::ReLU,
            LayerSpec::MaxPool2D { pool_h: 2, pool_w: 2 },
            LayerSpec::Conv2D {
                filters: 2,
                kernel_h: 2,
                kernel_w: 2,
                in_channels: 4,
            },
            LayerSpec::Flatten,
            LayerSpec::Dense {
                inputs: 2 * 3 * 3,
                outputs: 5,
            },
            LayerSpec::Softmax,
        ],
        vec![1, 10, 10],
    )
}

pub struct Federation {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub partition: Partition,
    pub train_config: TrainConfig,
}

/// Small synthetic setup shared by the federation tests.
pub fn synthetic_federation(n_clients: usize, seed: u64) -> Federation {
    let all = make_synthetic(600, 4, 8, seed).unwrap();
    let train = all.subset(&(0..480).collect::<Vec<_>>()).unwrap();
    let test = all.subset(&(480..600).collect::<Vec<_>>()).unwrap();
    let partition = dirichlet_partition(&train, n_clients, 0.5, seed).unwrap();
    Federation {
        train,
        test,
        partition,
        train_config: TrainConfig {
            learning_rate: 0.05,
            local_epochs: 2,
            batch_size: 16,
            rng_seed: seed,
        },
    }
}

pub fn workspace_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

/// Directory holding the MNIST IDX files, if any.
pub fn mnist_dir() -> Option<PathBuf> {
    let candidates = [
        std::env::var_os(DATA_DIR_ENV).map(|d| PathBuf::from(d).join("mnist")),
        Some(workspace_root().join("data/mnist")),
    ];
    candidates.into_iter().flatten().find(|d| {
        let p = d.join("train-labels-idx1-ubyte");
        p.exists() || d.join("train-labels-idx1-ubyte.gz").exists()
    })
}

pub fn ucihar_dir() -> Option<PathBuf> {
    let candidates = [
        std::env::var_os(DATA_DIR_ENV).map(|d| PathBuf::from(d).join("UCI HAR Dataset")),
        Some(workspace_root().join("data/UCI HAR Dataset")),
    ];
    candidates
        .into_iter()
        .flatten()
        .find(|d| d.join("train/X_train.txt").exists())
}

use serde::{Deserialize, Serialize};

use super::model::{score, Batch};
use super::params::ParameterVector;
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::par::{self, Execution};

/// Local training hyperparameters for one client update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub rng_seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::validation("learning_rate", "must be finite and non-negative"));
        }
        if self.local_epochs == 0 {
            return Err(Error::validation("local_epochs", "must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::validation("batch_size", "must be >= 1"));
        }
        Ok(())
    }
}

/// `params - lr * grad`.
pub fn sgd_step(params: &ParameterVector, grad: &ParameterVector, lr: f64) -> Result<ParameterVector> {
    let mut next = params.clone();
    next.add_scaled(grad, -lr)?;
    Ok(next)
}

/// Euclidean norm of the flat values.
pub fn l2_norm(v: &ParameterVector) -> f64 {
    v.flatten().iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub mean_loss: f64,
}

const EVAL_CHUNK: usize = 250;

/// Accuracy (argmax, lowest class index on ties) and mean cross-entropy on `test`.
pub fn evaluate(params: &ParameterVector, test: &LabeledDataset, exec: Execution) -> Result<Evaluation> {
    if test.is_empty() {
        return Err(Error::EmptyDataset("test set".into()));
    }
    let starts: Vec<usize> = (0..test.len()).step_by(EVAL_CHUNK).collect();
    let parts = par::map(exec, &starts, |&start| {
        let end = (start + EVAL_CHUNK).min(test.len());
        let batch = Batch::new(
            test.input_range(start, end),
            &test.labels()[start..end],
            test.feature_shape(),
        )?;
        let (losses, predictions) = score(params, &batch)?;
        let correct = predictions.iter().zip(batch.labels()).filter(|(p, l)| p == l).count();
        Ok::<_, crate::Error>((losses.iter().sum::<f64>(), correct))
    });
    let mut loss_sum = 0.0;
    let mut correct = 0;
    for part in parts {
        let (l, c): (f64, usize) = part?;
        loss_sum += l;
        correct += c;
    }
    Ok(Evaluation {
        accuracy: correct as f64 / test.len() as f64,
        mean_loss: loss_sum / test.len() as f64,
    })
}

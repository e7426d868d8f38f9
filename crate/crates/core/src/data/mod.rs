//! Dataset ingestion (MNIST IDX, UCI-HAR text, synthetic clusters) and
//! non-IID client partitioning.

mod mnist;
mod partition;
mod synthetic;
mod ucihar;

pub use mnist::{load_mnist, load_mnist_dir, read_idx_images, read_idx_labels};
pub use partition::{dirichlet_partition, Partition};
pub use synthetic::make_synthetic;
pub use ucihar::{load_ucihar, UCIHAR_FEATURES};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Samples stored contiguously, one `feature_shape.product()`-long row each.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    inputs: Vec<f64>,
    labels: Vec<usize>,
    num_classes: usize,
    feature_shape: Vec<usize>,
}

impl LabeledDataset {
    pub fn new(inputs: Vec<f64>, labels: Vec<usize>, num_classes: usize, feature_shape: Vec<usize>) -> Result<Self> {
        let per: usize = feature_shape.iter().product();
        if labels.is_empty() {
            return Err(Error::EmptyDataset("dataset has no samples".into()));
        }
        if per == 0 || per * labels.len() != inputs.len() {
            return Err(Error::Consistency(format!(
                "{} values cannot hold {} samples of shape {feature_shape:?}",
                inputs.len(),
                labels.len()
            )));
        }
        if let Some(l) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Format(format!("label {l} outside [0, {num_classes})")));
        }
        Ok(LabeledDataset {
            inputs,
            labels,
            num_classes,
            feature_shape,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn feature_shape(&self) -> &[usize] {
        &self.feature_shape
    }

    pub fn sample_len(&self) -> usize {
        self.feature_shape.iter().product()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let d = self.sample_len();
        &self.inputs[i * d..(i + 1) * d]
    }

    /// Rows `start..end` as one contiguous slice.
    pub fn input_range(&self, start: usize, end: usize) -> &[f64] {
        let d = self.sample_len();
        &self.inputs[start * d..end * d]
    }

    /// Copies the given samples into contiguous buffers, in the given order.
    pub fn gather(&self, indices: &[usize], inputs: &mut Vec<f64>, labels: &mut Vec<usize>) {
        inputs.clear();
        labels.clear();
        for &i in indices {
            inputs.extend_from_slice(self.sample(i));
            labels.push(self.labels[i]);
        }
    }

    /// A new dataset holding only `indices`, in order.
    pub fn subset(&self, indices: &[usize]) -> Result<LabeledDataset> {
        let (mut inputs, mut labels) = (Vec::new(), Vec::new());
        self.gather(indices, &mut inputs, &mut labels);
        LabeledDataset::new(inputs, labels, self.num_classes, self.feature_shape.clone())
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

/// One client's share of the training set, as indices into the parent dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientDataset {
    pub client_id: usize,
    pub indices: Vec<usize>,
}

impl ClientDataset {
    pub fn size(&self) -> usize {
        self.indices.len()
    }
}

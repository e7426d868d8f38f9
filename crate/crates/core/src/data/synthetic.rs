use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

/// Gaussian class clusters whose noise is clipped to a quarter of the smallest
/// distance between class means, so the nearest-mean rule (a linear classifier)
/// separates every sample with margin. Labels are assigned round-robin, so all
/// classes appear whenever `n >= num_classes`.
pub fn make_synthetic(n: usize, num_classes: usize, dim: usize, seed: u64) -> Result<LabeledDataset> {
    if n == 0 || num_classes == 0 || dim == 0 {
        return Err(Error::Precondition("n, num_classes and dim must be >= 1".into()));
    }
    let mut rng = stream_rng(seed, Stream::Synthetic, &[]);
    let means: Vec<Vec<f64>> = (0..num_classes)
        .map(|_| (0..dim).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    let mut min_dist = f64::INFINITY;
    for a in 0..num_classes {
        for b in a + 1..num_classes {
            let d = means[a]
                .iter()
                .zip(&means[b])
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            min_dist = min_dist.min(d);
        }
    }
    if !min_dist.is_finite() {
        min_dist = 4.0;
    }
    let radius = min_dist / 4.0;
    let sigma = min_dist / 8.0 / (dim as f64).sqrt();

    let mut labels: Vec<usize> = (0..n).map(|i| i % num_classes).collect();
    labels.shuffle(&mut rng);
    let mut inputs = Vec::with_capacity(n * dim);
    for &label in &labels {
        let mut noise: Vec<f64> = (0..dim).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = noise.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > radius {
            noise.iter_mut().for_each(|v| *v *= radius / norm);
        }
        inputs.extend(means[label].iter().zip(&noise).map(|(m, e)| m + e));
    }
    LabeledDataset::new(inputs, labels, num_classes, vec![dim])
}

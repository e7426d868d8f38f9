use serde::{Deserialize, Serialize};

use super::kernels::{self, ConvGeometry};
use super::layers::{infer_shapes, LayerSpec, Shape};
use super::params::ParameterVector;
use crate::error::{Error, Result};

/// The two supported architectures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "arch")]
pub enum Arch {
    /// Dense(128, ReLU) → Dense(64, ReLU) → Dense(classes, Softmax).
    HarMlp { input_dim: usize, num_classes: usize },
    /// Conv(16@5×5, ReLU) → MaxPool 2×2 → Conv(32@5×5, ReLU) → MaxPool 2×2 → Flatten → Dense(10, Softmax),
    /// on 1×28×28 inputs.
    MnistCnn,
}

impl Arch {
    pub fn layers(&self) -> Vec<LayerSpec> {
        match *self {
            Arch::HarMlp { input_dim, num_classes } => vec![
                LayerSpec::Dense {
                    inputs: input_dim,
                    outputs: 128,
                },
                LayerSpec::ReLU,
                LayerSpec::Dense {
                    inputs: 128,
                    outputs: 64,
                },
                LayerSpec::ReLU,
                LayerSpec::Dense {
                    inputs: 64,
                    outputs: num_classes,
                },
                LayerSpec::Softmax,
            ],
            Arch::MnistCnn => vec![
                LayerSpec::Conv2D {
                    filters: 16,
                    kernel_h: 5,
                    kernel_w: 5,
                    in_channels: 1,
                },
                LayerSpec::ReLU,
                LayerSpec::MaxPool2D { pool_h: 2, pool_w: 2 },
                LayerSpec::Conv2D {
                    filters: 32,
                    kernel_h: 5,
                    kernel_w: 5,
                    in_channels: 16,
                },
                LayerSpec::ReLU,
                LayerSpec::MaxPool2D { pool_h: 2, pool_w: 2 },
                LayerSpec::Flatten,
                LayerSpec::Dense {
                    inputs: 512,
                    outputs: 10,
                },
                LayerSpec::Softmax,
            ],
        }
    }

    pub fn input_shape(&self) -> Vec<usize> {
        match *self {
            Arch::HarMlp { input_dim, .. } => vec![input_dim],
            Arch::MnistCnn => vec![1, 28, 28],
        }
    }
}

/// Fresh Glorot-initialised parameters for `arch`.
pub fn build_model(arch: Arch, seed: u64) -> ParameterVector {
    ParameterVector::glorot(&arch.layers(), seed)
}

/// A borrowed minibatch: `labels.len()` samples, each `feature_shape.product()` values.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    inputs: &'a [f64],
    labels: &'a [usize],
    feature_shape: &'a [usize],
}

impl<'a> Batch<'a> {
    pub fn new(inputs: &'a [f64], labels: &'a [usize], feature_shape: &'a [usize]) -> Result<Self> {
        let per = feature_shape.iter().product::<usize>();
        if labels.is_empty() {
            return Err(Error::EmptyDataset("batch has no samples".into()));
        }
        if per * labels.len() != inputs.len() {
            return Err(Error::InputShape(format!(
                "{} input values for {} samples of shape {feature_shape:?}",
                inputs.len(),
                labels.len()
            )));
        }
        Ok(Batch {
            inputs,
            labels,
            feature_shape,
        })
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[usize] {
        self.labels
    }
}

enum Cache {
    Dense { input: Vec<f64> },
    Conv { cols: Vec<f64>, geometry: ConvGeometry },
    Pool { argmax: Vec<usize>, in_len: usize },
    Relu { input: Vec<f64> },
    Passthrough,
}

struct Pass {
    logits: Vec<f64>,
    classes: usize,
    caches: Vec<Cache>,
}

fn run_forward(params: &ParameterVector, batch: &Batch<'_>, keep: bool) -> Result<Pass> {
    let input_shape = Shape::from_dims(batch.feature_shape)?;
    let layers: Vec<LayerSpec> = params.layers().collect();
    let shapes = infer_shapes(&layers, input_shape)?;
    if layers.last() != Some(&LayerSpec::Softmax) {
        return Err(Error::InputShape("network must end in Softmax".into()));
    }
    let n = batch.size();
    let mut act = batch.inputs.to_vec();
    let mut shape = input_shape;
    let mut caches = Vec::with_capacity(layers.len());
    for (slot, &out_shape) in params.layout().iter().zip(&shapes) {
        let theta = params.slot_values(slot);
        let (next, cache) = match (slot.spec, shape) {
            (LayerSpec::Dense { inputs, outputs }, _) => {
                let (w, b) = theta.split_at(inputs * outputs);
                let y = kernels::dense_forward(&act, n, inputs, w, b);
                (y, Cache::Dense { input: act })
            }
            (
                LayerSpec::Conv2D {
                    filters,
                    kernel_h,
                    kernel_w,
                    ..
                },
                Shape::Image {
                    channels,
                    height,
                    width,
                },
            ) => {
                let geometry = ConvGeometry {
                    channels,
                    height,
                    width,
                    filters,
                    kernel_h,
                    kernel_w,
                };
                let (w, b) = theta.split_at(theta.len() - filters);
                let (y, cols) = kernels::conv_forward(&act, n, &geometry, w, b);
                (y, Cache::Conv { cols, geometry })
            }
            (
                LayerSpec::MaxPool2D { pool_h, pool_w },
                Shape::Image {
                    channels,
                    height,
                    width,
                },
            ) => {
                let (y, argmax) = kernels::maxpool_forward(&act, n, channels, height, width, pool_h, pool_w);
                let in_len = act.len();
                (y, Cache::Pool { argmax, in_len })
            }
            (LayerSpec::ReLU, _) => {
                let y = act.iter().map(|&v| v.max(0.0)).collect();
                (y, Cache::Relu { input: act })
            }
            (LayerSpec::Flatten, _) | (LayerSpec::Softmax, _) => (act, Cache::Passthrough),
            (spec, s) => {
                return Err(Error::InputShape(format!("{spec:?} cannot consume {s:?}")));
            }
        };
        act = next;
        shape = out_shape;
        if keep {
            caches.push(cache);
        }
    }
    Ok(Pass {
        logits: act,
        classes: shape.len(),
        caches,
    })
}

fn softmax_rows(logits: &[f64], classes: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.chunks_exact(classes) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let start = out.len();
        let mut sum = 0.0;
        for &z in row {
            let e = (z - max).exp();
            sum += e;
            out.push(e);
        }
        for p in &mut out[start..] {
            *p /= sum;
        }
    }
    out
}

/// Per-sample cross-entropy `logsumexp(z) - z_label`.
fn cross_entropy(row: &[f64], label: usize) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    (lse - row[label]).max(0.0)
}

fn check_labels(labels: &[usize], classes: usize) -> Result<()> {
    match labels.iter().find(|&&l| l >= classes) {
        Some(l) => Err(Error::InputShape(format!("label {l} outside [0, {classes})"))),
        None => Ok(()),
    }
}

/// Class probabilities, one row of `classes` entries per sample.
pub fn forward(params: &ParameterVector, batch: &Batch<'_>) -> Result<Vec<f64>> {
    let pass = run_forward(params, batch, false)?;
    Ok(softmax_rows(&pass.logits, pass.classes))
}

/// Per-sample losses and predicted classes (argmax, lowest index on ties).
pub(crate) fn score(params: &ParameterVector, batch: &Batch<'_>) -> Result<(Vec<f64>, Vec<usize>)> {
    let pass = run_forward(params, batch, false)?;
    check_labels(batch.labels, pass.classes)?;
    let mut losses = Vec::with_capacity(batch.size());
    let mut predictions = Vec::with_capacity(batch.size());
    for (row, &label) in pass.logits.chunks_exact(pass.classes).zip(batch.labels) {
        losses.push(cross_entropy(row, label));
        let mut best = 0;
        for (c, &z) in row.iter().enumerate() {
            if z > row[best] {
                best = c;
            }
        }
        predictions.push(best);
    }
    Ok((losses, predictions))
}

/// Mean cross-entropy loss over the batch only (no gradient).
pub fn loss(params: &ParameterVector, batch: &Batch<'_>) -> Result<f64> {
    let (losses, _) = score(params, batch)?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Mean cross-entropy loss and its gradient with respect to every parameter.
pub fn loss_and_grad(params: &ParameterVector, batch: &Batch<'_>) -> Result<(f64, ParameterVector)> {
    let pass = run_forward(params, batch, true)?;
    let classes = pass.classes;
    check_labels(batch.labels, classes)?;
    let n = batch.size();
    let scale = 1.0 / n as f64;

    let mut loss = 0.0;
    let mut delta = softmax_rows(&pass.logits, classes);
    for ((row, probs), &label) in pass
        .logits
        .chunks_exact(classes)
        .zip(delta.chunks_exact_mut(classes))
        .zip(batch.labels)
    {
        loss += cross_entropy(row, label);
        probs[label] -= 1.0;
        for p in probs.iter_mut() {
            *p *= scale;
        }
    }
    loss *= scale;

    let mut grad = params.zeros_like();
    let layout = params.layout().to_vec();
    for (i, (slot, cache)) in layout.iter().zip(pass.caches).enumerate().rev() {
        let need_dx = i > 0;
        let theta = params.slot_values(slot);
        let g = &mut grad.values_mut()[slot.offset..slot.offset + slot.len];
        delta = match (slot.spec, cache) {
            (LayerSpec::Dense { inputs, outputs }, Cache::Dense { input }) => {
                let (w, _) = theta.split_at(inputs * outputs);
                let (dw, db) = g.split_at_mut(inputs * outputs);
                match kernels::dense_backward(&input, &delta, n, inputs, outputs, w, dw, db, need_dx) {
                    Some(dx) => dx,
                    None => break,
                }
            }
            (LayerSpec::Conv2D { filters, .. }, Cache::Conv { cols, geometry }) => {
                let split = theta.len() - filters;
                let (dw, db) = g.split_at_mut(split);
                match kernels::conv_backward(&cols, &delta, n, &geometry, &theta[..split], dw, db, need_dx) {
                    Some(dx) => dx,
                    None => break,
                }
            }
            (LayerSpec::MaxPool2D { .. }, Cache::Pool { argmax, in_len }) => {
                kernels::maxpool_backward(&delta, &argmax, in_len)
            }
            (LayerSpec::ReLU, Cache::Relu { input }) => delta
                .iter()
                .zip(&input)
                .map(|(&d, &x)| if x > 0.0 { d } else { 0.0 })
                .collect(),
            (_, Cache::Passthrough) => delta,
            _ => unreachable!("cache kind always matches its layer"),
        };
    }
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn har_mlp_parameter_count() {
        // 561·128+128 + 128·64+64 + 64·6+6
        let p = build_model(
            Arch::HarMlp {
                input_dim: 561,
                num_classes: 6,
            },
            7,
        );
        let by_layer: usize = p.layout().iter().map(|s| s.len).sum();
        assert_eq!(by_layer, 80_582);
        assert_eq!(p.len(), 80_582);
    }

    #[test]
    fn mnist_cnn_first_conv_size() {
        let p = build_model(Arch::MnistCnn, 7);
        assert_eq!(p.layout()[0].len, 16 * 25 + 16);
        assert_eq!(p.len(), 416 + (32 * 16 * 25 + 32) + (512 * 10 + 10));
    }

    #[test]
    fn build_is_deterministic() {
        let a = build_model(Arch::MnistCnn, 7);
        let b = build_model(Arch::MnistCnn, 7);
        assert!(a
            .flatten()
            .iter()
            .zip(b.flatten())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_ne!(a.flatten(), build_model(Arch::MnistCnn, 8).flatten());
    }

    #[test]
    fn zero_weights_give_uniform_output() {
        let p = ParameterVector::zeros(
            &Arch::HarMlp {
                input_dim: 3,
                num_classes: 4,
            }
            .layers(),
        );
        let x = [0.3, -1.0, 2.0, 5.0, 5.0, 5.0];
        let probs = forward(&p, &Batch::new(&x, &[0, 1], &[3]).unwrap()).unwrap();
        assert!(probs.iter().all(|&q| (q - 0.25).abs() < 1e-15));
        let l = loss(&p, &Batch::new(&x, &[0, 1], &[3]).unwrap()).unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-6);
    }

    #[test]
    fn two_two_two_mlp_by_hand() {
        // Dense(2→2) → ReLU → Dense(2→2) → Softmax on x = [1, -2].
        let layers = [
            LayerSpec::Dense { inputs: 2, outputs: 2 },
            LayerSpec::ReLU,
            LayerSpec::Dense { inputs: 2, outputs: 2 },
            LayerSpec::Softmax,
        ];
        let values = vec![
            0.5, -0.25, 1.0, 0.75, // W1
            0.1, 0.2, // b1
            1.0, -1.0, 0.5, 2.0, // W2
            0.0, -0.3, // b2
        ];
        let p = ParameterVector::unflatten(values, ParameterVector::zeros(&layers).layout().to_vec()).unwrap();
        // hidden: [0.5 + 0.5 + 0.1, 1 - 1.5 + 0.2] = [1.1, -0.3] → ReLU [1.1, 0]
        // logits: [1.1, 0.55 - 0.3] = [1.1, 0.25]
        let (z0, z1) = (1.1f64, 0.25f64);
        let p1 = z1.exp() / (z0.exp() + z1.exp());
        let probs = forward(&p, &Batch::new(&[1.0, -2.0], &[0], &[2]).unwrap()).unwrap();
        assert!((probs[0] - (1.0 - p1)).abs() < 1e-12);
        assert!((probs[1] - p1).abs() < 1e-12);
    }

    #[test]
    fn saturated_prediction_has_zero_loss() {
        let layers = [LayerSpec::Dense { inputs: 1, outputs: 2 }, LayerSpec::Softmax];
        let p = ParameterVector::unflatten(
            vec![0.0, 0.0, 100.0, -100.0],
            ParameterVector::zeros(&layers).layout().to_vec(),
        )
        .unwrap();
        let (l, g) = loss_and_grad(&p, &Batch::new(&[1.0], &[0], &[1]).unwrap()).unwrap();
        assert!(l < 1e-6);
        assert!(g.flatten().iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn shape_mismatch_is_an_input_error() {
        let p = build_model(
            Arch::HarMlp {
                input_dim: 4,
                num_classes: 3,
            },
            1,
        );
        let x = [0.0; 5];
        let err = forward(&p, &Batch::new(&x, &[0], &[5]).unwrap());
        assert!(matches!(err, Err(Error::InputShape(_))));
        assert!(Batch::new(&x, &[0, 1], &[4]).is_err());
    }

    #[test]
    fn out_of_range_label_rejected() {
        let p = build_model(
            Arch::HarMlp {
                input_dim: 2,
                num_classes: 3,
            },
            1,
        );
        assert!(loss_and_grad(&p, &Batch::new(&[0.0, 1.0], &[3], &[2]).unwrap()).is_err());
    }
}

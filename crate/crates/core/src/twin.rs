//! Server-side digital twin: a single-cell LSTM that reads a client's history of
//! update norms and forecasts the next one, with Monte-Carlo dropout supplying an
//! uncertainty estimate.
//!
//! The twin works on norms divided by `norm_scale` (the running maximum of all
//! norms it has observed) and reports forecasts back in raw units.

use std::collections::VecDeque;

use rand::Rng;
use rand_distr::{Bernoulli, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

/// Observations required before the twin forecasts; fewer forces communication.
pub const MIN_HISTORY: usize = 2;
const SCALE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TwinConfig {
    pub hidden_size: usize,
    /// Capacity of the norm history buffer.
    pub window: usize,
    pub mc_passes: usize,
    pub dropout_rate: f64,
    pub retrain_epochs: usize,
    pub twin_lr: f64,
}

impl Default for TwinConfig {
    fn default() -> Self {
        TwinConfig {
            hidden_size: 16,
            window: 8,
            mc_passes: 20,
            dropout_rate: 0.2,
            retrain_epochs: 5,
            twin_lr: 0.01,
        }
    }
}

impl TwinConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_size == 0 {
            return Err(Error::validation("twin.hidden_size", "must be >= 1"));
        }
        if self.window < MIN_HISTORY {
            return Err(Error::validation("twin.window", format!("must be >= {MIN_HISTORY}")));
        }
        if self.mc_passes == 0 {
            return Err(Error::validation("twin.mc_passes", "must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::validation("twin.dropout_rate", "must lie in [0, 1)"));
        }
        if !(self.twin_lr.is_finite() && self.twin_lr >= 0.0) {
            return Err(Error::validation("twin.twin_lr", "must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Forecast of a client's next update norm, in raw norm units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwinForecast {
    pub predicted_magnitude: f64,
    pub uncertainty: f64,
    /// Set when the twin has too little history; both values are then +inf.
    pub cold_start: bool,
}

impl TwinForecast {
    pub fn cold() -> Self {
        TwinForecast {
            predicted_magnitude: f64::INFINITY,
            uncertainty: f64::INFINITY,
            cold_start: true,
        }
    }
}

/// Weights of one LSTM cell (input size 1) plus a Dense(H→1) readout, stored
/// flat as `[w_x (4H) | w_h (4H×H) | bias (4H) | head_w (H) | head_b]`.
/// Gate order inside each 4H block is input, forget, candidate, output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmWeights {
    pub hidden: usize,
    pub values: Vec<f64>,
}

struct Offsets {
    w_h: usize,
    bias: usize,
    head_w: usize,
    head_b: usize,
}

/// Per-timestep activations retained for backpropagation through time.
struct Step {
    x: f64,
    gates: Vec<f64>,
    c_prev: Vec<f64>,
    h_prev: Vec<f64>,
    tanh_c: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl LstmWeights {
    pub fn param_count(hidden: usize) -> usize {
        4 * hidden + 4 * hidden * hidden + 4 * hidden + hidden + 1
    }

    pub fn zeros(hidden: usize) -> Self {
        LstmWeights {
            hidden,
            values: vec![0.0; Self::param_count(hidden)],
        }
    }

    /// Uniform(±1/√H) for every weight and gate bias; the readout bias starts at
    /// 1, so an untrained twin forecasts the running maximum norm.
    pub fn init(hidden: usize, seed: u64) -> Self {
        let mut w = Self::zeros(hidden);
        let k = 1.0 / (hidden as f64).sqrt();
        let dist = Uniform::new_inclusive(-k, k);
        let mut rng = stream_rng(seed, Stream::TwinInit, &[]);
        for v in &mut w.values {
            *v = rng.sample(dist);
        }
        let head_b = w.offsets().head_b;
        w.values[head_b] = 1.0;
        w
    }

    fn offsets(&self) -> Offsets {
        let h = self.hidden;
        Offsets {
            w_h: 4 * h,
            bias: 4 * h + 4 * h * h,
            head_w: 8 * h + 4 * h * h,
            head_b: 9 * h + 4 * h * h,
        }
    }

    fn run(&self, sequence: &[f64], keep: bool) -> (Vec<f64>, Vec<Step>) {
        let h_n = self.hidden;
        let o = self.offsets();
        let v = &self.values;
        let mut h = vec![0.0; h_n];
        let mut c = vec![0.0; h_n];
        let mut steps = Vec::new();
        for &x in sequence {
            let mut gates = vec![0.0; 4 * h_n];
            for (r, gate) in gates.iter_mut().enumerate() {
                let row = &v[o.w_h + r * h_n..o.w_h + (r + 1) * h_n];
                let z = v[r] * x + v[o.bias + r] + row.iter().zip(&h).map(|(w, hk)| w * hk).sum::<f64>();
                *gate = if r / h_n == 2 { z.tanh() } else { sigmoid(z) };
            }
            let c_prev = c.clone();
            let h_prev = h.clone();
            let mut tanh_c = vec![0.0; h_n];
            for j in 0..h_n {
                let (i, f, g, og) = (gates[j], gates[h_n + j], gates[2 * h_n + j], gates[3 * h_n + j]);
                c[j] = f * c[j] + i * g;
                tanh_c[j] = c[j].tanh();
                h[j] = og * tanh_c[j];
            }
            if keep {
                steps.push(Step {
                    x,
                    gates,
                    c_prev,
                    h_prev,
                    tanh_c,
                });
            }
        }
        (h, steps)
    }

    fn readout(&self, h: &[f64], mask: Option<&[f64]>) -> f64 {
        let o = self.offsets();
        let head = &self.values[o.head_w..o.head_w + self.hidden];
        let dot: f64 = match mask {
            Some(m) => head.iter().zip(h).zip(m).map(|((w, x), k)| w * x * k).sum(),
            None => head.iter().zip(h).map(|(w, x)| w * x).sum(),
        };
        dot + self.values[o.head_b]
    }

    /// Scalar prediction for a normalized sequence. `mask` multiplies the final
    /// hidden state before the readout (inverted-dropout scaling is the caller's job).
    pub fn forward(&self, sequence: &[f64], mask: Option<&[f64]>) -> Result<f64> {
        if sequence.is_empty() {
            return Err(Error::Precondition("LSTM input sequence is empty".into()));
        }
        if let Some(m) = mask {
            if m.len() != self.hidden {
                return Err(Error::Precondition(format!(
                    "dropout mask has {} entries, hidden size is {}",
                    m.len(),
                    self.hidden
                )));
            }
        }
        let (h, _) = self.run(sequence, false);
        Ok(self.readout(&h, mask))
    }

    /// Adds `scale · ∂y/∂θ` for one sequence into `grad`, returning `y`.
    fn accumulate_grad(&self, sequence: &[f64], mask: &[f64], target: f64, scale: f64, grad: &mut [f64]) -> f64 {
        let h_n = self.hidden;
        let o = self.offsets();
        let v = &self.values;
        let (h, steps) = self.run(sequence, true);
        let y = self.readout(&h, Some(mask));
        let dy = scale * 2.0 * (y - target);

        grad[o.head_b] += dy;
        let mut dh = vec![0.0; h_n];
        for j in 0..h_n {
            grad[o.head_w + j] += dy * h[j] * mask[j];
            dh[j] = dy * v[o.head_w + j] * mask[j];
        }
        let mut dc = vec![0.0; h_n];
        let mut da = vec![0.0; 4 * h_n];
        for step in steps.iter().rev() {
            let g = &step.gates;
            for j in 0..h_n {
                let (i, f, cand, og) = (g[j], g[h_n + j], g[2 * h_n + j], g[3 * h_n + j]);
                let tc = step.tanh_c[j];
                let d_o = dh[j] * tc;
                let dcj = dc[j] + dh[j] * og * (1.0 - tc * tc);
                da[j] = dcj * cand * i * (1.0 - i);
                da[h_n + j] = dcj * step.c_prev[j] * f * (1.0 - f);
                da[2 * h_n + j] = dcj * i * (1.0 - cand * cand);
                da[3 * h_n + j] = d_o * og * (1.0 - og);
                dc[j] = dcj * f;
            }
            dh.iter_mut().for_each(|d| *d = 0.0);
            for (r, &dar) in da.iter().enumerate() {
                grad[r] += dar * step.x;
                grad[o.bias + r] += dar;
                let row = o.w_h + r * h_n;
                for k in 0..h_n {
                    grad[row + k] += dar * step.h_prev[k];
                    dh[k] += dar * v[row + k];
                }
            }
        }
        y
    }
}

/// A client's twin: weights, configuration and the norm history it learns from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwinModel {
    pub weights: LstmWeights,
    pub config: TwinConfig,
    history: VecDeque<f64>,
    norm_scale: f64,
    seed: u64,
    train_steps: u64,
}

impl TwinModel {
    pub fn new(config: TwinConfig, seed: u64) -> Self {
        Self::with_weights(LstmWeights::init(config.hidden_size, seed), config, seed)
    }

    pub fn with_weights(weights: LstmWeights, config: TwinConfig, seed: u64) -> Self {
        TwinModel {
            weights,
            config,
            history: VecDeque::with_capacity(config.window),
            norm_scale: SCALE_FLOOR,
            seed,
            train_steps: 0,
        }
    }

    pub fn history(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        self.history.iter().copied()
    }

    pub fn norm_scale(&self) -> f64 {
        self.norm_scale
    }

    fn normalized(&self) -> Vec<f64> {
        self.history.iter().map(|n| n / self.norm_scale).collect()
    }

    fn dropout_mask<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let p = self.config.dropout_rate;
        let keep = Bernoulli::new(1.0 - p).expect("dropout rate validated to [0, 1)");
        let scale = 1.0 / (1.0 - p);
        (0..self.config.hidden_size)
            .map(|_| if rng.sample(keep) { scale } else { 0.0 })
            .collect()
    }

    /// Monte-Carlo forecast over `mc_passes` dropout masks drawn from the stream
    /// identified by `stream` (the orchestrator passes the round index). The mean
    /// of the passes, clamped at zero, is the magnitude; their population standard
    /// deviation is the uncertainty. Does not modify the twin.
    pub fn predict(&self, mc_passes: usize, stream: u64) -> Result<TwinForecast> {
        if mc_passes == 0 {
            return Err(Error::Precondition("at least one Monte-Carlo pass required".into()));
        }
        if self.history.len() < MIN_HISTORY {
            return Ok(TwinForecast::cold());
        }
        let seq = self.normalized();
        if self.config.dropout_rate == 0.0 {
            let y = self.weights.forward(&seq, None)?;
            return Ok(TwinForecast {
                predicted_magnitude: y.max(0.0) * self.norm_scale,
                uncertainty: 0.0,
                cold_start: false,
            });
        }
        let mut rng = stream_rng(self.seed, Stream::TwinPredict, &[stream]);
        let (h, _) = self.weights.run(&seq, false);
        let passes: Vec<f64> = (0..mc_passes)
            .map(|_| {
                let mask = self.dropout_mask(&mut rng);
                self.weights.readout(&h, Some(&mask))
            })
            .collect();
        let k = passes.len() as f64;
        let mean = passes.iter().sum::<f64>() / k;
        let var = passes.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / k;
        Ok(TwinForecast {
            predicted_magnitude: mean.max(0.0) * self.norm_scale,
            uncertainty: var.sqrt() * self.norm_scale,
            cold_start: false,
        })
    }

    /// `(prefix, next value)` pairs over the normalized history.
    fn training_pairs(&self) -> Vec<(Vec<f64>, f64)> {
        let seq = self.normalized();
        (1..seq.len()).map(|j| (seq[..j].to_vec(), seq[j])).collect()
    }

    /// Mean squared next-step error on the current history without dropout.
    pub fn training_mse(&self) -> f64 {
        let pairs = self.training_pairs();
        if pairs.is_empty() {
            return 0.0;
        }
        let sse: f64 = pairs
            .iter()
            .map(|(x, t)| {
                let y = self.weights.forward(x, None).expect("prefixes are non-empty");
                (y - t) * (y - t)
            })
            .sum();
        sse / pairs.len() as f64
    }

    /// Records a newly observed norm, then runs `epochs` full-batch gradient
    /// steps on the squared next-step error over every prefix of the history,
    /// with dropout active.
    pub fn observe_and_retrain(&mut self, observed_norm: f64, epochs: usize, lr: f64) -> Result<()> {
        if !(observed_norm >= 0.0 && observed_norm.is_finite()) {
            return Err(Error::Precondition(format!(
                "observed norm must be finite and non-negative, got {observed_norm}"
            )));
        }
        if self.history.len() == self.config.window {
            self.history.pop_front();
        }
        self.history.push_back(observed_norm);
        self.norm_scale = self.norm_scale.max(observed_norm).max(SCALE_FLOOR);

        let pairs = self.training_pairs();
        if pairs.is_empty() {
            return Ok(());
        }
        let scale = 1.0 / pairs.len() as f64;
        let mut grad = vec![0.0; self.weights.values.len()];
        for _ in 0..epochs {
            let mut rng = stream_rng(self.seed, Stream::TwinTrain, &[self.train_steps]);
            self.train_steps += 1;
            grad.iter_mut().for_each(|g| *g = 0.0);
            for (x, t) in &pairs {
                let mask = self.dropout_mask(&mut rng);
                self.weights.accumulate_grad(x, &mask, *t, scale, &mut grad);
            }
            for (w, g) in self.weights.values.iter_mut().zip(&grad) {
                *w -= lr * g;
            }
        }
        Ok(())
    }

    /// [`observe_and_retrain`](Self::observe_and_retrain) with the configured schedule.
    pub fn observe(&mut self, observed_norm: f64) -> Result<()> {
        self.observe_and_retrain(observed_norm, self.config.retrain_epochs, self.config.twin_lr)
    }
}

use rand::Rng;
use rand_distr::Uniform;
use serde::{Deserialize, Serialize};

use super::layers::LayerSpec;
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

/// Placement of one layer's parameters inside the flat vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSlot {
    pub spec: LayerSpec,
    pub offset: usize,
    pub len: usize,
}

/// Flat parameter store with the layer layout needed to interpret it. Holds
/// global models, locally trained models, and update deltas alike.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    values: Vec<f64>,
    layout: Vec<LayerSlot>,
}

fn layout_for(layers: &[LayerSpec]) -> Vec<LayerSlot> {
    let mut offset = 0;
    layers
        .iter()
        .map(|&spec| {
            let len = spec.param_count();
            let slot = LayerSlot { spec, offset, len };
            offset += len;
            slot
        })
        .collect()
}

impl ParameterVector {
    pub fn zeros(layers: &[LayerSpec]) -> Self {
        let layout = layout_for(layers);
        let total = layout.iter().map(|s| s.len).sum();
        ParameterVector {
            values: vec![0.0; total],
            layout,
        }
    }

    /// Glorot-uniform weights, zero biases, drawn from a stream keyed by `seed`.
    pub fn glorot(layers: &[LayerSpec], seed: u64) -> Self {
        let mut params = Self::zeros(layers);
        let mut rng = stream_rng(seed, Stream::ModelInit, &[]);
        for slot in params.layout.clone() {
            if let Some((n_weights, fan_in, fan_out)) = slot.spec.weight_fans() {
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let dist = Uniform::new_inclusive(-limit, limit);
                for w in &mut params.values[slot.offset..slot.offset + n_weights] {
                    *w = rng.sample(dist);
                }
            }
        }
        params
    }

    /// Rebuilds a vector from flat values and a layout, validating that the
    /// layout is contiguous and matches the value count.
    pub fn unflatten(values: Vec<f64>, layout: Vec<LayerSlot>) -> Result<Self> {
        let mut expected = 0;
        for slot in &layout {
            if slot.offset != expected || slot.len != slot.spec.param_count() {
                return Err(Error::Layout(format!(
                    "slot {slot:?} is not contiguous at offset {expected}"
                )));
            }
            expected += slot.len;
        }
        if expected != values.len() {
            return Err(Error::Layout(format!(
                "layout covers {expected} values but {} were given",
                values.len()
            )));
        }
        Ok(ParameterVector { values, layout })
    }

    pub fn flatten(&self) -> &[f64] {
        &self.values
    }

    pub fn into_parts(self) -> (Vec<f64>, Vec<LayerSlot>) {
        (self.values, self.layout)
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn layout(&self) -> &[LayerSlot] {
        &self.layout
    }

    pub fn layers(&self) -> impl Iterator<Item = LayerSpec> + '_ {
        self.layout.iter().map(|s| s.spec)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn slot_values(&self, slot: &LayerSlot) -> &[f64] {
        &self.values[slot.offset..slot.offset + slot.len]
    }

    pub fn zeros_like(&self) -> Self {
        ParameterVector {
            values: vec![0.0; self.values.len()],
            layout: self.layout.clone(),
        }
    }

    pub fn ensure_same_layout(&self, other: &ParameterVector) -> Result<()> {
        if self.layout == other.layout {
            Ok(())
        } else {
            Err(Error::Layout(format!(
                "{} vs {} parameters in differing layouts",
                self.len(),
                other.len()
            )))
        }
    }

    /// `self - other`, e.g. a local model minus the broadcast model.
    pub fn sub(&self, other: &ParameterVector) -> Result<ParameterVector> {
        self.ensure_same_layout(other)?;
        Ok(ParameterVector {
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
            layout: self.layout.clone(),
        })
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &ParameterVector, scale: f64) -> Result<()> {
        self.ensure_same_layout(other)?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += scale * b;
        }
        Ok(())
    }
}

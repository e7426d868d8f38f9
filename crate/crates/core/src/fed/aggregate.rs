use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::nn::ParameterVector;

/// Dataset-size weights over the participating clients, in the given order.
pub fn aggregation_weights(participants: &[usize], sizes: &BTreeMap<usize, usize>) -> Result<Vec<f64>> {
    let counts = participants
        .iter()
        .map(|id| match sizes.get(id) {
            Some(&s) if s > 0 => Ok(s),
            Some(_) => Err(Error::Consistency(format!("client {id} has size 0"))),
            None => Err(Error::Consistency(format!("no dataset size for client {id}"))),
        })
        .collect::<Result<Vec<usize>>>()?;
    let total: usize = counts.iter().sum();
    Ok(counts.iter().map(|&c| c as f64 / total as f64).collect())
}

/// `theta_prev + Σ_i (|D_i| / Σ_j |D_j|) · Δ_i` over the clients that sent deltas.
/// With no deltas the previous model is returned unchanged.
pub fn aggregate(
    theta_prev: &ParameterVector,
    deltas: &[(usize, ParameterVector)],
    sizes: &BTreeMap<usize, usize>,
) -> Result<ParameterVector> {
    let ids: Vec<usize> = deltas.iter().map(|(id, _)| *id).collect();
    let weights = aggregation_weights(&ids, sizes)?;
    let mut next = theta_prev.clone();
    for ((_, delta), w) in deltas.iter().zip(weights) {
        next.add_scaled(delta, w)?;
    }
    Ok(next)
}

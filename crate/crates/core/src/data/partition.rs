use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Gamma;
use serde::{Deserialize, Serialize};

use super::{ClientDataset, LabeledDataset};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

const EMPTY_CLIENT_RETRIES: usize = 100;
const DEGENERATE_DRAW_RETRIES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub clients: Vec<ClientDataset>,
    pub alpha: f64,
    pub seed: u64,
}

impl Partition {
    pub fn sizes(&self) -> Vec<usize> {
        self.clients.iter().map(ClientDataset::size).collect()
    }

    pub fn total(&self) -> usize {
        self.clients.iter().map(ClientDataset::size).sum()
    }
}

/// One draw from Dirichlet(alpha·1). Degenerate draws (every gamma variate
/// underflowing to zero, which happens for tiny alpha) are redrawn, and as a last
/// resort the whole mass goes to one uniformly chosen client.
fn dirichlet(rng: &mut ChaCha8Rng, gamma: &Gamma<f64>, n: usize) -> Vec<f64> {
    for _ in 0..DEGENERATE_DRAW_RETRIES {
        let g: Vec<f64> = (0..n).map(|_| rng.sample(gamma)).collect();
        let sum: f64 = g.iter().sum();
        if sum > 0.0 && sum.is_finite() {
            return g.into_iter().map(|v| v / sum).collect();
        }
    }
    let mut p = vec![0.0; n];
    p[rng.gen_range(0..n)] = 1.0;
    p
}

/// Largest-remainder apportionment of `total` items; ties go to the lower index.
fn apportion(props: &[f64], total: usize) -> Vec<usize> {
    let quotas: Vec<f64> = props.iter().map(|p| p * total as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..props.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Splits `pool` (already shuffled) across clients according to `props`.
fn assign(pool: &[usize], props: &[f64]) -> Vec<Vec<usize>> {
    let counts = apportion(props, pool.len());
    let mut out = Vec::with_capacity(counts.len());
    let mut start = 0;
    for c in counts {
        out.push(pool[start..start + c].to_vec());
        start += c;
    }
    out
}

/// Label-skewed split: for every class, client shares are drawn from
/// Dirichlet(alpha·1) and the class's samples are dealt out by largest remainder.
///
/// If a client ends up empty, the largest class is redrawn up to 100 times;
/// after that, each empty client takes one sample from the currently largest client.
pub fn dirichlet_partition(train: &LabeledDataset, n_clients: usize, alpha: f64, seed: u64) -> Result<Partition> {
    if n_clients == 0 {
        return Err(Error::Precondition("n_clients must be >= 1".into()));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Precondition(format!(
            "alpha must be positive and finite, got {alpha}"
        )));
    }
    if train.len() < n_clients {
        return Err(Error::Partition(format!(
            "{} samples cannot cover {n_clients} clients",
            train.len()
        )));
    }
    let gamma = Gamma::new(alpha, 1.0).map_err(|e| Error::Precondition(e.to_string()))?;
    let mut rng = stream_rng(seed, Stream::Partition, &[]);

    let mut pools: Vec<Vec<usize>> = vec![Vec::new(); train.num_classes()];
    for (i, &l) in train.labels().iter().enumerate() {
        pools[l].push(i);
    }
    for pool in &mut pools {
        pool.shuffle(&mut rng);
    }
    // shares[class][client]
    let mut shares: Vec<Vec<Vec<usize>>> = pools
        .iter()
        .map(|pool| assign(pool, &dirichlet(&mut rng, &gamma, n_clients)))
        .collect();

    let client_sizes = |shares: &[Vec<Vec<usize>>]| -> Vec<usize> {
        (0..n_clients)
            .map(|c| shares.iter().map(|s| s[c].len()).sum())
            .collect()
    };
    let largest_class = (0..pools.len())
        .max_by(|&a, &b| pools[a].len().cmp(&pools[b].len()).then(b.cmp(&a)))
        .unwrap_or(0);
    for _ in 0..EMPTY_CLIENT_RETRIES {
        if client_sizes(&shares).iter().all(|&s| s > 0) {
            break;
        }
        shares[largest_class] = assign(&pools[largest_class], &dirichlet(&mut rng, &gamma, n_clients));
    }

    let mut clients: Vec<Vec<usize>> = (0..n_clients)
        .map(|c| shares.iter().flat_map(|s| s[c].iter().copied()).collect())
        .collect();
    while let Some(empty) = clients.iter().position(Vec::is_empty) {
        let donor = (0..n_clients)
            .max_by(|&a, &b| clients[a].len().cmp(&clients[b].len()).then(b.cmp(&a)))
            .expect("n_clients >= 1");
        let moved = clients[donor].pop().expect("donor holds >= 2 samples");
        clients[empty].push(moved);
    }

    Ok(Partition {
        clients: clients
            .into_iter()
            .enumerate()
            .map(|(client_id, mut indices)| {
                indices.sort_unstable();
                ClientDataset { client_id, indices }
            })
            .collect(),
        alpha,
        seed,
    })
}

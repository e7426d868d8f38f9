use rand::seq::SliceRandom;

use crate::data::{ClientDataset, LabeledDataset};
use crate::error::{Error, Result};
use crate::nn::{loss_and_grad, Batch, ParameterVector, TrainConfig};
use crate::rng::{stream_rng, Stream};

/// Produces a client's locally trained model from the broadcast global model.
pub trait LocalTrainer: Sync {
    fn train(&self, client: &ClientDataset, global: &ParameterVector, round: usize) -> Result<ParameterVector>;
}

/// `local_epochs` passes of minibatch SGD over the client's samples. The visiting
/// order is reshuffled each epoch from a stream keyed by (seed, client, round).
pub fn client_update(
    global: &ParameterVector,
    client: &ClientDataset,
    train: &LabeledDataset,
    cfg: &TrainConfig,
    round: usize,
) -> Result<ParameterVector> {
    if client.indices.is_empty() {
        return Err(Error::EmptyClient(client.client_id));
    }
    let mut params = global.clone();
    let mut rng = stream_rng(
        cfg.rng_seed,
        Stream::ClientShuffle,
        &[client.client_id as u64, round as u64],
    );
    let mut order = client.indices.clone();
    let (mut inputs, mut labels) = (Vec::new(), Vec::new());
    for _ in 0..cfg.local_epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            train.gather(chunk, &mut inputs, &mut labels);
            let batch = Batch::new(&inputs, &labels, train.feature_shape())?;
            let (_, grad) = loss_and_grad(&params, &batch)?;
            params.add_scaled(&grad, -cfg.learning_rate)?;
        }
    }
    Ok(params)
}

/// The standard trainer: [`client_update`] over a shared training set.
pub struct SgdTrainer<'a> {
    pub train: &'a LabeledDataset,
    pub config: TrainConfig,
}

impl LocalTrainer for SgdTrainer<'_> {
    fn train(&self, client: &ClientDataset, global: &ParameterVector, round: usize) -> Result<ParameterVector> {
        client_update(global, client, self.train, &self.config, round)
    }
}

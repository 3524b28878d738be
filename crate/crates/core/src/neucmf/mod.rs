//! Stage 2: neural collective matrix factorization over two domains with a
//! shared user table, plus the KG fusion ablations.

mod batch;
mod loss;
mod model;
mod persist;
mod train;

pub use batch::{make_mi_batch, make_mi_batch_with, MiBatch, MiPair};
pub use loss::{domain_loss, loss_and_grad, mi_loss, total_loss, LossParts, LossWeights};
pub use model::{mi_discriminator, FusionVariant, HeadIds, ItemKnowledge, NeuCmfLayout, NeuCmfModel};
pub use persist::MODEL_KIND;
pub use train::{train, NeuCmfConfig, TrainData};

pub(crate) use model::open_unit;

use crate::domain::Domain;
use crate::error::{Error, Result};

/// Prediction of a model that must be of the given fusion variant.
pub fn predict_fused(variant: FusionVariant, model: &NeuCmfModel, user: usize, domain: Domain, item: usize) -> Result<f64> {
    if model.layout.variant != variant {
        return Err(Error::Config(format!(
            "model is {}, prediction requested for {variant}",
            model.layout.variant
        )));
    }
    model.predict(user, domain, item)
}

#[cfg(test)]
mod tests;

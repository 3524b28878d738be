use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::batch::{make_mi_batch_with, MiBatch};
use super::loss::{domain_loss_view, mi_loss_view, total_loss_and_grad, LossWeights, ModelView};
use super::model::{FusionVariant, ItemKnowledge, NeuCmfModel};
use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::interactions::Rating;
use crate::numerics::{adam_step, AdamConfig};
use crate::training::{fit, EpochLosses, TrainLog, DEFAULT_EARLY_STOP_WINDOW, DEFAULT_MAX_EPOCHS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NeuCmfConfig {
    pub variant: FusionVariant,
    pub embedding_dim: usize,
    pub learning_rate: f64,
    /// `λ` on the squared parameter norm.
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub early_stop_window: usize,
    /// Rating records per step, both domains mixed.
    pub batch_size: usize,
    /// Positive pairs per discriminator batch, split evenly over the domains.
    pub mi_batch_size: usize,
    /// Multiplier on the mutual-information loss; 0 disables the discriminator.
    pub mi_weight: f64,
    pub seed: u64,
}

impl Default for NeuCmfConfig {
    fn default() -> Self {
        Self {
            variant: FusionVariant::MutualInfo,
            embedding_dim: 16,
            learning_rate: 0.001,
            weight_decay: 1e-4,
            max_epochs: DEFAULT_MAX_EPOCHS,
            early_stop_window: DEFAULT_EARLY_STOP_WINDOW,
            batch_size: 64,
            mi_batch_size: 64,
            mi_weight: 1.0,
            seed: 0,
        }
    }
}

impl NeuCmfConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embedding_dim == 0 {
            return Err(Error::Config("embedding_dim must be positive".into()));
        }
        if self.max_epochs == 0 || self.early_stop_window == 0 {
            return Err(Error::Config("max_epochs and early_stop_window must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config(format!("weight_decay {} must be finite and >= 0", self.weight_decay)));
        }
        if !(self.mi_weight >= 0.0 && self.mi_weight.is_finite()) {
            return Err(Error::Config(format!("mi_weight {} must be finite and >= 0", self.mi_weight)));
        }
        if self.uses_mi() && self.mi_batch_size < 2 {
            return Err(Error::Config("mi_batch_size must be at least 2".into()));
        }
        self.adam().validate()
    }

    pub(crate) fn adam(&self) -> AdamConfig {
        AdamConfig::with_learning_rate(self.learning_rate)
    }

    pub fn uses_mi(&self) -> bool {
        self.variant.uses_discriminator() && self.mi_weight > 0.0
    }

    fn weights(&self) -> LossWeights {
        LossWeights {
            mi: if self.uses_mi() { self.mi_weight } else { 0.0 },
            l2: self.weight_decay,
        }
    }
}

/// Ratings of both domains over one user id space.
#[derive(Debug, Clone, Copy)]
pub struct TrainData<'a> {
    pub n_users: usize,
    pub n_items: [usize; 2],
    pub train: [&'a [Rating]; 2],
    pub validation: [&'a [Rating]; 2],
}

impl TrainData<'_> {
    fn check(&self) -> Result<()> {
        if self.train.iter().all(|t| t.is_empty()) {
            return Err(Error::Data("no training ratings in either domain".into()));
        }
        if self.validation.iter().all(|v| v.is_empty()) {
            return Err(Error::Data("no validation ratings in either domain".into()));
        }
        for d in Domain::BOTH {
            let n_items = self.n_items[d.index()];
            for r in self.train[d.index()].iter().chain(self.validation[d.index()]) {
                if r.user >= self.n_users || r.item >= n_items {
                    return Err(Error::Lookup(format!(
                        "rating {r:?} in domain {d} out of range ({} users, {n_items} items)",
                        self.n_users
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Trains with minibatch Adam and early stopping; returns the parameters
/// of the best validation epoch.
///
/// Each step draws a shuffled chunk of ratings from both domains and, when
/// the discriminator is active, a fresh [`MiBatch`]. The epoch log reports
/// losses on the full training sets and on a fixed discriminator batch
/// drawn before training.
pub fn train(data: &TrainData<'_>, knowledge: Option<Arc<ItemKnowledge>>, cfg: &NeuCmfConfig) -> Result<(NeuCmfModel, TrainLog)> {
    cfg.validate()?;
    data.check()?;
    if cfg.uses_mi() && knowledge.is_none() {
        return Err(Error::Config("mutual-information training needs KG embeddings".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = NeuCmfModel::new(cfg.variant, data.n_users, data.n_items, cfg.embedding_dim, knowledge, &mut rng)?;
    // Batch sampling draws from its own stream so table sizes do not shift it.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let log = train_model(&mut model, data, cfg, &mut rng)?;
    Ok((model, log))
}

/// Continues training an already initialized model.
fn train_model(model: &mut NeuCmfModel, data: &TrainData<'_>, cfg: &NeuCmfConfig, rng: &mut ChaCha8Rng) -> Result<TrainLog> {
    let knowledge = model.knowledge.clone();
    let k = knowledge.as_deref();
    let reference_mi = match (cfg.uses_mi(), k) {
        (true, Some(k)) => Some(make_mi_batch_with(k, cfg.mi_batch_size, rng)?),
        (true, None) => return Err(Error::Config("mutual-information training needs KG embeddings".into())),
        _ => None,
    };
    let mut records: Vec<(Domain, Rating)> = Domain::BOTH
        .iter()
        .flat_map(|&d| data.train[d.index()].iter().map(move |&r| (d, r)))
        .collect();
    let adam = cfg.adam();
    let weights = cfg.weights();
    let layout = model.layout.clone();
    let mut step = model.store.step;
    let mut split: [Vec<Rating>; 2] = [Vec::new(), Vec::new()];

    fit(
        &mut model.store,
        cfg.max_epochs,
        cfg.early_stop_window,
        |store, epoch| {
            records.shuffle(rng);
            for chunk in records.chunks(cfg.batch_size) {
                split.iter_mut().for_each(Vec::clear);
                for &(d, r) in chunk {
                    split[d.index()].push(r);
                }
                let mi: Option<MiBatch> = match (cfg.uses_mi(), k) {
                    (true, Some(k)) => Some(make_mi_batch_with(k, cfg.mi_batch_size, rng)?),
                    _ => None,
                };
                let parts = total_loss_and_grad(&layout, store, k, &split[0], &split[1], mi.as_ref(), weights);
                let total = parts.total(weights.mi);
                if !total.is_finite() {
                    return Err(Error::Training(format!("non-finite loss at epoch {epoch}")));
                }
                step += 1;
                adam_step(store, &adam, step).map_err(|e| Error::Training(format!("epoch {epoch}: {e}")))?;
            }
            let view = ModelView {
                layout: &layout,
                store,
                knowledge: k,
            };
            Ok(EpochLosses {
                source: domain_loss_view(view, Domain::Source, data.train[0]),
                target: domain_loss_view(view, Domain::Target, data.train[1]),
                mi: reference_mi.as_ref().map_or(0.0, |b| mi_loss_view(view, b)),
            })
        },
        |store| {
            let view = ModelView {
                layout: &layout,
                store,
                knowledge: k,
            };
            Ok(domain_loss_view(view, Domain::Source, data.validation[0])
                + domain_loss_view(view, Domain::Target, data.validation[1]))
        },
    )
}

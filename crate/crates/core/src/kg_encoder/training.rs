use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::decoder::{distmult_raw, sample_negatives_with, LabeledTripleBatch};
use super::model::{encode_backward, encode_with_cache, EncoderLayout, KgEncoderModel};
use crate::error::{Error, Result};
use crate::kg::KnowledgeGraph;
use crate::numerics::{adam_step, sigmoid, AdamConfig, ParameterStore, Tensor2};

const PROB_CLAMP: f64 = 1e-12;

/// Binary cross-entropy of one probability, clamped away from 0 and 1.
#[inline]
pub(crate) fn bce(p: f64, label: bool) -> f64 {
    let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    if label {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KgTrainConfig {
    pub embedding_dim: usize,
    pub num_layers: usize,
    pub max_epochs: usize,
    /// Positive triples per minibatch; each comes with one corruption.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// Draw fresh corruptions every epoch instead of reusing the first set.
    pub resample_negatives: bool,
    pub seed: u64,
}

impl Default for KgTrainConfig {
    fn default() -> Self {
        Self {
            embedding_dim: 16,
            num_layers: 2,
            max_epochs: 200,
            batch_size: 1024,
            learning_rate: 0.01,
            weight_decay: 0.0001,
            resample_negatives: true,
            seed: 0,
        }
    }
}

impl KgTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embedding_dim == 0 || self.batch_size == 0 {
            return Err(Error::Config("stage-1 embedding_dim and batch_size must be positive".into()));
        }
        self.adam().validate()
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            ..AdamConfig::default()
        }
    }

    pub fn dims(&self) -> Vec<usize> {
        vec![self.embedding_dim; self.num_layers + 1]
    }
}

/// Mean cross-entropy of DistMult probabilities on encoded embeddings.
pub fn kg_loss(model: &KgEncoderModel, g: &KnowledgeGraph, batch: &LabeledTripleBatch) -> Result<f64> {
    kg_loss_with(&model.layout, &model.store, g, batch)
}

pub fn kg_loss_with(layout: &EncoderLayout, store: &ParameterStore, g: &KnowledgeGraph, batch: &LabeledTripleBatch) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Data("kg_loss on an empty batch".into()));
    }
    let cache = encode_with_cache(layout, store, g)?;
    let emb = cache.output(layout, store);
    let diag = store.value(layout.relation_diag);
    let mut total = 0.0;
    for &(t, y) in &batch.samples {
        let s = distmult_raw(emb.row(t.head.0), diag.row(t.relation.0), emb.row(t.tail.0))?;
        total += bce(sigmoid(s), y);
    }
    Ok(total / batch.len() as f64)
}

/// Loss plus gradients accumulated into `store`'s buffers.
pub fn kg_loss_and_grad(layout: &EncoderLayout, store: &mut ParameterStore, g: &KnowledgeGraph, batch: &LabeledTripleBatch) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Data("kg_loss on an empty batch".into()));
    }
    let cache = encode_with_cache(layout, store, g)?;
    let n = batch.len() as f64;
    let (loss, grad_emb, grad_diag) = {
        let emb = cache.output(layout, store);
        let diag = store.value(layout.relation_diag);
        let d = emb.cols();
        let mut grad_emb = Tensor2::zeros(emb.rows(), d);
        let mut grad_diag = Tensor2::zeros(diag.rows(), d);
        let mut total = 0.0;
        for &(t, y) in &batch.samples {
            let (h, r, tl) = (emb.row(t.head.0), diag.row(t.relation.0), emb.row(t.tail.0));
            let p = sigmoid(distmult_raw(h, r, tl)?);
            total += bce(p, y);
            let ds = (p - if y { 1.0 } else { 0.0 }) / n;
            for k in 0..d {
                grad_emb.row_mut(t.head.0)[k] += ds * r[k] * tl[k];
                grad_emb.row_mut(t.tail.0)[k] += ds * r[k] * h[k];
                grad_diag.row_mut(t.relation.0)[k] += ds * h[k] * tl[k];
            }
        }
        (total / n, grad_emb, grad_diag)
    };
    store.grad_mut(layout.relation_diag).add_assign(&grad_diag)?;
    encode_backward(layout, store, g, &cache, grad_emb);
    Ok(loss)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KgEpochLog {
    pub epoch: usize,
    /// Mean minibatch loss during the epoch (entry 0: before training).
    pub loss: f64,
    /// Loss after the epoch on the fixed sample set drawn before training.
    pub reference_loss: f64,
}

#[derive(Debug, Clone)]
pub struct KgTrainOutcome {
    pub model: KgEncoderModel,
    /// Encoded entity embeddings after training; frozen from here on.
    pub embeddings: Tensor2,
    /// Entry 0 is the loss of the untrained model on the first epoch's samples.
    pub log: Vec<KgEpochLog>,
}

/// Trains the encoder with minibatch Adam and returns the frozen embeddings.
pub fn train_kg_encoder(g: &KnowledgeGraph, cfg: &KgTrainConfig) -> Result<KgTrainOutcome> {
    cfg.validate()?;
    if g.is_empty() {
        return Err(Error::EmptyGraph("cannot pretrain on a graph without triples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = KgEncoderModel::new(g, &cfg.dims(), &mut rng)?;
    let adam = cfg.adam();
    let positives = g.triples();

    let mut samples = sample_negatives_with(g, positives, &mut rng);
    let reference = samples.clone();
    let initial = kg_loss(&model, g, &reference)?;
    let mut log = vec![KgEpochLog {
        epoch: 0,
        loss: initial,
        reference_loss: initial,
    }];
    let mut step = model.store.step;
    for epoch in 1..=cfg.max_epochs {
        if epoch > 1 && cfg.resample_negatives {
            samples = sample_negatives_with(g, positives, &mut rng);
        }
        // Each positive travels with its own corruption so minibatches stay balanced.
        let n_pos = positives.len();
        let mut order: Vec<usize> = (0..n_pos).collect();
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = LabeledTripleBatch {
                samples: chunk
                    .iter()
                    .map(|&i| samples.samples[i])
                    .chain(chunk.iter().map(|&i| samples.samples[n_pos + i]))
                    .collect(),
            };
            let loss = kg_loss_and_grad(&model.layout, &mut model.store, g, &batch)?;
            if !loss.is_finite() {
                return Err(Error::Training(format!("non-finite stage-1 loss at epoch {epoch}")));
            }
            step += 1;
            adam_step(&mut model.store, &adam, step)
                .map_err(|e| Error::Training(format!("epoch {epoch}: {e}")))?;
            epoch_loss += loss * batch.len() as f64;
            seen += batch.len();
        }
        log.push(KgEpochLog {
            epoch,
            loss: epoch_loss / seen as f64,
            reference_loss: kg_loss(&model, g, &reference)?,
        });
        log::debug!("stage-1 epoch {epoch}: loss {:.6}", epoch_loss / seen as f64);
    }
    let embeddings = model.encode(g)?;
    Ok(KgTrainOutcome { model, embeddings, log })
}

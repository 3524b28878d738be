use super::batch::MiBatch;
use super::model::{bilinear, head_logit, kg_input, FusionVariant, ItemKnowledge, NeuCmfLayout, NeuCmfModel};
use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::interactions::Rating;
use crate::kg_encoder::bce;
use crate::numerics::{axpy, dot, sigmoid, vec_mat_acc, GradBuffers, ParameterStore};

/// Weights of the non-reconstruction terms of the joint objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    /// Multiplier on the mutual-information loss.
    pub mi: f64,
    /// `λ` on the sum of squared parameter values.
    pub l2: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { mi: 1.0, l2: 0.0 }
    }
}

/// Components of the joint objective.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossParts {
    pub source: f64,
    pub target: f64,
    pub mi: f64,
    /// `λ · Σ v²` (already weighted).
    pub l2: f64,
}

impl LossParts {
    pub fn total(&self, mi_weight: f64) -> f64 {
        self.source + self.target + mi_weight * self.mi + self.l2
    }
}

/// Borrowed view of a model; the training loop owns the store separately.
#[derive(Clone, Copy)]
pub(crate) struct ModelView<'a> {
    pub layout: &'a NeuCmfLayout,
    pub store: &'a ParameterStore,
    pub knowledge: Option<&'a ItemKnowledge>,
}

impl<'a> From<&'a NeuCmfModel> for ModelView<'a> {
    fn from(m: &'a NeuCmfModel) -> Self {
        Self {
            layout: &m.layout,
            store: &m.store,
            knowledge: m.knowledge.as_deref(),
        }
    }
}

/// Mean squared error of predictions against normalized ratings.
pub fn domain_loss(model: &NeuCmfModel, domain: Domain, records: &[Rating]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::Data(format!("domain_loss on an empty record list (domain {domain})")));
    }
    for r in records {
        model.check_ids(r.user, domain, r.item)?;
    }
    Ok(domain_loss_view(model.into(), domain, records))
}

/// Returns 0 for an empty list.
pub(crate) fn domain_loss_view(m: ModelView<'_>, domain: Domain, records: &[Rating]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    let sum: f64 = records
        .iter()
        .map(|r| {
            let p = sigmoid(head_logit(m.layout, m.store, m.knowledge, r.user, domain, r.item));
            (p - r.target()).powi(2)
        })
        .sum();
    sum / records.len() as f64
}

/// Mean binary cross-entropy of discriminator scores over the batch.
pub fn mi_loss(model: &NeuCmfModel, batch: &MiBatch) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Data("mi_loss on an empty batch".into()));
    }
    let knowledge = model
        .knowledge
        .as_deref()
        .ok_or_else(|| Error::Config("mi_loss needs KG embeddings".into()))?;
    if model.layout.disc_weight.is_none() {
        return Err(Error::Config(format!("variant {} has no discriminator", model.layout.variant)));
    }
    for p in &batch.pairs {
        model.check_ids(0, p.domain, p.item)?;
        if p.kg_row >= knowledge.embeddings.rows() {
            return Err(Error::Lookup(format!("kg row {} out of range", p.kg_row)));
        }
    }
    Ok(mi_loss_view(model.into(), batch))
}

pub(crate) fn mi_loss_view(m: ModelView<'_>, batch: &MiBatch) -> f64 {
    let (Some(w_id), Some(k)) = (m.layout.disc_weight, m.knowledge) else {
        return 0.0;
    };
    if batch.is_empty() {
        return 0.0;
    }
    let w = m.store.value(w_id);
    let sum: f64 = batch
        .pairs
        .iter()
        .map(|p| {
            let item = m.store.value(m.layout.item_tables[p.domain.index()]).row(p.item);
            bce(sigmoid(bilinear(item, w, k.embeddings.row(p.kg_row))), p.positive)
        })
        .sum();
    sum / batch.len() as f64
}

/// `L_S + L_T + w_mi·L_mul + λ·Σv²`. Empty record lists contribute 0.
pub fn total_loss(
    model: &NeuCmfModel,
    source: &[Rating],
    target: &[Rating],
    mi: Option<&MiBatch>,
    weights: LossWeights,
) -> Result<f64> {
    Ok(loss_parts(model.into(), source, target, mi, weights).total(weights.mi))
}

/// [`total_loss`] plus its gradient, accumulated into the model's gradient
/// buffers (cleared by the next optimizer step).
pub fn loss_and_grad(
    model: &mut NeuCmfModel,
    source: &[Rating],
    target: &[Rating],
    mi: Option<&MiBatch>,
    weights: LossWeights,
) -> Result<LossParts> {
    for (d, records) in [(Domain::Source, source), (Domain::Target, target)] {
        for r in records {
            model.check_ids(r.user, d, r.item)?;
        }
    }
    let knowledge = model.knowledge.clone();
    Ok(total_loss_and_grad(&model.layout, &mut model.store, knowledge.as_deref(), source, target, mi, weights))
}

pub(crate) fn loss_parts(
    m: ModelView<'_>,
    source: &[Rating],
    target: &[Rating],
    mi: Option<&MiBatch>,
    weights: LossWeights,
) -> LossParts {
    LossParts {
        source: domain_loss_view(m, Domain::Source, source),
        target: domain_loss_view(m, Domain::Target, target),
        mi: mi.map_or(0.0, |b| mi_loss_view(m, b)),
        l2: if weights.l2 == 0.0 { 0.0 } else { weights.l2 * m.store.sum_squares() },
    }
}

/// Evaluates the joint objective and adds its gradient to `store`'s buffers.
pub(crate) fn total_loss_and_grad(
    layout: &NeuCmfLayout,
    store: &mut ParameterStore,
    knowledge: Option<&ItemKnowledge>,
    source: &[Rating],
    target: &[Rating],
    mi: Option<&MiBatch>,
    weights: LossWeights,
) -> LossParts {
    let mut grads = GradBuffers::zeros_like(store);
    let view = ModelView { layout, store, knowledge };
    let mut parts = LossParts {
        source: domain_grad(view, Domain::Source, source, &mut grads),
        target: domain_grad(view, Domain::Target, target, &mut grads),
        ..Default::default()
    };
    if let Some(batch) = mi {
        if weights.mi != 0.0 {
            parts.mi = mi_grad(view, batch, weights.mi, &mut grads);
        } else {
            parts.mi = mi_loss_view(view, batch);
        }
    }
    if weights.l2 != 0.0 {
        parts.l2 = weights.l2 * store.sum_squares();
    }
    grads.add_into(store);
    store.add_weight_decay_grad(2.0 * weights.l2);
    parts
}

/// Mean squared error over `records` and its gradient; 0 for an empty list.
fn domain_grad(m: ModelView<'_>, domain: Domain, records: &[Rating], grads: &mut GradBuffers) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    let layout = m.layout;
    let d = layout.dim;
    let head = layout.heads[domain.index()];
    let w = m.store.value(head.weight).row(0);
    let users = m.store.value(layout.user_table);
    let items = m.store.value(layout.item_tables[domain.index()]);
    let scale = 1.0 / records.len() as f64;
    let mut refined = vec![0.0; d];
    let mut d_refined = vec![0.0; d];
    let mut sum = 0.0;
    for r in records {
        let p = sigmoid(head_logit(layout, m.store, m.knowledge, r.user, domain, r.item));
        let err = p - r.target();
        sum += err * err;
        let dz = scale * 2.0 * err * p * (1.0 - p);
        if dz == 0.0 {
            continue;
        }
        let u = users.row(r.user);
        let i = items.row(r.item);
        {
            let gw = grads.get_mut(head.weight).row_mut(0);
            axpy(dz, u, &mut gw[..d]);
            axpy(dz, i, &mut gw[d..2 * d]);
        }
        grads.get_mut(head.bias).data_mut()[0] += dz;
        axpy(dz, &w[..d], grads.get_mut(layout.user_table).row_mut(r.user));
        axpy(dz, &w[d..2 * d], grads.get_mut(layout.item_tables[domain.index()]).row_mut(r.item));

        let aligned = m.knowledge.and_then(|k| k.row(domain, r.item)).is_some();
        match layout.variant {
            FusionVariant::MutualInfo => {}
            FusionVariant::RawConcat => {
                let kin = kg_input(layout, m.store, m.knowledge, domain, r.item);
                axpy(dz, kin, &mut grads.get_mut(head.weight).row_mut(0)[2 * d..]);
                if !aligned {
                    let unknown = layout.unknown_entity[domain.index()].unwrap();
                    axpy(dz, &w[2 * d..], grads.get_mut(unknown).row_mut(0));
                }
            }
            FusionVariant::RefinedConcat => {
                let (a_id, c_id) = layout.refiner.unwrap();
                let kin = kg_input(layout, m.store, m.knowledge, domain, r.item);
                let a = m.store.value(a_id);
                refined.copy_from_slice(m.store.value(c_id).row(0));
                vec_mat_acc(kin, a, &mut refined);
                for (dk, (&pre, &wk)) in d_refined.iter_mut().zip(refined.iter().zip(&w[2 * d..])) {
                    *dk = if pre > 0.0 { dz * wk } else { 0.0 };
                }
                {
                    let gw = &mut grads.get_mut(head.weight).row_mut(0)[2 * d..];
                    for (g, &pre) in gw.iter_mut().zip(&refined) {
                        *g += dz * pre.max(0.0);
                    }
                }
                let ga = grads.get_mut(a_id);
                for (row, &x) in kin.iter().enumerate() {
                    if x != 0.0 {
                        axpy(x, &d_refined, ga.row_mut(row));
                    }
                }
                axpy(1.0, &d_refined, grads.get_mut(c_id).row_mut(0));
                if !aligned {
                    let unknown = layout.unknown_entity[domain.index()].unwrap();
                    let gu = grads.get_mut(unknown).row_mut(0);
                    for (row, g) in gu.iter_mut().enumerate() {
                        *g += dot(a.row(row), &d_refined);
                    }
                }
            }
        }
    }
    sum * scale
}

/// Discriminator cross-entropy and its gradient scaled by `weight`.
fn mi_grad(m: ModelView<'_>, batch: &MiBatch, weight: f64, grads: &mut GradBuffers) -> f64 {
    let (Some(w_id), Some(k)) = (m.layout.disc_weight, m.knowledge) else {
        return 0.0;
    };
    if batch.is_empty() {
        return 0.0;
    }
    let w = m.store.value(w_id);
    let scale = weight / batch.len() as f64;
    let mut wk = vec![0.0; w.rows()];
    let mut sum = 0.0;
    for p in &batch.pairs {
        let table = m.layout.item_tables[p.domain.index()];
        let item = m.store.value(table).row(p.item);
        let kg = k.embeddings.row(p.kg_row);
        for (a, v) in wk.iter_mut().enumerate() {
            *v = dot(w.row(a), kg);
        }
        let prob = sigmoid(dot(item, &wk));
        sum += bce(prob, p.positive);
        let ds = scale * (prob - if p.positive { 1.0 } else { 0.0 });
        let gw = grads.get_mut(w_id);
        for (a, &x) in item.iter().enumerate() {
            axpy(ds * x, kg, gw.row_mut(a));
        }
        axpy(ds, &wk, grads.get_mut(table).row_mut(p.item));
    }
    sum / batch.len() as f64
}

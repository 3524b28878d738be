use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::interactions::Vocab;
use crate::kg::AlignmentTable;
use crate::numerics::{dot, embedding_uniform, sigmoid, xavier_uniform, ParamId, ParameterStore, Tensor2};

/// How knowledge-graph embeddings reach the rating heads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FusionVariant {
    /// Main model: no KG input to the heads; item embeddings are tied to
    /// KG embeddings only through the mutual-information discriminator.
    #[serde(rename = "ncmf_kg_mul")]
    MutualInfo,
    /// KG row concatenated raw to the head input (`NMF_KG`).
    #[serde(rename = "nmf_kg")]
    RawConcat,
    /// KG row passed through an affine+ReLU refiner, then concatenated (`NCMF_KG_T`).
    #[serde(rename = "ncmf_kg_t")]
    RefinedConcat,
}

impl FusionVariant {
    pub const ALL: [FusionVariant; 3] = [FusionVariant::MutualInfo, FusionVariant::RefinedConcat, FusionVariant::RawConcat];

    pub fn name(self) -> &'static str {
        match self {
            FusionVariant::MutualInfo => "ncmf_kg_mul",
            FusionVariant::RawConcat => "nmf_kg",
            FusionVariant::RefinedConcat => "ncmf_kg_t",
        }
    }

    pub fn uses_discriminator(self) -> bool {
        matches!(self, FusionVariant::MutualInfo)
    }
}

impl fmt::Display for FusionVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FusionVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FusionVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown fusion variant {s:?}")))
    }
}

/// Frozen KG embeddings plus, per domain, the embedding row of each item
/// (`None` for unaligned items).
#[derive(Debug, Clone, PartialEq)]
pub struct ItemKnowledge {
    pub embeddings: Tensor2,
    pub rows: [Vec<Option<usize>>; 2],
}

impl ItemKnowledge {
    /// Resolves every item of both vocabularies through the alignment table.
    pub fn from_alignment(alignment: &AlignmentTable, embeddings: Tensor2, items: [&Vocab; 2]) -> Result<Self> {
        let mut rows: [Vec<Option<usize>>; 2] = [Vec::new(), Vec::new()];
        for d in Domain::BOTH {
            rows[d.index()] = items[d.index()]
                .names()
                .iter()
                .map(|name| alignment.get(d, name).map(|e| e.0))
                .collect();
            if let Some(&Some(bad)) = rows[d.index()].iter().find(|r| matches!(r, Some(e) if *e >= embeddings.rows())) {
                return Err(Error::Lookup(format!(
                    "aligned entity {bad} has no embedding row ({} rows)",
                    embeddings.rows()
                )));
            }
        }
        Ok(Self { embeddings, rows })
    }

    pub fn dim(&self) -> usize {
        self.embeddings.cols()
    }

    pub fn row(&self, domain: Domain, item: usize) -> Option<&[f64]> {
        self.rows[domain.index()][item].map(|r| self.embeddings.row(r))
    }

    /// Items of `domain` that have a KG row.
    pub fn aligned_items(&self, domain: Domain) -> Vec<usize> {
        self.rows[domain.index()]
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r.map(|_| i))
            .collect()
    }
}

/// Parameter ids for one domain's prediction head.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadIds {
    /// `1 × input_width` weight row.
    pub weight: ParamId,
    /// `1 × 1` bias.
    pub bias: ParamId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeuCmfLayout {
    pub variant: FusionVariant,
    pub n_users: usize,
    pub n_items: [usize; 2],
    pub dim: usize,
    /// Width of the KG embeddings the model was built against.
    pub kg_dim: usize,
    pub user_table: ParamId,
    pub item_tables: [ParamId; 2],
    pub heads: [HeadIds; 2],
    /// `dim × kg_dim` bilinear weight (mutual-information variant only).
    pub disc_weight: Option<ParamId>,
    /// `kg_dim × dim` weight and `1 × dim` bias of the KG refiner.
    pub refiner: Option<(ParamId, ParamId)>,
    /// Learned `1 × kg_dim` stand-in for unaligned items, per domain.
    pub unknown_entity: [Option<ParamId>; 2],
}

impl NeuCmfLayout {
    /// Width of the KG-derived block appended to the head input.
    pub fn extra_width(&self) -> usize {
        match self.variant {
            FusionVariant::MutualInfo => 0,
            FusionVariant::RawConcat => self.kg_dim,
            FusionVariant::RefinedConcat => self.dim,
        }
    }

    pub fn head_width(&self) -> usize {
        2 * self.dim + self.extra_width()
    }
}

/// Neural collective matrix factorization with a user table shared by both
/// domain heads.
#[derive(Debug, Clone)]
pub struct NeuCmfModel {
    pub layout: NeuCmfLayout,
    pub store: ParameterStore,
    /// Frozen KG side information; required by the concatenation variants
    /// and by mutual-information training.
    pub knowledge: Option<Arc<ItemKnowledge>>,
}

impl NeuCmfModel {
    pub fn new<R: Rng + ?Sized>(
        variant: FusionVariant,
        n_users: usize,
        n_items: [usize; 2],
        dim: usize,
        knowledge: Option<Arc<ItemKnowledge>>,
        rng: &mut R,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("embedding_dim must be positive".into()));
        }
        if variant != FusionVariant::MutualInfo && knowledge.is_none() {
            return Err(Error::Config(format!("variant {variant} needs KG embeddings")));
        }
        if let Some(k) = &knowledge {
            for d in Domain::BOTH {
                if k.rows[d.index()].len() != n_items[d.index()] {
                    return Err(Error::Shape(format!(
                        "KG lookup covers {} items in domain {d}, model has {}",
                        k.rows[d.index()].len(),
                        n_items[d.index()]
                    )));
                }
            }
        }
        let kg_dim = knowledge.as_ref().map_or(dim, |k| k.dim());
        let mut store = ParameterStore::new();
        let user_table = store.insert("user_table", embedding_uniform(n_users, dim, rng))?;
        let item_tables = [
            store.insert("item_table_S", embedding_uniform(n_items[0], dim, rng))?,
            store.insert("item_table_T", embedding_uniform(n_items[1], dim, rng))?,
        ];
        let extra = match variant {
            FusionVariant::MutualInfo => 0,
            FusionVariant::RawConcat => kg_dim,
            FusionVariant::RefinedConcat => dim,
        };
        let width = 2 * dim + extra;
        let mut head = |tag: &str, store: &mut ParameterStore| -> Result<HeadIds> {
            Ok(HeadIds {
                weight: store.insert(&format!("head_{tag}.weight"), xavier_uniform(width, 1, rng).transpose())?,
                bias: store.insert(&format!("head_{tag}.bias"), Tensor2::zeros(1, 1))?,
            })
        };
        let heads = [head("S", &mut store)?, head("T", &mut store)?];
        let disc_weight = match variant {
            FusionVariant::MutualInfo => Some(store.insert("disc_weight", xavier_uniform(dim, kg_dim, rng))?),
            _ => None,
        };
        let refiner = match variant {
            FusionVariant::RefinedConcat => Some((
                store.insert("refiner.weight", xavier_uniform(kg_dim, dim, rng))?,
                store.insert("refiner.bias", Tensor2::zeros(1, dim))?,
            )),
            _ => None,
        };
        let unknown_entity = match variant {
            FusionVariant::MutualInfo => [None, None],
            _ => [
                Some(store.insert("unknown_entity_S", embedding_uniform(1, kg_dim, rng))?),
                Some(store.insert("unknown_entity_T", embedding_uniform(1, kg_dim, rng))?),
            ],
        };
        Ok(Self {
            layout: NeuCmfLayout {
                variant,
                n_users,
                n_items,
                dim,
                kg_dim,
                user_table,
                item_tables,
                heads,
                disc_weight,
                refiner,
                unknown_entity,
            },
            store,
            knowledge,
        })
    }

    /// Predicted normalized rating, strictly inside `(0, 1)` even where
    /// the logistic function rounds to an endpoint.
    pub fn predict(&self, user: usize, domain: Domain, item: usize) -> Result<f64> {
        self.check_ids(user, domain, item)?;
        let z = head_logit(&self.layout, &self.store, self.knowledge.as_deref(), user, domain, item);
        Ok(open_unit(sigmoid(z)))
    }

    pub fn check_ids(&self, user: usize, domain: Domain, item: usize) -> Result<()> {
        if user >= self.layout.n_users {
            return Err(Error::Lookup(format!("user {user} out of range ({})", self.layout.n_users)));
        }
        let n = self.layout.n_items[domain.index()];
        if item >= n {
            return Err(Error::Lookup(format!("item {item} out of range ({n}) in domain {domain}")));
        }
        Ok(())
    }

    pub fn user_row(&self, user: usize) -> &[f64] {
        self.store.value(self.layout.user_table).row(user)
    }

    pub fn item_row(&self, domain: Domain, item: usize) -> &[f64] {
        self.store.value(self.layout.item_tables[domain.index()]).row(item)
    }
}

/// Pulls a probability off the endpoints of the unit interval.
#[inline]
pub(crate) fn open_unit(p: f64) -> f64 {
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// KG block fed to the head for the concatenation variants.
pub(crate) fn kg_input<'a>(
    layout: &NeuCmfLayout,
    store: &'a ParameterStore,
    knowledge: Option<&'a ItemKnowledge>,
    domain: Domain,
    item: usize,
) -> &'a [f64] {
    match knowledge.and_then(|k| k.row(domain, item)) {
        Some(row) => row,
        None => store
            .value(layout.unknown_entity[domain.index()].expect("concat variant without unknown-entity vector"))
            .row(0),
    }
}

/// `ReLU(k · A + c)`.
pub(crate) fn refine(store: &ParameterStore, refiner: (ParamId, ParamId), kg: &[f64]) -> Vec<f64> {
    let (w, b) = refiner;
    let mut out = store.value(b).row(0).to_vec();
    crate::numerics::vec_mat_acc(kg, store.value(w), &mut out);
    out.iter_mut().for_each(|v| *v = v.max(0.0));
    out
}

/// Pre-sigmoid head output. For the main variant this is
/// `w_u·u + w_i·i + b`; the concatenation variants add `w_k·k` before the bias.
pub(crate) fn head_logit(
    layout: &NeuCmfLayout,
    store: &ParameterStore,
    knowledge: Option<&ItemKnowledge>,
    user: usize,
    domain: Domain,
    item: usize,
) -> f64 {
    let d = layout.dim;
    let head = layout.heads[domain.index()];
    let w = store.value(head.weight).row(0);
    let u = store.value(layout.user_table).row(user);
    let i = store.value(layout.item_tables[domain.index()]).row(item);
    let mut z = dot(&w[..d], u) + dot(&w[d..2 * d], i);
    match layout.variant {
        FusionVariant::MutualInfo => {}
        FusionVariant::RawConcat => {
            z += dot(&w[2 * d..], kg_input(layout, store, knowledge, domain, item));
        }
        FusionVariant::RefinedConcat => {
            let k = refine(store, layout.refiner.unwrap(), kg_input(layout, store, knowledge, domain, item));
            z += dot(&w[2 * d..], &k);
        }
    }
    z + store.value(head.bias).get(0, 0)
}

/// `sigmoid(itemᵀ · W · kg)`.
pub fn mi_discriminator(model: &NeuCmfModel, item_embedding: &[f64], kg_embedding: &[f64]) -> Result<f64> {
    let w_id = model
        .layout
        .disc_weight
        .ok_or_else(|| Error::Config(format!("variant {} has no discriminator", model.layout.variant)))?;
    let w = model.store.value(w_id);
    if item_embedding.len() != w.rows() || kg_embedding.len() != w.cols() {
        return Err(Error::Shape(format!(
            "discriminator is {:?}, inputs are {} and {}",
            w.shape(),
            item_embedding.len(),
            kg_embedding.len()
        )));
    }
    Ok(sigmoid(bilinear(item_embedding, w, kg_embedding)))
}

#[inline]
pub(crate) fn bilinear(x: &[f64], w: &Tensor2, y: &[f64]) -> f64 {
    x.iter().enumerate().map(|(k, &xk)| xk * dot(w.row(k), y)).sum()
}

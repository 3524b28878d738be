use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::interactions::Rating;
use crate::neucmf::TrainData;
use crate::numerics::{adam_step, axpy, dot, embedding_uniform, sigmoid, AdamConfig, Checkpoint, GradBuffers, ParamId, ParameterStore, Tensor2};
use crate::training::{fit, EpochLosses, TrainLog, DEFAULT_EARLY_STOP_WINDOW, DEFAULT_MAX_EPOCHS};

pub const CMF_KIND: &str = "cmf";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FactorConfig {
    pub embedding_dim: usize,
    pub learning_rate: f64,
    /// `λ` on the squared parameter norm.
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub early_stop_window: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for FactorConfig {
    fn default() -> Self {
        Self {
            embedding_dim: 16,
            learning_rate: 0.001,
            weight_decay: 1e-4,
            max_epochs: DEFAULT_MAX_EPOCHS,
            early_stop_window: DEFAULT_EARLY_STOP_WINDOW,
            batch_size: 64,
            seed: 0,
        }
    }
}

impl FactorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embedding_dim == 0 || self.batch_size == 0 {
            return Err(Error::Config("embedding_dim and batch_size must be positive".into()));
        }
        if self.max_epochs == 0 || self.early_stop_window == 0 {
            return Err(Error::Config("max_epochs and early_stop_window must be at least 1".into()));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config(format!("weight_decay {} must be finite and >= 0", self.weight_decay)));
        }
        AdamConfig::with_learning_rate(self.learning_rate).validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainFactorIds {
    pub item_table: ParamId,
    /// `1 × 1`.
    pub global_bias: ParamId,
    /// `n_users × 1`.
    pub user_bias: ParamId,
    /// `n_items × 1`.
    pub item_bias: ParamId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CmfLayout {
    pub n_users: usize,
    pub n_items: [usize; 2],
    pub dim: usize,
    pub user_table: ParamId,
    pub domains: [DomainFactorIds; 2],
}

/// Biased collective matrix factorization. Users keep one factor row for
/// both domains; item factors and all biases are per domain.
#[derive(Debug, Clone)]
pub struct CmfModel {
    pub layout: CmfLayout,
    pub store: ParameterStore,
}

impl CmfModel {
    pub fn new<R: Rng + ?Sized>(n_users: usize, n_items: [usize; 2], dim: usize, rng: &mut R) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("embedding_dim must be positive".into()));
        }
        let mut store = ParameterStore::new();
        let user_table = store.insert("user_table", embedding_uniform(n_users, dim, rng))?;
        let mut ids = Vec::with_capacity(2);
        for d in Domain::BOTH {
            let n = n_items[d.index()];
            let tag = d.tag();
            ids.push(DomainFactorIds {
                item_table: store.insert(&format!("item_table_{tag}"), embedding_uniform(n, dim, rng))?,
                global_bias: store.insert(&format!("global_bias_{tag}"), Tensor2::zeros(1, 1))?,
                user_bias: store.insert(&format!("user_bias_{tag}"), Tensor2::zeros(n_users, 1))?,
                item_bias: store.insert(&format!("item_bias_{tag}"), Tensor2::zeros(n, 1))?,
            });
        }
        Ok(Self {
            layout: CmfLayout {
                n_users,
                n_items,
                dim,
                user_table,
                domains: [ids[0], ids[1]],
            },
            store,
        })
    }

    /// `σ(b + b_u + b_i + u·v_i)`.
    pub fn predict(&self, user: usize, domain: Domain, item: usize) -> Result<f64> {
        if user >= self.layout.n_users {
            return Err(Error::Lookup(format!("user {user} out of range ({})", self.layout.n_users)));
        }
        let n = self.layout.n_items[domain.index()];
        if item >= n {
            return Err(Error::Lookup(format!("item {item} out of range ({n}) in domain {domain}")));
        }
        Ok(crate::neucmf::open_unit(sigmoid(logit(&self.layout, &self.store, user, domain, item))))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut metadata = BTreeMap::new();
        metadata.insert("model".to_owned(), CMF_KIND.to_owned());
        metadata.insert("n_users".to_owned(), self.layout.n_users.to_string());
        metadata.insert("n_items_S".to_owned(), self.layout.n_items[0].to_string());
        metadata.insert("n_items_T".to_owned(), self.layout.n_items[1].to_string());
        metadata.insert("dim".to_owned(), self.layout.dim.to_string());
        Checkpoint {
            metadata,
            store: self.store.clone(),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let meta = |key: &str| -> Result<usize> {
            ck.metadata
                .get(key)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Config(format!("checkpoint metadata {key:?} missing or not a count")))
        };
        if ck.metadata.get("model").map(String::as_str) != Some(CMF_KIND) {
            return Err(Error::Config(format!("checkpoint does not hold a {CMF_KIND} model")));
        }
        let store = ck.store.clone();
        let id = |name: String| -> Result<ParamId> {
            store
                .id(&name)
                .ok_or_else(|| Error::Config(format!("checkpoint lacks parameter {name:?}")))
        };
        let dom = |tag: &str| -> Result<DomainFactorIds> {
            Ok(DomainFactorIds {
                item_table: id(format!("item_table_{tag}"))?,
                global_bias: id(format!("global_bias_{tag}"))?,
                user_bias: id(format!("user_bias_{tag}"))?,
                item_bias: id(format!("item_bias_{tag}"))?,
            })
        };
        let layout = CmfLayout {
            n_users: meta("n_users")?,
            n_items: [meta("n_items_S")?, meta("n_items_T")?],
            dim: meta("dim")?,
            user_table: id("user_table".into())?,
            domains: [dom("S")?, dom("T")?],
        };
        if store.value(layout.user_table).shape() != (layout.n_users, layout.dim) {
            return Err(Error::Shape("user_table does not match checkpoint metadata".into()));
        }
        for d in Domain::BOTH {
            let ids = layout.domains[d.index()];
            let n = layout.n_items[d.index()];
            if store.value(ids.item_table).shape() != (n, layout.dim)
                || store.value(ids.item_bias).shape() != (n, 1)
                || store.value(ids.user_bias).shape() != (layout.n_users, 1)
            {
                return Err(Error::Shape(format!("domain {d} tables do not match checkpoint metadata")));
            }
        }
        Ok(Self { layout, store })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

impl CmfLayout {
    /// Factor tables, the only parameters under the L2 penalty.
    pub fn factor_tables(&self) -> [ParamId; 3] {
        [self.user_table, self.domains[0].item_table, self.domains[1].item_table]
    }
}

#[inline]
fn logit(l: &CmfLayout, store: &ParameterStore, user: usize, domain: Domain, item: usize) -> f64 {
    let ids = l.domains[domain.index()];
    let u = store.value(l.user_table).row(user);
    let v = store.value(ids.item_table).row(item);
    store.value(ids.global_bias).get(0, 0) + store.value(ids.user_bias).get(user, 0) + store.value(ids.item_bias).get(item, 0) + dot(u, v)
}

/// Mean squared error over `records`; 0 for an empty list.
pub(crate) fn cmf_domain_loss(l: &CmfLayout, store: &ParameterStore, domain: Domain, records: &[Rating]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    records
        .iter()
        .map(|r| (sigmoid(logit(l, store, r.user, domain, r.item)) - r.target()).powi(2))
        .sum::<f64>()
        / records.len() as f64
}

/// Loss `MSE_d + λ·Σv²` of one domain's records, gradient added to `store`.
/// The penalty covers the factor tables only; biases are left unshrunk.
pub(crate) fn cmf_loss_and_grad(l: &CmfLayout, store: &mut ParameterStore, domain: Domain, records: &[Rating], l2: f64) -> f64 {
    let mut grads = GradBuffers::zeros_like(store);
    let ids = l.domains[domain.index()];
    let mut sum = 0.0;
    if !records.is_empty() {
        let scale = 1.0 / records.len() as f64;
        let users = store.value(l.user_table);
        let items = store.value(ids.item_table);
        for r in records {
            let p = sigmoid(logit(l, store, r.user, domain, r.item));
            let err = p - r.target();
            sum += err * err;
            let dz = scale * 2.0 * err * p * (1.0 - p);
            grads.get_mut(ids.global_bias).data_mut()[0] += dz;
            grads.get_mut(ids.user_bias).data_mut()[r.user] += dz;
            grads.get_mut(ids.item_bias).data_mut()[r.item] += dz;
            axpy(dz, items.row(r.item), grads.get_mut(l.user_table).row_mut(r.user));
            axpy(dz, users.row(r.user), grads.get_mut(ids.item_table).row_mut(r.item));
        }
        sum *= scale;
    }
    let decayed = l.factor_tables();
    let reg: f64 = decayed.iter().map(|&id| l2 * store.value(id).sum_squares()).sum();
    grads.add_into(store);
    if l2 != 0.0 {
        for id in decayed {
            let (v, g) = store.value_and_grad_mut(id, id);
            axpy(2.0 * l2, v.data(), g.data_mut());
        }
    }
    sum + reg
}

/// Alternating-minibatch Adam: per epoch the two domains' shuffled batches
/// are interleaved S, T, S, T, ... until both are exhausted. Validation is
/// the summed per-domain MSE; the best epoch is restored.
pub fn cmf_train(data: &TrainData<'_>, cfg: &FactorConfig) -> Result<(CmfModel, TrainLog)> {
    cfg.validate()?;
    if data.train.iter().all(|t| t.is_empty()) || data.validation.iter().all(|v| v.is_empty()) {
        return Err(Error::Data("cmf needs training and validation ratings".into()));
    }
    for d in Domain::BOTH {
        for r in data.train[d.index()].iter().chain(data.validation[d.index()]) {
            if r.user >= data.n_users || r.item >= data.n_items[d.index()] {
                return Err(Error::Lookup(format!("rating {r:?} in domain {d} out of range")));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = CmfModel::new(data.n_users, data.n_items, cfg.embedding_dim, &mut rng)?;
    // Shuffling draws from its own stream so table sizes do not shift it.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let layout = model.layout.clone();
    let adam = AdamConfig::with_learning_rate(cfg.learning_rate);
    let mut train: [Vec<Rating>; 2] = [data.train[0].to_vec(), data.train[1].to_vec()];
    let mut step = 0u64;
    let log = fit(
        &mut model.store,
        cfg.max_epochs,
        cfg.early_stop_window,
        |store, epoch| {
            train.iter_mut().for_each(|t| t.shuffle(&mut rng));
            let mut batches: [std::slice::Chunks<'_, Rating>; 2] = [train[0].chunks(cfg.batch_size), train[1].chunks(cfg.batch_size)];
            loop {
                let mut any = false;
                for d in Domain::BOTH {
                    if let Some(batch) = batches[d.index()].next() {
                        any = true;
                        let loss = cmf_loss_and_grad(&layout, store, d, batch, cfg.weight_decay);
                        if !loss.is_finite() {
                            return Err(Error::Training(format!("non-finite loss at epoch {epoch}")));
                        }
                        step += 1;
                        adam_step(store, &adam, step).map_err(|e| Error::Training(format!("epoch {epoch}: {e}")))?;
                    }
                }
                if !any {
                    break;
                }
            }
            Ok(EpochLosses {
                source: cmf_domain_loss(&layout, store, Domain::Source, &train[0]),
                target: cmf_domain_loss(&layout, store, Domain::Target, &train[1]),
                mi: 0.0,
            })
        },
        |store| {
            Ok(cmf_domain_loss(&layout, store, Domain::Source, data.validation[0])
                + cmf_domain_loss(&layout, store, Domain::Target, data.validation[1]))
        },
    )?;
    Ok((model, log))
}

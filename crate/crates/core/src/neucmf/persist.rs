use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use super::model::{FusionVariant, HeadIds, ItemKnowledge, NeuCmfLayout, NeuCmfModel};
use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::numerics::{Checkpoint, ParamId, ParameterStore, Tensor2};

/// Prefix of frozen tensors stored alongside the trainable parameters.
const FROZEN: &str = "frozen.";
pub const MODEL_KIND: &str = "neucmf";

impl NeuCmfModel {
    /// Packs parameters, optimizer state and the per-item KG rows into a checkpoint.
    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let l = &self.layout;
        let mut metadata = BTreeMap::new();
        metadata.insert("model".to_owned(), MODEL_KIND.to_owned());
        metadata.insert("variant".to_owned(), l.variant.name().to_owned());
        metadata.insert("n_users".to_owned(), l.n_users.to_string());
        metadata.insert("n_items_S".to_owned(), l.n_items[0].to_string());
        metadata.insert("n_items_T".to_owned(), l.n_items[1].to_string());
        metadata.insert("dim".to_owned(), l.dim.to_string());
        metadata.insert("kg_dim".to_owned(), l.kg_dim.to_string());
        let mut store = self.store.clone();
        if let Some(k) = &self.knowledge {
            metadata.insert("knowledge".to_owned(), "1".to_owned());
            for d in Domain::BOTH {
                let n = l.n_items[d.index()];
                let mut rows = Tensor2::zeros(n, k.dim());
                let mut mask = Tensor2::zeros(1, n);
                for item in 0..n {
                    if let Some(row) = k.row(d, item) {
                        rows.row_mut(item).copy_from_slice(row);
                        mask.set(0, item, 1.0);
                    }
                }
                store.insert(&format!("{FROZEN}kg_{}", d.tag()), rows)?;
                store.insert(&format!("{FROZEN}aligned_{}", d.tag()), mask)?;
            }
        }
        Ok(Checkpoint { metadata, store })
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let meta = |key: &str| -> Result<&str> {
            ck.metadata
                .get(key)
                .map(String::as_str)
                .ok_or_else(|| Error::Config(format!("checkpoint metadata lacks {key:?}")))
        };
        let num = |key: &str| -> Result<usize> {
            meta(key)?
                .parse()
                .map_err(|_| Error::Config(format!("checkpoint metadata {key:?} is not a count")))
        };
        if meta("model")? != MODEL_KIND {
            return Err(Error::Config(format!("checkpoint holds a {:?} model, not {MODEL_KIND}", meta("model")?)));
        }
        let variant: FusionVariant = meta("variant")?.parse()?;
        let n_items = [num("n_items_S")?, num("n_items_T")?];

        let mut store = ParameterStore::new();
        store.step = ck.store.step;
        let mut frozen: BTreeMap<String, Tensor2> = BTreeMap::new();
        for (name, p) in ck.store.iter() {
            match name.strip_prefix(FROZEN) {
                Some(rest) => {
                    frozen.insert(rest.to_owned(), p.value.clone());
                }
                None => {
                    store.insert_full(name, p.clone())?;
                }
            }
        }
        let knowledge = if ck.metadata.contains_key("knowledge") {
            Some(Arc::new(knowledge_from_frozen(&mut frozen, n_items)?))
        } else {
            None
        };

        let id = |name: &str| -> Result<ParamId> {
            store
                .id(name)
                .ok_or_else(|| Error::Config(format!("checkpoint lacks parameter {name:?}")))
        };
        let head = |tag: &str| -> Result<HeadIds> {
            Ok(HeadIds {
                weight: id(&format!("head_{tag}.weight"))?,
                bias: id(&format!("head_{tag}.bias"))?,
            })
        };
        let layout = NeuCmfLayout {
            variant,
            n_users: num("n_users")?,
            n_items,
            dim: num("dim")?,
            kg_dim: num("kg_dim")?,
            user_table: id("user_table")?,
            item_tables: [id("item_table_S")?, id("item_table_T")?],
            heads: [head("S")?, head("T")?],
            disc_weight: store.id("disc_weight"),
            refiner: store.id("refiner.weight").zip(store.id("refiner.bias")),
            unknown_entity: [store.id("unknown_entity_S"), store.id("unknown_entity_T")],
        };
        check_layout(&layout, &store, knowledge.as_deref())?;
        Ok(Self { layout, store, knowledge })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint()?.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

fn knowledge_from_frozen(frozen: &mut BTreeMap<String, Tensor2>, n_items: [usize; 2]) -> Result<ItemKnowledge> {
    let mut rows: [Vec<Option<usize>>; 2] = [Vec::new(), Vec::new()];
    let mut data = Vec::new();
    let mut kg_dim = None;
    let mut n_rows = 0;
    for d in Domain::BOTH {
        let missing = || Error::Config(format!("checkpoint lacks frozen KG rows for domain {d}"));
        let table = frozen.remove(&format!("kg_{}", d.tag())).ok_or_else(missing)?;
        let mask = frozen.remove(&format!("aligned_{}", d.tag())).ok_or_else(missing)?;
        if table.rows() != n_items[d.index()] || mask.shape() != (1, table.rows()) {
            return Err(Error::Shape(format!("frozen KG rows for domain {d} do not match the item count")));
        }
        if *kg_dim.get_or_insert(table.cols()) != table.cols() {
            return Err(Error::Shape("frozen KG widths differ between domains".into()));
        }
        for item in 0..table.rows() {
            if mask.get(0, item) != 0.0 {
                rows[d.index()].push(Some(n_rows));
                data.extend_from_slice(table.row(item));
                n_rows += 1;
            } else {
                rows[d.index()].push(None);
            }
        }
    }
    Ok(ItemKnowledge {
        embeddings: Tensor2::from_vec(n_rows, kg_dim.unwrap_or(0), data)?,
        rows,
    })
}

fn check_layout(l: &NeuCmfLayout, store: &ParameterStore, knowledge: Option<&ItemKnowledge>) -> Result<()> {
    let expect = |id: ParamId, shape: (usize, usize)| -> Result<()> {
        let got = store.value(id).shape();
        if got != shape {
            return Err(Error::Shape(format!("parameter {:?} is {got:?}, expected {shape:?}", store.name(id))));
        }
        Ok(())
    };
    expect(l.user_table, (l.n_users, l.dim))?;
    for d in Domain::BOTH {
        expect(l.item_tables[d.index()], (l.n_items[d.index()], l.dim))?;
        expect(l.heads[d.index()].weight, (1, l.head_width()))?;
        expect(l.heads[d.index()].bias, (1, 1))?;
    }
    let needs_unknown = l.variant != FusionVariant::MutualInfo;
    if l.variant.uses_discriminator() != l.disc_weight.is_some()
        || (l.variant == FusionVariant::RefinedConcat) != l.refiner.is_some()
        || l.unknown_entity.iter().any(|u| u.is_some() != needs_unknown)
    {
        return Err(Error::Config(format!("checkpoint parameters do not match variant {}", l.variant)));
    }
    if needs_unknown && knowledge.is_none() {
        return Err(Error::Config(format!("variant {} checkpoint has no KG rows", l.variant)));
    }
    if let Some(k) = knowledge {
        if k.dim() != l.kg_dim && k.embeddings.rows() > 0 {
            return Err(Error::Shape(format!("KG width {} differs from model kg_dim {}", k.dim(), l.kg_dim)));
        }
    }
    Ok(())
}

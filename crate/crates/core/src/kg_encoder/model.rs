use rand::Rng;

use super::rgcn::{LayerCache, LayerView};
use crate::error::{Error, Result};
use crate::kg::KnowledgeGraph;
use crate::numerics::{uniform, xavier_uniform, ParamId, ParameterStore, Tensor2};

/// Parameter ids of one layer inside the encoder's store.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerIds {
    pub self_weight: ParamId,
    pub relation_weights: Vec<ParamId>,
}

/// Where each encoder tensor lives in a [`ParameterStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayout {
    pub n_entities: usize,
    pub n_relations: usize,
    pub dims: Vec<usize>,
    pub entity_embedding: ParamId,
    pub layers: Vec<LayerIds>,
    /// `n_relations × d`, row r is the diagonal of the relation's scoring matrix.
    pub relation_diag: ParamId,
}

/// Stage-1 graph autoencoder: input entity embeddings, stacked relational
/// convolutions, and a diagonal bilinear decoder per relation.
#[derive(Debug, Clone, PartialEq)]
pub struct KgEncoderModel {
    pub layout: EncoderLayout,
    pub store: ParameterStore,
}

/// Encoder activations retained for the backward pass.
#[derive(Debug, Clone)]
pub struct EncodeCache {
    pub layers: Vec<LayerCache>,
}

impl EncodeCache {
    pub fn output<'a>(&'a self, layout: &EncoderLayout, store: &'a ParameterStore) -> &'a Tensor2 {
        match self.layers.last() {
            Some(c) => &c.output,
            None => store.value(layout.entity_embedding),
        }
    }
}

impl KgEncoderModel {
    /// Randomly initialized model. `dims[0]` is the input embedding width and
    /// each further entry adds one layer, so `[d, d, d]` is a two-layer encoder.
    pub fn new<R: Rng + ?Sized>(g: &KnowledgeGraph, dims: &[usize], rng: &mut R) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::Config(format!("invalid encoder widths {dims:?}")));
        }
        let n = g.num_entities();
        let n_rel = g.num_relations();
        let mut store = ParameterStore::new();
        let entity_embedding = store.insert("entity_embedding", uniform(n, dims[0], 1.0, rng))?;
        let mut layers = Vec::new();
        for (l, w) in dims.windows(2).enumerate() {
            let self_weight = store.insert(&format!("layer{l}.self"), xavier_uniform(w[0], w[1], rng))?;
            let relation_weights = (0..n_rel)
                .map(|r| store.insert(&format!("layer{l}.rel{r}"), xavier_uniform(w[0], w[1], rng)))
                .collect::<Result<Vec<_>>>()?;
            layers.push(LayerIds {
                self_weight,
                relation_weights,
            });
        }
        let d = *dims.last().unwrap();
        let relation_diag = store.insert("relation_diag", xavier_uniform(n_rel, d, rng))?;
        Ok(Self {
            layout: EncoderLayout {
                n_entities: n,
                n_relations: n_rel,
                dims: dims.to_vec(),
                entity_embedding,
                layers,
                relation_diag,
            },
            store,
        })
    }

    pub fn output_dim(&self) -> usize {
        *self.layout.dims.last().unwrap()
    }

    /// Final entity embeddings for every entity of `g`.
    pub fn encode(&self, g: &KnowledgeGraph) -> Result<Tensor2> {
        encode(&self.layout, &self.store, g)
    }
}

impl EncoderLayout {
    pub fn layer_view<'a>(&self, l: usize, store: &'a ParameterStore) -> LayerView<'a> {
        let ids = &self.layers[l];
        LayerView {
            self_weight: store.value(ids.self_weight),
            relation_weights: ids.relation_weights.iter().map(|&id| store.value(id)).collect(),
        }
    }

    fn check_graph(&self, g: &KnowledgeGraph) -> Result<()> {
        if g.num_entities() != self.n_entities || g.num_relations() != self.n_relations {
            return Err(Error::Shape(format!(
                "model built for {} entities / {} relations, graph has {} / {}",
                self.n_entities,
                self.n_relations,
                g.num_entities(),
                g.num_relations()
            )));
        }
        Ok(())
    }
}

pub fn encode_with_cache(layout: &EncoderLayout, store: &ParameterStore, g: &KnowledgeGraph) -> Result<EncodeCache> {
    layout.check_graph(g)?;
    let mut layers: Vec<LayerCache> = Vec::with_capacity(layout.layers.len());
    for l in 0..layout.layers.len() {
        let input = match layers.last() {
            Some(c) => &c.output,
            None => store.value(layout.entity_embedding),
        };
        let cache = layout.layer_view(l, store).forward(g, input)?;
        layers.push(cache);
    }
    Ok(EncodeCache { layers })
}

/// Applies every layer, starting from the input embedding table.
pub fn encode(layout: &EncoderLayout, store: &ParameterStore, g: &KnowledgeGraph) -> Result<Tensor2> {
    let cache = encode_with_cache(layout, store, g)?;
    Ok(cache.output(layout, store).clone())
}

/// Backpropagates `grad_output` (w.r.t. the final embeddings) through all
/// layers, accumulating into the store's gradient buffers.
pub fn encode_backward(
    layout: &EncoderLayout,
    store: &mut ParameterStore,
    g: &KnowledgeGraph,
    cache: &EncodeCache,
    grad_output: Tensor2,
) {
    let mut grad = grad_output;
    for l in (0..layout.layers.len()).rev() {
        let ids = &layout.layers[l];
        let mut g_self = Tensor2::zeros(store.value(ids.self_weight).rows(), store.value(ids.self_weight).cols());
        let mut g_rel: Vec<Tensor2> = ids
            .relation_weights
            .iter()
            .map(|&id| Tensor2::zeros(store.value(id).rows(), store.value(id).cols()))
            .collect();
        let grad_in = {
            let input = if l == 0 {
                store.value(layout.entity_embedding)
            } else {
                &cache.layers[l - 1].output
            };
            let view = layout.layer_view(l, store);
            let mut refs: Vec<&mut Tensor2> = g_rel.iter_mut().collect();
            view.backward(g, input, &cache.layers[l], &grad, &mut g_self, &mut refs)
        };
        store.grad_mut(ids.self_weight).add_assign(&g_self).unwrap();
        for (&id, gr) in ids.relation_weights.iter().zip(&g_rel) {
            store.grad_mut(id).add_assign(gr).unwrap();
        }
        grad = grad_in;
    }
    store.grad_mut(layout.entity_embedding).add_assign(&grad).unwrap();
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::RawTriple;
    use crate::kg_encoder::rgcn::rgcn_layer_forward;
    use crate::kg_encoder::RgcnLayerParams;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy() -> KnowledgeGraph {
        KnowledgeGraph::from_raw(&[
            RawTriple::new("a", "r", "b"),
            RawTriple::new("b", "s", "c"),
            RawTriple::new("c", "r", "a"),
        ])
    }

    fn owned_layer(m: &KgEncoderModel, l: usize) -> RgcnLayerParams {
        let ids = &m.layout.layers[l];
        RgcnLayerParams {
            self_weight: m.store.value(ids.self_weight).clone(),
            relation_weights: ids.relation_weights.iter().map(|&id| m.store.value(id).clone()).collect(),
        }
    }

    #[test]
    fn zero_layers_return_input_embedding() {
        let g = toy();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = KgEncoderModel::new(&g, &[4], &mut rng).unwrap();
        assert_eq!(&m.encode(&g).unwrap(), m.store.value(m.layout.entity_embedding));
    }

    #[test]
    fn two_layers_compose() {
        let g = toy();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = KgEncoderModel::new(&g, &[3, 4, 2], &mut rng).unwrap();
        let e0 = m.store.value(m.layout.entity_embedding);
        let h1 = rgcn_layer_forward(&owned_layer(&m, 0), &g, e0).unwrap();
        let h2 = rgcn_layer_forward(&owned_layer(&m, 1), &g, &h1).unwrap();
        assert_eq!(m.encode(&g).unwrap(), h2);
    }

    #[test]
    fn relabeling_permutes_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = KnowledgeGraph::from_raw(&[
            RawTriple::new("a", "r", "b"),
            RawTriple::new("b", "s", "c"),
            RawTriple::new("d", "r", "b"),
            RawTriple::new("c", "r", "d"),
        ]);
        let m = KgEncoderModel::new(&g, &[3, 3, 3], &mut rng).unwrap();
        let mut perm: Vec<usize> = (0..g.num_entities()).collect();
        perm.shuffle(&mut rng);
        let pg = g.permute_entities(&perm).unwrap();
        let mut pm = m.clone();
        let emb = m.store.value(m.layout.entity_embedding);
        let mut inverse = vec![0; perm.len()];
        for (old, &new) in perm.iter().enumerate() {
            inverse[new] = old;
        }
        *pm.store.value_mut(pm.layout.entity_embedding) = emb.gather_rows(&inverse);
        let out = m.encode(&g).unwrap();
        let pout = pm.encode(&pg).unwrap();
        assert_eq!(pout, out.gather_rows(&inverse));
    }

    #[test]
    fn graph_mismatch_is_shape_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = KgEncoderModel::new(&toy(), &[3, 3], &mut rng).unwrap();
        let other = KnowledgeGraph::from_raw(&[RawTriple::new("x", "r", "y")]);
        assert!(matches!(m.encode(&other), Err(Error::Shape(_))));
    }
}

use crate::error::{Error, Result};
use crate::kg::{EntityId, KnowledgeGraph, RelationId};
use crate::numerics::{matmul_acc, matmul_nt_acc, matmul_tn_acc, Tensor2};

/// Weights of one relational graph-convolution layer.
#[derive(Debug, Clone, PartialEq)]
pub struct RgcnLayerParams {
    /// Self-connection weight, `d_in × d_out`.
    pub self_weight: Tensor2,
    /// One `d_in × d_out` matrix per relation.
    pub relation_weights: Vec<Tensor2>,
}

impl RgcnLayerParams {
    pub fn as_view(&self) -> LayerView<'_> {
        LayerView {
            self_weight: &self.self_weight,
            relation_weights: self.relation_weights.iter().collect(),
        }
    }
}

/// Borrowed layer weights, as handed out by a parameter store.
#[derive(Debug, Clone)]
pub struct LayerView<'a> {
    pub self_weight: &'a Tensor2,
    pub relation_weights: Vec<&'a Tensor2>,
}

/// Intermediate values of a layer forward pass needed for backprop.
#[derive(Debug, Clone)]
pub struct LayerCache {
    /// Mean of in-neighbor inputs per relation, each `n × d_in`.
    pub aggregated: Vec<Tensor2>,
    pub pre_activation: Tensor2,
    pub output: Tensor2,
}

impl<'a> LayerView<'a> {
    fn check(&self, g: &KnowledgeGraph, h_in: &Tensor2) -> Result<()> {
        let (d_in, d_out) = self.self_weight.shape();
        if h_in.rows() != g.num_entities() || h_in.cols() != d_in {
            return Err(Error::Shape(format!(
                "layer input {:?}, expected ({}, {d_in})",
                h_in.shape(),
                g.num_entities()
            )));
        }
        if self.relation_weights.len() != g.num_relations() {
            return Err(Error::Shape(format!(
                "{} relation weights for a graph with {} relations",
                self.relation_weights.len(),
                g.num_relations()
            )));
        }
        if let Some(w) = self.relation_weights.iter().find(|w| w.shape() != (d_in, d_out)) {
            return Err(Error::Shape(format!(
                "relation weight {:?} does not match self weight ({d_in}, {d_out})",
                w.shape()
            )));
        }
        Ok(())
    }

    /// `ReLU(H·W₀ + Σ_r A_r·H·W_r)` where `A_r` averages in-neighbors under `r`.
    pub fn forward(&self, g: &KnowledgeGraph, h_in: &Tensor2) -> Result<LayerCache> {
        self.check(g, h_in)?;
        let n = g.num_entities();
        let d_in = h_in.cols();
        let d_out = self.self_weight.cols();

        let mut aggregated = vec![Tensor2::zeros(n, d_in); g.num_relations()];
        for i in 0..n {
            for_each_relation_group(g.in_edges(EntityId(i)), |rel, sources| {
                let inv = 1.0 / sources.len() as f64;
                let row = aggregated[rel.0].row_mut(i);
                for &(_, j) in sources {
                    for (a, &h) in row.iter_mut().zip(h_in.row(j.0)) {
                        *a += inv * h;
                    }
                }
            });
        }

        let mut z = Tensor2::zeros(n, d_out);
        matmul_acc(h_in, self.self_weight, &mut z);
        for (agg, w) in aggregated.iter().zip(&self.relation_weights) {
            matmul_acc(agg, w, &mut z);
        }
        let mut output = z.clone();
        output.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
        Ok(LayerCache {
            aggregated,
            pre_activation: z,
            output,
        })
    }

    /// Accumulates weight gradients into `grad_self` / `grad_rel` and returns
    /// the gradient with respect to the layer input.
    pub fn backward(
        &self,
        g: &KnowledgeGraph,
        h_in: &Tensor2,
        cache: &LayerCache,
        grad_out: &Tensor2,
        grad_self: &mut Tensor2,
        grad_rel: &mut [&mut Tensor2],
    ) -> Tensor2 {
        let n = g.num_entities();
        let d_in = h_in.cols();
        let mut dz = grad_out.clone();
        for (d, &z) in dz.data_mut().iter_mut().zip(cache.pre_activation.data()) {
            if z <= 0.0 {
                *d = 0.0;
            }
        }

        matmul_tn_acc(h_in, &dz, grad_self);
        let mut dh = Tensor2::zeros(n, d_in);
        matmul_nt_acc(&dz, self.self_weight, &mut dh);

        for (agg, gr) in cache.aggregated.iter().zip(grad_rel.iter_mut()) {
            matmul_tn_acc(agg, &dz, gr);
        }
        // Messages into each entity i were averaged; route dZ_i·W_rᵀ back to
        // every source with the same 1/c weight.
        let mut msg = vec![0.0; d_in];
        for i in 0..n {
            for_each_relation_group(g.in_edges(EntityId(i)), |rel, sources| {
                let inv = 1.0 / sources.len() as f64;
                msg.iter_mut().for_each(|m| *m = 0.0);
                let w = self.relation_weights[rel.0];
                let dzi = dz.row(i);
                for (k, m) in msg.iter_mut().enumerate() {
                    *m = crate::numerics::dot(w.row(k), dzi);
                }
                for &(_, j) in sources {
                    crate::numerics::axpy(inv, &msg, dh.row_mut(j.0));
                }
            });
        }
        dh
    }
}

/// Calls `f(relation, edges)` for each run of equal relations in a sorted edge list.
fn for_each_relation_group(
    edges: &[(RelationId, EntityId)],
    mut f: impl FnMut(RelationId, &[(RelationId, EntityId)]),
) {
    let mut start = 0;
    while start < edges.len() {
        let rel = edges[start].0;
        let len = edges[start..].iter().take_while(|(r, _)| *r == rel).count();
        f(rel, &edges[start..start + len]);
        start += len;
    }
}

/// One relational graph-convolution layer applied to all entities.
pub fn rgcn_layer_forward(params: &RgcnLayerParams, g: &KnowledgeGraph, h_in: &Tensor2) -> Result<Tensor2> {
    Ok(params.as_view().forward(g, h_in)?.output)
}

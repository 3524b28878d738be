use indexmap::IndexMap;
use rand::Rng;

use super::tensor::Tensor2;
use crate::error::{Error, Result};

/// Index of a parameter inside its [`ParameterStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

/// A trainable tensor with its gradient buffer and Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Tensor2,
    pub grad: Tensor2,
    pub adam_m: Tensor2,
    pub adam_v: Tensor2,
}

impl Param {
    fn new(value: Tensor2) -> Self {
        let (r, c) = value.shape();
        Self {
            value,
            grad: Tensor2::zeros(r, c),
            adam_m: Tensor2::zeros(r, c),
            adam_v: Tensor2::zeros(r, c),
        }
    }
}

/// Named, ordered collection of parameters.
///
/// Insertion order is preserved, which keeps checkpoint layout and
/// gradient-check probe selection deterministic.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParameterStore {
    entries: IndexMap<String, Param>,
    /// Number of optimizer steps applied so far.
    pub step: u64,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor2) -> Result<ParamId> {
        if self.entries.contains_key(name) {
            return Err(Error::Config(format!("duplicate parameter name {name:?}")));
        }
        let (idx, _) = self.entries.insert_full(name.to_owned(), Param::new(value));
        Ok(ParamId(idx))
    }

    /// Inserts a parameter together with saved optimizer state.
    pub(crate) fn insert_full(&mut self, name: &str, param: Param) -> Result<ParamId> {
        let shape = param.value.shape();
        if param.grad.shape() != shape
            || param.adam_m.shape() != shape
            || param.adam_v.shape() != shape
        {
            return Err(Error::Shape(format!(
                "parameter {name:?}: state buffers do not match value shape {shape:?}"
            )));
        }
        if self.entries.contains_key(name) {
            return Err(Error::Config(format!("duplicate parameter name {name:?}")));
        }
        let (idx, _) = self.entries.insert_full(name.to_owned(), param);
        Ok(ParamId(idx))
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.entries.get_index_of(name).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        self.entries.get_index(id.0).map(|(k, _)| k.as_str()).unwrap()
    }

    #[inline]
    pub fn param(&self, id: ParamId) -> &Param {
        &self.entries[id.0]
    }

    #[inline]
    pub fn param_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.entries[id.0]
    }

    #[inline]
    pub fn value(&self, id: ParamId) -> &Tensor2 {
        &self.entries[id.0].value
    }

    #[inline]
    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor2 {
        &mut self.entries[id.0].value
    }

    #[inline]
    pub fn grad(&self, id: ParamId) -> &Tensor2 {
        &self.entries[id.0].grad
    }

    #[inline]
    pub fn grad_mut(&mut self, id: ParamId) -> &mut Tensor2 {
        &mut self.entries[id.0].grad
    }

    /// Value of one parameter and the gradient buffer of another, borrowed together.
    pub fn value_and_grad_mut(&mut self, value_of: ParamId, grad_of: ParamId) -> (&Tensor2, &mut Tensor2) {
        if value_of == grad_of {
            let p = &mut self.entries[value_of.0];
            return (&p.value, &mut p.grad);
        }
        let [a, b] = self.entries.get_disjoint_indices_mut([value_of.0, grad_of.0]).unwrap();
        (&a.1.value, &mut b.1.grad)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn zero_grad(&mut self) {
        for p in self.entries.values_mut() {
            p.grad.fill(0.0);
        }
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.entries.values().map(|p| p.value.len()).sum()
    }

    pub fn sum_squares(&self) -> f64 {
        self.entries.values().map(|p| p.value.sum_squares()).sum()
    }

    /// Adds `coeff · value` to every gradient buffer; the gradient of `coeff/2 · ‖Θ‖²`.
    pub fn add_weight_decay_grad(&mut self, coeff: f64) {
        if coeff == 0.0 {
            return;
        }
        for p in self.entries.values_mut() {
            for (g, v) in p.grad.data_mut().iter_mut().zip(p.value.data()) {
                *g += coeff * v;
            }
        }
    }

    /// Copies parameter values (not optimizer state) from `other`, matching by name.
    pub fn copy_values_from(&mut self, other: &ParameterStore) -> Result<()> {
        for (name, p) in self.entries.iter_mut() {
            let src = other
                .entries
                .get(name)
                .ok_or_else(|| Error::Lookup(format!("parameter {name:?} missing from source")))?;
            if src.value.shape() != p.value.shape() {
                return Err(Error::Shape(format!("parameter {name:?} shape differs")));
            }
            p.value.data_mut().copy_from_slice(src.value.data());
        }
        Ok(())
    }
}

/// Zeroed gradient buffers parallel to a store, filled while the store's
/// values are borrowed and then added to its gradients in one pass.
#[derive(Debug, Clone)]
pub(crate) struct GradBuffers(Vec<Tensor2>);

impl GradBuffers {
    pub(crate) fn zeros_like(store: &ParameterStore) -> Self {
        Self(store.entries.values().map(|p| Tensor2::zeros(p.value.rows(), p.value.cols())).collect())
    }

    #[inline]
    pub(crate) fn get_mut(&mut self, id: ParamId) -> &mut Tensor2 {
        &mut self.0[id.0]
    }

    pub(crate) fn add_into(self, store: &mut ParameterStore) {
        for (p, g) in store.entries.values_mut().zip(self.0) {
            for (a, b) in p.grad.data_mut().iter_mut().zip(g.data()) {
                *a += b;
            }
        }
    }
}

/// Glorot-uniform initialization in `±sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_uniform<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor2 {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    uniform(rows, cols, bound, rng)
}

/// Embedding-table initialization in `±0.05`.
pub fn embedding_uniform<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor2 {
    uniform(rows, cols, 0.05, rng)
}

pub fn uniform<R: Rng + ?Sized>(rows: usize, cols: usize, bound: f64, rng: &mut R) -> Tensor2 {
    let mut t = Tensor2::zeros(rows, cols);
    if bound > 0.0 {
        for v in t.data_mut() {
            *v = rng.gen_range(-bound..bound);
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn names_are_unique() {
        let mut s = ParameterStore::new();
        s.insert("w", Tensor2::zeros(2, 2)).unwrap();
        assert!(s.insert("w", Tensor2::zeros(1, 1)).is_err());
    }

    #[test]
    fn buffers_match_value_shape() {
        let mut s = ParameterStore::new();
        let id = s.insert("w", Tensor2::zeros(3, 4)).unwrap();
        let p = s.param(id);
        assert_eq!(p.grad.shape(), (3, 4));
        assert_eq!(p.adam_m.shape(), (3, 4));
        assert_eq!(p.adam_v.shape(), (3, 4));
    }

    #[test]
    fn init_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let w = xavier_uniform(10, 20, &mut rng);
        let bound = (6.0f64 / 30.0).sqrt();
        assert!(w.data().iter().all(|v| v.abs() <= bound));
        let e = embedding_uniform(50, 8, &mut rng);
        assert!(e.data().iter().all(|v| v.abs() <= 0.05));
    }

    #[test]
    fn disjoint_borrow() {
        let mut s = ParameterStore::new();
        let a = s.insert("a", Tensor2::filled(1, 2, 3.0)).unwrap();
        let b = s.insert("b", Tensor2::zeros(1, 2)).unwrap();
        let (va, gb) = s.value_and_grad_mut(a, b);
        gb.data_mut().copy_from_slice(va.data());
        assert_eq!(s.grad(b).data(), &[3.0, 3.0]);
    }
}

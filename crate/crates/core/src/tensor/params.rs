use std::collections::HashMap;

use rand::Rng;

use super::{Tensor, TensorError};

/// Handle to a parameter inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// Named trainable tensors, kept in registration order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a new parameter. Names must be unique.
    pub fn add(&mut self, name: impl Into<String>, mut tensor: Tensor) -> ParamId {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter name {}", name);
        tensor.requires_grad = true;
        let id = ParamId(self.tensors.len());
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.tensors.push(tensor);
        id
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.names
            .iter()
            .zip(&self.tensors)
            .enumerate()
            .map(|(i, (n, t))| (ParamId(i), n.as_str(), t))
    }

    /// Total number of scalar weights.
    pub fn num_weights(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Replaces the values of an existing parameter, checking the shape.
    pub fn assign(&mut self, name: &str, tensor: Tensor) -> Result<(), TensorError> {
        let id = self
            .id(name)
            .ok_or_else(|| TensorError::Graph(format!("unknown parameter '{}'", name)))?;
        let cur = &mut self.tensors[id.0];
        if cur.shape() != tensor.shape() {
            return Err(TensorError::Shape {
                op: "assign",
                left: cur.shape().to_vec(),
                right: tensor.shape().to_vec(),
            });
        }
        cur.data_mut().copy_from_slice(tensor.data());
        Ok(())
    }
}

/// Uniform initialization in `(-bound, bound)`.
pub fn init_uniform<R: Rng>(shape: &[usize], bound: f64, rng: &mut R) -> Tensor {
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = rng.gen_range(-bound..bound);
    }
    t
}

/// Dense per-parameter gradients. A missing entry stands for a zero gradient.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamGrads {
    grads: Vec<Option<Vec<f64>>>,
}

impl ParamGrads {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, id: ParamId) -> Option<&[f64]> {
        self.grads.get(id.0).and_then(|g| g.as_deref())
    }

    pub fn insert(&mut self, id: ParamId, grad: Vec<f64>) {
        if self.grads.len() <= id.0 {
            self.grads.resize(id.0 + 1, None);
        }
        self.grads[id.0] = Some(grad);
    }

    /// Adds `grad` into the accumulator for `id`.
    pub fn accumulate(&mut self, id: ParamId, grad: &[f64]) {
        if self.grads.len() <= id.0 {
            self.grads.resize(id.0 + 1, None);
        }
        match &mut self.grads[id.0] {
            Some(acc) => {
                debug_assert_eq!(acc.len(), grad.len());
                for (a, g) in acc.iter_mut().zip(grad) {
                    *a += g;
                }
            }
            slot @ None => *slot = Some(grad.to_vec()),
        }
    }

    /// Sums another set of gradients into this one, in parameter order.
    pub fn merge(&mut self, other: &ParamGrads) {
        for (i, g) in other.grads.iter().enumerate() {
            if let Some(g) = g {
                self.accumulate(ParamId(i), g);
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self.grads.iter_mut().flatten() {
            for v in g.iter_mut() {
                *v *= factor;
            }
        }
    }

    /// Euclidean norm over all gradients.
    pub fn norm(&self) -> f64 {
        self.grads
            .iter()
            .flatten()
            .flat_map(|g| g.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.grads.iter().flatten().all(|g| g.iter().all(|v| v.is_finite()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &[f64])> {
        self.grads
            .iter()
            .enumerate()
            .filter_map(|(i, g)| g.as_deref().map(|g| (ParamId(i), g)))
    }
}

/// Plain stochastic gradient descent: `theta <- theta - lr * g`.
///
/// Parameters without an entry in `grads` are left unchanged (zero gradient).
pub fn sgd_step(params: &mut ParamStore, grads: &ParamGrads, lr: f64) -> Result<(), TensorError> {
    if !lr.is_finite() || lr <= 0.0 {
        return Err(TensorError::Domain {
            op: "sgd_step",
            msg: format!("learning rate must be positive, got {}", lr),
        });
    }
    for (id, g) in grads.iter() {
        if id.0 >= params.len() {
            return Err(TensorError::Graph(format!("gradient for unknown parameter #{}", id.0)));
        }
        let p = params.get_mut(id);
        if p.len() != g.len() {
            return Err(TensorError::Shape {
                op: "sgd_step",
                left: p.shape().to_vec(),
                right: vec![g.len()],
            });
        }
        for (w, d) in p.data_mut().iter_mut().zip(g) {
            *w -= lr * d;
        }
    }
    Ok(())
}

use std::collections::HashMap;

use super::{NumericsError, Tensor};

/// Storage precision for trainable values.
///
/// Arithmetic always runs in 64-bit. In `F32` mode every stored parameter
/// value is rounded to the nearest 32-bit float after initialization and
/// after each update, so checkpoints written as 32-bit blocks reload
/// bit-exactly. `F64` keeps full precision and is what gradient checks use.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Precision {
    #[default]
    F32,
    F64,
}

impl Precision {
    pub fn round(self, x: f64) -> f64 {
        match self {
            Precision::F32 => x as f32 as f64,
            Precision::F64 => x,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        }
    }
}

impl std::str::FromStr for Precision {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "f32" | "32" => Ok(Precision::F32),
            "f64" | "64" => Ok(Precision::F64),
            other => Err(format!("unknown precision `{other}` (expected f32 or f64)")),
        }
    }
}

/// A trainable tensor with its gradient and momentum buffers.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter {
    pub value: Tensor,
    pub grad: Tensor,
    pub momentum: Tensor,
    pub frozen: bool,
}

impl Parameter {
    pub fn new(value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        let momentum = grad.clone();
        Parameter {
            value,
            grad,
            momentum,
            frozen: false,
        }
    }

    pub fn numel(&self) -> usize {
        self.value.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named collection of parameters owned by one model.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    names: Vec<String>,
    params: Vec<Parameter>,
    by_name: HashMap<String, ParamId>,
    precision: Precision,
}

impl ParamStore {
    pub fn new(precision: Precision) -> Self {
        ParamStore {
            precision,
            ..Default::default()
        }
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    /// Registers a parameter. Names must be unique within the store.
    pub fn add(&mut self, name: &str, mut value: Tensor) -> ParamId {
        assert!(!self.by_name.contains_key(name), "duplicate parameter name `{name}`");
        let precision = self.precision;
        value.data_mut().iter_mut().for_each(|x| *x = precision.round(*x));
        let id = ParamId(self.params.len());
        self.names.push(name.to_string());
        self.params.push(Parameter::new(value));
        self.by_name.insert(name.to_string(), id);
        id
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Parameter)> {
        self.params
            .iter()
            .enumerate()
            .map(|(i, p)| (ParamId(i), self.names[i].as_str(), p))
    }

    pub fn set_frozen(&mut self, id: ParamId, frozen: bool) {
        self.params[id.0].frozen = frozen;
    }

    pub fn unfreeze_all(&mut self) {
        self.params.iter_mut().for_each(|p| p.frozen = false);
    }

    /// Replaces a parameter's value, keeping its shape.
    pub fn set_value(&mut self, id: ParamId, value: Tensor) -> Result<(), NumericsError> {
        let current = &self.params[id.0].value;
        if current.shape() != value.shape() {
            return Err(NumericsError::ShapeMismatch {
                op: "set_value",
                left: current.shape().to_vec(),
                right: value.shape().to_vec(),
            });
        }
        let precision = self.precision;
        let p = &mut self.params[id.0];
        p.value = value;
        p.value.data_mut().iter_mut().for_each(|x| *x = precision.round(*x));
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Adds a backward pass's contributions into the stored gradients.
    pub fn accumulate(&mut self, grads: &super::Gradients) {
        for (id, dense) in &grads.dense {
            self.params[id.0].grad.add_assign(dense);
        }
        for (id, row, values) in &grads.rows {
            let p = &mut self.params[id.0];
            let cols = p.grad.cols();
            for (g, v) in p.grad.data_mut()[row * cols..(row + 1) * cols].iter_mut().zip(values) {
                *g += v;
            }
        }
    }

    /// Global ℓ2 norm of the gradients of trainable parameters.
    pub fn grad_norm(&self) -> f64 {
        self.params
            .iter()
            .filter(|p| !p.frozen)
            .flat_map(|p| p.grad.data())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales trainable gradients so their global norm is at most
    /// `max_norm`. Returns the norm before clipping.
    pub fn clip_grad_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.grad_norm();
        if max_norm > 0.0 && norm > max_norm {
            let scale = max_norm / norm;
            for p in self.params.iter_mut().filter(|p| !p.frozen) {
                p.grad.data_mut().iter_mut().for_each(|g| *g *= scale);
            }
        }
        norm
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(Parameter::numel).sum()
    }

    /// Copies all values (not gradients or momentum).
    pub fn snapshot(&self) -> Vec<Tensor> {
        self.params.iter().map(|p| p.value.clone()).collect()
    }

    pub fn restore(&mut self, snapshot: Vec<Tensor>) {
        assert_eq!(snapshot.len(), self.params.len());
        for (p, v) in self.params.iter_mut().zip(snapshot) {
            p.value = v;
        }
    }
}

/// One SGD-with-momentum update over every parameter in the store.
///
/// Trainable: `momentum ← mu·momentum + grad; value ← value − lr·momentum`.
/// Frozen: value and momentum untouched. Gradients are zeroed either way.
pub fn sgd_step(store: &mut ParamStore, lr: f64, mu: f64) {
    let precision = store.precision;
    for p in &mut store.params {
        if !p.frozen {
            let Parameter {
                value, grad, momentum, ..
            } = p;
            for ((v, g), m) in value
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(momentum.data_mut().iter_mut())
            {
                *m = mu * *m + g;
                *v = precision.round(*v - lr * *m);
            }
        }
        p.grad.data_mut().iter_mut().for_each(|g| *g = 0.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(value: f64, grad: f64) -> (ParamStore, ParamId) {
        let mut store = ParamStore::new(Precision::F64);
        let id = store.add("w", Tensor::vector(vec![value]).unwrap());
        store.get_mut(id).grad.data_mut()[0] = grad;
        (store, id)
    }

    #[test]
    fn plain_sgd_step() {
        let (mut store, id) = store_with(1.0, 2.0);
        sgd_step(&mut store, 0.1, 0.0);
        assert!((store.value(id).data()[0] - 0.8).abs() < 1e-15);
        assert_eq!(store.get(id).grad.data()[0], 0.0);
    }

    #[test]
    fn frozen_parameter_keeps_value() {
        let (mut store, id) = store_with(1.0, 5.0);
        store.set_frozen(id, true);
        sgd_step(&mut store, 0.1, 0.9);
        assert_eq!(store.value(id).data()[0], 1.0);
        assert_eq!(store.get(id).grad.data()[0], 0.0);
        assert_eq!(store.get(id).momentum.data()[0], 0.0);
    }

    #[test]
    fn two_momentum_steps() {
        let (mut store, id) = store_with(0.0, 1.0);
        sgd_step(&mut store, 0.1, 0.9);
        store.get_mut(id).grad.data_mut()[0] = 1.0;
        sgd_step(&mut store, 0.1, 0.9);
        // -0.1·1 then -0.1·(0.9 + 1)
        assert!((store.value(id).data()[0] + 0.29).abs() < 1e-12);
    }

    #[test]
    fn f32_storage_rounds_values() {
        let mut store = ParamStore::new(Precision::F32);
        let id = store.add("w", Tensor::vector(vec![0.1]).unwrap());
        assert_eq!(store.value(id).data()[0], 0.1f32 as f64);
    }

    #[test]
    fn clipping_bounds_global_norm() {
        let mut store = ParamStore::new(Precision::F64);
        let a = store.add("a", Tensor::vector(vec![0.0, 0.0]).unwrap());
        store.get_mut(a).grad.data_mut().copy_from_slice(&[3.0, 4.0]);
        let before = store.clip_grad_norm(1.0);
        assert!((before - 5.0).abs() < 1e-12);
        assert!((store.grad_norm() - 1.0).abs() < 1e-12);
    }
}

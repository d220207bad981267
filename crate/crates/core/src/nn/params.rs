use ndarray::{ArrayD, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Ix1, Ix2, IxDyn};
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense real tensor; element count always equals the product of the shape.
pub type Tensor = ArrayD<f64>;

/// Handle of one tensor inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Init {
    Uniform { bound: f64 },
    Normal { std: f64 },
    Constant(f64),
}

impl Init {
    /// Uniform in `±1/√fan_in`.
    pub fn fan_in(fan_in: usize) -> Self {
        Init::Uniform {
            bound: 1.0 / (fan_in.max(1) as f64).sqrt(),
        }
    }

    fn sample<R: Rng + ?Sized>(&self, shape: &[usize], rng: &mut R) -> Tensor {
        match *self {
            Init::Uniform { bound } => {
                if bound == 0.0 {
                    return Tensor::zeros(IxDyn(shape));
                }
                let d = Uniform::new_inclusive(-bound, bound).expect("finite bound");
                Tensor::from_shape_simple_fn(IxDyn(shape), || d.sample(rng))
            }
            Init::Normal { std } => {
                let d = Normal::new(0.0, std).expect("finite std");
                Tensor::from_shape_simple_fn(IxDyn(shape), || d.sample(rng))
            }
            Init::Constant(c) => Tensor::from_elem(IxDyn(shape), c),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    pub init: Init,
}

/// Named learnable tensors with their gradient accumulators.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add<R: Rng + ?Sized>(&mut self, name: impl Into<String>, shape: &[usize], init: Init, rng: &mut R) -> ParamId {
        let value = init.sample(shape, rng);
        self.insert(name, value, init)
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor, init: Init) -> ParamId {
        let name = name.into();
        debug_assert!(self.find(&name).is_none(), "duplicate parameter {name}");
        let grad = Tensor::zeros(value.raw_dim());
        self.params.push(Param {
            name,
            value,
            grad,
            init,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn param(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn param_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn mat(&self, id: ParamId) -> ArrayView2<'_, f64> {
        self.params[id.0]
            .value
            .view()
            .into_dimensionality::<Ix2>()
            .expect("parameter is a matrix")
    }

    pub fn vec(&self, id: ParamId) -> ArrayView1<'_, f64> {
        self.params[id.0]
            .value
            .view()
            .into_dimensionality::<Ix1>()
            .expect("parameter is a vector")
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    /// Fresh zeroed gradient buffer shaped like this store.
    pub fn gradients(&self) -> Gradients {
        Gradients {
            grads: self.params.iter().map(|p| Tensor::zeros(p.value.raw_dim())).collect(),
        }
    }

    /// Adds `g` into the accumulators.
    pub fn accumulate(&mut self, g: &Gradients) {
        for (p, g) in self.params.iter_mut().zip(&g.grads) {
            p.grad += g;
        }
    }

    /// Replaces values from another store with identical names and shapes.
    pub fn load_values(&mut self, other: &ParamStore) -> Result<()> {
        if other.len() != self.len() {
            return Err(Error::shape(format!(
                "parameter count {} != {}",
                other.len(),
                self.len()
            )));
        }
        for (p, o) in self.params.iter_mut().zip(&other.params) {
            if p.name != o.name || p.value.shape() != o.value.shape() {
                return Err(Error::shape(format!(
                    "parameter '{}' {:?} does not match '{}' {:?}",
                    p.name,
                    p.value.shape(),
                    o.name,
                    o.value.shape()
                )));
            }
            p.value.assign(&o.value);
        }
        Ok(())
    }
}

/// Gradient buffer aligned with a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    grads: Vec<Tensor>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.grads[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.grads[id.0]
    }

    pub fn mat_mut(&mut self, id: ParamId) -> ArrayViewMut2<'_, f64> {
        self.grads[id.0]
            .view_mut()
            .into_dimensionality::<Ix2>()
            .expect("gradient is a matrix")
    }

    pub fn vec_mut(&mut self, id: ParamId) -> ArrayViewMut1<'_, f64> {
        self.grads[id.0]
            .view_mut()
            .into_dimensionality::<Ix1>()
            .expect("gradient is a vector")
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            *a += b;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &Tensor> {
        self.grads.iter()
    }
}

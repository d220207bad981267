use ndarray::{Array2, ArrayD, ArrayView1, ArrayView2, Axis, IxDyn};
use rand::Rng;

use super::params::{Gradients, Init, ParamId, ParamStore};
use crate::error::{Error, Result};

/// Affine map over the trailing dimension: `y = x·W + b`, `W` is `[in × out]`.
pub fn linear(x: &ArrayD<f64>, w: ArrayView2<'_, f64>, b: Option<ArrayView1<'_, f64>>) -> Result<ArrayD<f64>> {
    let (in_dim, out_dim) = w.dim();
    let shape = x.shape();
    if shape.last() != Some(&in_dim) {
        return Err(Error::shape(format!(
            "linear: input trailing dimension {:?} != {in_dim}",
            shape.last()
        )));
    }
    if let Some(b) = b {
        if b.len() != out_dim {
            return Err(Error::shape(format!("linear: bias length {} != {out_dim}", b.len())));
        }
    }
    let rows = x.len() / in_dim.max(1);
    let x2 = x
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order((rows, in_dim))
        .map_err(|e| Error::shape(e.to_string()))?;
    let mut y = x2.dot(&w);
    if let Some(b) = b {
        y += &b;
    }
    let mut out_shape = shape.to_vec();
    *out_shape.last_mut().unwrap() = out_dim;
    y.into_shape_with_order(IxDyn(&out_shape))
        .map_err(|e| Error::shape(e.to_string()))
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        bias: bool,
        rng: &mut R,
    ) -> Self {
        let init = Init::fan_in(in_dim);
        let w = store.add(format!("{name}.weight"), &[in_dim, out_dim], init, rng);
        let b = bias.then(|| store.add(format!("{name}.bias"), &[out_dim], init, rng));
        Self { w, b, in_dim, out_dim }
    }

    pub fn num_params(in_dim: usize, out_dim: usize, bias: bool) -> usize {
        in_dim * out_dim + if bias { out_dim } else { 0 }
    }

    /// `x` is `[rows × in]`.
    pub fn forward(&self, store: &ParamStore, x: ArrayView2<'_, f64>) -> Array2<f64> {
        debug_assert_eq!(x.ncols(), self.in_dim);
        let mut y = x.dot(&store.mat(self.w));
        if let Some(b) = self.b {
            y += &store.vec(b);
        }
        y
    }

    /// Accumulates parameter gradients and returns `dL/dx`.
    pub fn backward(
        &self,
        store: &ParamStore,
        x: ArrayView2<'_, f64>,
        dy: ArrayView2<'_, f64>,
        grads: &mut Gradients,
    ) -> Array2<f64> {
        self.backward_params(x, dy, grads);
        dy.dot(&store.mat(self.w).t())
    }

    /// Parameter gradients only, for layers whose input needs no gradient.
    pub fn backward_params(&self, x: ArrayView2<'_, f64>, dy: ArrayView2<'_, f64>, grads: &mut Gradients) {
        ndarray::linalg::general_mat_mul(1.0, &x.t(), &dy, 1.0, &mut grads.mat_mut(self.w));
        if let Some(b) = self.b {
            grads.vec_mut(b).scaled_add(1.0, &dy.sum_axis(Axis(0)));
        }
    }
}

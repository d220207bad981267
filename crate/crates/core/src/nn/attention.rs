use ndarray::{Array2, Array3, ArrayView2, ArrayView3, Axis};
use rand::Rng;

use super::linear::Linear;
use super::norm::{LayerNorm, LayerNormCache};
use super::params::{Gradients, ParamStore};
use crate::error::{Error, Result};

/// Single-head scaled dot-product self-attention followed by a residual
/// connection and layer normalization: `LN(H + softmax(Q Kᵀ/√d) V)`.
/// Queries and values are affine, keys linear.
#[derive(Debug, Clone)]
pub struct SelfAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub norm: LayerNorm,
    pub dim: usize,
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    h: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    weights: Array3<f64>,
    ln: LayerNormCache,
}

impl AttentionCache {
    /// Attention weights `[B × N × N]`; rows sum to one.
    pub fn weights(&self) -> &Array3<f64> {
        &self.weights
    }
}

fn softmax_rows(s: &mut Array2<f64>) {
    for mut row in s.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
}

impl SelfAttention {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, dim: usize, rng: &mut R) -> Self {
        Self {
            query: Linear::new(store, &format!("{name}.query"), dim, dim, true, rng),
            key: Linear::new(store, &format!("{name}.key"), dim, dim, false, rng),
            value: Linear::new(store, &format!("{name}.value"), dim, dim, true, rng),
            norm: LayerNorm::new(store, &format!("{name}.norm"), dim),
            dim,
        }
    }

    pub fn num_params(dim: usize) -> usize {
        2 * Linear::num_params(dim, dim, true) + Linear::num_params(dim, dim, false) + 2 * dim
    }

    /// `h` is `[B × N × d]`; attention runs independently per batch element.
    pub fn forward(&self, store: &ParamStore, h: ArrayView3<'_, f64>, keep: bool) -> (Array3<f64>, Option<AttentionCache>) {
        let (b, n, d) = h.dim();
        let hf = h.as_standard_layout().into_owned().into_shape_with_order((b * n, d)).unwrap();
        let q = self.query.forward(store, hf.view());
        let k = self.key.forward(store, hf.view());
        let v = self.value.forward(store, hf.view());
        let scale = 1.0 / (d as f64).sqrt();
        let mut weights = Array3::zeros((b, n, n));
        let mut z = hf.clone();
        for bi in 0..b {
            let r = bi * n..(bi + 1) * n;
            let qb = q.slice(ndarray::s![r.clone(), ..]);
            let kb = k.slice(ndarray::s![r.clone(), ..]);
            let vb = v.slice(ndarray::s![r.clone(), ..]);
            let mut s = qb.dot(&kb.t());
            s *= scale;
            softmax_rows(&mut s);
            let mut zb = z.slice_mut(ndarray::s![r, ..]);
            ndarray::linalg::general_mat_mul(1.0, &s, &vb, 1.0, &mut zb);
            weights.index_axis_mut(Axis(0), bi).assign(&s);
        }
        let (y, ln) = self.norm.forward(store, z.view());
        let y = y.into_shape_with_order((b, n, d)).unwrap();
        let cache = keep.then(|| AttentionCache {
            h: hf,
            q,
            k,
            v,
            weights,
            ln,
        });
        (y, cache)
    }

    pub fn backward(
        &self,
        store: &ParamStore,
        cache: &AttentionCache,
        dy: ArrayView3<'_, f64>,
        grads: &mut Gradients,
    ) -> Array3<f64> {
        let (b, n, d) = dy.dim();
        let dyf = dy.as_standard_layout().into_owned().into_shape_with_order((b * n, d)).unwrap();
        let dz = self.norm.backward(store, &cache.ln, dyf.view(), grads);
        let scale = 1.0 / (d as f64).sqrt();
        let mut dq = Array2::zeros((b * n, d));
        let mut dk = Array2::zeros((b * n, d));
        let mut dv = Array2::zeros((b * n, d));
        for bi in 0..b {
            let r = bi * n..(bi + 1) * n;
            let a = cache.weights.index_axis(Axis(0), bi);
            let dob = dz.slice(ndarray::s![r.clone(), ..]);
            let vb = cache.v.slice(ndarray::s![r.clone(), ..]);
            let qb = cache.q.slice(ndarray::s![r.clone(), ..]);
            let kb = cache.k.slice(ndarray::s![r.clone(), ..]);
            let da = dob.dot(&vb.t());
            dv.slice_mut(ndarray::s![r.clone(), ..]).assign(&a.t().dot(&dob));
            let mut ds = &a * &da;
            for (mut row, arow) in ds.rows_mut().into_iter().zip(a.rows()) {
                let tot = row.sum();
                row.zip_mut_with(&arow, |v, &w| *v -= w * tot);
            }
            ds *= scale;
            dq.slice_mut(ndarray::s![r.clone(), ..]).assign(&ds.dot(&kb));
            dk.slice_mut(ndarray::s![r, ..]).assign(&ds.t().dot(&qb));
        }
        let mut dh = dz;
        dh += &self.query.backward(store, cache.h.view(), dq.view(), grads);
        dh += &self.key.backward(store, cache.h.view(), dk.view(), grads);
        dh += &self.value.backward(store, cache.h.view(), dv.view(), grads);
        dh.into_shape_with_order((b, n, d)).unwrap()
    }
}

/// Attention over the rows of one `[N × d]` node matrix.
pub fn self_attention(h: ArrayView2<'_, f64>, attn: &SelfAttention, store: &ParamStore) -> Result<Array2<f64>> {
    let (n, d) = h.dim();
    if d != attn.dim {
        return Err(Error::shape(format!("self_attention: width {d} != {}", attn.dim)));
    }
    let x = h.to_owned().into_shape_with_order((1, n, d)).unwrap();
    let (y, _) = attn.forward(store, x.view(), false);
    Ok(y.index_axis(Axis(0), 0).to_owned())
}

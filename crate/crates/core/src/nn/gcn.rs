use ndarray::{Array2, Array3, ArrayView2, ArrayView3};
use rand::Rng;

use super::params::{Gradients, Init, ParamId, ParamStore};

/// Graph convolution `ReLU(Â H W)` with a caller-supplied normalized
/// adjacency `Â`, shared across the batch.
#[derive(Debug, Clone)]
pub struct GraphConv {
    pub weight: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

#[derive(Debug, Clone)]
pub struct GraphConvCache {
    h: Array3<f64>,
    m: Array3<f64>,
    out: Array3<f64>,
}

impl GraphConv {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let weight = store.add(format!("{name}.weight"), &[in_dim, out_dim], Init::fan_in(in_dim), rng);
        Self { weight, in_dim, out_dim }
    }

    pub fn num_params(in_dim: usize, out_dim: usize) -> usize {
        in_dim * out_dim
    }

    /// `h` is `[B × N × in]`.
    pub fn forward(
        &self,
        store: &ParamStore,
        h: ArrayView3<'_, f64>,
        a_hat: ArrayView2<'_, f64>,
        keep: bool,
    ) -> (Array3<f64>, Option<GraphConvCache>) {
        let (b, n, d) = h.dim();
        let hs = h.as_standard_layout().into_owned();
        let m = hs
            .view()
            .into_shape_with_order((b * n, d))
            .unwrap()
            .dot(&store.mat(self.weight))
            .into_shape_with_order((b, n, self.out_dim))
            .unwrap();
        let mut out = Array3::zeros((b, n, self.out_dim));
        for (mb, mut ob) in m.outer_iter().zip(out.outer_iter_mut()) {
            ndarray::linalg::general_mat_mul(1.0, &a_hat, &mb, 0.0, &mut ob);
        }
        out.mapv_inplace(|v| v.max(0.0));
        let cache = keep.then(|| GraphConvCache {
            h: hs,
            m,
            out: out.clone(),
        });
        (out, cache)
    }

    /// Returns `(dH, dÂ)`.
    pub fn backward(
        &self,
        store: &ParamStore,
        cache: &GraphConvCache,
        a_hat: ArrayView2<'_, f64>,
        dy: ArrayView3<'_, f64>,
        grads: &mut Gradients,
    ) -> (Array3<f64>, Array2<f64>) {
        let (b, n, _) = dy.dim();
        let mut du = dy.to_owned();
        ndarray::Zip::from(&mut du).and(&cache.out).for_each(|g, &y| {
            if y <= 0.0 {
                *g = 0.0
            }
        });
        let mut da = Array2::zeros((n, n));
        let mut dm = Array3::zeros((b, n, self.out_dim));
        for ((dub, mb), mut dmb) in du.outer_iter().zip(cache.m.outer_iter()).zip(dm.outer_iter_mut()) {
            ndarray::linalg::general_mat_mul(1.0, &dub, &mb.t(), 1.0, &mut da);
            ndarray::linalg::general_mat_mul(1.0, &a_hat.t(), &dub, 0.0, &mut dmb);
        }
        let dmf = dm.view().into_shape_with_order((b * n, self.out_dim)).unwrap();
        let hf = cache.h.view().into_shape_with_order((b * n, self.in_dim)).unwrap();
        ndarray::linalg::general_mat_mul(1.0, &hf.t(), &dmf, 1.0, &mut grads.mat_mut(self.weight));
        let dh = dmf
            .dot(&store.mat(self.weight).t())
            .into_shape_with_order((b, n, self.in_dim))
            .unwrap();
        (dh, da)
    }
}

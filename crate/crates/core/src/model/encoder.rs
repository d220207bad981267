use ndarray::{Array2, Array3, Array4, ArrayView3, Axis};
use rand::Rng;

use crate::nn::{Gradients, Gru, GruCache, Init, ParamId, ParamStore};

/// Scalar-to-vector encoder `z = x·w + b (+ e_i)` followed by a GRU shared
/// by all nodes. Returns each node's final top-layer state.
#[derive(Debug, Clone)]
pub struct RecurrentEncoder {
    /// `[1 × d]`
    pub w_in: ParamId,
    /// `[d]`
    pub b_in: ParamId,
    /// `[N × d]`, one row per node.
    pub embedding: Option<ParamId>,
    pub gru: Gru,
    pub nodes: usize,
    pub d: usize,
}

#[derive(Debug, Clone)]
pub struct EncoderCache {
    /// Inputs laid out `[T × R]`, `R = B·N`.
    x: Array2<f64>,
    gru: GruCache,
}

impl RecurrentEncoder {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        nodes: usize,
        d: usize,
        hidden: usize,
        layers: usize,
        embeddings: bool,
        rng: &mut R,
    ) -> Self {
        let init = Init::fan_in(1);
        let w_in = store.add(format!("{name}.encoder.weight"), &[1, d], init, rng);
        let b_in = store.add(format!("{name}.encoder.bias"), &[d], init, rng);
        let embedding = embeddings.then(|| store.add(format!("{name}.embedding"), &[nodes, d], Init::Normal { std: 0.01 }, rng));
        let gru = Gru::new(store, &format!("{name}.gru"), d, hidden, layers, rng);
        Self {
            w_in,
            b_in,
            embedding,
            gru,
            nodes,
            d,
        }
    }

    pub fn num_params(nodes: usize, d: usize, hidden: usize, layers: usize, embeddings: bool) -> usize {
        2 * d + if embeddings { nodes * d } else { 0 } + Gru::num_params(d, hidden, layers)
    }

    pub fn hidden(&self) -> usize {
        self.gru.hidden()
    }

    /// Per-node offsets `b + e_i`, `[N × d]`.
    fn offsets(&self, store: &ParamStore) -> Array2<f64> {
        let mut c = Array2::zeros((self.nodes, self.d));
        c += &store.vec(self.b_in);
        if let Some(e) = self.embedding {
            c += &store.mat(e);
        }
        c
    }

    /// Encoded inputs `z[b, i, t, :]` for `x` of shape `[B × N × T]`.
    pub fn encode(&self, store: &ParamStore, x: ArrayView3<'_, f64>) -> Array4<f64> {
        let (b, n, t) = x.dim();
        let w = store.mat(self.w_in);
        let c = self.offsets(store);
        Array4::from_shape_fn((b, n, t, self.d), |(bi, i, ti, k)| x[[bi, i, ti]] * w[[0, k]] + c[[i, k]])
    }

    /// First GRU layer's input projections of the encoded sequence. The
    /// encoder is affine in `x`, so `z W_ih + b_ih = x·(w W_ih) + c_i` with
    /// `c_i = (b + e_i) W_ih + b_ih`.
    fn project(&self, store: &ParamStore, xt: &Array2<f64>) -> Array3<f64> {
        let layer = &self.gru.layers[0];
        let w_ih = store.mat(layer.w_ih);
        let u = store.mat(self.w_in).row(0).dot(&w_ih);
        let mut c = self.offsets(store).dot(&w_ih);
        c += &store.vec(layer.b_ih);
        let (steps, rows) = xt.dim();
        let g3 = 3 * layer.hidden;
        let mut gi = Array3::<f64>::zeros((steps, rows, g3));
        let us = u.as_slice().unwrap();
        for (t, mut plane) in gi.outer_iter_mut().enumerate() {
            let ps = plane.as_slice_mut().unwrap();
            for r in 0..rows {
                let xv = xt[[t, r]];
                let cr = c.row(r % self.nodes);
                let cs = cr.as_slice().unwrap();
                let out = &mut ps[r * g3..(r + 1) * g3];
                for j in 0..g3 {
                    out[j] = xv * us[j] + cs[j];
                }
            }
        }
        gi
    }

    /// `x` is `[B × N × T]`; returns `[B × N × hidden]`.
    pub fn forward(&self, store: &ParamStore, x: ArrayView3<'_, f64>, keep: bool) -> (Array3<f64>, Option<EncoderCache>) {
        let (b, n, t) = x.dim();
        debug_assert_eq!(n, self.nodes);
        let xt = x
            .permuted_axes([2, 0, 1])
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((t, b * n))
            .unwrap();
        let gi = self.project(store, &xt);
        let (h, gc) = self.gru.forward_projected(store, gi, keep);
        let h = h.into_shape_with_order((b, n, self.hidden())).unwrap();
        (h, gc.map(|gru| EncoderCache { x: xt, gru }))
    }

    pub fn backward(&self, store: &ParamStore, cache: &EncoderCache, dh: ArrayView3<'_, f64>, grads: &mut Gradients) {
        let (b, n, hd) = dh.dim();
        let dh2 = dh.as_standard_layout().into_owned().into_shape_with_order((b * n, hd)).unwrap();
        // Accumulates b_ih itself; w_ih and the encoder are handled below.
        let dgi = self.gru.backward_to_projection(store, &cache.gru, dh2.view(), grads);
        let layer = &self.gru.layers[0];
        let g3 = 3 * layer.hidden;
        let mut du = ndarray::Array1::<f64>::zeros(g3);
        let mut dc = Array2::<f64>::zeros((self.nodes, g3));
        for (t, plane) in dgi.outer_iter().enumerate() {
            for (r, row) in plane.rows().into_iter().enumerate() {
                du.scaled_add(cache.x[[t, r]], &row);
                let mut dcr = dc.row_mut(r % self.nodes);
                dcr += &row;
            }
        }
        let w_ih = store.mat(layer.w_ih);
        let w = store.mat(self.w_in);
        // u = w W_ih
        grads.mat_mut(self.w_in).row_mut(0).scaled_add(1.0, &w_ih.dot(&du));
        let outer = |a: ndarray::ArrayView1<'_, f64>, b: ndarray::ArrayView1<'_, f64>| {
            a.to_owned().insert_axis(Axis(1)).dot(&b.insert_axis(Axis(0)))
        };
        let mut dw_ih = outer(w.row(0), du.view());
        // c_i = (b + e_i) W_ih + b_ih
        let offsets = self.offsets(store);
        dw_ih += &offsets.t().dot(&dc);
        grads.mat_mut(layer.w_ih).scaled_add(1.0, &dw_ih);
        let d_off = dc.dot(&w_ih.t());
        grads.vec_mut(self.b_in).scaled_add(1.0, &d_off.sum_axis(Axis(0)));
        if let Some(e) = self.embedding {
            grads.mat_mut(e).scaled_add(1.0, &d_off);
        }
    }
}

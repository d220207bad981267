use ndarray::{Array2, Array3, ArrayView2, ArrayView3, Axis};
use rand::Rng;

use super::params::{Gradients, Init, ParamId, ParamStore};
use super::{sigmoid, tanh};

/// One LSTM layer with gate blocks ordered input, forget, cell, output:
///
/// ```text
/// a  = x W_ih + b_ih + h W_hh + b_hh
/// c' = σ(a_f) ⊙ c + σ(a_i) ⊙ tanh(a_g)
/// h' = σ(a_o) ⊙ tanh(c')
/// ```
#[derive(Debug, Clone)]
pub struct LstmLayer {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub b_ih: ParamId,
    pub b_hh: ParamId,
    pub input: usize,
    pub hidden: usize,
}

#[derive(Debug, Clone)]
struct LayerCache {
    x: Array3<f64>,
    h: Array3<f64>,
    c: Array3<f64>,
    /// Activated gates `[T × R × 4h]`.
    gates: Array3<f64>,
    tanh_c: Array3<f64>,
}

impl LstmLayer {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut R) -> Self {
        let init = Init::fan_in(hidden);
        Self {
            w_ih: store.add(format!("{name}.w_ih"), &[input, 4 * hidden], init, rng),
            w_hh: store.add(format!("{name}.w_hh"), &[hidden, 4 * hidden], init, rng),
            b_ih: store.add(format!("{name}.b_ih"), &[4 * hidden], init, rng),
            b_hh: store.add(format!("{name}.b_hh"), &[4 * hidden], init, rng),
            input,
            hidden,
        }
    }

    pub fn num_params(input: usize, hidden: usize) -> usize {
        4 * hidden * (input + hidden + 2)
    }

    fn forward(&self, store: &ParamStore, x: ArrayView3<'_, f64>, keep: bool) -> (Array3<f64>, Option<LayerCache>) {
        let (steps, rows, ind) = x.dim();
        let hd = self.hidden;
        let xs = x.as_standard_layout().into_owned();
        let mut gi = xs.view().into_shape_with_order((steps * rows, ind)).unwrap().dot(&store.mat(self.w_ih));
        gi += &store.vec(self.b_ih);
        gi += &store.vec(self.b_hh);
        let gi = gi.into_shape_with_order((steps, rows, 4 * hd)).unwrap();
        let u = store.mat(self.w_hh);
        let mut out = Array3::<f64>::zeros((steps, rows, hd));
        let mut cache = keep.then(|| LayerCache {
            x: xs.clone(),
            h: Array3::zeros((steps + 1, rows, hd)),
            c: Array3::zeros((steps + 1, rows, hd)),
            gates: Array3::zeros((steps, rows, 4 * hd)),
            tanh_c: Array3::zeros((steps, rows, hd)),
        });
        let mut h = Array2::<f64>::zeros((rows, hd));
        let mut c = Array2::<f64>::zeros((rows, hd));
        let mut a = Array2::<f64>::zeros((rows, 4 * hd));
        let mut tc = Array2::<f64>::zeros((rows, hd));
        for t in 0..steps {
            a.assign(&gi.index_axis(Axis(0), t));
            ndarray::linalg::general_mat_mul(1.0, &h, &u, 1.0, &mut a);
            {
                let a_s = a.as_slice_mut().unwrap();
                let c_s = c.as_slice_mut().unwrap();
                let h_s = h.as_slice_mut().unwrap();
                let tc_s = tc.as_slice_mut().unwrap();
                for row in 0..rows {
                    let g = &mut a_s[row * 4 * hd..(row + 1) * 4 * hd];
                    for j in 0..hd {
                        let i = sigmoid(g[j]);
                        let f = sigmoid(g[hd + j]);
                        let gg = tanh(g[2 * hd + j]);
                        let o = sigmoid(g[3 * hd + j]);
                        g[j] = i;
                        g[hd + j] = f;
                        g[2 * hd + j] = gg;
                        g[3 * hd + j] = o;
                        let k = row * hd + j;
                        c_s[k] = f * c_s[k] + i * gg;
                        tc_s[k] = tanh(c_s[k]);
                        h_s[k] = o * tc_s[k];
                    }
                }
            }
            out.index_axis_mut(Axis(0), t).assign(&h);
            if let Some(cc) = cache.as_mut() {
                cc.h.index_axis_mut(Axis(0), t + 1).assign(&h);
                cc.c.index_axis_mut(Axis(0), t + 1).assign(&c);
                cc.gates.index_axis_mut(Axis(0), t).assign(&a);
                cc.tanh_c.index_axis_mut(Axis(0), t).assign(&tc);
            }
        }
        (out, cache)
    }

    fn backward(&self, store: &ParamStore, cc: &LayerCache, dh_out: &Array3<f64>, grads: &mut Gradients) -> Array3<f64> {
        let (steps, rows, hd) = dh_out.dim();
        let u = store.mat(self.w_hh);
        let mut da_all = Array3::<f64>::zeros((steps, rows, 4 * hd));
        let mut dh = Array2::<f64>::zeros((rows, hd));
        let mut dc = Array2::<f64>::zeros((rows, hd));
        let mut dw_hh = Array2::<f64>::zeros((hd, 4 * hd));
        for t in (0..steps).rev() {
            dh += &dh_out.index_axis(Axis(0), t);
            let gates = cc.gates.index_axis(Axis(0), t);
            let tct = cc.tanh_c.index_axis(Axis(0), t);
            let cp = cc.c.index_axis(Axis(0), t);
            let (g_s, tc_s, cp_s) = (gates.as_slice().unwrap(), tct.as_slice().unwrap(), cp.as_slice().unwrap());
            let mut dat = da_all.index_axis_mut(Axis(0), t);
            let da_s = dat.as_slice_mut().unwrap();
            let dh_s = dh.as_slice().unwrap();
            let dc_s = dc.as_slice_mut().unwrap();
            for row in 0..rows {
                let base = row * 4 * hd;
                for j in 0..hd {
                    let k = row * hd + j;
                    let (i, f, gg, o) = (g_s[base + j], g_s[base + hd + j], g_s[base + 2 * hd + j], g_s[base + 3 * hd + j]);
                    let tcv = tc_s[k];
                    let d_o = dh_s[k] * tcv;
                    let dcv = dc_s[k] + dh_s[k] * o * (1.0 - tcv * tcv);
                    da_s[base + j] = dcv * gg * i * (1.0 - i);
                    da_s[base + hd + j] = dcv * cp_s[k] * f * (1.0 - f);
                    da_s[base + 2 * hd + j] = dcv * i * (1.0 - gg * gg);
                    da_s[base + 3 * hd + j] = d_o * o * (1.0 - o);
                    dc_s[k] = dcv * f;
                }
            }
            let da = da_all.index_axis(Axis(0), t);
            let hp = cc.h.index_axis(Axis(0), t);
            ndarray::linalg::general_mat_mul(1.0, &hp.t(), &da, 1.0, &mut dw_hh);
            dh = da.dot(&u.t());
        }
        grads.mat_mut(self.w_hh).scaled_add(1.0, &dw_hh);
        let (_, _, ind) = cc.x.dim();
        let daf = da_all.view().into_shape_with_order((steps * rows, 4 * hd)).unwrap();
        let db = daf.sum_axis(Axis(0));
        grads.vec_mut(self.b_ih).scaled_add(1.0, &db);
        grads.vec_mut(self.b_hh).scaled_add(1.0, &db);
        let xf = cc.x.view().into_shape_with_order((steps * rows, ind)).unwrap();
        ndarray::linalg::general_mat_mul(1.0, &xf.t(), &daf, 1.0, &mut grads.mat_mut(self.w_ih));
        daf.dot(&store.mat(self.w_ih).t()).into_shape_with_order((steps, rows, ind)).unwrap()
    }
}

/// Stacked LSTM returning the top layer's final hidden state.
#[derive(Debug, Clone)]
pub struct Lstm {
    pub layers: Vec<LstmLayer>,
}

#[derive(Debug, Clone)]
pub struct LstmCache {
    layers: Vec<LayerCache>,
}

impl Lstm {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        layers: usize,
        rng: &mut R,
    ) -> Self {
        assert!(layers >= 1, "an LSTM needs at least one layer");
        let layers = (0..layers)
            .map(|l| LstmLayer::new(store, &format!("{name}.l{l}"), if l == 0 { input } else { hidden }, hidden, rng))
            .collect();
        Self { layers }
    }

    pub fn num_params(input: usize, hidden: usize, layers: usize) -> usize {
        LstmLayer::num_params(input, hidden) + (layers - 1) * LstmLayer::num_params(hidden, hidden)
    }

    pub fn hidden(&self) -> usize {
        self.layers[0].hidden
    }

    /// `x` is `[T × R × in]`; returns `[R × hidden]`.
    pub fn forward(&self, store: &ParamStore, x: ArrayView3<'_, f64>, keep: bool) -> (Array2<f64>, Option<LstmCache>) {
        let mut caches = Vec::new();
        let mut seq: Option<Array3<f64>> = None;
        for layer in &self.layers {
            let input = seq.as_ref().map(|s| s.view()).unwrap_or(x);
            let (out, c) = layer.forward(store, input, keep);
            caches.extend(c);
            seq = Some(out);
        }
        let seq = seq.unwrap();
        let last = seq.index_axis(Axis(0), seq.dim().0 - 1).to_owned();
        (last, keep.then_some(LstmCache { layers: caches }))
    }

    pub fn backward(
        &self,
        store: &ParamStore,
        cache: &LstmCache,
        dh_last: ArrayView2<'_, f64>,
        grads: &mut Gradients,
    ) -> Array3<f64> {
        let top = &cache.layers[self.layers.len() - 1];
        let (steps, rows, hd) = top.tanh_c.dim();
        let mut dh_out = Array3::<f64>::zeros((steps, rows, hd));
        dh_out.index_axis_mut(Axis(0), steps - 1).assign(&dh_last);
        for l in (0..self.layers.len()).rev() {
            dh_out = self.layers[l].backward(store, &cache.layers[l], &dh_out, grads);
        }
        dh_out
    }
}

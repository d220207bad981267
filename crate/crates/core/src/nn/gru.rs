use ndarray::{s, Array1, Array2, Array3, ArrayView2, ArrayView3, Axis};
use rand::Rng;

use super::params::{Gradients, Init, ParamId, ParamStore};
use super::{sigmoid, tanh};
use crate::error::{Error, Result};

/// Splits one row of `3h` gate values into its reset, update and candidate
/// blocks.
#[inline(always)]
fn gates(row: &[f64], hd: usize) -> (&[f64], &[f64], &[f64]) {
    let (r, rest) = row.split_at(hd);
    let (z, n) = rest.split_at(hd);
    (r, z, &n[..hd])
}

/// One GRU layer. Gate blocks along the `3h` axis are ordered reset, update,
/// candidate:
///
/// ```text
/// r  = σ(x W_r + b_ir + h U_r + b_hr)
/// z  = σ(x W_z + b_iz + h U_z + b_hz)
/// n  = tanh(x W_n + b_in + r ⊙ (h U_n + b_hn))
/// h' = (1 − z) ⊙ n + z ⊙ h
/// ```
#[derive(Debug, Clone)]
pub struct GruLayer {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub b_ih: ParamId,
    pub b_hh: ParamId,
    pub input: usize,
    pub hidden: usize,
}

#[derive(Debug, Clone)]
struct LayerCache {
    /// States `h_0..h_T`, `h_0 = 0`.
    h: Array3<f64>,
    r: Array3<f64>,
    z: Array3<f64>,
    n: Array3<f64>,
    /// `h U_n + b_hn`
    hn: Array3<f64>,
}

impl GruLayer {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut R) -> Self {
        let init = Init::fan_in(hidden);
        Self {
            w_ih: store.add(format!("{name}.w_ih"), &[input, 3 * hidden], init, rng),
            w_hh: store.add(format!("{name}.w_hh"), &[hidden, 3 * hidden], init, rng),
            b_ih: store.add(format!("{name}.b_ih"), &[3 * hidden], init, rng),
            b_hh: store.add(format!("{name}.b_hh"), &[3 * hidden], init, rng),
            input,
            hidden,
        }
    }

    pub fn num_params(input: usize, hidden: usize) -> usize {
        3 * hidden * (input + hidden + 2)
    }

    /// `x W_ih + b_ih` for a `[T × R × in]` sequence.
    pub fn project(&self, store: &ParamStore, x: ArrayView3<'_, f64>) -> Array3<f64> {
        let (t, r, i) = x.dim();
        let flat = x.as_standard_layout().into_owned().into_shape_with_order((t * r, i)).unwrap();
        let mut g = flat.dot(&store.mat(self.w_ih));
        g += &store.vec(self.b_ih);
        g.into_shape_with_order((t, r, 3 * self.hidden)).unwrap()
    }

    /// Runs the recurrence on precomputed input projections `[T × R × 3h]`.
    /// Returns the states `h_1..h_T`.
    fn run(&self, store: &ParamStore, gi: &Array3<f64>, keep: bool) -> (Array3<f64>, Option<LayerCache>) {
        let (steps, rows, _) = gi.dim();
        let hd = self.hidden;
        let u = store.mat(self.w_hh);
        let bh = store.vec(self.b_hh);
        let mut out = Array3::<f64>::zeros((steps, rows, hd));
        let mut cache = keep.then(|| LayerCache {
            h: Array3::zeros((steps + 1, rows, hd)),
            r: Array3::zeros((steps, rows, hd)),
            z: Array3::zeros((steps, rows, hd)),
            n: Array3::zeros((steps, rows, hd)),
            hn: Array3::zeros((steps, rows, hd)),
        });
        let mut h = Array2::<f64>::zeros((rows, hd));
        let mut gh = Array2::<f64>::zeros((rows, 3 * hd));
        for t in 0..steps {
            gh.assign(&bh);
            ndarray::linalg::general_mat_mul(1.0, &h, &u, 1.0, &mut gh);
            let git = gi.index_axis(Axis(0), t);
            let gi_s = git.as_slice().expect("standard layout");
            let gh_s = gh.as_slice().unwrap();
            let mut ot = out.index_axis_mut(Axis(0), t);
            let o_s = ot.as_slice_mut().unwrap();
            let h_s = h.as_slice().unwrap();
            match cache.as_mut() {
                None => {
                    for row in 0..rows {
                        let (gr, gz, gn) = gates(&gi_s[row * 3 * hd..(row + 1) * 3 * hd], hd);
                        let (qr, qz, qn) = gates(&gh_s[row * 3 * hd..(row + 1) * 3 * hd], hd);
                        let hp = &h_s[row * hd..(row + 1) * hd];
                        let o = &mut o_s[row * hd..(row + 1) * hd];
                        for j in 0..hd {
                            let r = sigmoid(gr[j] + qr[j]);
                            let z = sigmoid(gz[j] + qz[j]);
                            let n = tanh(gn[j] + r * qn[j]);
                            o[j] = (1.0 - z) * n + z * hp[j];
                        }
                    }
                }
                Some(c) => {
                    let mut rt = c.r.index_axis_mut(Axis(0), t);
                    let mut zt = c.z.index_axis_mut(Axis(0), t);
                    let mut nt = c.n.index_axis_mut(Axis(0), t);
                    let mut hnt = c.hn.index_axis_mut(Axis(0), t);
                    let (r_s, z_s, n_s, hn_s) = (
                        rt.as_slice_mut().unwrap(),
                        zt.as_slice_mut().unwrap(),
                        nt.as_slice_mut().unwrap(),
                        hnt.as_slice_mut().unwrap(),
                    );
                    for row in 0..rows {
                        let span = row * hd..(row + 1) * hd;
                        let (gr, gz, gn) = gates(&gi_s[row * 3 * hd..(row + 1) * 3 * hd], hd);
                        let (qr, qz, qn) = gates(&gh_s[row * 3 * hd..(row + 1) * 3 * hd], hd);
                        let hp = &h_s[span.clone()];
                        let o = &mut o_s[span.clone()];
                        let rr = &mut r_s[span.clone()];
                        let zz = &mut z_s[span.clone()];
                        let nn = &mut n_s[span.clone()];
                        let hn = &mut hn_s[span];
                        for j in 0..hd {
                            let r = sigmoid(gr[j] + qr[j]);
                            let z = sigmoid(gz[j] + qz[j]);
                            let n = tanh(gn[j] + r * qn[j]);
                            o[j] = (1.0 - z) * n + z * hp[j];
                            rr[j] = r;
                            zz[j] = z;
                            nn[j] = n;
                            hn[j] = qn[j];
                        }
                    }
                    c.h.index_axis_mut(Axis(0), t + 1).assign(&ot);
                }
            }
            h.assign(&out.index_axis(Axis(0), t));
        }
        (out, cache)
    }

    /// Back-propagates through the recurrence. `dh_out[t]` is the loss
    /// gradient on `h_{t+1}` from outside the layer. Returns the gradient on
    /// the input projections; accumulates `w_hh`, `b_hh` and `b_ih`.
    fn backprop(&self, store: &ParamStore, c: &LayerCache, dh_out: &Array3<f64>, grads: &mut Gradients) -> Array3<f64> {
        let (steps, rows, hd) = dh_out.dim();
        let u = store.mat(self.w_hh);
        let mut dgi = Array3::<f64>::zeros((steps, rows, 3 * hd));
        let mut dh = Array2::<f64>::zeros((rows, hd));
        let mut dgh = Array2::<f64>::zeros((rows, 3 * hd));
        let mut dw_hh = Array2::<f64>::zeros((hd, 3 * hd));
        for t in (0..steps).rev() {
            dh += &dh_out.index_axis(Axis(0), t);
            let hp = c.h.index_axis(Axis(0), t);
            let (rt, zt, nt, hnt) = (
                c.r.index_axis(Axis(0), t),
                c.z.index_axis(Axis(0), t),
                c.n.index_axis(Axis(0), t),
                c.hn.index_axis(Axis(0), t),
            );
            let (hp_s, r_s, z_s, n_s, hn_s) = (
                hp.as_slice().unwrap(),
                rt.as_slice().unwrap(),
                zt.as_slice().unwrap(),
                nt.as_slice().unwrap(),
                hnt.as_slice().unwrap(),
            );
            let mut dgit = dgi.index_axis_mut(Axis(0), t);
            let dgi_s = dgit.as_slice_mut().unwrap();
            let dgh_s = dgh.as_slice_mut().unwrap();
            let dh_s = dh.as_slice_mut().unwrap();
            for row in 0..rows {
                for j in 0..hd {
                    let k = row * hd + j;
                    let (r, z, n) = (r_s[k], z_s[k], n_s[k]);
                    let g = dh_s[k];
                    let dn = g * (1.0 - z);
                    let dz = g * (hp_s[k] - n);
                    let da_n = dn * (1.0 - n * n);
                    let da_r = da_n * hn_s[k] * r * (1.0 - r);
                    let da_z = dz * z * (1.0 - z);
                    let base = row * 3 * hd;
                    dgi_s[base + j] = da_r;
                    dgi_s[base + hd + j] = da_z;
                    dgi_s[base + 2 * hd + j] = da_n;
                    dgh_s[base + j] = da_r;
                    dgh_s[base + hd + j] = da_z;
                    dgh_s[base + 2 * hd + j] = da_n * r;
                    dh_s[k] = g * z;
                }
            }
            ndarray::linalg::general_mat_mul(1.0, &hp.t(), &dgh, 1.0, &mut dw_hh);
            grads.vec_mut(self.b_hh).scaled_add(1.0, &dgh.sum_axis(Axis(0)));
            ndarray::linalg::general_mat_mul(1.0, &dgh, &u.t(), 1.0, &mut dh);
        }
        grads.mat_mut(self.w_hh).scaled_add(1.0, &dw_hh);
        let flat = dgi.view().into_shape_with_order((steps * rows, 3 * hd)).unwrap();
        grads.vec_mut(self.b_ih).scaled_add(1.0, &flat.sum_axis(Axis(0)));
        dgi
    }

    /// Gradient of `x W_ih` with respect to `x`, accumulating `dW_ih`.
    fn project_backward(
        &self,
        store: &ParamStore,
        x: &Array3<f64>,
        dgi: &Array3<f64>,
        grads: &mut Gradients,
    ) -> Array3<f64> {
        let (t, r, i) = x.dim();
        let xf = x.view().into_shape_with_order((t * r, i)).unwrap();
        let gf = dgi.view().into_shape_with_order((t * r, 3 * self.hidden)).unwrap();
        ndarray::linalg::general_mat_mul(1.0, &xf.t(), &gf, 1.0, &mut grads.mat_mut(self.w_ih));
        gf.dot(&store.mat(self.w_ih).t()).into_shape_with_order((t, r, i)).unwrap()
    }
}

/// Stacked GRU; layer `l` consumes the full state sequence of layer `l − 1`.
#[derive(Debug, Clone)]
pub struct Gru {
    pub layers: Vec<GruLayer>,
}

#[derive(Debug, Clone)]
pub struct GruCache {
    /// Inputs to each layer; the first entry is empty when the first layer
    /// was driven from external projections.
    inputs: Vec<Option<Array3<f64>>>,
    layers: Vec<LayerCache>,
}

impl Gru {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        layers: usize,
        rng: &mut R,
    ) -> Self {
        assert!(layers >= 1, "a GRU needs at least one layer");
        let layers = (0..layers)
            .map(|l| GruLayer::new(store, &format!("{name}.l{l}"), if l == 0 { input } else { hidden }, hidden, rng))
            .collect();
        Self { layers }
    }

    pub fn num_params(input: usize, hidden: usize, layers: usize) -> usize {
        GruLayer::num_params(input, hidden) + (layers - 1) * GruLayer::num_params(hidden, hidden)
    }

    pub fn hidden(&self) -> usize {
        self.layers[0].hidden
    }

    pub fn input(&self) -> usize {
        self.layers[0].input
    }

    /// Final top-layer state for a `[T × R × in]` batch of sequences.
    pub fn forward(&self, store: &ParamStore, x: ArrayView3<'_, f64>, keep: bool) -> (Array2<f64>, Option<GruCache>) {
        let gi = self.layers[0].project(store, x);
        let (h, cache) = self.forward_projected(store, gi, keep);
        let cache = cache.map(|mut c| {
            c.inputs[0] = Some(x.to_owned());
            c
        });
        (h, cache)
    }

    /// Same as [`Gru::forward`] with the first layer's input projection
    /// (`x W_ih + b_ih`, shape `[T × R × 3h]`) supplied by the caller.
    pub fn forward_projected(&self, store: &ParamStore, gi0: Array3<f64>, keep: bool) -> (Array2<f64>, Option<GruCache>) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut caches = Vec::with_capacity(self.layers.len());
        inputs.push(None);
        let (mut seq, c) = self.layers[0].run(store, &gi0, keep);
        caches.extend(c);
        for layer in &self.layers[1..] {
            let gi = layer.project(store, seq.view());
            let (next, c) = layer.run(store, &gi, keep);
            caches.extend(c);
            if keep {
                inputs.push(Some(seq));
            }
            seq = next;
        }
        let last = seq.index_axis(Axis(0), seq.dim().0 - 1).to_owned();
        (last, keep.then_some(GruCache { inputs, layers: caches }))
    }

    /// Back-propagates `dL/dh_T` of the top layer down to the first layer's
    /// input projections.
    pub fn backward_to_projection(
        &self,
        store: &ParamStore,
        cache: &GruCache,
        dh_last: ArrayView2<'_, f64>,
        grads: &mut Gradients,
    ) -> Array3<f64> {
        let top = &cache.layers[self.layers.len() - 1];
        let (steps, rows, hd) = top.r.dim();
        let mut dh_out = Array3::<f64>::zeros((steps, rows, hd));
        dh_out.index_axis_mut(Axis(0), steps - 1).assign(&dh_last);
        for l in (1..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let dgi = layer.backprop(store, &cache.layers[l], &dh_out, grads);
            let x = cache.inputs[l].as_ref().expect("cached layer input");
            dh_out = layer.project_backward(store, x, &dgi, grads);
        }
        self.layers[0].backprop(store, &cache.layers[0], &dh_out, grads)
    }

    /// Full backward pass returning `dL/dx` for inputs given to [`Gru::forward`].
    pub fn backward(
        &self,
        store: &ParamStore,
        cache: &GruCache,
        dh_last: ArrayView2<'_, f64>,
        grads: &mut Gradients,
    ) -> Array3<f64> {
        let dgi = self.backward_to_projection(store, cache, dh_last, grads);
        let x = cache.inputs[0].as_ref().expect("forward() caches the input sequence");
        self.layers[0].project_backward(store, x, &dgi, grads)
    }
}

/// Final hidden state of the top layer for one `[T × d_in]` sequence,
/// starting from a zero state.
pub fn gru_sequence(z: ArrayView2<'_, f64>, gru: &Gru, store: &ParamStore) -> Result<Array1<f64>> {
    let (t, d) = z.dim();
    if d != gru.input() {
        return Err(Error::shape(format!("gru_sequence: input width {d} != {}", gru.input())));
    }
    if t == 0 {
        return Err(Error::shape("gru_sequence: empty sequence"));
    }
    let x = z.to_owned().into_shape_with_order((t, 1, d)).unwrap();
    let (h, _) = gru.forward(store, x.view(), false);
    Ok(h.slice(s![0, ..]).to_owned())
}

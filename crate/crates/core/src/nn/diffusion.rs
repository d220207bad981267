use ndarray::{Array2, Array3, ArrayView2, ArrayView3};
use rand::Rng;

use super::activation::Activation;
use super::params::{Gradients, Init, ParamId, ParamStore};
use crate::error::{Error, Result};

const ROW_SUM_TOL: f64 = 1e-6;

fn check_stochastic(p: ArrayView2<'_, f64>, n: usize, what: &str) -> Result<()> {
    if p.dim() != (n, n) {
        return Err(Error::shape(format!("{what}: shape {:?}, expected ({n}, {n})", p.dim())));
    }
    for (i, row) in p.rows().into_iter().enumerate() {
        let s = row.sum();
        let empty = row.iter().all(|&v| v == 0.0);
        if !empty && (s - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::invalid(format!("{what}: row {i} sums to {s}, not 1")));
        }
    }
    Ok(())
}

/// `ReLU(Σ_{s=0..S} Pˢ H W_s + Σ_{s=1..S} P_revˢ H W_rev_s)` for one graph.
///
/// `weights` holds `W_0..W_S`; `reverse`, when given, holds `P_rev` and
/// `W_rev_1..W_rev_S`. Rows of either transition must sum to one, except
/// all-zero rows of nodes without neighbors.
pub fn diffusion_conv(
    h: ArrayView2<'_, f64>,
    transition: ArrayView2<'_, f64>,
    weights: &[ArrayView2<'_, f64>],
    reverse: Option<(ArrayView2<'_, f64>, &[ArrayView2<'_, f64>])>,
) -> Result<Array2<f64>> {
    let (n, d) = h.dim();
    check_stochastic(transition, n, "transition")?;
    let Some(w0) = weights.first() else {
        return Err(Error::shape("diffusion_conv needs at least W_0"));
    };
    let d_out = w0.ncols();
    let steps = weights.len() - 1;
    let check_w = |w: &ArrayView2<'_, f64>| {
        if w.dim() != (d, d_out) {
            Err(Error::shape(format!("diffusion weight {:?}, expected ({d}, {d_out})", w.dim())))
        } else {
            Ok(())
        }
    };
    weights.iter().try_for_each(check_w)?;
    let mut out = h.dot(w0);
    let mut x = h.to_owned();
    for w in &weights[1..] {
        x = transition.dot(&x);
        out += &x.dot(w);
    }
    if let Some((p_rev, w_rev)) = reverse {
        check_stochastic(p_rev, n, "reverse transition")?;
        if w_rev.len() != steps {
            return Err(Error::shape(format!("{} reverse weights for {steps} steps", w_rev.len())));
        }
        w_rev.iter().try_for_each(check_w)?;
        let mut x = h.to_owned();
        for w in w_rev {
            x = p_rev.dot(&x);
            out += &x.dot(w);
        }
    }
    out.mapv_inplace(|v| v.max(0.0));
    Ok(out)
}

/// `P X_b` for every batch element of `[B × N × d]`.
fn propagate(p: ArrayView2<'_, f64>, x: &Array3<f64>) -> Array3<f64> {
    let mut out = Array3::zeros(x.raw_dim());
    for (xb, mut ob) in x.outer_iter().zip(out.outer_iter_mut()) {
        ndarray::linalg::general_mat_mul(1.0, &p, &xb, 0.0, &mut ob);
    }
    out
}

fn flat(x: &Array3<f64>) -> ArrayView2<'_, f64> {
    let (b, n, d) = x.dim();
    x.view().into_shape_with_order((b * n, d)).unwrap()
}

/// Batched diffusion convolution sharing one graph across the batch.
#[derive(Debug, Clone)]
pub struct DiffusionConv {
    /// `W_0..W_S`
    pub weights: Vec<ParamId>,
    /// `W_rev_1..W_rev_S`; empty when not bidirectional.
    pub reverse_weights: Vec<ParamId>,
    pub in_dim: usize,
    pub out_dim: usize,
    /// Applied to the summed diffusion terms; ReLU unless changed.
    pub activation: Activation,
}

#[derive(Debug, Clone)]
pub struct DiffusionCache {
    xs: Vec<Array3<f64>>,
    rs: Vec<Array3<f64>>,
    out: Array3<f64>,
}

impl DiffusionConv {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        steps: usize,
        bidirectional: bool,
        rng: &mut R,
    ) -> Self {
        let init = Init::fan_in(in_dim);
        let weights = (0..=steps)
            .map(|s| store.add(format!("{name}.w{s}"), &[in_dim, out_dim], init, rng))
            .collect();
        let reverse_weights = if bidirectional {
            (1..=steps)
                .map(|s| store.add(format!("{name}.w_rev{s}"), &[in_dim, out_dim], init, rng))
                .collect()
        } else {
            Vec::new()
        };
        Self {
            weights,
            reverse_weights,
            in_dim,
            out_dim,
            activation: Activation::Relu,
        }
    }

    pub fn num_params(in_dim: usize, out_dim: usize, steps: usize, bidirectional: bool) -> usize {
        let mats = steps + 1 + if bidirectional { steps } else { 0 };
        mats * in_dim * out_dim
    }

    pub fn steps(&self) -> usize {
        self.weights.len() - 1
    }

    pub fn is_bidirectional(&self) -> bool {
        !self.reverse_weights.is_empty()
    }

    /// `h` is `[B × N × in]`.
    pub fn forward(
        &self,
        store: &ParamStore,
        h: ArrayView3<'_, f64>,
        transition: ArrayView2<'_, f64>,
        reverse: ArrayView2<'_, f64>,
        keep: bool,
    ) -> (Array3<f64>, Option<DiffusionCache>) {
        let (b, n, _) = h.dim();
        let mut xs = vec![h.to_owned()];
        for _ in 1..self.weights.len() {
            let next = propagate(transition, xs.last().unwrap());
            xs.push(next);
        }
        let mut rs = Vec::new();
        if self.is_bidirectional() {
            rs.push(propagate(reverse, &xs[0]));
            for _ in 1..self.reverse_weights.len() {
                let next = propagate(reverse, rs.last().unwrap());
                rs.push(next);
            }
        }
        let mut out = Array2::zeros((b * n, self.out_dim));
        for (x, &w) in xs.iter().zip(&self.weights) {
            ndarray::linalg::general_mat_mul(1.0, &flat(x), &store.mat(w), 1.0, &mut out);
        }
        for (x, &w) in rs.iter().zip(&self.reverse_weights) {
            ndarray::linalg::general_mat_mul(1.0, &flat(x), &store.mat(w), 1.0, &mut out);
        }
        let act = self.activation;
        if act != Activation::Identity {
            out.mapv_inplace(|v| act.apply(v));
        }
        let out = out.into_shape_with_order((b, n, self.out_dim)).unwrap();
        let cache = keep.then(|| DiffusionCache {
            xs,
            rs,
            out: out.clone(),
        });
        (out, cache)
    }

    /// Returns `(dH, dP, dP_rev)`; `dP_rev` is zero when not bidirectional.
    pub fn backward(
        &self,
        store: &ParamStore,
        cache: &DiffusionCache,
        transition: ArrayView2<'_, f64>,
        reverse: ArrayView2<'_, f64>,
        dy: ArrayView3<'_, f64>,
        grads: &mut Gradients,
    ) -> (Array3<f64>, Array2<f64>, Array2<f64>) {
        let n = dy.dim().1;
        let mut du = dy.to_owned();
        let act = self.activation;
        if act != Activation::Identity {
            ndarray::Zip::from(&mut du)
                .and(&cache.out)
                .for_each(|g, &y| *g *= act.grad_from_output(y));
        }
        let levels: Vec<&Array3<f64>> = cache.xs.iter().collect();
        let ws: Vec<Option<ParamId>> = self.weights.iter().copied().map(Some).collect();
        let mut dp = Array2::zeros((n, n));
        let mut dh = self.chain_backward(store, &levels, &ws, transition, &du, &mut dp, grads);
        let mut dp_rev = Array2::zeros((n, n));
        if self.is_bidirectional() {
            let levels: Vec<&Array3<f64>> = std::iter::once(&cache.xs[0]).chain(&cache.rs).collect();
            let ws: Vec<Option<ParamId>> = std::iter::once(None)
                .chain(self.reverse_weights.iter().copied().map(Some))
                .collect();
            dh += &self.chain_backward(store, &levels, &ws, reverse, &du, &mut dp_rev, grads);
        }
        (dh, dp, dp_rev)
    }

    /// Back-propagates through `levels[k] = P levels[k-1]`, where level `k`
    /// contributes `levels[k] · ws[k]` to the pre-activation.
    #[allow(clippy::too_many_arguments)]
    fn chain_backward(
        &self,
        store: &ParamStore,
        levels: &[&Array3<f64>],
        ws: &[Option<ParamId>],
        p: ArrayView2<'_, f64>,
        du: &Array3<f64>,
        dp: &mut Array2<f64>,
        grads: &mut Gradients,
    ) -> Array3<f64> {
        let (b, n, _) = du.dim();
        let du_flat = flat(du);
        let mut carry: Option<Array3<f64>> = None;
        for k in (0..levels.len()).rev() {
            let mut dx = match ws[k] {
                Some(w) => {
                    ndarray::linalg::general_mat_mul(1.0, &flat(levels[k]).t(), &du_flat, 1.0, &mut grads.mat_mut(w));
                    du_flat
                        .dot(&store.mat(w).t())
                        .into_shape_with_order((b, n, self.in_dim))
                        .unwrap()
                }
                None => Array3::zeros((b, n, self.in_dim)),
            };
            if let Some(c) = carry.take() {
                dx += &c;
            }
            if k == 0 {
                return dx;
            }
            for (g, x) in dx.outer_iter().zip(levels[k - 1].outer_iter()) {
                ndarray::linalg::general_mat_mul(1.0, &g, &x.t(), 1.0, dp);
            }
            carry = Some(propagate(p.t(), &dx));
        }
        unreachable!("levels is never empty")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_steps_and_identity() {
        let h = array![[1.0, -2.0], [0.5, 3.0]];
        let w0 = array![[1.0, 0.0], [0.0, 1.0]];
        let p = Array2::eye(2);
        let y = diffusion_conv(h.view(), p.view(), &[w0.view()], None).unwrap();
        assert_eq!(y, h.mapv(|v| v.max(0.0)));
        let w1 = array![[0.5, 0.0], [0.0, 0.5]];
        let y = diffusion_conv(h.view(), p.view(), &[w0.view(), w1.view()], None).unwrap();
        assert_eq!(y, (h.clone() * 1.5).mapv(|v| v.max(0.0)));
    }

    #[test]
    fn rejects_non_stochastic() {
        let h = Array2::ones((2, 1));
        let w = Array2::ones((1, 1));
        let p = array![[0.5, 0.4], [0.0, 1.0]];
        assert!(diffusion_conv(h.view(), p.view(), &[w.view()], None).is_err());
        let p = array![[0.0, 0.0], [0.0, 1.0]];
        assert!(diffusion_conv(h.view(), p.view(), &[w.view()], None).is_ok());
    }
}

use ndarray::{Array2, ArrayView3, Axis};
use rand::Rng;

use super::params::{Gradients, Init, ParamId, ParamStore};

/// Valid-padding 1-D convolution over time. Input `[B × C × T]`, output
/// rows indexed by `(b, t)` for `t < T − kernel + 1`, one column per filter.
#[derive(Debug, Clone)]
pub struct Conv1d {
    /// `[C·kernel × filters]`, row `c·kernel + k` holds tap `k` of channel `c`.
    pub weight: ParamId,
    pub bias: ParamId,
    pub channels: usize,
    pub filters: usize,
    pub kernel: usize,
}

#[derive(Debug, Clone)]
pub struct Conv1dCache {
    cols: Array2<f64>,
}

impl Conv1d {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        channels: usize,
        filters: usize,
        kernel: usize,
        rng: &mut R,
    ) -> Self {
        let init = Init::fan_in(channels * kernel);
        Self {
            weight: store.add(format!("{name}.weight"), &[channels * kernel, filters], init, rng),
            bias: store.add(format!("{name}.bias"), &[filters], init, rng),
            channels,
            filters,
            kernel,
        }
    }

    pub fn num_params(channels: usize, filters: usize, kernel: usize) -> usize {
        (channels * kernel + 1) * filters
    }

    pub fn out_len(&self, t: usize) -> usize {
        t + 1 - self.kernel
    }

    fn im2col(&self, x: ArrayView3<'_, f64>) -> Array2<f64> {
        let (b, c, t) = x.dim();
        let l = self.out_len(t);
        let kw = self.kernel;
        let mut cols = Array2::zeros((b * l, c * kw));
        for bi in 0..b {
            for ti in 0..l {
                let mut row = cols.row_mut(bi * l + ti);
                for ci in 0..c {
                    for k in 0..kw {
                        row[ci * kw + k] = x[[bi, ci, ti + k]];
                    }
                }
            }
        }
        cols
    }

    /// Pre-activation `[B·L × filters]`. Requires `T ≥ kernel`.
    pub fn forward(&self, store: &ParamStore, x: ArrayView3<'_, f64>, keep: bool) -> (Array2<f64>, Option<Conv1dCache>) {
        assert!(x.dim().2 >= self.kernel, "sequence shorter than kernel");
        assert_eq!(x.dim().1, self.channels, "channel count");
        let cols = self.im2col(x);
        let mut y = cols.dot(&store.mat(self.weight));
        y += &store.vec(self.bias);
        (y, keep.then_some(Conv1dCache { cols }))
    }

    pub fn backward_params(&self, cache: &Conv1dCache, dy: ndarray::ArrayView2<'_, f64>, grads: &mut Gradients) {
        ndarray::linalg::general_mat_mul(1.0, &cache.cols.t(), &dy, 1.0, &mut grads.mat_mut(self.weight));
        grads.vec_mut(self.bias).scaled_add(1.0, &dy.sum_axis(Axis(0)));
    }
}

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, IxDyn, Zip};

use super::params::{Gradients, Init, ParamId, ParamStore, Tensor};

pub const LN_EPS: f64 = 1e-5;

/// Per-row normalization over the last axis followed by `gain ⊙ x̂ + shift`.
pub fn layer_norm(x: ArrayView2<'_, f64>, gain: ArrayView1<'_, f64>, shift: ArrayView1<'_, f64>, eps: f64) -> Array2<f64> {
    let (xhat, _) = normalize(x, eps);
    xhat * &gain + &shift
}

fn normalize(x: ArrayView2<'_, f64>, eps: f64) -> (Array2<f64>, Array1<f64>) {
    let d = x.ncols() as f64;
    let mut xhat = x.to_owned();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, is) in xhat.rows_mut().into_iter().zip(inv_std.iter_mut()) {
        let mean = row.sum() / d;
        row -= mean;
        let var = row.iter().map(|v| v * v).sum::<f64>() / d;
        *is = 1.0 / (var + eps).sqrt();
        row *= *is;
    }
    (xhat, inv_std)
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub shift: ParamId,
    pub dim: usize,
    pub eps: f64,
}

#[derive(Debug, Clone)]
pub struct LayerNormCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        let gain = store.insert(format!("{name}.gain"), Tensor::ones(IxDyn(&[dim])), Init::Constant(1.0));
        let shift = store.insert(format!("{name}.shift"), Tensor::zeros(IxDyn(&[dim])), Init::Constant(0.0));
        Self {
            gain,
            shift,
            dim,
            eps: LN_EPS,
        }
    }

    pub fn forward(&self, store: &ParamStore, x: ArrayView2<'_, f64>) -> (Array2<f64>, LayerNormCache) {
        let (xhat, inv_std) = normalize(x, self.eps);
        let y = &xhat * &store.vec(self.gain) + &store.vec(self.shift);
        (y, LayerNormCache { xhat, inv_std })
    }

    pub fn backward(
        &self,
        store: &ParamStore,
        cache: &LayerNormCache,
        dy: ArrayView2<'_, f64>,
        grads: &mut Gradients,
    ) -> Array2<f64> {
        grads
            .vec_mut(self.gain)
            .scaled_add(1.0, &(&dy * &cache.xhat).sum_axis(Axis(0)));
        grads.vec_mut(self.shift).scaled_add(1.0, &dy.sum_axis(Axis(0)));
        let dxhat = &dy * &store.vec(self.gain);
        let d = self.dim as f64;
        let mut dx = Array2::zeros(dy.raw_dim());
        Zip::from(dx.rows_mut())
            .and(dxhat.rows())
            .and(cache.xhat.rows())
            .and(&cache.inv_std)
            .for_each(|mut out, g, xh, &is| {
                let mean_g = g.sum() / d;
                let mean_gx = g.dot(&xh) / d;
                Zip::from(&mut out)
                    .and(&g)
                    .and(&xh)
                    .for_each(|o, &gi, &xi| *o = is * (gi - mean_g - xi * mean_gx));
            });
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn examples() {
        let one = array![1.0, 1.0];
        let zero = array![0.0, 0.0];
        let y = layer_norm(array![[1.0, 3.0]].view(), one.view(), zero.view(), 0.0);
        assert_eq!(y, array![[-1.0, 1.0]]);
        let c = layer_norm(array![[4.0, 4.0]].view(), one.view(), zero.view(), LN_EPS);
        assert_eq!(c, array![[0.0, 0.0]]);
        let x = array![[-1.0, 1.0, -1.0, 1.0]];
        let g = Array1::ones(4);
        let s = Array1::zeros(4);
        let y = layer_norm(x.view(), g.view(), s.view(), LN_EPS);
        for (a, b) in y.iter().zip(x.iter()) {
            assert!((a - b).abs() < 1e-5);
        }
    }
}

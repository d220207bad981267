use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Gumbel};

use crate::error::{Error, Result};

/// Indices of the `k` largest entries of `row`, skipping `self_index`.
/// Ties go to the lowest index. Returned in descending score order.
pub fn top_k_excluding(row: ArrayView1<'_, f64>, self_index: usize, k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..row.len()).filter(|&j| j != self_index).collect();
    idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

fn check_k(n: usize, self_index: usize, k: usize) -> Result<()> {
    if self_index >= n {
        return Err(Error::invalid(format!("self index {self_index} outside {n} nodes")));
    }
    if k + 1 > n {
        return Err(Error::invalid(format!("K = {k} exceeds N - 1 = {}", n as i64 - 1)));
    }
    Ok(())
}

fn gumbel() -> Gumbel<f64> {
    Gumbel::new(0.0, 1.0).expect("standard Gumbel")
}

/// Draws `k` distinct neighbors of node `self_index` by perturbing `scores`
/// with independent Gumbel(0, 1) noise and keeping the top `k`. This samples
/// `k` indices without replacement from `softmax(scores)` with self masked.
pub fn gumbel_topk_neighbors<R: Rng + ?Sized>(
    scores: ArrayView1<'_, f64>,
    self_index: usize,
    k: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    check_k(scores.len(), self_index, k)?;
    let g = gumbel();
    let perturbed: Array1<f64> = scores.iter().map(|&s| s + g.sample(rng)).collect();
    Ok(top_k_excluding(perturbed.view(), self_index, k))
}

/// Row-normalizes `a`; rows summing to zero stay zero.
pub fn row_normalize(a: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut p = a.to_owned();
    for mut row in p.rows_mut() {
        let s = row.sum();
        if s != 0.0 {
            row /= s;
        }
    }
    p
}

/// Gradient of `row_normalize` with respect to `a`.
pub fn row_normalize_backward(a: ArrayView2<'_, f64>, dp: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut da = Array2::zeros(a.raw_dim());
    for ((arow, dprow), mut darow) in a.rows().into_iter().zip(dp.rows()).zip(da.rows_mut()) {
        let s = arow.sum();
        if s == 0.0 {
            continue;
        }
        let inner: f64 = arow.iter().zip(dprow.iter()).map(|(&x, &g)| x * g).sum::<f64>() / s;
        for (d, &g) in darow.iter_mut().zip(dprow.iter()) {
            *d = (g - inner) / s;
        }
    }
    da
}

/// `D̃^{-1/2} (A + I) D̃^{-1/2}` with `D̃` the row degrees of `A + I`.
pub fn gcn_normalize(a: ArrayView2<'_, f64>) -> Array2<f64> {
    let (m, dinv) = gcn_parts(a);
    let mut out = m;
    for ((i, j), v) in out.indexed_iter_mut() {
        *v *= dinv[i] * dinv[j];
    }
    out
}

fn gcn_parts(a: ArrayView2<'_, f64>) -> (Array2<f64>, Array1<f64>) {
    let mut m = a.to_owned();
    m.diag_mut().mapv_inplace(|v| v + 1.0);
    let dinv = m.sum_axis(Axis(1)).mapv(|d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 });
    (m, dinv)
}

/// Gradient of [`gcn_normalize`] with respect to `a`, including the path
/// through the degrees.
pub fn gcn_normalize_backward(a: ArrayView2<'_, f64>, dout: ArrayView2<'_, f64>) -> Array2<f64> {
    let (_, dinv) = gcn_parts(a);
    let n = a.nrows();
    let out = gcn_normalize(a);
    // dL/d(deg_i) = -1/(2 deg_i) * (Σ_b dÂ_ib Â_ib + Σ_a dÂ_ai Â_ai)
    let prod = &dout * &out;
    let rows = prod.sum_axis(Axis(1));
    let cols = prod.sum_axis(Axis(0));
    let mut da = Array2::zeros((n, n));
    for i in 0..n {
        let deg_grad = -0.5 * dinv[i] * dinv[i] * (rows[i] + cols[i]);
        for j in 0..n {
            da[[i, j]] = dout[[i, j]] * dinv[i] * dinv[j] + deg_grad;
        }
    }
    da
}

/// A sampled neighbor graph over `n` nodes drawn from score matrix `Φ`.
///
/// The forward value is the hard 0/1 adjacency. [`GraphSample::backward`]
/// routes adjacency gradients to `Φ` through the row-wise softmax of the
/// perturbed scores at `temperature`, restricted to non-self entries.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSample {
    pub scores: Array2<f64>,
    pub k: usize,
    pub temperature: f64,
    pub neighbor_sets: Vec<Vec<usize>>,
    pub adjacency: Array2<f64>,
    /// `P = D⁻¹ A`
    pub transition: Array2<f64>,
    /// Row-normalized `Aᵀ`; nodes nobody selected get a zero row.
    pub reverse_transition: Array2<f64>,
    soft: Array2<f64>,
}

impl GraphSample {
    /// Training-time draw with fresh Gumbel noise.
    pub fn sample<R: Rng + ?Sized>(phi: ArrayView2<'_, f64>, k: usize, temperature: f64, rng: &mut R) -> Result<Self> {
        let n = phi.nrows();
        let g = gumbel();
        let noise = Array2::from_shape_simple_fn((n, n), || g.sample(rng));
        Self::from_noise(phi, noise.view(), k, temperature)
    }

    /// Inference-time graph: top-`k` of `Φ` without noise.
    pub fn deterministic(phi: ArrayView2<'_, f64>, k: usize, temperature: f64) -> Result<Self> {
        let n = phi.nrows();
        Self::from_noise(phi, Array2::zeros((n, n)).view(), k, temperature)
    }

    /// Graph for a fixed noise draw.
    pub fn from_noise(phi: ArrayView2<'_, f64>, noise: ArrayView2<'_, f64>, k: usize, temperature: f64) -> Result<Self> {
        let n = phi.nrows();
        if phi.ncols() != n || noise.dim() != (n, n) {
            return Err(Error::shape(format!(
                "graph scores {:?} and noise {:?} must be square and equal",
                phi.dim(),
                noise.dim()
            )));
        }
        if n == 0 {
            return Err(Error::shape("graph needs at least one node"));
        }
        check_k(n, 0, k)?;
        if !(temperature > 0.0) {
            return Err(Error::invalid(format!("temperature must be positive, got {temperature}")));
        }
        let perturbed = &phi + &noise;
        let mut adjacency = Array2::zeros((n, n));
        let mut soft = Array2::zeros((n, n));
        let mut neighbor_sets = Vec::with_capacity(n);
        for i in 0..n {
            let row = perturbed.row(i);
            let nb = top_k_excluding(row, i, k);
            for &j in &nb {
                adjacency[[i, j]] = 1.0;
            }
            neighbor_sets.push(nb);
            if n > 1 {
                let max = (0..n)
                    .filter(|&j| j != i)
                    .map(|j| row[j])
                    .fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for j in (0..n).filter(|&j| j != i) {
                    let e = ((row[j] - max) / temperature).exp();
                    soft[[i, j]] = e;
                    sum += e;
                }
                soft.row_mut(i).mapv_inplace(|v| v / sum);
            }
        }
        let transition = row_normalize(adjacency.view());
        let reverse_transition = row_normalize(adjacency.t());
        Ok(Self {
            scores: phi.to_owned(),
            k,
            temperature,
            neighbor_sets,
            adjacency,
            transition,
            reverse_transition,
            soft,
        })
    }

    pub fn n(&self) -> usize {
        self.adjacency.nrows()
    }

    /// Relaxed adjacency used for the backward pass.
    pub fn soft(&self) -> &Array2<f64> {
        &self.soft
    }

    /// Straight-through gradient: `dΦ_ij = (1/τ) s_ij (dA_ij − Σ_k s_ik dA_ik)`.
    pub fn backward(&self, d_adjacency: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut dphi = Array2::zeros(self.soft.raw_dim());
        for ((srow, drow), mut out) in self.soft.rows().into_iter().zip(d_adjacency.rows()).zip(dphi.rows_mut()) {
            let inner: f64 = srow.iter().zip(drow.iter()).map(|(&s, &d)| s * d).sum();
            for ((o, &s), &d) in out.iter_mut().zip(srow.iter()).zip(drow.iter()) {
                *o = s * (d - inner) / self.temperature;
            }
        }
        dphi
    }

    /// Adjacency gradient from gradients on `P` and on the reverse transition.
    pub fn adjacency_grad(&self, d_transition: ArrayView2<'_, f64>, d_reverse: Option<ArrayView2<'_, f64>>) -> Array2<f64> {
        let mut da = row_normalize_backward(self.adjacency.view(), d_transition);
        if let Some(dr) = d_reverse {
            da += &row_normalize_backward(self.adjacency.t(), dr).t();
        }
        da
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exhaustive_k_takes_all_others() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = array![5.0, -2.0, 0.0, 9.0, 1.0];
        for _ in 0..50 {
            let mut nb = gumbel_topk_neighbors(s.view(), 2, 4, &mut rng).unwrap();
            nb.sort();
            assert_eq!(nb, vec![0, 1, 3, 4]);
        }
        assert!(gumbel_topk_neighbors(s.view(), 2, 5, &mut rng).is_err());
    }

    #[test]
    fn dominant_score_wins() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = array![0.0, 20.0, 0.0, 0.0];
        let hits = (0..10_000)
            .filter(|_| gumbel_topk_neighbors(s.view(), 0, 1, &mut rng).unwrap() == vec![1])
            .count();
        assert!(hits as f64 / 10_000.0 > 0.999);
    }

    #[test]
    fn deterministic_ties_lowest_index() {
        let phi = Array2::zeros((4, 4));
        let g = GraphSample::deterministic(phi.view(), 2, 0.5).unwrap();
        assert_eq!(g.neighbor_sets, vec![vec![1, 2], vec![0, 2], vec![0, 1], vec![0, 1]]);
        for r in g.transition.rows() {
            assert!((r.sum() - 1.0).abs() < 1e-12);
        }
        assert!(g.adjacency.iter().all(|&v| v == 0.0 || v == 1.0));
        assert_eq!(g.reverse_transition.row(3).sum(), 0.0);
    }

    #[test]
    fn single_node_graph() {
        let g = GraphSample::deterministic(Array2::zeros((1, 1)).view(), 0, 0.5).unwrap();
        assert_eq!(g.transition, array![[0.0]]);
        assert!(GraphSample::deterministic(Array2::zeros((1, 1)).view(), 1, 0.5).is_err());
    }

    #[test]
    fn gcn_identity_on_empty_graph() {
        let a = Array2::<f64>::zeros((3, 3));
        assert_eq!(gcn_normalize(a.view()), Array2::<f64>::eye(3));
    }
}

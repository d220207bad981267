use hstgnn::nn::Activation;

pub type Mat = Vec<Vec<f64>>;

pub fn zeros(r: usize, c: usize) -> Mat {
    vec![vec![0.0; c]; r]
}

pub fn eye(n: usize) -> Mat {
    let mut m = zeros(n, n);
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let (n, k, m) = (a.len(), b.len(), b.first().map_or(0, |r| r.len()));
    let mut out = zeros(n, m);
    for i in 0..n {
        assert_eq!(a[i].len(), k);
        for j in 0..m {
            let mut s = 0.0;
            for l in 0..k {
                s += a[i][l] * b[l][j];
            }
            out[i][j] = s;
        }
    }
    out
}

pub fn add(a: &Mat, b: &Mat) -> Mat {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + q).collect())
        .collect()
}

pub fn transpose(a: &Mat) -> Mat {
    if a.is_empty() {
        return vec![];
    }
    (0..a[0].len()).map(|j| a.iter().map(|r| r[j]).collect()).collect()
}

pub fn mat_pow(p: &Mat, s: usize) -> Mat {
    let mut out = eye(p.len());
    for _ in 0..s {
        out = matmul(&out, p);
    }
    out
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Row vector times matrix.
pub fn vecmat(x: &[f64], w: &Mat) -> Vec<f64> {
    let m = w[0].len();
    (0..m).map(|j| x.iter().zip(w).map(|(xi, row)| xi * row[j]).sum()).collect()
}

/// One GRU step, gate columns ordered reset, update, candidate.
pub fn gru_cell(x: &[f64], h: &[f64], w_ih: &Mat, w_hh: &Mat, b_ih: &[f64], b_hh: &[f64]) -> Vec<f64> {
    let hd = h.len();
    let gi = vecmat(x, w_ih);
    let gh = vecmat(h, w_hh);
    (0..hd)
        .map(|j| {
            let r = sigmoid(gi[j] + b_ih[j] + gh[j] + b_hh[j]);
            let z = sigmoid(gi[hd + j] + b_ih[hd + j] + gh[hd + j] + b_hh[hd + j]);
            let n = (gi[2 * hd + j] + b_ih[2 * hd + j] + r * (gh[2 * hd + j] + b_hh[2 * hd + j])).tanh();
            (1.0 - z) * n + z * h[j]
        })
        .collect()
}

pub struct GruLayerWeights {
    pub w_ih: Mat,
    pub w_hh: Mat,
    pub b_ih: Vec<f64>,
    pub b_hh: Vec<f64>,
}

/// Stacked GRU over `seq` (`T` rows), zero initial state, top final state.
pub fn gru_stack(seq: &Mat, layers: &[GruLayerWeights]) -> Vec<f64> {
    let mut cur = seq.clone();
    for l in layers {
        let hd = l.w_hh.len();
        let mut h = vec![0.0; hd];
        let mut out = Vec::new();
        for x in &cur {
            h = gru_cell(x, &h, &l.w_ih, &l.w_hh, &l.b_ih, &l.b_hh);
            out.push(h.clone());
        }
        cur = out;
    }
    cur.last().unwrap().clone()
}

/// One LSTM step, gate columns ordered input, forget, cell, output.
pub fn lstm_cell(
    x: &[f64],
    h: &[f64],
    c: &[f64],
    w_ih: &Mat,
    w_hh: &Mat,
    b_ih: &[f64],
    b_hh: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let hd = h.len();
    let gi = vecmat(x, w_ih);
    let gh = vecmat(h, w_hh);
    let a: Vec<f64> = (0..4 * hd).map(|j| gi[j] + gh[j] + b_ih[j] + b_hh[j]).collect();
    let mut hn = vec![0.0; hd];
    let mut cn = vec![0.0; hd];
    for j in 0..hd {
        let i = sigmoid(a[j]);
        let f = sigmoid(a[hd + j]);
        let g = a[2 * hd + j].tanh();
        let o = sigmoid(a[3 * hd + j]);
        cn[j] = f * c[j] + i * g;
        hn[j] = o * cn[j].tanh();
    }
    (hn, cn)
}

pub fn relu(m: &Mat) -> Mat {
    m.iter().map(|r| r.iter().map(|v| v.max(0.0)).collect()).collect()
}

/// Dense evaluation of the diffusion sum with explicit matrix powers,
/// followed by a ReLU.
pub fn diffusion(h: &Mat, p: &Mat, ws: &[Mat], p_rev: Option<&Mat>, w_rev: &[Mat]) -> Mat {
    relu(&diffusion_sum(h, p, ws, p_rev, w_rev))
}

pub fn activate(m: &Mat, act: Activation) -> Mat {
    let f = |v: f64| match act {
        Activation::Relu => v.max(0.0),
        Activation::Tanh => v.tanh(),
        Activation::Identity => v,
    };
    m.iter().map(|r| r.iter().map(|&v| f(v)).collect()).collect()
}

pub fn diffusion_sum(h: &Mat, p: &Mat, ws: &[Mat], p_rev: Option<&Mat>, w_rev: &[Mat]) -> Mat {
    let mut acc = zeros(h.len(), ws[0][0].len());
    for (s, w) in ws.iter().enumerate() {
        acc = add(&acc, &matmul(&matmul(&mat_pow(p, s), h), w));
    }
    if let Some(pr) = p_rev {
        for (s, w) in w_rev.iter().enumerate() {
            acc = add(&acc, &matmul(&matmul(&mat_pow(pr, s + 1), h), w));
        }
    }
    acc
}

pub fn row_normalize(a: &Mat) -> Mat {
    a.iter()
        .map(|r| {
            let s: f64 = r.iter().sum();
            r.iter().map(|v| if s == 0.0 { 0.0 } else { v / s }).collect()
        })
        .collect()
}

pub fn gcn_normalize(a: &Mat) -> Mat {
    let n = a.len();
    let m = add(a, &eye(n));
    let deg: Vec<f64> = m.iter().map(|r| r.iter().sum()).collect();
    (0..n)
        .map(|i| (0..n).map(|j| m[i][j] / (deg[i].sqrt() * deg[j].sqrt())).collect())
        .collect()
}

pub fn softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

/// Relaxed adjacency: per row, softmax over non-self entries of `(φ + g)/τ`.
pub fn soft_adjacency(phi: &Mat, noise: &Mat, tau: f64) -> Mat {
    let n = phi.len();
    (0..n)
        .map(|i| {
            let others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            let logits: Vec<f64> = others.iter().map(|&j| (phi[i][j] + noise[i][j]) / tau).collect();
            let p = softmax(&logits);
            let mut row = vec![0.0; n];
            for (k, &j) in others.iter().enumerate() {
                row[j] = p[k];
            }
            row
        })
        .collect()
}

pub fn layer_norm(x: &[f64], gain: &[f64], shift: &[f64], eps: f64) -> Vec<f64> {
    let d = x.len() as f64;
    let mean = x.iter().sum::<f64>() / d;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d;
    x.iter()
        .enumerate()
        .map(|(i, v)| (v - mean) / (var + eps).sqrt() * gain[i] + shift[i])
        .collect()
}

pub struct AttnWeights {
    pub wq: Mat,
    pub bq: Vec<f64>,
    pub wk: Mat,
    pub bk: Vec<f64>,
    pub wv: Mat,
    pub bv: Vec<f64>,
    pub gain: Vec<f64>,
    pub shift: Vec<f64>,
}

pub fn affine_rows(h: &Mat, w: &Mat, b: &[f64]) -> Mat {
    h.iter()
        .map(|r| vecmat(r, w).iter().zip(b).map(|(x, y)| x + y).collect())
        .collect()
}

/// `LN(H + softmax(Q Kᵀ/√d) V)` row by row.
pub fn attention(h: &Mat, a: &AttnWeights, eps: f64) -> Mat {
    let d = h[0].len() as f64;
    let q = affine_rows(h, &a.wq, &a.bq);
    let k = affine_rows(h, &a.wk, &a.bk);
    let v = affine_rows(h, &a.wv, &a.bv);
    h.iter()
        .enumerate()
        .map(|(i, hi)| {
            let logits: Vec<f64> = k
                .iter()
                .map(|kj| q[i].iter().zip(kj).map(|(x, y)| x * y).sum::<f64>() / d.sqrt())
                .collect();
            let w = softmax(&logits);
            let mut z = hi.clone();
            for (j, wj) in w.iter().enumerate() {
                for c in 0..z.len() {
                    z[c] += wj * v[j][c];
                }
            }
            layer_norm(&z, &a.gain, &a.shift, eps)
        })
        .collect()
}

/// Inclusion probability of every index in a size-`k` draw without
/// replacement from `probs`, by enumerating all ordered sequences.
pub fn inclusion_probabilities(probs: &[f64], k: usize) -> Vec<f64> {
    fn rec(probs: &[f64], k: usize, taken: &mut Vec<usize>, weight: f64, out: &mut [f64]) {
        if taken.len() == k {
            for &j in taken.iter() {
                out[j] += weight;
            }
            return;
        }
        let used: f64 = taken.iter().map(|&j| probs[j]).sum();
        for j in 0..probs.len() {
            if taken.contains(&j) || probs[j] == 0.0 {
                continue;
            }
            taken.push(j);
            rec(probs, k, taken, weight * probs[j] / (1.0 - used), out);
            taken.pop();
        }
    }
    let mut out = vec![0.0; probs.len()];
    rec(probs, k, &mut Vec::new(), 1.0, &mut out);
    out
}

pub fn mae(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

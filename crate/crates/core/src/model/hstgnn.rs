use ndarray::{Array2, Array3, Array4, ArrayView2, ArrayView3, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::encoder::{EncoderCache, RecurrentEncoder};
use super::{check_batch, check_graphs, Graphs, LearnedGraph, LossHead, Model, ModelKind};
use crate::data::{SensorNetworkSchema, SensorType, WindowBatch};
use crate::error::{Error, Result};
use crate::nn::{
    Activation, AttentionCache, DiffusionCache, DiffusionConv, GraphSample, Gradients, Init, Linear, ParamStore, SelfAttention,
    Tensor,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HstgnnConfig {
    /// Encoder width.
    pub d: usize,
    pub gru_layers: usize,
    /// GRU hidden width; also the width of every node after the spatial stage.
    pub d_h: usize,
    /// Neighbors per node, clamped to `N_m − 1` per branch.
    pub k: usize,
    pub diffusion_steps: usize,
    pub gnn_layers: usize,
    pub window: usize,
    pub bidirectional: bool,
    pub temperature: f64,
    /// Nonlinearity after each diffusion layer.
    pub diffusion_activation: Activation,
}

impl Default for HstgnnConfig {
    fn default() -> Self {
        Self {
            d: 16,
            gru_layers: 2,
            d_h: 16,
            k: 8,
            diffusion_steps: 2,
            gnn_layers: 1,
            window: 16,
            bidirectional: true,
            temperature: 0.5,
            diffusion_activation: Activation::Tanh,
        }
    }
}

impl HstgnnConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d", self.d),
            ("gru_layers", self.gru_layers),
            ("d_h", self.d_h),
            ("gnn_layers", self.gnn_layers),
            ("window", self.window),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be at least 1")));
            }
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::invalid(format!("temperature must be positive, got {}", self.temperature)));
        }
        Ok(())
    }
}

/// Attention over all nodes, flattening, and the linear decoder.
#[derive(Debug, Clone)]
struct FusionHead {
    attention: SelfAttention,
    decoder: Linear,
    nodes: usize,
    width: usize,
}

#[derive(Debug, Clone)]
struct FusionCache {
    attention: AttentionCache,
    flat: Array2<f64>,
}

impl FusionHead {
    fn new<R: Rng + ?Sized>(store: &mut ParamStore, nodes: usize, width: usize, d_out: usize, rng: &mut R) -> Self {
        Self {
            attention: SelfAttention::new(store, "attention", width, rng),
            decoder: Linear::new(store, "decoder", nodes * width, d_out, true, rng),
            nodes,
            width,
        }
    }

    fn num_params(nodes: usize, width: usize, d_out: usize) -> usize {
        SelfAttention::num_params(width) + Linear::num_params(nodes * width, d_out, true)
    }

    fn forward(&self, store: &ParamStore, h: ArrayView3<'_, f64>, keep: bool) -> (Array2<f64>, Option<FusionCache>) {
        let b = h.dim().0;
        let (fused, ac) = self.attention.forward(store, h, keep);
        let flat = fused.into_shape_with_order((b, self.nodes * self.width)).unwrap();
        let y = self.decoder.forward(store, flat.view());
        (y, ac.map(|attention| FusionCache { attention, flat }))
    }

    fn backward(&self, store: &ParamStore, cache: &FusionCache, dy: ArrayView2<'_, f64>, grads: &mut Gradients) -> Array3<f64> {
        let b = dy.nrows();
        let dflat = self.decoder.backward(store, cache.flat.view(), dy, grads);
        let dfused = dflat.into_shape_with_order((b, self.nodes, self.width)).unwrap();
        self.attention.backward(store, &cache.attention, dfused.view(), grads)
    }
}

/// One sensor-type branch: encoder with node embeddings, shared GRU,
/// learned graph and diffusion layers.
#[derive(Debug, Clone)]
pub struct Branch {
    pub kind: SensorType,
    pub nodes: usize,
    pub encoder: RecurrentEncoder,
    pub graph: LearnedGraph,
    pub gnn: Vec<DiffusionConv>,
}

#[derive(Debug, Clone)]
struct BranchCache {
    encoder: EncoderCache,
    gnn: Vec<DiffusionCache>,
}

impl Branch {
    fn new<R: Rng + ?Sized>(store: &mut ParamStore, kind: SensorType, nodes: usize, cfg: &HstgnnConfig, rng: &mut R) -> Self {
        let name = kind.name();
        let encoder = RecurrentEncoder::new(store, name, nodes, cfg.d, cfg.d_h, cfg.gru_layers, true, rng);
        let phi = store.insert(
            format!("{name}.phi"),
            Tensor::zeros(ndarray::IxDyn(&[nodes, nodes])),
            Init::Constant(0.0),
        );
        let gnn = (0..cfg.gnn_layers)
            .map(|l| {
                let mut c = DiffusionConv::new(
                    store,
                    &format!("{name}.diffusion{l}"),
                    cfg.d_h,
                    cfg.d_h,
                    cfg.diffusion_steps,
                    cfg.bidirectional,
                    rng,
                );
                c.activation = cfg.diffusion_activation;
                c
            })
            .collect();
        Self {
            kind,
            nodes,
            encoder,
            graph: LearnedGraph {
                phi,
                k: cfg.k.min(nodes - 1),
                temperature: cfg.temperature,
            },
            gnn,
        }
    }

    fn num_params(nodes: usize, cfg: &HstgnnConfig) -> usize {
        RecurrentEncoder::num_params(nodes, cfg.d, cfg.d_h, cfg.gru_layers, true)
            + nodes * nodes
            + cfg.gnn_layers * DiffusionConv::num_params(cfg.d_h, cfg.d_h, cfg.diffusion_steps, cfg.bidirectional)
    }

    fn forward(
        &self,
        store: &ParamStore,
        x: ArrayView3<'_, f64>,
        graph: &GraphSample,
        keep: bool,
    ) -> (Array3<f64>, Option<BranchCache>) {
        let (mut h, ec) = self.encoder.forward(store, x, keep);
        let mut caches = Vec::new();
        for conv in &self.gnn {
            let (next, c) = conv.forward(store, h.view(), graph.transition.view(), graph.reverse_transition.view(), keep);
            caches.extend(c);
            h = next;
        }
        (h, ec.map(|encoder| BranchCache { encoder, gnn: caches }))
    }

    fn backward(&self, store: &ParamStore, cache: &BranchCache, graph: &GraphSample, dy: Array3<f64>, grads: &mut Gradients) {
        let n = self.nodes;
        let mut dp = Array2::zeros((n, n));
        let mut dpr = Array2::zeros((n, n));
        let mut dh = dy;
        for (conv, c) in self.gnn.iter().zip(&cache.gnn).rev() {
            let (d, p, pr) = conv.backward(
                store,
                c,
                graph.transition.view(),
                graph.reverse_transition.view(),
                dh.view(),
                grads,
            );
            dp += &p;
            dpr += &pr;
            dh = d;
        }
        let da = graph.adjacency_grad(dp.view(), Some(dpr.view()));
        self.graph.accumulate(graph, da.view(), grads);
        self.encoder.backward(store, &cache.encoder, dh.view(), grads);
    }
}

/// Encoded inputs `z[b, i, t, :] = x[b, i, t]·w + b + e_i` of one branch.
pub fn encode_branch(x: ArrayView3<'_, f64>, branch: &Branch, store: &ParamStore) -> Result<Array4<f64>> {
    if x.dim().1 != branch.nodes {
        return Err(Error::shape(format!(
            "{} sensors given to a branch with {} embeddings",
            x.dim().1,
            branch.nodes
        )));
    }
    Ok(branch.encoder.encode(store, x))
}

/// Heterogeneous spatial-temporal graph network: one branch per sensor
/// type present in the schema, cross-type attention, linear decoder.
#[derive(Debug, Clone)]
pub struct Hstgnn {
    cfg: HstgnnConfig,
    schema: SensorNetworkSchema,
    store: ParamStore,
    branches: Vec<Branch>,
    head: FusionHead,
}

struct HstgnnCache {
    branches: Vec<BranchCache>,
    head: FusionCache,
}

impl Hstgnn {
    pub fn new<R: Rng + ?Sized>(schema: &SensorNetworkSchema, cfg: &HstgnnConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let mut store = ParamStore::new();
        let branches: Vec<Branch> = schema
            .present_types()
            .into_iter()
            .map(|kind| Branch::new(&mut store, kind, schema.n_of(kind), cfg, rng))
            .collect();
        let head = FusionHead::new(&mut store, schema.n_inputs(), cfg.d_h, schema.d_out(), rng);
        Ok(Self {
            cfg: cfg.clone(),
            schema: schema.clone(),
            store,
            branches,
            head,
        })
    }

    /// Closed-form parameter count for `schema` under `cfg`.
    pub fn num_params(schema: &SensorNetworkSchema, cfg: &HstgnnConfig) -> usize {
        schema
            .present_types()
            .into_iter()
            .map(|k| Branch::num_params(schema.n_of(k), cfg))
            .sum::<usize>()
            + FusionHead::num_params(schema.n_inputs(), cfg.d_h, schema.d_out())
    }

    pub fn config(&self) -> &HstgnnConfig {
        &self.cfg
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn branch(&self, kind: SensorType) -> Option<&Branch> {
        self.branches.iter().find(|b| b.kind == kind)
    }

    /// Spatial-stage output `[B × N_m × d_h]` of branch `idx`.
    pub fn branch_forward(&self, idx: usize, x: ArrayView3<'_, f64>, graph: &GraphSample) -> Result<Array3<f64>> {
        let branch = self
            .branches
            .get(idx)
            .ok_or_else(|| Error::invalid(format!("no branch {idx}")))?;
        if x.dim().1 != branch.nodes || x.dim().2 != self.cfg.window {
            return Err(Error::shape(format!(
                "branch {} expects [B × {} × {}], got {:?}",
                branch.kind.name(),
                branch.nodes,
                self.cfg.window,
                x.dim()
            )));
        }
        Ok(branch.forward(&self.store, x, graph, false).0)
    }

    /// Cross-type attention over the concatenated branch outputs, then decoding.
    pub fn fuse_and_decode(&self, outputs: &[Array3<f64>]) -> Result<Array2<f64>> {
        if outputs.len() != self.branches.len() {
            return Err(Error::shape(format!("{} branch outputs for {} branches", outputs.len(), self.branches.len())));
        }
        for (o, b) in outputs.iter().zip(&self.branches) {
            if o.dim().1 != b.nodes || o.dim().2 != self.cfg.d_h {
                return Err(Error::shape(format!(
                    "branch {} output {:?}, expected [B × {} × {}]",
                    b.kind.name(),
                    o.dim(),
                    b.nodes,
                    self.cfg.d_h
                )));
            }
        }
        let views: Vec<_> = outputs.iter().map(|o| o.view()).collect();
        let h = ndarray::concatenate(Axis(1), &views).map_err(|e| Error::shape(e.to_string()))?;
        Ok(self.head.forward(&self.store, h.view(), false).0)
    }

    fn run(&self, batch: &WindowBatch, graphs: &Graphs, keep: bool) -> Result<(Array2<f64>, Option<HstgnnCache>)> {
        check_batch(&self.schema, self.cfg.window, batch)?;
        check_graphs(graphs, self.branches.len())?;
        let mut outs = Vec::with_capacity(self.branches.len());
        let mut caches = Vec::new();
        for (branch, graph) in self.branches.iter().zip(graphs) {
            let (h, c) = branch.forward(&self.store, batch.x(branch.kind), graph, keep);
            outs.push(h);
            caches.extend(c);
        }
        let views: Vec<_> = outs.iter().map(|o| o.view()).collect();
        let h = ndarray::concatenate(Axis(1), &views).map_err(|e| Error::shape(e.to_string()))?;
        let (y, hc) = self.head.forward(&self.store, h.view(), keep);
        Ok((y, hc.map(|head| HstgnnCache { branches: caches, head })))
    }
}

impl Model for Hstgnn {
    fn kind(&self) -> ModelKind {
        ModelKind::Hstgnn
    }

    fn store(&self) -> &ParamStore {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn schema(&self) -> &SensorNetworkSchema {
        &self.schema
    }

    fn window(&self) -> usize {
        self.cfg.window
    }

    fn learned_graphs(&self) -> Vec<LearnedGraph> {
        self.branches.iter().map(|b| b.graph).collect()
    }

    fn forward(&self, batch: &WindowBatch, graphs: &Graphs) -> Result<Array2<f64>> {
        Ok(self.run(batch, graphs, false)?.0)
    }

    fn forward_backward(&self, batch: &WindowBatch, graphs: &Graphs, head: &LossHead<'_>, grads: &mut Gradients) -> Result<f64> {
        let (y, cache) = self.run(batch, graphs, true)?;
        let cache = cache.expect("kept");
        let (loss, dy) = head(y.view());
        let dh = self.head.backward(&self.store, &cache.head, dy.view(), grads);
        let mut offset = 0;
        for ((branch, bc), graph) in self.branches.iter().zip(&cache.branches).zip(graphs) {
            let part = dh.slice(ndarray::s![.., offset..offset + branch.nodes, ..]).to_owned();
            branch.backward(&self.store, bc, graph, part, grads);
            offset += branch.nodes;
        }
        Ok(loss)
    }
}

/// Homogeneous ablation: one affine encoder and one GRU shared by every
/// sensor, no embeddings, no learned graphs, same attention and decoder.
#[derive(Debug, Clone)]
pub struct Simplified {
    cfg: HstgnnConfig,
    schema: SensorNetworkSchema,
    store: ParamStore,
    encoder: RecurrentEncoder,
    head: FusionHead,
}

impl Simplified {
    pub fn new<R: Rng + ?Sized>(schema: &SensorNetworkSchema, cfg: &HstgnnConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let mut store = ParamStore::new();
        let n = schema.n_inputs();
        let encoder = RecurrentEncoder::new(&mut store, "shared", n, cfg.d, cfg.d_h, cfg.gru_layers, false, rng);
        let head = FusionHead::new(&mut store, n, cfg.d_h, schema.d_out(), rng);
        Ok(Self {
            cfg: cfg.clone(),
            schema: schema.clone(),
            store,
            encoder,
            head,
        })
    }

    pub fn num_params(schema: &SensorNetworkSchema, cfg: &HstgnnConfig) -> usize {
        let n = schema.n_inputs();
        RecurrentEncoder::num_params(n, cfg.d, cfg.d_h, cfg.gru_layers, false)
            + FusionHead::num_params(n, cfg.d_h, schema.d_out())
    }
}

impl Model for Simplified {
    fn kind(&self) -> ModelKind {
        ModelKind::Simplified
    }

    fn store(&self) -> &ParamStore {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn schema(&self) -> &SensorNetworkSchema {
        &self.schema
    }

    fn window(&self) -> usize {
        self.cfg.window
    }

    fn learned_graphs(&self) -> Vec<LearnedGraph> {
        Vec::new()
    }

    fn forward(&self, batch: &WindowBatch, graphs: &Graphs) -> Result<Array2<f64>> {
        check_batch(&self.schema, self.cfg.window, batch)?;
        check_graphs(graphs, 0)?;
        let x = batch.x_all();
        let (h, _) = self.encoder.forward(&self.store, x.view(), false);
        Ok(self.head.forward(&self.store, h.view(), false).0)
    }

    fn forward_backward(&self, batch: &WindowBatch, graphs: &Graphs, head: &LossHead<'_>, grads: &mut Gradients) -> Result<f64> {
        check_batch(&self.schema, self.cfg.window, batch)?;
        check_graphs(graphs, 0)?;
        let x = batch.x_all();
        let (h, ec) = self.encoder.forward(&self.store, x.view(), true);
        let (y, hc) = self.head.forward(&self.store, h.view(), true);
        let (loss, dy) = head(y.view());
        let dh = self.head.backward(&self.store, hc.as_ref().unwrap(), dy.view(), grads);
        self.encoder.backward(&self.store, ec.as_ref().unwrap(), dh.view(), grads);
        Ok(loss)
    }
}

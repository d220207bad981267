use ndarray::{Array2, Array3, ArrayView3, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::encoder::RecurrentEncoder;
use super::{check_batch, check_graphs, Graphs, LearnedGraph, LossHead, Model, ModelKind};
use crate::data::{SensorNetworkSchema, WindowBatch};
use crate::error::{Error, Result};
use crate::nn::{
    gcn_normalize, gcn_normalize_backward, Conv1d, DiffusionCache, DiffusionConv, GraphConv, GraphConvCache, GraphSample,
    Gradients, Init, Linear, Lstm, ParamId, ParamStore, Tensor,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    pub lstm_hidden: usize,
    pub lstm_layers: usize,
    pub cnn_filters: usize,
    pub cnn_kernel: usize,
    /// Node feature width of the graph baselines.
    pub node_dim: usize,
    /// Neighbors per node, clamped to `N − 1`.
    pub k: usize,
    pub diffusion_steps: usize,
    pub bidirectional: bool,
    pub gru_hidden: usize,
    pub gru_layers: usize,
    pub temperature: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            lstm_hidden: 256,
            lstm_layers: 2,
            cnn_filters: 64,
            cnn_kernel: 3,
            node_dim: 16,
            k: 8,
            diffusion_steps: 2,
            bidirectional: true,
            gru_hidden: 16,
            gru_layers: 2,
            temperature: 0.5,
        }
    }
}

impl BaselineConfig {
    fn validate(&self, window: usize) -> Result<()> {
        for (name, v) in [
            ("lstm_hidden", self.lstm_hidden),
            ("lstm_layers", self.lstm_layers),
            ("cnn_filters", self.cnn_filters),
            ("cnn_kernel", self.cnn_kernel),
            ("node_dim", self.node_dim),
            ("gru_hidden", self.gru_hidden),
            ("gru_layers", self.gru_layers),
            ("window", window),
        ] {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be at least 1")));
            }
        }
        if !(self.temperature > 0.0) {
            return Err(Error::invalid("temperature must be positive"));
        }
        Ok(())
    }
}

macro_rules! model_accessors {
    ($self:ident, $kind:expr) => {
        fn kind(&$self) -> ModelKind {
            $kind
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
            self.window
        }
    };
}

/// `[B × N × T]` to time-major `[T × B × N]`.
fn time_major(x: ArrayView3<'_, f64>) -> Array3<f64> {
    x.permuted_axes([2, 0, 1]).as_standard_layout().into_owned()
}

/// Stacked LSTM over all sensors as one feature vector per step.
#[derive(Debug, Clone)]
pub struct LstmModel {
    schema: SensorNetworkSchema,
    window: usize,
    store: ParamStore,
    lstm: Lstm,
    decoder: Linear,
}

impl LstmModel {
    pub fn new<R: Rng + ?Sized>(schema: &SensorNetworkSchema, cfg: &BaselineConfig, window: usize, rng: &mut R) -> Result<Self> {
        cfg.validate(window)?;
        let mut store = ParamStore::new();
        let lstm = Lstm::new(&mut store, "lstm", schema.n_inputs(), cfg.lstm_hidden, cfg.lstm_layers, rng);
        let decoder = Linear::new(&mut store, "decoder", cfg.lstm_hidden, schema.d_out(), true, rng);
        Ok(Self {
            schema: schema.clone(),
            window,
            store,
            lstm,
            decoder,
        })
    }

    pub fn num_params(schema: &SensorNetworkSchema, cfg: &BaselineConfig) -> usize {
        Lstm::num_params(schema.n_inputs(), cfg.lstm_hidden, cfg.lstm_layers)
            + Linear::num_params(cfg.lstm_hidden, schema.d_out(), true)
    }
}

impl Model for LstmModel {
    model_accessors!(self, ModelKind::Lstm);

    fn learned_graphs(&self) -> Vec<LearnedGraph> {
        Vec::new()
    }

    fn forward(&self, batch: &WindowBatch, graphs: &Graphs) -> Result<Array2<f64>> {
        check_batch(&self.schema, self.window, batch)?;
        check_graphs(graphs, 0)?;
        let x = time_major(batch.x_all().view());
        let (h, _) = self.lstm.forward(&self.store, x.view(), false);
        Ok(self.decoder.forward(&self.store, h.view()))
    }

    fn forward_backward(&self, batch: &WindowBatch, graphs: &Graphs, head: &LossHead<'_>, grads: &mut Gradients) -> Result<f64> {
        check_batch(&self.schema, self.window, batch)?;
        check_graphs(graphs, 0)?;
        let x = time_major(batch.x_all().view());
        let (h, cache) = self.lstm.forward(&self.store, x.view(), true);
        let y = self.decoder.forward(&self.store, h.view());
        let (loss, dy) = head(y.view());
        let dh = self.decoder.backward(&self.store, h.view(), dy.view(), grads);
        self.lstm.backward(&self.store, cache.as_ref().unwrap(), dh.view(), grads);
        Ok(loss)
    }
}

/// One temporal convolution over all sensors as channels, ReLU, global
/// average pooling over time, linear decoder.
#[derive(Debug, Clone)]
pub struct Cnn1dModel {
    schema: SensorNetworkSchema,
    window: usize,
    store: ParamStore,
    conv: Conv1d,
    decoder: Linear,
}

impl Cnn1dModel {
    pub fn new<R: Rng + ?Sized>(schema: &SensorNetworkSchema, cfg: &BaselineConfig, window: usize, rng: &mut R) -> Result<Self> {
        cfg.validate(window)?;
        if window < cfg.cnn_kernel {
            return Err(Error::invalid(format!("window {window} shorter than kernel {}", cfg.cnn_kernel)));
        }
        let mut store = ParamStore::new();
        let conv = Conv1d::new(&mut store, "conv", schema.n_inputs(), cfg.cnn_filters, cfg.cnn_kernel, rng);
        let decoder = Linear::new(&mut store, "decoder", cfg.cnn_filters, schema.d_out(), true, rng);
        Ok(Self {
            schema: schema.clone(),
            window,
            store,
            conv,
            decoder,
        })
    }

    pub fn num_params(schema: &SensorNetworkSchema, cfg: &BaselineConfig) -> usize {
        Conv1d::num_params(schema.n_inputs(), cfg.cnn_filters, cfg.cnn_kernel)
            + Linear::num_params(cfg.cnn_filters, schema.d_out(), true)
    }

    fn pool(&self, act: &Array2<f64>, b: usize) -> Array2<f64> {
        let l = act.nrows() / b;
        act.view()
            .into_shape_with_order((b, l, self.conv.filters))
            .unwrap()
            .mean_axis(Axis(1))
            .unwrap()
    }
}

impl Model for Cnn1dModel {
    model_accessors!(self, ModelKind::Cnn1d);

    fn learned_graphs(&self) -> Vec<LearnedGraph> {
        Vec::new()
    }

    fn forward(&self, batch: &WindowBatch, graphs: &Graphs) -> Result<Array2<f64>> {
        check_batch(&self.schema, self.window, batch)?;
        check_graphs(graphs, 0)?;
        let x = batch.x_all();
        let (pre, _) = self.conv.forward(&self.store, x.view(), false);
        let act = pre.mapv(|v| v.max(0.0));
        let pooled = self.pool(&act, batch.len());
        Ok(self.decoder.forward(&self.store, pooled.view()))
    }

    fn forward_backward(&self, batch: &WindowBatch, graphs: &Graphs, head: &LossHead<'_>, grads: &mut Gradients) -> Result<f64> {
        check_batch(&self.schema, self.window, batch)?;
        check_graphs(graphs, 0)?;
        let b = batch.len();
        let x = batch.x_all();
        let (pre, cache) = self.conv.forward(&self.store, x.view(), true);
        let act = pre.mapv(|v| v.max(0.0));
        let pooled = self.pool(&act, b);
        let y = self.decoder.forward(&self.store, pooled.view());
        let (loss, dy) = head(y.view());
        let dpooled = self.decoder.backward(&self.store, pooled.view(), dy.view(), grads);
        let l = pre.nrows() / b;
        let mut dpre = Array2::zeros(pre.raw_dim());
        for (r, (mut row, prow)) in dpre.rows_mut().into_iter().zip(pre.rows()).enumerate() {
            let src = dpooled.row(r / l);
            for ((d, &g), &p) in row.iter_mut().zip(src.iter()).zip(prow.iter()) {
                if p > 0.0 {
                    *d = g / l as f64;
                }
            }
        }
        self.conv.backward_params(cache.as_ref().unwrap(), dpre.view(), grads);
        Ok(loss)
    }
}

/// Spatial operator over a single learned graph spanning all sensors.
#[derive(Debug, Clone)]
enum GraphLayer {
    Gcn(GraphConv),
    Diffusion(DiffusionConv),
}

#[derive(Debug, Clone)]
enum GraphLayerCache {
    Gcn(GraphConvCache, Array2<f64>),
    Diffusion(DiffusionCache),
}

impl GraphLayer {
    fn new<R: Rng + ?Sized>(store: &mut ParamStore, diffusion: bool, dim: usize, cfg: &BaselineConfig, rng: &mut R) -> Self {
        if diffusion {
            GraphLayer::Diffusion(DiffusionConv::new(
                store,
                "diffusion",
                dim,
                dim,
                cfg.diffusion_steps,
                cfg.bidirectional,
                rng,
            ))
        } else {
            GraphLayer::Gcn(GraphConv::new(store, "gcn", dim, dim, rng))
        }
    }

    fn num_params(diffusion: bool, dim: usize, cfg: &BaselineConfig) -> usize {
        if diffusion {
            DiffusionConv::num_params(dim, dim, cfg.diffusion_steps, cfg.bidirectional)
        } else {
            GraphConv::num_params(dim, dim)
        }
    }

    fn forward(
        &self,
        store: &ParamStore,
        h: ArrayView3<'_, f64>,
        g: &GraphSample,
        keep: bool,
    ) -> (Array3<f64>, Option<GraphLayerCache>) {
        match self {
            GraphLayer::Gcn(conv) => {
                let a_hat = gcn_normalize(g.adjacency.view());
                let (y, c) = conv.forward(store, h, a_hat.view(), keep);
                (y, c.map(|c| GraphLayerCache::Gcn(c, a_hat)))
            }
            GraphLayer::Diffusion(conv) => {
                let (y, c) = conv.forward(store, h, g.transition.view(), g.reverse_transition.view(), keep);
                (y, c.map(GraphLayerCache::Diffusion))
            }
        }
    }

    /// Returns `(dH, dA)`.
    fn backward(
        &self,
        store: &ParamStore,
        cache: &GraphLayerCache,
        g: &GraphSample,
        dy: ArrayView3<'_, f64>,
        grads: &mut Gradients,
    ) -> (Array3<f64>, Array2<f64>) {
        match (self, cache) {
            (GraphLayer::Gcn(conv), GraphLayerCache::Gcn(c, a_hat)) => {
                let (dh, da_hat) = conv.backward(store, c, a_hat.view(), dy, grads);
                (dh, gcn_normalize_backward(g.adjacency.view(), da_hat.view()))
            }
            (GraphLayer::Diffusion(conv), GraphLayerCache::Diffusion(c)) => {
                let (dh, dp, dpr) = conv.backward(store, c, g.transition.view(), g.reverse_transition.view(), dy, grads);
                (dh, g.adjacency_grad(dp.view(), Some(dpr.view())))
            }
            _ => unreachable!("cache matches layer"),
        }
    }
}

fn new_graph(store: &mut ParamStore, n: usize, cfg: &BaselineConfig) -> LearnedGraph {
    let phi = store.insert("graph.phi", Tensor::zeros(ndarray::IxDyn(&[n, n])), Init::Constant(0.0));
    LearnedGraph {
        phi,
        k: cfg.k.min(n - 1),
        temperature: cfg.temperature,
    }
}

/// Per-node linear projection of the window plus node embeddings, one
/// graph layer (GCN or diffusion), flattened linear decoder.
#[derive(Debug, Clone)]
pub struct GcnModel {
    kind: ModelKind,
    schema: SensorNetworkSchema,
    window: usize,
    store: ParamStore,
    node_encoder: Linear,
    embedding: ParamId,
    graph: LearnedGraph,
    layer: GraphLayer,
    decoder: Linear,
    dim: usize,
}

impl GcnModel {
    pub fn new<R: Rng + ?Sized>(
        schema: &SensorNetworkSchema,
        cfg: &BaselineConfig,
        window: usize,
        diffusion: bool,
        rng: &mut R,
    ) -> Result<Self> {
        cfg.validate(window)?;
        let n = schema.n_inputs();
        let dim = cfg.node_dim;
        let mut store = ParamStore::new();
        let node_encoder = Linear::new(&mut store, "node_encoder", window, dim, true, rng);
        let embedding = store.add("embedding", &[n, dim], Init::Normal { std: 0.01 }, rng);
        let graph = new_graph(&mut store, n, cfg);
        let layer = GraphLayer::new(&mut store, diffusion, dim, cfg, rng);
        let decoder = Linear::new(&mut store, "decoder", n * dim, schema.d_out(), true, rng);
        Ok(Self {
            kind: if diffusion { ModelKind::Dgc } else { ModelKind::Gcn },
            schema: schema.clone(),
            window,
            store,
            node_encoder,
            embedding,
            graph,
            layer,
            decoder,
            dim,
        })
    }

    pub fn num_params(schema: &SensorNetworkSchema, cfg: &BaselineConfig, window: usize, diffusion: bool) -> usize {
        let n = schema.n_inputs();
        let dim = cfg.node_dim;
        Linear::num_params(window, dim, true)
            + n * dim
            + n * n
            + GraphLayer::num_params(diffusion, dim, cfg)
            + Linear::num_params(n * dim, schema.d_out(), true)
    }

    fn encode(&self, x: &Array3<f64>) -> (Array2<f64>, Array3<f64>) {
        let (b, n, t) = x.dim();
        let xf = x.as_standard_layout().into_owned().into_shape_with_order((b * n, t)).unwrap();
        let h = self.node_encoder.forward(&self.store, xf.view());
        let mut h = h.as_standard_layout().into_owned().into_shape_with_order((b, n, self.dim)).unwrap();
        h += &self.store.mat(self.embedding);
        (xf, h)
    }

    fn run(&self, batch: &WindowBatch, graphs: &Graphs) -> Result<Array3<f64>> {
        check_batch(&self.schema, self.window, batch)?;
        check_graphs(graphs, 1)?;
        Ok(batch.x_all())
    }
}

impl Model for GcnModel {
    model_accessors!(self, self.kind);

    fn learned_graphs(&self) -> Vec<LearnedGraph> {
        vec![self.graph]
    }

    fn forward(&self, batch: &WindowBatch, graphs: &Graphs) -> Result<Array2<f64>> {
        let x = self.run(batch, graphs)?;
        let (_, h) = self.encode(&x);
        let (g, _) = self.layer.forward(&self.store, h.view(), &graphs[0], false);
        let b = batch.len();
        let flat = g.as_standard_layout().into_owned().into_shape_with_order((b, self.schema.n_inputs() * self.dim)).unwrap();
        Ok(self.decoder.forward(&self.store, flat.view()))
    }

    fn forward_backward(&self, batch: &WindowBatch, graphs: &Graphs, head: &LossHead<'_>, grads: &mut Gradients) -> Result<f64> {
        let x = self.run(batch, graphs)?;
        let (xf, h) = self.encode(&x);
        let (g, cache) = self.layer.forward(&self.store, h.view(), &graphs[0], true);
        let (b, n) = (batch.len(), self.schema.n_inputs());
        let flat = g.as_standard_layout().into_owned().into_shape_with_order((b, n * self.dim)).unwrap();
        let y = self.decoder.forward(&self.store, flat.view());
        let (loss, dy) = head(y.view());
        let dflat = self.decoder.backward(&self.store, flat.view(), dy.view(), grads);
        let dg = dflat.as_standard_layout().into_owned().into_shape_with_order((b, n, self.dim)).unwrap();
        let (dh, da) = self.layer.backward(&self.store, cache.as_ref().unwrap(), &graphs[0], dg.view(), grads);
        self.graph.accumulate(&graphs[0], da.view(), grads);
        grads.mat_mut(self.embedding).scaled_add(1.0, &dh.sum_axis(Axis(0)));
        let dhf = dh.as_standard_layout().into_owned().into_shape_with_order((b * n, self.dim)).unwrap();
        self.node_encoder.backward_params(xf.view(), dhf.view(), grads);
        Ok(loss)
    }
}

/// Homogeneous time-then-graph model: shared encoder with node embeddings,
/// one GRU for all sensors, GCN over one learned graph, linear decoder.
#[derive(Debug, Clone)]
pub struct GruGcnModel {
    schema: SensorNetworkSchema,
    window: usize,
    store: ParamStore,
    encoder: RecurrentEncoder,
    graph: LearnedGraph,
    gcn: GraphConv,
    decoder: Linear,
    dim: usize,
}

impl GruGcnModel {
    pub fn new<R: Rng + ?Sized>(schema: &SensorNetworkSchema, cfg: &BaselineConfig, window: usize, rng: &mut R) -> Result<Self> {
        cfg.validate(window)?;
        let n = schema.n_inputs();
        let mut store = ParamStore::new();
        let encoder = RecurrentEncoder::new(&mut store, "shared", n, cfg.node_dim, cfg.gru_hidden, cfg.gru_layers, true, rng);
        let graph = new_graph(&mut store, n, cfg);
        let gcn = GraphConv::new(&mut store, "gcn", cfg.gru_hidden, cfg.gru_hidden, rng);
        let decoder = Linear::new(&mut store, "decoder", n * cfg.gru_hidden, schema.d_out(), true, rng);
        Ok(Self {
            schema: schema.clone(),
            window,
            store,
            encoder,
            graph,
            gcn,
            decoder,
            dim: cfg.gru_hidden,
        })
    }

    pub fn num_params(schema: &SensorNetworkSchema, cfg: &BaselineConfig) -> usize {
        let n = schema.n_inputs();
        RecurrentEncoder::num_params(n, cfg.node_dim, cfg.gru_hidden, cfg.gru_layers, true)
            + n * n
            + GraphConv::num_params(cfg.gru_hidden, cfg.gru_hidden)
            + Linear::num_params(n * cfg.gru_hidden, schema.d_out(), true)
    }
}

impl Model for GruGcnModel {
    model_accessors!(self, ModelKind::GruGcn);

    fn learned_graphs(&self) -> Vec<LearnedGraph> {
        vec![self.graph]
    }

    fn forward(&self, batch: &WindowBatch, graphs: &Graphs) -> Result<Array2<f64>> {
        check_batch(&self.schema, self.window, batch)?;
        check_graphs(graphs, 1)?;
        let x = batch.x_all();
        let (h, _) = self.encoder.forward(&self.store, x.view(), false);
        let a_hat = gcn_normalize(graphs[0].adjacency.view());
        let (g, _) = self.gcn.forward(&self.store, h.view(), a_hat.view(), false);
        let flat = g.as_standard_layout().into_owned().into_shape_with_order((batch.len(), self.schema.n_inputs() * self.dim)).unwrap();
        Ok(self.decoder.forward(&self.store, flat.view()))
    }

    fn forward_backward(&self, batch: &WindowBatch, graphs: &Graphs, head: &LossHead<'_>, grads: &mut Gradients) -> Result<f64> {
        check_batch(&self.schema, self.window, batch)?;
        check_graphs(graphs, 1)?;
        let (b, n) = (batch.len(), self.schema.n_inputs());
        let x = batch.x_all();
        let (h, ec) = self.encoder.forward(&self.store, x.view(), true);
        let a_hat = gcn_normalize(graphs[0].adjacency.view());
        let (g, gc) = self.gcn.forward(&self.store, h.view(), a_hat.view(), true);
        let flat = g.as_standard_layout().into_owned().into_shape_with_order((b, n * self.dim)).unwrap();
        let y = self.decoder.forward(&self.store, flat.view());
        let (loss, dy) = head(y.view());
        let dflat = self.decoder.backward(&self.store, flat.view(), dy.view(), grads);
        let dg = dflat.as_standard_layout().into_owned().into_shape_with_order((b, n, self.dim)).unwrap();
        let (dh, da_hat) = self.gcn.backward(&self.store, gc.as_ref().unwrap(), a_hat.view(), dg.view(), grads);
        let da = gcn_normalize_backward(graphs[0].adjacency.view(), da_hat.view());
        self.graph.accumulate(&graphs[0], da.view(), grads);
        self.encoder.backward(&self.store, ec.as_ref().unwrap(), dh.view(), grads);
        Ok(loss)
    }
}

//! Forecasting models sharing one training and evaluation interface.

mod baselines;
mod encoder;
mod hstgnn;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use baselines::{BaselineConfig, Cnn1dModel, GcnModel, GruGcnModel, LstmModel};
pub use encoder::{EncoderCache, RecurrentEncoder};
pub use hstgnn::{encode_branch, Branch, Hstgnn, HstgnnConfig, Simplified};

use crate::data::{SensorNetworkSchema, WindowBatch};
use crate::error::{Error, Result};
use crate::nn::{GraphSample, Gradients, ParamId, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Hstgnn,
    Lstm,
    Cnn1d,
    Gcn,
    Dgc,
    GruGcn,
    Simplified,
}

impl ModelKind {
    pub const ALL: [ModelKind; 7] = [
        ModelKind::Hstgnn,
        ModelKind::Lstm,
        ModelKind::Cnn1d,
        ModelKind::Gcn,
        ModelKind::Dgc,
        ModelKind::GruGcn,
        ModelKind::Simplified,
    ];

    /// The five comparison models.
    pub const BASELINES: [ModelKind; 5] = [
        ModelKind::Lstm,
        ModelKind::Cnn1d,
        ModelKind::Gcn,
        ModelKind::Dgc,
        ModelKind::GruGcn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Hstgnn => "hstgnn",
            ModelKind::Lstm => "lstm",
            ModelKind::Cnn1d => "cnn1d",
            ModelKind::Gcn => "gcn",
            ModelKind::Dgc => "dgc",
            ModelKind::GruGcn => "gru-gcn",
            ModelKind::Simplified => "simplified",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == t || k.name().replace('-', "") == t.replace(['-', '_'], ""))
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown model '{s}', expected one of: {}",
                    ModelKind::ALL.map(|k| k.name()).join(", ")
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Stochastic graph sampling.
    Train,
    /// Deterministic graphs.
    Infer,
}

/// One sampled graph per learned score matrix of a model.
pub type Graphs = Vec<GraphSample>;

/// Loss head: maps predictions `[B × D]` to `(loss, dloss/dpredictions)`.
pub type LossHead<'a> = dyn Fn(ArrayView2<'_, f64>) -> (f64, Array2<f64>) + Sync + 'a;

pub trait Model: Send + Sync + fmt::Debug {
    fn kind(&self) -> ModelKind;
    fn store(&self) -> &ParamStore;
    fn store_mut(&mut self) -> &mut ParamStore;
    /// Input/target schema the model was built for.
    fn schema(&self) -> &SensorNetworkSchema;
    fn window(&self) -> usize;
    /// Learned score matrices with their neighbor counts.
    fn learned_graphs(&self) -> Vec<LearnedGraph>;
    /// Predictions `[B × D]` in standardized target units.
    fn forward(&self, batch: &WindowBatch, graphs: &Graphs) -> Result<Array2<f64>>;
    /// Forward pass, loss head, and backward pass; adds parameter gradients
    /// into `grads` and returns the head's loss.
    fn forward_backward(&self, batch: &WindowBatch, graphs: &Graphs, head: &LossHead<'_>, grads: &mut Gradients)
        -> Result<f64>;

    /// One graph per learned score matrix; noisy in [`Mode::Train`].
    fn draw_graphs(&self, mode: Mode, rng: &mut dyn RngCore) -> Result<Graphs> {
        self.learned_graphs()
            .iter()
            .map(|g| g.draw(self.store(), mode, rng))
            .collect()
    }

    /// Deterministic inference on a batch.
    fn predict(&self, batch: &WindowBatch) -> Result<Array2<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let graphs = self.draw_graphs(Mode::Infer, &mut rng)?;
        self.forward(batch, &graphs)
    }
}

/// Score matrix `Φ` of one learned graph.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnedGraph {
    pub phi: ParamId,
    pub k: usize,
    pub temperature: f64,
}

impl LearnedGraph {
    pub fn draw(&self, store: &ParamStore, mode: Mode, rng: &mut dyn RngCore) -> Result<GraphSample> {
        let phi = store.mat(self.phi);
        match mode {
            Mode::Train => GraphSample::sample(phi, self.k, self.temperature, rng),
            Mode::Infer => GraphSample::deterministic(phi, self.k, self.temperature),
        }
    }

    /// Adds the straight-through gradient of `Φ` given `dL/dA`.
    pub fn accumulate(&self, sample: &GraphSample, d_adjacency: ArrayView2<'_, f64>, grads: &mut Gradients) {
        let dphi = sample.backward(d_adjacency);
        grads.mat_mut(self.phi).scaled_add(1.0, &dphi);
    }
}

/// Hyperparameters for every model kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct ModelConfig {
    pub hstgnn: HstgnnConfig,
    pub baseline: BaselineConfig,
}

impl ModelConfig {
    pub fn window(&self) -> usize {
        self.hstgnn.window
    }
}

/// Builds a freshly initialized model; initialization draws from `seed`.
pub fn build_model(kind: ModelKind, schema: &SensorNetworkSchema, cfg: &ModelConfig, seed: u64) -> Result<Box<dyn Model>> {
    if schema.n_inputs() == 0 || schema.d_out() == 0 {
        return Err(Error::invalid("schema needs at least one input and one target"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let window = cfg.window();
    Ok(match kind {
        ModelKind::Hstgnn => Box::new(Hstgnn::new(schema, &cfg.hstgnn, &mut rng)?),
        ModelKind::Simplified => Box::new(Simplified::new(schema, &cfg.hstgnn, &mut rng)?),
        ModelKind::Lstm => Box::new(LstmModel::new(schema, &cfg.baseline, window, &mut rng)?),
        ModelKind::Cnn1d => Box::new(Cnn1dModel::new(schema, &cfg.baseline, window, &mut rng)?),
        ModelKind::Gcn => Box::new(GcnModel::new(schema, &cfg.baseline, window, false, &mut rng)?),
        ModelKind::Dgc => Box::new(GcnModel::new(schema, &cfg.baseline, window, true, &mut rng)?),
        ModelKind::GruGcn => Box::new(GruGcnModel::new(schema, &cfg.baseline, window, &mut rng)?),
    })
}

pub(crate) fn check_batch(schema: &SensorNetworkSchema, window: usize, batch: &WindowBatch) -> Result<()> {
    use crate::data::SensorType;
    for kind in SensorType::BRANCH_ORDER {
        let x = batch.x(kind);
        if x.dim().1 != schema.n_of(kind) {
            return Err(Error::shape(format!(
                "batch has {} {} sensors, model expects {}",
                x.dim().1,
                kind.name(),
                schema.n_of(kind)
            )));
        }
    }
    if batch.window() != window {
        return Err(Error::shape(format!("batch window {} != model window {window}", batch.window())));
    }
    if batch.y.ncols() != schema.d_out() {
        return Err(Error::shape(format!("batch has {} targets, model expects {}", batch.y.ncols(), schema.d_out())));
    }
    Ok(())
}

pub(crate) fn check_graphs(graphs: &Graphs, expected: usize) -> Result<()> {
    if graphs.len() != expected {
        return Err(Error::invalid(format!("{} graphs supplied, model learns {expected}", graphs.len())));
    }
    Ok(())
}

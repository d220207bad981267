use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::metrics::mae_part;
use super::optim::{Adam, AdamConfig};
use crate::data::{window_ends, LosoSplit, Standardizer, TimeSeriesDataset, WindowBatch, WindowRef};
use crate::error::{Error, Result};
use crate::model::{build_model, Graphs, Mode, Model, ModelConfig, ModelKind};
use crate::nn::Gradients;
use crate::parallel::{map_range, ExecPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    #[default]
    Mae,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping; `0` disables
    /// early stopping and keeps the last epoch's parameters.
    pub patience: usize,
    /// Temporal tail of every training dataset held out for validation.
    pub val_fraction: f64,
    pub seeds: Vec<u64>,
    /// Stride between training windows.
    pub stride: usize,
    /// Stride between validation windows.
    pub val_stride: usize,
    /// Optimizer steps per epoch are capped here when set; each epoch then
    /// sees a fresh shuffled prefix of the training windows.
    pub max_steps_per_epoch: Option<usize>,
    /// Windows per gradient work item inside a batch.
    pub chunk_size: usize,
    /// Spread chunks over the rayon pool (needs the `parallel` feature).
    pub parallel: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            loss: LossKind::Mae,
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            batch_size: 512,
            max_epochs: 100,
            patience: 10,
            val_fraction: 0.1,
            seeds: vec![0, 1, 2],
            stride: 1,
            val_stride: 1,
            max_steps_per_epoch: None,
            chunk_size: 32,
            parallel: true,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    pub fn policy(&self) -> ExecPolicy {
        if self.parallel {
            ExecPolicy::Parallel
        } else {
            ExecPolicy::Sequential
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.adam().validate()?;
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("max_epochs", self.max_epochs),
            ("stride", self.stride),
            ("val_stride", self.val_stride),
            ("chunk_size", self.chunk_size),
        ] {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be at least 1")));
            }
        }
        if self.max_steps_per_epoch == Some(0) {
            return Err(Error::invalid("max_steps_per_epoch must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::invalid(format!("val_fraction {} outside [0, 1)", self.val_fraction)));
        }
        if self.seeds.is_empty() {
            return Err(Error::invalid("at least one seed is required"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-window training MAE over the epoch (standardized units).
    pub train_loss: f64,
    /// Validation MAE (standardized units); `NaN` without validation data.
    pub val_loss: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
    pub optimizer_steps: usize,
    pub stopped_early: bool,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub history: TrainHistory,
}

/// Standardized training and validation parts of the training datasets.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub standardizer: Standardizer,
    pub train: Vec<TimeSeriesDataset>,
    pub val: Vec<TimeSeriesDataset>,
}

/// Fits normalization on the training datasets of `split` and cuts each into
/// a leading training part and a trailing validation part. The test dataset
/// is never read.
pub fn prepare_training_data(datasets: &[TimeSeriesDataset], split: &LosoSplit, val_fraction: f64) -> Result<PreparedData> {
    if split.train_ids.is_empty() {
        return Err(Error::invalid("split has no training datasets"));
    }
    let mut raw = Vec::with_capacity(split.train_ids.len());
    for &id in &split.train_ids {
        if id == split.test_id {
            return Err(Error::invalid(format!("dataset {id} is both training and test")));
        }
        raw.push(
            datasets
                .get(id)
                .ok_or_else(|| Error::invalid(format!("training dataset {id} out of range 0..{}", datasets.len())))?,
        );
    }
    let standardizer = Standardizer::fit(&raw)?;
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for ds in raw {
        let z = standardizer.apply(ds)?;
        let n_val = (z.len() as f64 * val_fraction).floor() as usize;
        let cut = z.len() - n_val;
        train.push(z.slice_steps(0, cut)?);
        if n_val > 0 {
            val.push(z.slice_steps(cut, z.len())?);
        }
    }
    Ok(PreparedData { standardizer, train, val })
}

fn collect_refs(datasets: &[TimeSeriesDataset], window: usize, stride: usize, what: &str) -> Result<Vec<WindowRef>> {
    let mut refs = Vec::new();
    for (i, ds) in datasets.iter().enumerate() {
        let ends = window_ends(ds.len(), window, stride)
            .map_err(|e| Error::data(format!("{what} part of dataset '{}': {e}", ds.condition_label)))?;
        refs.extend(ends.into_iter().map(|end| WindowRef { dataset: i, end }));
    }
    Ok(refs)
}

fn chunk_bounds(n: usize, chunk: usize) -> Vec<(usize, usize)> {
    (0..n).step_by(chunk).map(|a| (a, (a + chunk).min(n))).collect()
}

/// Summed gradients and MAE of one batch. Chunks are processed
/// independently and reduced in chunk order, so the result does not
/// depend on the execution policy.
pub fn batch_gradients(
    model: &dyn Model,
    batch: &WindowBatch,
    graphs: &Graphs,
    chunk: usize,
    policy: ExecPolicy,
) -> Result<(f64, Gradients)> {
    let denom = batch.y.len() as f64;
    let bounds = chunk_bounds(batch.len(), chunk.max(1));
    let parts = map_range(policy, bounds.len(), |c| -> Result<(f64, Gradients)> {
        let (a, b) = bounds[c];
        let sub = batch.slice(a, b);
        let mut grads = model.store().gradients();
        let head = |y_hat: ndarray::ArrayView2<'_, f64>| mae_part(y_hat, sub.y.view(), denom);
        let loss = model.forward_backward(&sub, graphs, &head, &mut grads)?;
        Ok((loss, grads))
    });
    let mut parts = parts.into_iter();
    let (mut loss, mut grads) = parts.next().ok_or_else(|| Error::invalid("empty batch"))??;
    for part in parts {
        let (l, g) = part?;
        loss += l;
        grads.add_assign(&g);
    }
    Ok((loss, grads))
}

/// Deterministic predictions `[M × D]` (standardized units) for `refs`.
pub fn predict_refs(
    model: &dyn Model,
    datasets: &[&TimeSeriesDataset],
    refs: &[WindowRef],
    chunk: usize,
    policy: ExecPolicy,
) -> Result<Array2<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let graphs = model.draw_graphs(Mode::Infer, &mut rng)?;
    let bounds = chunk_bounds(refs.len(), chunk.max(1));
    let parts = map_range(policy, bounds.len(), |c| -> Result<Array2<f64>> {
        let (a, b) = bounds[c];
        let batch = WindowBatch::gather(datasets, &refs[a..b], model.window())?;
        model.forward(&batch, &graphs)
    });
    let parts = parts.into_iter().collect::<Result<Vec<_>>>()?;
    if parts.is_empty() {
        return Ok(Array2::zeros((0, model.schema().d_out())));
    }
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    ndarray::concatenate(Axis(0), &views).map_err(|e| Error::shape(e.to_string()))
}

fn validation_loss(model: &dyn Model, val: &[&TimeSeriesDataset], refs: &[WindowRef], tcfg: &TrainConfig) -> Result<f64> {
    if refs.is_empty() {
        return Ok(f64::NAN);
    }
    let pred = predict_refs(model, val, refs, tcfg.chunk_size, tcfg.policy())?;
    let target = WindowBatch::gather(val, refs, model.window())?.y;
    super::metrics::mae_loss(pred.view(), target.view())
}

/// Trains one model on the training datasets of `split`.
///
/// Initialization uses `seed`; shuffling and graph sampling draw from an
/// independent stream of the same seed.
pub fn train(
    kind: ModelKind,
    datasets: &[TimeSeriesDataset],
    split: &LosoSplit,
    seed: u64,
    tcfg: &TrainConfig,
    mcfg: &ModelConfig,
) -> Result<TrainOutcome> {
    tcfg.validate()?;
    let schema = datasets
        .first()
        .ok_or_else(|| Error::invalid("no datasets"))?
        .schema
        .clone();
    if datasets.iter().any(|d| d.schema != schema) {
        return Err(Error::data("datasets have mismatched schemas"));
    }
    let window = mcfg.window();
    let data = prepare_training_data(datasets, split, tcfg.val_fraction)?;
    let mut refs = collect_refs(&data.train, window, tcfg.stride, "training")?;
    let val_refs = collect_refs(&data.val, window, tcfg.val_stride, "validation")?;
    let train_sets: Vec<&TimeSeriesDataset> = data.train.iter().collect();
    let val_sets: Vec<&TimeSeriesDataset> = data.val.iter().collect();

    let mut model = build_model(kind, &schema, mcfg, seed)?;
    let mut adam = Adam::new(model.store(), tcfg.adam());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let policy = tcfg.policy();
    let early_stopping = tcfg.patience > 0 && !val_refs.is_empty();

    let mut history = Vec::new();
    let mut best: Option<(f64, usize, Vec<crate::nn::Tensor>)> = None;
    let mut since_best = 0;
    let mut stopped_early = false;
    let mut optimizer_steps = 0;
    for epoch in 1..=tcfg.max_epochs {
        refs.shuffle(&mut rng);
        let mut steps = refs.len().div_ceil(tcfg.batch_size);
        if let Some(cap) = tcfg.max_steps_per_epoch {
            steps = steps.min(cap);
        }
        let (mut loss_sum, mut seen) = (0.0, 0usize);
        for step in 0..steps {
            let lo = step * tcfg.batch_size;
            let hi = (lo + tcfg.batch_size).min(refs.len());
            let batch = WindowBatch::gather(&train_sets, &refs[lo..hi], window)?;
            let graphs = model.draw_graphs(Mode::Train, &mut rng)?;
            let (loss, grads) = batch_gradients(model.as_ref(), &batch, &graphs, tcfg.chunk_size, policy)?;
            if !loss.is_finite() || grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
                return Err(Error::Numeric(format!(
                    "{kind} diverged at epoch {epoch}, step {}: loss {loss}",
                    step + 1
                )));
            }
            adam.step(model.store_mut(), &grads);
            optimizer_steps += 1;
            loss_sum += loss * (hi - lo) as f64;
            seen += hi - lo;
        }
        let val_loss = validation_loss(model.as_ref(), &val_sets, &val_refs, tcfg)?;
        history.push(EpochRecord {
            epoch,
            train_loss: loss_sum / seen.max(1) as f64,
            val_loss,
            steps,
        });
        if early_stopping {
            if !val_loss.is_finite() {
                return Err(Error::Numeric(format!("{kind} validation loss {val_loss} at epoch {epoch}")));
            }
            if best.as_ref().is_none_or(|(b, _, _)| val_loss < *b) {
                let snapshot = model.store().iter().map(|p| p.value.clone()).collect();
                best = Some((val_loss, epoch, snapshot));
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= tcfg.patience {
                    stopped_early = true;
                    break;
                }
            }
        }
    }
    let best_epoch = match best {
        Some((_, epoch, values)) => {
            for (p, v) in model.store_mut().iter_mut().zip(values) {
                p.value = v;
            }
            epoch
        }
        None => history.len(),
    };
    let checkpoint = Checkpoint::from_model(model.as_ref(), mcfg, tcfg, seed, split.clone(), data.standardizer);
    Ok(TrainOutcome {
        checkpoint,
        history: TrainHistory {
            epochs: history,
            best_epoch,
            optimizer_steps,
            stopped_early,
        },
    })
}

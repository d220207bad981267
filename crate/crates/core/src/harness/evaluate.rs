use std::io::Write;
use std::path::Path;

use ndarray::Array2;

use super::checkpoint::Checkpoint;
use super::metrics::{metrics, TargetMetrics};
use super::train::predict_refs;
use crate::data::{make_windows, standardize, LosoSplit, Standardizer, TimeSeriesDataset, WindowRef};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::parallel::ExecPolicy;

/// Test-set predictions in physical units with per-target errors.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub condition_label: String,
    pub target_ids: Vec<String>,
    pub metrics: Vec<TargetMetrics>,
    /// Reference step of every evaluated window.
    pub steps: Vec<usize>,
    /// `[M × D]`
    pub y_true: Array2<f64>,
    /// `[M × D]`
    pub y_hat: Array2<f64>,
}

impl Evaluation {
    fn from_predictions(test: &TimeSeriesDataset, steps: Vec<usize>, y_hat: Array2<f64>) -> Result<Self> {
        let schema = &test.schema;
        let d = schema.d_out();
        let mut y_true = Array2::zeros((steps.len(), d));
        for (row, &t) in steps.iter().enumerate() {
            for k in 0..d {
                y_true[[row, k]] = test.target_row(k)[t];
            }
        }
        let metrics = (0..d)
            .map(|k| metrics(&y_hat.column(k).to_vec(), &y_true.column(k).to_vec()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            condition_label: test.condition_label.clone(),
            target_ids: (0..d).map(|k| schema.target_meta(k).id.clone()).collect(),
            metrics,
            steps,
            y_true,
            y_hat,
        })
    }

    /// Writes `step,target_id,y_true,y_hat` rows.
    pub fn write_trace(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "step,target_id,y_true,y_hat").map_err(io)?;
        for (row, step) in self.steps.iter().enumerate() {
            for (k, id) in self.target_ids.iter().enumerate() {
                writeln!(w, "{step},{id},{},{}", self.y_true[[row, k]], self.y_hat[[row, k]]).map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }
}

/// Runs `model` over every window of the raw `test` dataset and reports
/// errors in physical units.
pub fn evaluate_model(
    model: &dyn Model,
    standardizer: &Standardizer,
    test: &TimeSeriesDataset,
    chunk: usize,
    policy: ExecPolicy,
) -> Result<Evaluation> {
    if test.schema != *model.schema() {
        return Err(Error::data(format!(
            "test dataset '{}' does not match the model's sensor schema",
            test.condition_label
        )));
    }
    let z = standardize(test, &standardizer.inputs)?;
    let windows = make_windows(&z, model.window(), 1)?;
    let refs: Vec<WindowRef> = windows.refs(0).collect();
    let mut y_hat = predict_refs(model, &[&z], &refs, chunk, policy)?;
    for mut row in y_hat.rows_mut() {
        for (k, v) in row.iter_mut().enumerate() {
            *v = standardizer.destandardize_target(k, *v);
        }
    }
    Evaluation::from_predictions(test, windows.ends().to_vec(), y_hat)
}

/// Deterministic inference of a checkpoint on `test`.
pub fn evaluate(checkpoint: &Checkpoint, test: &TimeSeriesDataset) -> Result<Evaluation> {
    let model = checkpoint.build_model()?;
    let t = &checkpoint.train_config;
    evaluate_model(model.as_ref(), &checkpoint.standardizer, test, t.chunk_size, t.policy())
}

/// Errors of predicting every target by its mean over the training datasets,
/// on the same test windows a model with window length `window` sees.
pub fn train_mean_baseline(datasets: &[TimeSeriesDataset], split: &LosoSplit, window: usize) -> Result<Evaluation> {
    let train: Vec<&TimeSeriesDataset> = split
        .train_ids
        .iter()
        .map(|&i| datasets.get(i).ok_or_else(|| Error::invalid(format!("dataset {i} out of range"))))
        .collect::<Result<_>>()?;
    let stats = Standardizer::fit(&train)?;
    let test = datasets
        .get(split.test_id)
        .ok_or_else(|| Error::invalid(format!("test dataset {} out of range", split.test_id)))?;
    let steps = make_windows(test, window, 1)?.ends().to_vec();
    let d = test.schema.d_out();
    let y_hat = Array2::from_shape_fn((steps.len(), d), |(_, k)| stats.targets.mu[k]);
    Evaluation::from_predictions(test, steps, y_hat)
}

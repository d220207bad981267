use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::evaluate::{evaluate_model, train_mean_baseline};
use super::metrics::{mean_std, TargetMetrics};
use super::train::{train, TrainConfig};
use crate::data::{loso_splits, LosoSplit, SensorType, TimeSeriesDataset};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelKind};

/// Sensor-group and architecture ablations of HSTGNN.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationVariant {
    Full,
    NoPressure,
    NoFlow,
    NoTemperature,
    Simplified,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 5] = [
        AblationVariant::Full,
        AblationVariant::NoPressure,
        AblationVariant::NoFlow,
        AblationVariant::NoTemperature,
        AblationVariant::Simplified,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AblationVariant::Full => "full",
            AblationVariant::NoPressure => "no_pressure",
            AblationVariant::NoFlow => "no_flow",
            AblationVariant::NoTemperature => "no_temperature",
            AblationVariant::Simplified => "simplified",
        }
    }

    /// Input group removed by this variant.
    pub fn dropped(self) -> Option<SensorType> {
        match self {
            AblationVariant::NoPressure => Some(SensorType::Pressure),
            AblationVariant::NoFlow => Some(SensorType::Flow),
            AblationVariant::NoTemperature => Some(SensorType::Temperature),
            AblationVariant::Full | AblationVariant::Simplified => None,
        }
    }

    pub fn model(self) -> ModelKind {
        match self {
            AblationVariant::Simplified => ModelKind::Simplified,
            _ => ModelKind::Hstgnn,
        }
    }

    /// The datasets this variant trains and tests on.
    pub fn project(self, datasets: &[TimeSeriesDataset]) -> Result<Vec<TimeSeriesDataset>> {
        match self.dropped() {
            None => Ok(datasets.to_vec()),
            Some(kind) => {
                let first = datasets.first().ok_or_else(|| Error::invalid("no datasets"))?;
                let schema = first.schema.without_inputs_of(kind)?;
                if schema.n_inputs() == 0 {
                    return Err(Error::invalid(format!("dropping {} leaves no inputs", kind.name())));
                }
                datasets.iter().map(|d| d.project(&schema)).collect()
            }
        }
    }
}

impl fmt::Display for AblationVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AblationVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase().replace('-', "_");
        AblationVariant::ALL
            .into_iter()
            .find(|v| v.name() == t)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown ablation variant '{s}', expected one of: {}",
                    AblationVariant::ALL.map(|v| v.name()).join(", ")
                ))
            })
    }
}

/// What one row of an experiment trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Model(ModelKind),
    Ablation(AblationVariant),
}

impl Variant {
    pub fn label(self) -> String {
        match self {
            Variant::Model(k) => k.name().to_string(),
            Variant::Ablation(a) => a.name().to_string(),
        }
    }

    fn model(self) -> ModelKind {
        match self {
            Variant::Model(k) => k,
            Variant::Ablation(a) => a.model(),
        }
    }

    fn project(self, datasets: &[TimeSeriesDataset]) -> Result<Vec<TimeSeriesDataset>> {
        match self {
            Variant::Model(_) => Ok(datasets.to_vec()),
            Variant::Ablation(a) => a.project(datasets),
        }
    }
}

/// Label of the train-mean reference predictor in reports.
pub const TRAIN_MEAN: &str = "train-mean";

/// One trained and evaluated (variant, split, seed) combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub variant: String,
    pub test_id: usize,
    pub seed: u64,
    pub metrics: Vec<TargetMetrics>,
    pub epochs: usize,
    pub best_epoch: usize,
    pub optimizer_steps: usize,
}

/// Seed-aggregated errors of one (split, variant, target).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub test_id: usize,
    pub variant: String,
    pub target: String,
    pub rmse_mean: f64,
    pub rmse_std: f64,
    pub mae_mean: f64,
    pub mae_std: f64,
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub target_ids: Vec<String>,
    /// Condition label of every dataset.
    pub dataset_labels: Vec<String>,
    pub runs: Vec<RunRecord>,
    /// Train-mean predictor errors per held-out dataset.
    pub reference: Vec<RunRecord>,
}

impl ExperimentReport {
    /// Variants in first-seen order.
    pub fn variants(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.runs {
            if !out.contains(&r.variant) {
                out.push(r.variant.clone());
            }
        }
        out
    }

    pub fn test_ids(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.runs.iter().chain(&self.reference).map(|r| r.test_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Runs of `variant` on held-out dataset `test_id`, in seed order.
    pub fn runs_of<'a>(&'a self, variant: &'a str, test_id: usize) -> impl Iterator<Item = &'a RunRecord> + 'a {
        self.runs
            .iter()
            .chain(&self.reference)
            .filter(move |r| r.variant == variant && r.test_id == test_id)
    }

    /// Mean and population std across seeds of every (split, variant, target),
    /// train-mean reference rows last.
    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut variants = self.variants();
        if !self.reference.is_empty() {
            variants.push(TRAIN_MEAN.to_string());
        }
        let mut rows = Vec::new();
        for test_id in self.test_ids() {
            for v in &variants {
                let runs: Vec<&RunRecord> = self.runs_of(v, test_id).collect();
                if runs.is_empty() {
                    continue;
                }
                for (k, target) in self.target_ids.iter().enumerate() {
                    let rmse: Vec<f64> = runs.iter().map(|r| r.metrics[k].rmse).collect();
                    let mae: Vec<f64> = runs.iter().map(|r| r.metrics[k].mae).collect();
                    let (rmse_mean, rmse_std) = mean_std(&rmse);
                    let (mae_mean, mae_std) = mean_std(&mae);
                    rows.push(SummaryRow {
                        test_id,
                        variant: v.clone(),
                        target: target.clone(),
                        rmse_mean,
                        rmse_std,
                        mae_mean,
                        mae_std,
                        seeds: runs.len(),
                    });
                }
            }
        }
        rows
    }

    /// Seed-mean RMSE of `variant` for target `k` on `test_id`.
    pub fn mean_rmse(&self, variant: &str, test_id: usize, k: usize) -> Option<f64> {
        let v: Vec<f64> = self.runs_of(variant, test_id).map(|r| r.metrics[k].rmse).collect();
        (!v.is_empty()).then(|| mean_std(&v).0)
    }

    pub fn merge(&mut self, other: ExperimentReport) -> Result<()> {
        if other.target_ids != self.target_ids {
            return Err(Error::data("cannot merge reports with different targets"));
        }
        self.runs.extend(other.runs);
        for r in other.reference {
            if !self.reference.iter().any(|x| x.test_id == r.test_id) {
                self.reference.push(r);
            }
        }
        self.reference.sort_by_key(|r| r.test_id);
        Ok(())
    }
}

fn record(variant: String, test_id: usize, seed: u64, metrics: Vec<TargetMetrics>) -> RunRecord {
    RunRecord {
        variant,
        test_id,
        seed,
        metrics,
        epochs: 0,
        best_epoch: 0,
        optimizer_steps: 0,
    }
}

/// Trains and evaluates every variant on every held-out dataset in
/// `test_ids` for every seed of `tcfg`. Runs execute in (split, variant,
/// seed) order; `progress` sees each finished run.
pub fn run_variants(
    variants: &[Variant],
    datasets: &[TimeSeriesDataset],
    test_ids: &[usize],
    tcfg: &TrainConfig,
    mcfg: &ModelConfig,
    progress: &mut dyn FnMut(&RunRecord),
) -> Result<ExperimentReport> {
    tcfg.validate()?;
    let first = datasets.first().ok_or_else(|| Error::invalid("no datasets"))?;
    let schema = &first.schema;
    let splits: Vec<LosoSplit> = loso_splits(datasets.len())?;
    let projected = variants
        .iter()
        .map(|v| v.project(datasets))
        .collect::<Result<Vec<_>>>()?;
    let mut report = ExperimentReport {
        target_ids: (0..schema.d_out()).map(|k| schema.target_meta(k).id.clone()).collect(),
        dataset_labels: datasets.iter().map(|d| d.condition_label.clone()).collect(),
        runs: Vec::new(),
        reference: Vec::new(),
    };
    for &test_id in test_ids {
        let split = splits
            .get(test_id)
            .ok_or_else(|| Error::invalid(format!("test dataset {test_id} out of range 0..{}", datasets.len())))?;
        let base = train_mean_baseline(datasets, split, mcfg.window())?;
        report.reference.push(record(TRAIN_MEAN.to_string(), test_id, 0, base.metrics));
        for (v, data) in variants.iter().zip(&projected) {
            for &seed in &tcfg.seeds {
                let out = train(v.model(), data, split, seed, tcfg, mcfg)?;
                let model = out.checkpoint.build_model()?;
                let eval = evaluate_model(
                    model.as_ref(),
                    &out.checkpoint.standardizer,
                    &data[test_id],
                    tcfg.chunk_size,
                    tcfg.policy(),
                )?;
                let run = RunRecord {
                    variant: v.label(),
                    test_id,
                    seed,
                    metrics: eval.metrics,
                    epochs: out.history.epochs.len(),
                    best_epoch: out.history.best_epoch,
                    optimizer_steps: out.history.optimizer_steps,
                };
                progress(&run);
                report.runs.push(run);
            }
        }
    }
    Ok(report)
}

/// Full leave-one-dataset-out comparison of `models` over all splits.
pub fn run_experiment(
    models: &[ModelKind],
    datasets: &[TimeSeriesDataset],
    tcfg: &TrainConfig,
    mcfg: &ModelConfig,
) -> Result<ExperimentReport> {
    let variants: Vec<Variant> = models.iter().map(|&m| Variant::Model(m)).collect();
    let ids: Vec<usize> = (0..datasets.len()).collect();
    run_variants(&variants, datasets, &ids, tcfg, mcfg, &mut |_| {})
}

/// One ablation variant over all splits.
pub fn run_ablation(
    variant: AblationVariant,
    datasets: &[TimeSeriesDataset],
    tcfg: &TrainConfig,
    mcfg: &ModelConfig,
) -> Result<ExperimentReport> {
    let ids: Vec<usize> = (0..datasets.len()).collect();
    run_variants(&[Variant::Ablation(variant)], datasets, &ids, tcfg, mcfg, &mut |_| {})
}

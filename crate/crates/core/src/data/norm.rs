use ndarray::{ArrayView1, ArrayViewMut1};
use serde::{Deserialize, Serialize};

use super::dataset::TimeSeriesDataset;
use crate::error::{Error, Result};

/// Lower bound applied to every standard deviation before division.
pub const SIGMA_FLOOR: f64 = 1e-8;

/// Per-sensor mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl NormStats {
    pub fn identity(n: usize) -> Self {
        Self {
            mu: vec![0.0; n],
            sigma: vec![1.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    /// Two-pass mean / population std over the concatenation of `series[i]`
    /// for every channel `i`.
    fn fit<'a, F>(n_channels: usize, datasets: &[&'a TimeSeriesDataset], row: F) -> Self
    where
        F: Fn(&'a TimeSeriesDataset, usize) -> ArrayView1<'a, f64>,
    {
        let mut mu = vec![0.0; n_channels];
        let mut sigma = vec![0.0; n_channels];
        for ch in 0..n_channels {
            let count: usize = datasets.iter().map(|d| d.len()).sum();
            let sum: f64 = datasets.iter().map(|d| row(d, ch).sum()).sum();
            let mean = sum / count as f64;
            let ss: f64 = datasets
                .iter()
                .map(|d| row(d, ch).iter().map(|v| (v - mean) * (v - mean)).sum::<f64>())
                .sum();
            mu[ch] = mean;
            sigma[ch] = (ss / count as f64).sqrt().max(SIGMA_FLOOR);
        }
        Self { mu, sigma }
    }

    pub fn apply(&self, ch: usize, mut row: ArrayViewMut1<'_, f64>) {
        let (m, s) = (self.mu[ch], self.sigma[ch]);
        row.mapv_inplace(|v| (v - m) / s);
    }

    pub fn invert(&self, ch: usize, v: f64) -> f64 {
        v * self.sigma[ch] + self.mu[ch]
    }
}

fn check_datasets(datasets: &[&TimeSeriesDataset]) -> Result<()> {
    let first = datasets
        .first()
        .ok_or_else(|| Error::invalid("cannot compute statistics of an empty dataset list"))?;
    if datasets.iter().any(|d| d.schema != first.schema) {
        return Err(Error::data("datasets have mismatched schemas"));
    }
    if datasets.iter().all(|d| d.is_empty()) {
        return Err(Error::invalid("datasets contain no time steps"));
    }
    Ok(())
}

/// Input-sensor statistics over the concatenation of the training datasets.
pub fn compute_train_stats(datasets: &[&TimeSeriesDataset]) -> Result<NormStats> {
    check_datasets(datasets)?;
    let n = datasets[0].schema.n_inputs();
    Ok(NormStats::fit(n, datasets, |d, ch| d.input_row(ch)))
}

/// Target-sensor statistics over the concatenation of the training datasets.
pub fn compute_target_stats(datasets: &[&TimeSeriesDataset]) -> Result<NormStats> {
    check_datasets(datasets)?;
    let n = datasets[0].schema.d_out();
    Ok(NormStats::fit(n, datasets, |d, ch| d.target_row(ch)))
}

/// Standardizes the input rows of `dataset` with `stats`; target rows are
/// left untouched.
pub fn standardize(dataset: &TimeSeriesDataset, stats: &NormStats) -> Result<TimeSeriesDataset> {
    if stats.len() != dataset.schema.n_inputs() {
        return Err(Error::shape(format!(
            "stats cover {} sensors, dataset has {} inputs",
            stats.len(),
            dataset.schema.n_inputs()
        )));
    }
    let mut out = dataset.clone();
    for (ch, &pos) in dataset.schema.input_positions().iter().enumerate() {
        stats.apply(ch, out.values.row_mut(pos));
    }
    Ok(out)
}

/// Train-fitted statistics for both inputs and targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub inputs: NormStats,
    pub targets: NormStats,
}

impl Standardizer {
    pub fn fit(train: &[&TimeSeriesDataset]) -> Result<Self> {
        Ok(Self {
            inputs: compute_train_stats(train)?,
            targets: compute_target_stats(train)?,
        })
    }

    /// Standardizes inputs and targets.
    pub fn apply(&self, dataset: &TimeSeriesDataset) -> Result<TimeSeriesDataset> {
        if self.targets.len() != dataset.schema.d_out() {
            return Err(Error::shape(format!(
                "target stats cover {} sensors, dataset has {} targets",
                self.targets.len(),
                dataset.schema.d_out()
            )));
        }
        let mut out = standardize(dataset, &self.inputs)?;
        for (ch, &pos) in dataset.schema.target_positions().iter().enumerate() {
            self.targets.apply(ch, out.values.row_mut(pos));
        }
        Ok(out)
    }

    pub fn destandardize_target(&self, target_idx: usize, v: f64) -> f64 {
        self.targets.invert(target_idx, v)
    }
}

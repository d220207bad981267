use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::schema::SensorNetworkSchema;
use crate::error::{Error, Result};

pub const DEFAULT_SAMPLE_PERIOD_S: f64 = 2.0;

/// Synchronized multivariate recording of one operating condition.
///
/// `values` has one row per schema sensor (schema order) and one column per
/// time step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesDataset {
    pub schema: SensorNetworkSchema,
    pub values: Array2<f64>,
    pub sample_period: f64,
    pub condition_label: String,
}

impl TimeSeriesDataset {
    pub fn new(
        schema: SensorNetworkSchema,
        values: Array2<f64>,
        condition_label: impl Into<String>,
    ) -> Result<Self> {
        let ds = Self {
            schema,
            values,
            sample_period: DEFAULT_SAMPLE_PERIOD_S,
            condition_label: condition_label.into(),
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.nrows() != self.schema.len() {
            return Err(Error::shape(format!(
                "dataset has {} rows but schema lists {} sensors",
                self.values.nrows(),
                self.schema.len()
            )));
        }
        if !(self.sample_period > 0.0) {
            return Err(Error::data("sample period must be positive"));
        }
        for (row, series) in self.values.axis_iter(Axis(0)).enumerate() {
            if let Some(step) = series.iter().position(|v| !v.is_finite()) {
                return Err(Error::data(format!(
                    "non-finite value for sensor '{}' at step {step}",
                    self.schema.sensors()[row].id
                )));
            }
        }
        Ok(())
    }

    /// Number of time steps `T_len`.
    pub fn len(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.values.ncols() == 0
    }

    pub fn input_row(&self, input_idx: usize) -> ArrayView1<'_, f64> {
        self.values.row(self.schema.input_positions()[input_idx])
    }

    pub fn target_row(&self, target_idx: usize) -> ArrayView1<'_, f64> {
        self.values.row(self.schema.target_positions()[target_idx])
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    /// Columns `[start, end)` as a new dataset sharing the schema.
    pub fn slice_steps(&self, start: usize, end: usize) -> Result<Self> {
        if start > end || end > self.len() {
            return Err(Error::invalid(format!(
                "step range {start}..{end} outside 0..{}",
                self.len()
            )));
        }
        Ok(Self {
            schema: self.schema.clone(),
            values: self.values.slice(ndarray::s![.., start..end]).to_owned(),
            sample_period: self.sample_period,
            condition_label: self.condition_label.clone(),
        })
    }

    /// Re-project onto another schema by sensor id. Every sensor of `schema`
    /// must exist here.
    pub fn project(&self, schema: &SensorNetworkSchema) -> Result<Self> {
        let mut values = Array2::zeros((schema.len(), self.len()));
        for (row, meta) in schema.sensors().iter().enumerate() {
            let src = self.schema.position_of(&meta.id).ok_or_else(|| {
                Error::data(format!("sensor '{}' missing from dataset", meta.id))
            })?;
            values.row_mut(row).assign(&self.values.row(src));
        }
        Ok(Self {
            schema: schema.clone(),
            values,
            sample_period: self.sample_period,
            condition_label: self.condition_label.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::schema::{SensorMeta, SensorType};

    #[test]
    fn rejects_non_finite() {
        let schema = SensorNetworkSchema::new(vec![SensorMeta::input("a", SensorType::Flow)]).unwrap();
        let mut v = Array2::zeros((1, 4));
        v[[0, 2]] = f64::NAN;
        let err = TimeSeriesDataset::new(schema, v, "x").unwrap_err();
        assert!(err.to_string().contains("step 2"), "{err}");
    }

    #[test]
    fn rejects_row_mismatch() {
        let schema = SensorNetworkSchema::new(vec![SensorMeta::input("a", SensorType::Flow)]).unwrap();
        assert!(TimeSeriesDataset::new(schema, Array2::zeros((2, 4)), "x").is_err());
    }
}

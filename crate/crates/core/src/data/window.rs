use ndarray::{s, Array2, Array3, ArrayView3, Axis};

use super::dataset::TimeSeriesDataset;
use super::schema::SensorType;
use crate::error::{Error, Result};

/// A window of length `T` ending (inclusively) at `end` in dataset `dataset`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct WindowRef {
    pub dataset: usize,
    pub end: usize,
}

/// End indices of every window: `T-1, T-1+stride, ...` while `end < t_len`.
pub fn window_ends(t_len: usize, window: usize, stride: usize) -> Result<Vec<usize>> {
    if window == 0 {
        return Err(Error::invalid("window length must be at least 1"));
    }
    if stride == 0 {
        return Err(Error::invalid("stride must be at least 1"));
    }
    if window > t_len {
        return Err(Error::invalid(format!(
            "window length {window} exceeds series length {t_len}"
        )));
    }
    Ok((window - 1..t_len).step_by(stride).collect())
}

/// Per-type input windows `[B × N_m × T]` and targets `[B × D]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowBatch {
    pub x_temp: Array3<f64>,
    pub x_press: Array3<f64>,
    pub x_flow: Array3<f64>,
    pub y: Array2<f64>,
    pub ref_times: Vec<usize>,
}

impl WindowBatch {
    pub fn len(&self) -> usize {
        self.y.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.y.nrows() == 0
    }

    pub fn window(&self) -> usize {
        self.x_temp.len_of(Axis(2))
    }

    pub fn x(&self, kind: SensorType) -> ArrayView3<'_, f64> {
        match kind {
            SensorType::Temperature => self.x_temp.view(),
            SensorType::Pressure => self.x_press.view(),
            SensorType::Flow => self.x_flow.view(),
        }
    }

    /// All input nodes concatenated in branch order: `[B × N × T]`.
    pub fn x_all(&self) -> Array3<f64> {
        ndarray::concatenate(
            Axis(1),
            &[self.x_temp.view(), self.x_press.view(), self.x_flow.view()],
        )
        .expect("per-type windows share batch and time axes")
    }

    /// Rows `[start, end)` of the batch.
    pub fn slice(&self, start: usize, end: usize) -> WindowBatch {
        WindowBatch {
            x_temp: self.x_temp.slice(s![start..end, .., ..]).to_owned(),
            x_press: self.x_press.slice(s![start..end, .., ..]).to_owned(),
            x_flow: self.x_flow.slice(s![start..end, .., ..]).to_owned(),
            y: self.y.slice(s![start..end, ..]).to_owned(),
            ref_times: self.ref_times[start..end].to_vec(),
        }
    }

    /// Gathers the windows `refs` from `datasets`, which must share one schema.
    pub fn gather(datasets: &[&TimeSeriesDataset], refs: &[WindowRef], window: usize) -> Result<Self> {
        let schema = &datasets
            .first()
            .ok_or_else(|| Error::invalid("no datasets to gather from"))?
            .schema;
        let b = refs.len();
        let mut per_type = SensorType::BRANCH_ORDER.map(|k| Array3::zeros((b, schema.n_of(k), window)));
        let d = schema.d_out();
        let mut y = Array2::zeros((b, d));
        let mut ref_times = Vec::with_capacity(b);
        for (row, r) in refs.iter().enumerate() {
            let ds = datasets
                .get(r.dataset)
                .ok_or_else(|| Error::invalid(format!("dataset index {} out of range", r.dataset)))?;
            if ds.schema != *schema {
                return Err(Error::data("datasets have mismatched schemas"));
            }
            if r.end + 1 < window || r.end >= ds.len() {
                return Err(Error::invalid(format!(
                    "window ending at {} does not fit a series of length {}",
                    r.end,
                    ds.len()
                )));
            }
            let start = r.end + 1 - window;
            for (slot, kind) in SensorType::BRANCH_ORDER.into_iter().enumerate() {
                for (node, &input_idx) in schema.type_indices(kind).iter().enumerate() {
                    let src = ds.input_row(input_idx);
                    per_type[slot]
                        .slice_mut(s![row, node, ..])
                        .assign(&src.slice(s![start..=r.end]));
                }
            }
            for t in 0..d {
                y[[row, t]] = ds.target_row(t)[r.end];
            }
            ref_times.push(r.end);
        }
        let [x_temp, x_press, x_flow] = per_type;
        Ok(WindowBatch {
            x_temp,
            x_press,
            x_flow,
            y,
            ref_times,
        })
    }
}

/// Lazily materialized sliding windows over one dataset.
#[derive(Debug, Clone)]
pub struct Windows<'a> {
    dataset: &'a TimeSeriesDataset,
    window: usize,
    ends: Vec<usize>,
}

impl<'a> Windows<'a> {
    pub fn len(&self) -> usize {
        self.ends.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ends.is_empty()
    }

    pub fn ends(&self) -> &[usize] {
        &self.ends
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn refs(&self, dataset_idx: usize) -> impl Iterator<Item = WindowRef> + '_ {
        self.ends.iter().map(move |&end| WindowRef {
            dataset: dataset_idx,
            end,
        })
    }

    /// Windows `[start, end)` in ordinal order as one batch.
    pub fn batch(&self, start: usize, end: usize) -> Result<WindowBatch> {
        let refs: Vec<_> = self.ends[start..end]
            .iter()
            .map(|&e| WindowRef { dataset: 0, end: e })
            .collect();
        WindowBatch::gather(&[self.dataset], &refs, self.window)
    }

    /// Every window as a single batch.
    pub fn all(&self) -> Result<WindowBatch> {
        self.batch(0, self.len())
    }
}

/// Sliding windows of length `window` with the given stride; each window ends
/// inclusively at its reference step.
pub fn make_windows(dataset: &TimeSeriesDataset, window: usize, stride: usize) -> Result<Windows<'_>> {
    let ends = window_ends(dataset.len(), window, stride)?;
    Ok(Windows {
        dataset,
        window,
        ends,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::schema::{SensorMeta, SensorNetworkSchema};
    use proptest::prelude::*;

    fn toy(len: usize) -> TimeSeriesDataset {
        let schema = SensorNetworkSchema::new(vec![
            SensorMeta::input("t1", SensorType::Temperature),
            SensorMeta::input("f1", SensorType::Flow),
            SensorMeta::target("y", SensorType::Temperature),
            SensorMeta::input("t2", SensorType::Temperature),
            SensorMeta::input("p1", SensorType::Pressure),
        ])
        .unwrap();
        let values = Array2::from_shape_fn((5, len), |(r, c)| (r * 1000 + c) as f64);
        TimeSeriesDataset::new(schema, values, "toy").unwrap()
    }

    #[test]
    fn boundary_single_window() {
        assert_eq!(window_ends(16, 16, 1).unwrap(), vec![15]);
    }

    #[test]
    fn count_formula_at_paper_length() {
        assert_eq!(window_ends(54000, 16, 1).unwrap().len(), 53985);
    }

    #[test]
    fn strided_ends() {
        assert_eq!(window_ends(20, 16, 2).unwrap(), vec![15, 17, 19]);
    }

    #[test]
    fn errors() {
        assert!(window_ends(15, 16, 1).is_err());
        assert!(window_ends(20, 16, 0).is_err());
    }

    #[test]
    fn split_by_type_and_inclusive() {
        let d = toy(10);
        let w = make_windows(&d, 4, 1).unwrap();
        let b = w.batch(2, 3).unwrap();
        // Window ending at step 5 spans 2..=5.
        assert_eq!(b.ref_times, vec![5]);
        assert_eq!(b.x_temp.shape(), &[1, 2, 4]);
        assert_eq!(b.x_press.shape(), &[1, 1, 4]);
        assert_eq!(b.x_flow.shape(), &[1, 1, 4]);
        assert_eq!(b.x_temp[[0, 0, 0]], 2.0);
        assert_eq!(b.x_temp[[0, 0, 3]], 5.0);
        assert_eq!(b.x_temp[[0, 1, 3]], 3005.0);
        assert_eq!(b.x_flow[[0, 0, 3]], 1005.0);
        assert_eq!(b.x_press[[0, 0, 0]], 4002.0);
        assert_eq!(b.y[[0, 0]], 2005.0);
        let all = b.x_all();
        assert_eq!(all.shape(), &[1, 4, 4]);
        assert_eq!(all[[0, 2, 3]], 4005.0);
    }

    proptest! {
        #[test]
        fn count_and_last_columns(len in 1usize..80, window in 1usize..20, stride in 1usize..5) {
            prop_assume!(window <= len);
            let ends = window_ends(len, window, stride).unwrap();
            prop_assert_eq!(ends.len(), (len - window) / stride + 1);
            prop_assert!(ends.iter().all(|&e| e + 1 >= window && e < len));
        }

        #[test]
        fn stride_one_last_columns_rebuild_series(len in 4usize..40, window in 1usize..4) {
            let d = toy(len);
            let w = make_windows(&d, window, 1).unwrap();
            let b = w.all().unwrap();
            let n_t = b.x_temp.shape()[1];
            for node in 0..n_t {
                let idx = d.schema.type_indices(SensorType::Temperature)[node];
                let rebuilt: Vec<f64> = (0..b.len()).map(|r| b.x_temp[[r, node, window - 1]]).collect();
                let expect: Vec<f64> = d.input_row(idx).iter().skip(window - 1).copied().collect();
                prop_assert_eq!(rebuilt, expect);
            }
        }
    }
}

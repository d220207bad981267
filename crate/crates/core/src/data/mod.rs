//! Sensor schema, recordings, normalization, windowing and fold construction.

mod dataset;
pub mod io;
mod norm;
mod schema;
mod split;
mod window;

pub use dataset::{TimeSeriesDataset, DEFAULT_SAMPLE_PERIOD_S};
pub use io::{load_benchmark, load_csv, load_schema, save_benchmark, save_csv, save_schema};
pub use norm::{
    compute_target_stats, compute_train_stats, standardize, NormStats, Standardizer, SIGMA_FLOOR,
};
pub use schema::{SensorMeta, SensorNetworkSchema, SensorRole, SensorType};
pub use split::{loso_splits, LosoSplit};
pub use window::{make_windows, window_ends, WindowBatch, WindowRef, Windows};

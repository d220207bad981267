//! CSV layout of a benchmark directory:
//!
//! ```text
//! DIR/schema.csv      id,kind,role,unit
//! DIR/data_<k>.csv    step,<sensor_id>,...   (k = 1, 2, ...)
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use super::dataset::TimeSeriesDataset;
use super::schema::{SensorMeta, SensorNetworkSchema};
use crate::error::{Error, Result};

pub const SCHEMA_FILE: &str = "schema.csv";

pub fn data_file_name(k: usize) -> String {
    format!("data_{k}.csv")
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

pub fn save_schema(schema: &SensorNetworkSchema, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(SCHEMA_FILE);
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    w.write_record(["id", "kind", "role", "unit"]).map_err(csv_err(&path))?;
    for s in schema.sensors() {
        w.write_record([s.id.as_str(), s.kind.code(), s.role.as_str(), s.unit.as_str()])
            .map_err(csv_err(&path))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))
}

pub fn load_schema(dir: &Path) -> Result<SensorNetworkSchema> {
    let path = dir.join(SCHEMA_FILE);
    let mut r = csv::Reader::from_path(&path).map_err(csv_err(&path))?;
    let header = r.headers().map_err(csv_err(&path))?.clone();
    if header.iter().collect::<Vec<_>>() != ["id", "kind", "role", "unit"] {
        return Err(Error::data(format!(
            "{}: expected header id,kind,role,unit",
            path.display()
        )));
    }
    let mut sensors = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err(&path))?;
        sensors.push(SensorMeta {
            id: rec[0].to_string(),
            kind: rec[1].parse()?,
            role: rec[2].parse()?,
            unit: rec[3].to_string(),
        });
    }
    SensorNetworkSchema::new(sensors)
}

/// Writes `data_<k>.csv` into `dir`.
pub fn save_csv(dataset: &TimeSeriesDataset, dir: &Path, k: usize) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(data_file_name(k));
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    let mut header = vec!["step".to_string()];
    header.extend(dataset.schema.sensors().iter().map(|s| s.id.clone()));
    w.write_record(&header).map_err(csv_err(&path))?;
    let mut row = Vec::with_capacity(header.len());
    for t in 0..dataset.len() {
        row.clear();
        row.push(t.to_string());
        // `Display` for f64 is the shortest representation that round-trips.
        row.extend(dataset.values.column(t).iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(csv_err(&path))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Reads one data file against `schema`. Every schema sensor must be present
/// as a column and every column must belong to the schema.
pub fn load_csv(path: &Path, schema: &SensorNetworkSchema) -> Result<TimeSeriesDataset> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let header = r.headers().map_err(csv_err(path))?.clone();
    if header.get(0) != Some("step") {
        return Err(Error::data(format!(
            "{}: first column must be 'step'",
            path.display()
        )));
    }
    let cols: Vec<&str> = header.iter().skip(1).collect();
    for c in &cols {
        if schema.position_of(c).is_none() {
            return Err(Error::data(format!(
                "{}: unknown sensor id '{c}'",
                path.display()
            )));
        }
    }
    // column index (in the file, after 'step') for every schema row
    let mut col_of = Vec::with_capacity(schema.len());
    for s in schema.sensors() {
        let c = cols.iter().position(|c| *c == s.id).ok_or_else(|| {
            Error::data(format!("{}: missing column for sensor '{}'", path.display(), s.id))
        })?;
        col_of.push(c + 1);
    }
    let mut data: Vec<Vec<f64>> = vec![Vec::new(); schema.len()];
    for (row_idx, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        for (row, &c) in col_of.iter().enumerate() {
            let cell = rec.get(c).ok_or_else(|| {
                Error::data(format!("{}: row {row_idx} is missing cells", path.display()))
            })?;
            let v: f64 = cell.trim().parse().map_err(|_| {
                Error::data(format!(
                    "{}: row {row_idx}, sensor '{}': cannot parse '{cell}'",
                    path.display(),
                    schema.sensors()[row].id
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::data(format!(
                    "{}: row {row_idx}, sensor '{}': non-finite value",
                    path.display(),
                    schema.sensors()[row].id
                )));
            }
            data[row].push(v);
        }
    }
    let t_len = data.first().map_or(0, Vec::len);
    let flat: Vec<f64> = data.into_iter().flatten().collect();
    let values = Array2::from_shape_vec((schema.len(), t_len), flat)
        .map_err(|e| Error::shape(e.to_string()))?;
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    TimeSeriesDataset::new(schema.clone(), values, label)
}

/// Writes a schema plus `data_1.csv ... data_n.csv`.
pub fn save_benchmark(datasets: &[TimeSeriesDataset], dir: &Path) -> Result<()> {
    let first = datasets
        .first()
        .ok_or_else(|| Error::invalid("no datasets to save"))?;
    save_schema(&first.schema, dir)?;
    for (i, d) in datasets.iter().enumerate() {
        save_csv(d, dir, i + 1)?;
    }
    Ok(())
}

/// Loads `schema.csv` and every consecutive `data_<k>.csv` starting at 1.
pub fn load_benchmark(dir: &Path) -> Result<(SensorNetworkSchema, Vec<TimeSeriesDataset>)> {
    let schema = load_schema(dir)?;
    let mut datasets = Vec::new();
    for k in 1.. {
        let path = dir.join(data_file_name(k));
        if !path.exists() {
            break;
        }
        datasets.push(load_csv(&path, &schema)?);
    }
    if datasets.is_empty() {
        return Err(Error::data(format!("{}: no data_<k>.csv files", dir.display())));
    }
    Ok((schema, datasets))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::schema::SensorType;

    fn small() -> TimeSeriesDataset {
        let schema = SensorNetworkSchema::new(vec![
            SensorMeta::input("T_a", SensorType::Temperature),
            SensorMeta::input("P_a", SensorType::Pressure),
            SensorMeta::target("SM_q", SensorType::Flow),
        ])
        .unwrap();
        let values = Array2::from_shape_fn((3, 10), |(r, c)| {
            (r as f64 + 1.0) * 1.1 + c as f64 / 7.0 - 1e-13 * c as f64
        });
        TimeSeriesDataset::new(schema, values, "data_1").unwrap()
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let d = small();
        save_benchmark(std::slice::from_ref(&d), dir.path()).unwrap();
        let (schema, loaded) = load_benchmark(dir.path()).unwrap();
        assert_eq!(schema, d.schema);
        assert_eq!(loaded.len(), 1);
        for (a, b) in loaded[0].values.iter().zip(d.values.iter()) {
            assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
        }
    }

    #[test]
    fn missing_column_names_the_sensor() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data_1.csv");
        fs::write(&path, "step,T_a,SM_q\n0,1.0,2.0\n").unwrap();
        let err = load_csv(&path, &small().schema).unwrap_err();
        assert!(err.to_string().contains("'P_a'"), "{err}");
    }

    #[test]
    fn nan_cell_reports_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data_1.csv");
        fs::write(&path, "step,T_a,P_a,SM_q\n0,1.0,2.0,3.0\n1,1.0,NaN,3.0\n").unwrap();
        let err = load_csv(&path, &small().schema).unwrap_err();
        assert!(err.to_string().contains("row 1"), "{err}");
    }

    #[test]
    fn unknown_sensor_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data_1.csv");
        fs::write(&path, "step,T_a,P_a,SM_q,ghost\n0,1,2,3,4\n").unwrap();
        let err = load_csv(&path, &small().schema).unwrap_err();
        assert!(err.to_string().contains("ghost"), "{err}");
    }
}

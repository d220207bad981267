use std::path::Path;

use super::experiment::{ExperimentReport, SummaryRow};
use crate::error::{Error, Result};

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

/// Seed-aggregated summary, one row per (split, variant, target).
pub fn write_summary_csv(report: &ExperimentReport, path: &Path) -> Result<()> {
    let err = csv_err(path);
    let mut w = csv::Writer::from_path(path).map_err(&err)?;
    w.write_record([
        "test_id",
        "test_condition",
        "variant",
        "target",
        "rmse_mean",
        "rmse_std",
        "mae_mean",
        "mae_std",
        "seeds",
    ])
    .map_err(&err)?;
    for r in report.summary() {
        let label = report.dataset_labels.get(r.test_id).cloned().unwrap_or_default();
        w.write_record([
            r.test_id.to_string(),
            label,
            r.variant,
            r.target,
            r.rmse_mean.to_string(),
            r.rmse_std.to_string(),
            r.mae_mean.to_string(),
            r.mae_std.to_string(),
            r.seeds.to_string(),
        ])
        .map_err(&err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Raw per-seed metrics, one row per (run, target).
pub fn write_runs_csv(report: &ExperimentReport, path: &Path) -> Result<()> {
    let err = csv_err(path);
    let mut w = csv::Writer::from_path(path).map_err(&err)?;
    w.write_record([
        "test_id",
        "variant",
        "seed",
        "target",
        "rmse",
        "mae",
        "sse",
        "count",
        "epochs",
        "best_epoch",
        "optimizer_steps",
    ])
    .map_err(&err)?;
    for run in report.runs.iter().chain(&report.reference) {
        for (target, m) in report.target_ids.iter().zip(&run.metrics) {
            w.write_record([
                run.test_id.to_string(),
                run.variant.clone(),
                run.seed.to_string(),
                target.clone(),
                m.rmse.to_string(),
                m.mae.to_string(),
                m.sse.to_string(),
                m.count.to_string(),
                run.epochs.to_string(),
                run.best_epoch.to_string(),
                run.optimizer_steps.to_string(),
            ])
            .map_err(&err)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn cell(mean: f64, std: f64) -> String {
    format!("{mean:.4} ± {std:.4}")
}

/// Aligned plain-text tables: one block per held-out dataset, one row per
/// variant, RMSE and MAE columns per target.
pub fn summary_table(report: &ExperimentReport) -> String {
    let rows = report.summary();
    let mut out = String::new();
    for test_id in report.test_ids() {
        let block: Vec<&SummaryRow> = rows.iter().filter(|r| r.test_id == test_id).collect();
        let mut variants: Vec<&str> = Vec::new();
        for r in &block {
            if !variants.contains(&r.variant.as_str()) {
                variants.push(&r.variant);
            }
        }
        let mut grid: Vec<Vec<String>> = Vec::new();
        let mut header = vec!["model".to_string()];
        for t in &report.target_ids {
            header.push(format!("{t} RMSE"));
            header.push(format!("{t} MAE"));
        }
        grid.push(header);
        for v in &variants {
            let mut line = vec![v.to_string()];
            for t in &report.target_ids {
                match block.iter().find(|r| r.variant == *v && &r.target == t) {
                    Some(r) => {
                        line.push(cell(r.rmse_mean, r.rmse_std));
                        line.push(cell(r.mae_mean, r.mae_std));
                    }
                    None => line.extend(["-".to_string(), "-".to_string()]),
                }
            }
            grid.push(line);
        }
        let widths: Vec<usize> = (0..grid[0].len())
            .map(|c| grid.iter().map(|l| l[c].chars().count()).max().unwrap_or(0))
            .collect();
        let label = report.dataset_labels.get(test_id).map(String::as_str).unwrap_or("");
        out.push_str(&format!("Held-out dataset {test_id} ({label})\n"));
        for (i, line) in grid.iter().enumerate() {
            let cells: Vec<String> = line
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(c, (s, &w))| if c == 0 { format!("{s:<w$}") } else { format!("{s:>w$}") })
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
            if i == 0 {
                out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
                out.push('\n');
            }
        }
        out.push('\n');
    }
    out
}

/// Writes `path` (summary CSV), `path` with extension `txt` (table) and
/// `path` with extension `runs.csv` (per-seed metrics).
pub fn write_report(report: &ExperimentReport, path: &Path) -> Result<()> {
    write_summary_csv(report, path)?;
    let table = path.with_extension("txt");
    std::fs::write(&table, summary_table(report)).map_err(|e| Error::io(&table, e))?;
    write_runs_csv(report, &path.with_extension("runs.csv"))
}

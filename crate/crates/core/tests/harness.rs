use std::sync::OnceLock;

use hstgnn::data::{
    compute_target_stats, compute_train_stats, LosoSplit, NormStats, SensorNetworkSchema, SensorType, TimeSeriesDataset, WindowBatch,
};
use hstgnn::harness::{
    evaluate, evaluate_model, mean_std, prepare_training_data, run_ablation, run_experiment, train, write_report,
    AblationVariant, Checkpoint, LossKind, TrainConfig, TRAIN_MEAN,
};
use hstgnn::model::{Graphs, LearnedGraph, LossHead, Model, ModelConfig, ModelKind};
use hstgnn::nn::{Gradients, ParamStore};
use hstgnn::parallel::ExecPolicy;
use hstgnn::sim::{build_default_topology, simulate_benchmark, SimConfig};
use hstgnn::Error;
use ndarray::Array2;

fn benchmark(steps: usize) -> Vec<TimeSeriesDataset> {
    simulate_benchmark(&build_default_topology(), &SimConfig::with_emitted_steps(steps))
        .unwrap()
        .into_iter()
        .map(|o| o.dataset)
        .collect()
}

fn small_benchmark() -> &'static [TimeSeriesDataset] {
    static DATA: OnceLock<Vec<TimeSeriesDataset>> = OnceLock::new();
    DATA.get_or_init(|| benchmark(300))
}

fn small_models() -> ModelConfig {
    let mut m = ModelConfig::default();
    m.hstgnn.d = 4;
    m.hstgnn.d_h = 4;
    m.hstgnn.k = 3;
    m.baseline.lstm_hidden = 8;
    m.baseline.cnn_filters = 8;
    m.baseline.node_dim = 4;
    m.baseline.gru_hidden = 4;
    m
}

fn quick() -> TrainConfig {
    TrainConfig {
        batch_size: 64,
        max_epochs: 1,
        max_steps_per_epoch: Some(1),
        patience: 0,
        seeds: vec![0],
        ..TrainConfig::default()
    }
}

/// Predicts the batch's own targets in standardized units.
#[derive(Debug)]
struct Oracle {
    schema: SensorNetworkSchema,
    store: ParamStore,
    targets: NormStats,
}

impl Model for Oracle {
    fn kind(&self) -> ModelKind {
        ModelKind::Lstm
    }
    fn store(&self) -> &ParamStore {
        &self.store
    }
    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }
    fn schema(&self) -> &SensorNetworkSchema {
        &self.schema
    }
    fn window(&self) -> usize {
        16
    }
    fn learned_graphs(&self) -> Vec<LearnedGraph> {
        Vec::new()
    }
    fn forward(&self, batch: &WindowBatch, _: &Graphs) -> hstgnn::Result<Array2<f64>> {
        let mut y = batch.y.clone();
        for (k, col) in y.columns_mut().into_iter().enumerate() {
            self.targets.apply(k, col);
        }
        Ok(y)
    }
    fn forward_backward(&self, batch: &WindowBatch, _: &Graphs, head: &LossHead<'_>, _: &mut Gradients) -> hstgnn::Result<f64> {
        Ok(head(batch.y.view()).0)
    }
}

#[test]
fn train_config_defaults() {
    let t = TrainConfig::default();
    assert_eq!(t.lr, 0.01);
    assert_eq!(t.batch_size, 512);
    assert_eq!(t.loss, LossKind::Mae);
    assert_eq!(t.seeds, vec![0, 1, 2]);
    assert_eq!((t.beta1, t.beta2, t.eps), (0.9, 0.999, 1e-8));
    assert_eq!(t.val_fraction, 0.1);
    assert_eq!((t.max_epochs, t.patience), (100, 10));
    let bad = TrainConfig {
        batch_size: 0,
        ..TrainConfig::default()
    };
    assert!(bad.validate().is_err());
}

#[test]
fn one_epoch_takes_one_step_per_started_batch() {
    let data = small_benchmark();
    let split = LosoSplit::holding_out(3, 4).unwrap();
    let tcfg = TrainConfig {
        max_epochs: 1,
        patience: 0,
        seeds: vec![0],
        ..TrainConfig::default()
    };
    for (batch, steps) in [(512, 2), (64, 12)] {
        let tcfg = TrainConfig {
            batch_size: batch,
            ..tcfg.clone()
        };
        let out = train(ModelKind::Cnn1d, data, &split, 0, &tcfg, &small_models()).unwrap();
        // 300 steps minus a 30-step validation tail, 16-step windows, three datasets.
        let windows: usize = 3 * (300 - 30 - 16 + 1);
        assert_eq!(windows.div_ceil(batch), steps);
        assert_eq!(out.history.optimizer_steps, steps);
        assert_eq!(out.history.epochs.len(), 1);
        assert_eq!(out.history.epochs[0].steps, steps);
        assert!(out.history.epochs[0].train_loss.is_finite());
    }
}

#[test]
fn checkpoint_statistics_come_from_training_datasets_only() {
    let data = small_benchmark();
    let split = LosoSplit::holding_out(1, 4).unwrap();
    let out = train(ModelKind::Gcn, data, &split, 0, &quick(), &small_models()).unwrap();
    let train_sets: Vec<&TimeSeriesDataset> = split.train_ids.iter().map(|&i| &data[i]).collect();
    assert_eq!(split.train_ids, vec![0, 2, 3]);
    assert_eq!(out.checkpoint.standardizer.inputs, compute_train_stats(&train_sets).unwrap());
    assert_eq!(out.checkpoint.standardizer.targets, compute_target_stats(&train_sets).unwrap());
    assert_eq!(out.checkpoint.split, split);
}

#[test]
fn standardized_training_data_has_zero_mean_and_unit_std() {
    let data = small_benchmark();
    let split = LosoSplit::holding_out(0, 4).unwrap();
    let prepared = prepare_training_data(data, &split, 0.0).unwrap();
    let schema = &prepared.train[0].schema;
    for i in 0..schema.n_inputs() {
        let v: Vec<f64> = prepared.train.iter().flat_map(|d| d.input_row(i).to_vec()).collect();
        let (m, s) = mean_std(&v);
        assert!(m.abs() < 1e-6, "input {i}: mean {m}");
        assert!((s - 1.0).abs() < 1e-6, "input {i}: std {s}");
    }
}

#[test]
fn test_values_never_reach_training() {
    let data = small_benchmark();
    let split = LosoSplit::holding_out(2, 4).unwrap();
    let tcfg = TrainConfig {
        batch_size: 128,
        max_epochs: 3,
        max_steps_per_epoch: Some(2),
        patience: 1,
        ..quick()
    };
    let clean = train(ModelKind::Hstgnn, data, &split, 0, &tcfg, &small_models()).unwrap();
    let mut tampered = data.to_vec();
    tampered[2].values.fill(f64::NAN);
    let dirty = train(ModelKind::Hstgnn, &tampered, &split, 0, &tcfg, &small_models()).unwrap();
    assert_eq!(clean.checkpoint.to_json().unwrap(), dirty.checkpoint.to_json().unwrap());
    assert_eq!(clean.history, dirty.history);
}

#[test]
fn training_is_deterministic_and_independent_of_parallelism() {
    let data = small_benchmark();
    let split = LosoSplit::holding_out(0, 4).unwrap();
    let tcfg = TrainConfig {
        max_epochs: 2,
        max_steps_per_epoch: Some(2),
        chunk_size: 8,
        ..quick()
    };
    let run = |parallel: bool| {
        let t = TrainConfig { parallel, ..tcfg.clone() };
        train(ModelKind::Hstgnn, data, &split, 5, &t, &small_models()).unwrap()
    };
    let a = run(true);
    let b = run(true);
    let c = run(false);
    assert_eq!(a.checkpoint.tensors, b.checkpoint.tensors);
    assert_eq!(a.checkpoint.tensors, c.checkpoint.tensors);
    assert_eq!(a.history, c.history);
    let other = train(ModelKind::Hstgnn, data, &split, 6, &tcfg, &small_models()).unwrap();
    assert_ne!(a.checkpoint.tensors, other.checkpoint.tensors);
}

#[test]
fn checkpoints_round_trip() {
    let data = small_benchmark();
    let split = LosoSplit::holding_out(3, 4).unwrap();
    for kind in [ModelKind::Hstgnn, ModelKind::GruGcn] {
        let out = train(kind, data, &split, 1, &quick(), &small_models()).unwrap();
        let json = out.checkpoint.to_json().unwrap();
        let back = Checkpoint::from_json(&json).unwrap();
        assert_eq!(back, out.checkpoint);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        out.checkpoint.save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(loaded, out.checkpoint);
        let a = evaluate(&out.checkpoint, &data[3]).unwrap();
        let b = evaluate(&loaded, &data[3]).unwrap();
        assert_eq!(a.y_hat, b.y_hat);

        let mut bad = out.checkpoint.clone();
        bad.version += 1;
        assert!(Checkpoint::from_json(&bad.to_json().unwrap()).is_err());
        let mut bad = out.checkpoint.clone();
        bad.tensors[0].values.pop();
        assert!(Checkpoint::from_json(&bad.to_json().unwrap()).is_err());
        let mut bad = out.checkpoint.clone();
        bad.tensors[1].name.push('x');
        assert!(bad.build_model().is_err());
        let mut bad = out.checkpoint.clone();
        bad.format = "other".into();
        assert!(Checkpoint::from_json(&bad.to_json().unwrap()).is_err());
    }
}

#[test]
fn evaluation_of_perfect_predictions_has_zero_error() {
    let data = small_benchmark();
    let split = LosoSplit::holding_out(0, 4).unwrap();
    let prepared = prepare_training_data(data, &split, 0.1).unwrap();
    let oracle = Oracle {
        schema: data[0].schema.clone(),
        store: ParamStore::new(),
        targets: prepared.standardizer.targets.clone(),
    };
    let eval = evaluate_model(&oracle, &prepared.standardizer, &data[0], 32, ExecPolicy::Sequential).unwrap();
    assert_eq!(eval.metrics.len(), 6);
    assert_eq!(eval.steps.len(), 300 - 16 + 1);
    assert_eq!(eval.steps[0], 15);
    for m in &eval.metrics {
        assert!(m.rmse < 1e-9 && m.mae < 1e-9, "{m:?}");
        assert_eq!(m.count, 285);
    }
    for (k, col) in eval.y_true.columns().into_iter().enumerate() {
        let target = data[0].target_row(k);
        for (i, &v) in col.iter().enumerate() {
            assert_eq!(v, target[eval.steps[i]]);
        }
    }

    let mut other = data[0].clone();
    other.schema = other.schema.without_inputs_of(SensorType::Flow).unwrap();
    assert!(evaluate_model(&oracle, &prepared.standardizer, &other, 32, ExecPolicy::Sequential).is_err());
}

#[test]
fn trace_has_one_row_per_window_and_target() {
    let data = small_benchmark();
    let split = LosoSplit::holding_out(1, 4).unwrap();
    let out = train(ModelKind::Cnn1d, data, &split, 0, &quick(), &small_models()).unwrap();
    let eval = evaluate(&out.checkpoint, &data[1]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    eval.write_trace(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("step,target_id,y_true,y_hat"));
    assert_eq!(lines.count(), 285 * 6);
}

#[test]
fn experiment_matrix_aggregates_every_run() {
    let data = small_benchmark();
    let tcfg = TrainConfig {
        seeds: vec![0, 1, 2],
        ..quick()
    };
    let models = [
        ModelKind::Hstgnn,
        ModelKind::Lstm,
        ModelKind::Cnn1d,
        ModelKind::Gcn,
        ModelKind::Dgc,
        ModelKind::GruGcn,
    ];
    let report = run_experiment(&models, data, &tcfg, &small_models()).unwrap();
    assert_eq!(report.runs.len(), 4 * 6 * 3);
    assert_eq!(report.reference.len(), 4);
    assert_eq!(report.test_ids(), vec![0, 1, 2, 3]);

    for r in report.runs.iter().chain(&report.reference) {
        assert_eq!(r.metrics.len(), 6);
        for m in &r.metrics {
            assert!(m.rmse >= m.mae && m.mae >= 0.0);
            let sse = m.rmse * m.rmse * m.count as f64;
            assert!((sse - m.sse).abs() <= 1e-9 * m.sse.max(f64::MIN_POSITIVE));
        }
    }

    let summary = report.summary();
    assert_eq!(summary.len(), 4 * (6 + 1) * 6);
    for row in &summary {
        let k = report.target_ids.iter().position(|t| *t == row.target).unwrap();
        let source = if row.variant == TRAIN_MEAN { &report.reference } else { &report.runs };
        let rmse: Vec<f64> = source
            .iter()
            .filter(|r| r.variant == row.variant && r.test_id == row.test_id)
            .map(|r| r.metrics[k].rmse)
            .collect();
        let n = rmse.len() as f64;
        let mean = rmse.iter().sum::<f64>() / n;
        let std = (rmse.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert_eq!(row.seeds, rmse.len());
        assert!((row.rmse_mean - mean).abs() <= 1e-12 * mean.abs().max(1.0));
        assert!((row.rmse_std - std).abs() <= 1e-12 * mean.abs().max(1.0));
        assert!(row.rmse_mean >= row.mae_mean);
    }

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.csv");
    write_report(&report, &path).unwrap();
    let csv = std::fs::read_to_string(&path).unwrap();
    let header = csv.lines().next().unwrap();
    for col in ["rmse_mean", "rmse_std", "mae_mean", "mae_std"] {
        assert!(header.split(',').any(|c| c == col), "{header}");
    }
    assert_eq!(csv.lines().count(), 1 + summary.len());
    let table = std::fs::read_to_string(path.with_extension("txt")).unwrap();
    for id in &report.target_ids {
        assert!(table.contains(id.as_str()));
    }
    let runs = std::fs::read_to_string(path.with_extension("runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 1 + (72 + 4) * 6);
}

#[test]
fn ablation_drops_one_sensor_group_end_to_end() {
    let data = small_benchmark();
    for (variant, kind) in [
        (AblationVariant::NoTemperature, SensorType::Temperature),
        (AblationVariant::NoPressure, SensorType::Pressure),
        (AblationVariant::NoFlow, SensorType::Flow),
    ] {
        let projected = variant.project(data).unwrap();
        assert_eq!(variant.dropped(), Some(kind));
        for (p, d) in projected.iter().zip(data) {
            assert_eq!(p.schema.n_of(kind), 0);
            assert_eq!(p.schema.n_inputs(), d.schema.n_inputs() - d.schema.n_of(kind));
            assert_eq!(p.schema.d_out(), 6);
            for k in 0..6 {
                assert_eq!(p.target_row(k), d.target_row(k));
            }
        }
    }
    assert_eq!(AblationVariant::Simplified.model(), ModelKind::Simplified);
    assert_eq!("no_temperature".parse::<AblationVariant>().unwrap(), AblationVariant::NoTemperature);
    assert!("no_humidity".parse::<AblationVariant>().is_err());

    let report = run_ablation(AblationVariant::NoFlow, data, &quick(), &small_models()).unwrap();
    assert_eq!(report.runs.len(), 4);
    assert!(report.runs.iter().all(|r| r.variant == "no_flow"));
    for row in report.summary() {
        assert_eq!(row.seeds, 1);
        assert_eq!((row.rmse_std, row.mae_std), (0.0, 0.0));
    }
}

#[test]
fn divergence_aborts_with_a_numeric_error() {
    let data = small_benchmark();
    let split = LosoSplit::holding_out(0, 4).unwrap();
    let tcfg = TrainConfig {
        lr: 1e300,
        max_epochs: 3,
        max_steps_per_epoch: None,
        ..quick()
    };
    let err = train(ModelKind::Cnn1d, data, &split, 0, &tcfg, &small_models()).unwrap_err();
    assert!(matches!(err, Error::Numeric(_)), "{err}");
}

#[test]
fn a_fitted_model_does_better_on_its_training_conditions() {
    let data = benchmark(2000);
    let split = LosoSplit::holding_out(3, 4).unwrap();
    let tcfg = TrainConfig {
        batch_size: 128,
        max_epochs: 4,
        max_steps_per_epoch: Some(10),
        val_stride: 5,
        patience: 0,
        seeds: vec![0],
        ..TrainConfig::default()
    };
    let mut mcfg = ModelConfig::default();
    mcfg.hstgnn.d = 8;
    mcfg.hstgnn.d_h = 8;
    let out = train(ModelKind::Hstgnn, &data, &split, 0, &tcfg, &mcfg).unwrap();
    let losses: Vec<f64> = out.history.epochs.iter().map(|e| e.train_loss).collect();
    assert!(losses.iter().all(|l| l.is_finite()));
    assert!(losses.last().unwrap() < &losses[0], "{losses:?}");
    let mae = |id: usize| {
        let e = evaluate(&out.checkpoint, &data[id]).unwrap();
        e.metrics.iter().map(|m| m.mae).sum::<f64>()
    };
    assert!(mae(0) < mae(3));
}

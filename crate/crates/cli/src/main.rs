use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use hstgnn::data::{load_benchmark, loso_splits, save_benchmark, TimeSeriesDataset};
use hstgnn::harness::{
    evaluate, run_variants, summary_table, train, write_report, AblationVariant, Checkpoint, RunRecord, TrainConfig,
    Variant,
};
use hstgnn::model::{ModelConfig, ModelKind};
use hstgnn::sim::{build_default_topology, simulate_conditions, NoiseStd, OperatingCondition, SimConfig};

#[derive(Parser, Debug)]
#[command(name = "hstgnn", version, about = "Virtual smart metering with heterogeneous spatial-temporal GNNs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the four-regime synthetic benchmark.
    Simulate {
        /// Output directory (schema.csv, data_1.csv .. data_4.csv).
        #[arg(long)]
        out: PathBuf,
        /// Emitted steps per condition, after warm-up.
        #[arg(long, default_value_t = 20_000)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Temperature noise std in °C.
        #[arg(long)]
        noise_temp: Option<f64>,
        /// Pressure noise std in bar.
        #[arg(long)]
        noise_press: Option<f64>,
        /// Flow noise std in l/min.
        #[arg(long)]
        noise_flow: Option<f64>,
        /// Disable all measurement noise.
        #[arg(long, conflicts_with_all = ["noise_temp", "noise_press", "noise_flow"])]
        noise_free: bool,
        /// Discarded warm-up steps.
        #[arg(long)]
        warmup: Option<usize>,
        /// Boiler setpoint in °C.
        #[arg(long)]
        setpoint: Option<f64>,
        /// Boiler hysteresis band in °C.
        #[arg(long)]
        band: Option<f64>,
    },
    /// Train one model with one dataset held out.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "hstgnn")]
        model: ModelKind,
        /// Held-out dataset index (0-based over data_1.csv, data_2.csv, ...).
        #[arg(long)]
        test_dataset: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// TOML file with optional [train] and [model] tables.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Checkpoint path (JSON).
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on one dataset.
    Evaluate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        test_dataset: usize,
        /// Per-target metrics CSV.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Prediction trace CSV (step, target_id, y_true, y_hat).
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Leave-one-dataset-out comparison of several models over all seeds.
    Experiment {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "hstgnn,lstm,cnn1d,gcn,dgc,gru-gcn")]
        models: Vec<ModelKind>,
        /// Overrides the seeds of the config.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Held-out datasets to run; all when omitted.
        #[arg(long, value_delimiter = ',')]
        test_datasets: Option<Vec<usize>>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Summary CSV; the table and per-seed runs go next to it.
        #[arg(long)]
        report: PathBuf,
    },
    /// HSTGNN ablation against the full model.
    Ablate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        variant: AblationVariant,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long, value_delimiter = ',')]
        test_datasets: Option<Vec<usize>>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        report: PathBuf,
    },
    /// Finite-difference check of every differentiable component.
    Gradcheck,
}

#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Usage>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<hstgnn::Error>() {
            return match e {
                hstgnn::Error::InvalidArgument(_) => 1,
                hstgnn::Error::Numeric(_) => 3,
                _ => 2,
            };
        }
    }
    2
}

fn load_config(path: Option<&Path>) -> anyhow::Result<(TrainConfig, ModelConfig)> {
    let Some(path) = path else {
        return Ok((TrainConfig::default(), ModelConfig::default()));
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let mut table: toml::Table = text
        .parse()
        .map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let train = match table.remove("train") {
        Some(v) => v
            .try_into::<TrainConfig>()
            .map_err(|e| usage(format!("{}: [train]: {e}", path.display())))?,
        None => TrainConfig::default(),
    };
    let model = match table.remove("model") {
        Some(v) => v
            .try_into::<ModelConfig>()
            .map_err(|e| usage(format!("{}: [model]: {e}", path.display())))?,
        None => ModelConfig::default(),
    };
    if let Some(key) = table.keys().next() {
        return Err(usage(format!("{}: unknown table [{key}], expected [train] or [model]", path.display())));
    }
    train.validate()?;
    model.hstgnn.validate()?;
    Ok((train, model))
}

fn load_data(dir: &Path) -> anyhow::Result<Vec<TimeSeriesDataset>> {
    let (_, datasets) = load_benchmark(dir)?;
    eprintln!("loaded {} datasets from {}", datasets.len(), dir.display());
    Ok(datasets)
}

fn check_index(k: usize, n: usize) -> anyhow::Result<()> {
    if k >= n {
        return Err(usage(format!("--test-dataset {k} out of range, {n} datasets (0-based)")));
    }
    Ok(())
}

fn print_run(r: &RunRecord) {
    let rmse: Vec<String> = r.metrics.iter().map(|m| format!("{:.4}", m.rmse)).collect();
    eprintln!(
        "  {} held out {} seed {}: {} epochs (best {}), rmse [{}]",
        r.variant,
        r.test_id,
        r.seed,
        r.epochs,
        r.best_epoch,
        rmse.join(", ")
    );
}

#[allow(clippy::too_many_arguments)]
fn run_matrix(
    variants: &[Variant],
    data: &Path,
    seeds: Option<Vec<u64>>,
    test_datasets: Option<Vec<usize>>,
    config: Option<&Path>,
    report_path: &Path,
) -> anyhow::Result<()> {
    let (mut tcfg, mcfg) = load_config(config)?;
    if let Some(seeds) = seeds {
        tcfg.seeds = seeds;
    }
    tcfg.validate()?;
    let datasets = load_data(data)?;
    loso_splits(datasets.len())?;
    let ids = test_datasets.unwrap_or_else(|| (0..datasets.len()).collect());
    for &k in &ids {
        check_index(k, datasets.len())?;
    }
    let total = ids.len() * variants.len() * tcfg.seeds.len();
    eprintln!("{total} training runs");
    let start = Instant::now();
    let mut done = 0;
    let report = run_variants(variants, &datasets, &ids, &tcfg, &mcfg, &mut |r| {
        done += 1;
        eprint!("[{done}/{total} {:.0}s]", start.elapsed().as_secs_f64());
        print_run(r);
    })?;
    write_report(&report, report_path)?;
    print!("{}", summary_table(&report));
    eprintln!("report written to {}", report_path.display());
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Simulate {
            out,
            steps,
            seed,
            noise_temp,
            noise_press,
            noise_flow,
            noise_free,
            warmup,
            setpoint,
            band,
        } => {
            let mut cfg = SimConfig::with_emitted_steps(steps);
            if let Some(w) = warmup {
                cfg.warmup_steps = w;
                cfg.duration_steps = steps + w;
            }
            cfg.seed = seed;
            cfg.noise = if noise_free {
                NoiseStd::zero()
            } else {
                let d = NoiseStd::default();
                NoiseStd {
                    temperature: noise_temp.unwrap_or(d.temperature),
                    pressure: noise_press.unwrap_or(d.pressure),
                    flow: noise_flow.unwrap_or(d.flow),
                }
            };
            let conds = OperatingCondition::regimes().map(|mut c| {
                c.boiler_setpoint = setpoint.unwrap_or(c.boiler_setpoint);
                c.hysteresis_band = band.unwrap_or(c.hysteresis_band);
                c
            });
            let start = Instant::now();
            let outs = simulate_conditions(&build_default_topology(), &conds, &cfg)?;
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let datasets: Vec<TimeSeriesDataset> = outs.into_iter().map(|o| o.dataset).collect();
            save_benchmark(&datasets, &out)?;
            for (k, d) in datasets.iter().enumerate() {
                println!("data_{}.csv  {}  {} steps", k + 1, d.condition_label, d.len());
            }
            eprintln!("simulated in {:.1}s", start.elapsed().as_secs_f64());
        }
        Command::Train {
            data,
            model,
            test_dataset,
            seed,
            config,
            out,
        } => {
            let (tcfg, mcfg) = load_config(config.as_deref())?;
            let datasets = load_data(&data)?;
            check_index(test_dataset, datasets.len())?;
            let split = &loso_splits(datasets.len())?[test_dataset];
            eprintln!("training {model} with dataset {test_dataset} held out, seed {seed}");
            let start = Instant::now();
            let outcome = train(model, &datasets, split, seed, &tcfg, &mcfg)?;
            for e in &outcome.history.epochs {
                eprintln!(
                    "  epoch {:3}  train {:.5}  val {:.5}  steps {}",
                    e.epoch, e.train_loss, e.val_loss, e.steps
                );
            }
            outcome.checkpoint.save(&out)?;
            let history = out.with_extension("history.json");
            std::fs::write(&history, serde_json::to_string_pretty(&outcome.history)?)
                .with_context(|| format!("writing {}", history.display()))?;
            println!(
                "{} parameters, {} epochs, best epoch {}, {} optimizer steps, {:.1}s",
                outcome.checkpoint.tensors.iter().map(|t| t.values.len()).sum::<usize>(),
                outcome.history.epochs.len(),
                outcome.history.best_epoch,
                outcome.history.optimizer_steps,
                start.elapsed().as_secs_f64()
            );
            println!("checkpoint written to {}", out.display());
        }
        Command::Evaluate {
            ckpt,
            data,
            test_dataset,
            report,
            trace,
        } => {
            let checkpoint = Checkpoint::load(&ckpt)?;
            let datasets = load_data(&data)?;
            check_index(test_dataset, datasets.len())?;
            if test_dataset != checkpoint.split.test_id {
                eprintln!(
                    "warning: checkpoint was trained with dataset {} held out",
                    checkpoint.split.test_id
                );
            }
            let eval = evaluate(&checkpoint, &datasets[test_dataset])?;
            let width = eval.target_ids.iter().map(|t| t.len()).max().unwrap_or(0).max(6);
            println!("{:<width$}  {:>10}  {:>10}", "target", "RMSE", "MAE");
            for (t, m) in eval.target_ids.iter().zip(&eval.metrics) {
                println!("{t:<width$}  {:>10.5}  {:>10.5}", m.rmse, m.mae);
            }
            if let Some(path) = report {
                let mut text = String::from("target,rmse,mae,sse,count\n");
                for (t, m) in eval.target_ids.iter().zip(&eval.metrics) {
                    text.push_str(&format!("{t},{},{},{},{}\n", m.rmse, m.mae, m.sse, m.count));
                }
                std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
            }
            if let Some(path) = trace {
                eval.write_trace(&path)?;
            }
        }
        Command::Experiment {
            data,
            models,
            seeds,
            test_datasets,
            config,
            report,
        } => {
            if models.is_empty() {
                bail!(usage("--models is empty"));
            }
            let variants: Vec<Variant> = models.into_iter().map(Variant::Model).collect();
            run_matrix(&variants, &data, seeds, test_datasets, config.as_deref(), &report)?;
        }
        Command::Ablate {
            data,
            variant,
            seeds,
            test_datasets,
            config,
            report,
        } => {
            let mut variants = vec![Variant::Ablation(AblationVariant::Full)];
            if variant != AblationVariant::Full {
                variants.push(Variant::Ablation(variant));
            }
            run_matrix(&variants, &data, seeds, test_datasets, config.as_deref(), &report)?;
        }
        Command::Gradcheck => {
            let start = Instant::now();
            let outcomes = hstgnn::verify::gradient_suite();
            let mut failed = 0;
            for o in &outcomes {
                let status = if o.passed() { "ok" } else { "FAIL" };
                println!(
                    "{:<24} {:>6} coords  max rel err {:.3e}  (tol {:.0e})  {status}",
                    o.name, o.report.checked, o.report.max_rel_err, o.tolerance
                );
                failed += usize::from(!o.passed());
            }
            eprintln!("{:.1}s", start.elapsed().as_secs_f64());
            if failed > 0 {
                return Err(hstgnn::Error::Numeric(format!("{failed} gradient checks failed")).into());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

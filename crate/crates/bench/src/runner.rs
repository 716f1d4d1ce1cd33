//! Trains every seed of a run and writes the metric files.
//!
//! Output layout:
//! - `cells/<optimizer>-<variant>-seed<k>.csv`, one per seed
//! - `metrics.csv`, the cells merged in seed order
//! - `timing.csv`, wall-clock seconds per epoch (not deterministic)
//! - `summary.json`, mean and doubled standard error per epoch
//! - `meta.json`, the resolved configuration

use std::path::{Path, PathBuf};
use std::time::Instant;

use arturo::{Arturo, Baseline, Optimizer, StepDiagnostics};
use arturo_zoo::{
    load_cifar_binary, load_fashion_mnist, minibatch_indices, Dataset, Model, SyntheticQuadraticTask,
};
use serde::Serialize;

use crate::config::{OptimizerSpec, RunConfig, Task, Variant};
use crate::error::{io_err, BenchError, Result};
use crate::metrics::{summarize, write_csv, MetricsRow, Summary, TimingRow, STATUS_OK};
use crate::presets::PresetSet;

/// Command-line level overrides of a [`RunConfig`].
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seeds: Option<Vec<u64>>,
    pub out: Option<PathBuf>,
    pub variant: Option<Variant>,
    pub fixed_eta: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub out_dir: PathBuf,
    pub rows: Vec<MetricsRow>,
    pub timing: Vec<TimingRow>,
    pub summary: Summary,
    /// Multiplier of every trust-region step, per seed in run order.
    pub eta_trace: Vec<(u64, Vec<f64>)>,
}

#[derive(Debug, Serialize)]
struct Meta<'a> {
    package_version: &'static str,
    config: &'a RunConfig,
    optimizer: &'a OptimizerSpec,
    seeds: &'a [u64],
    milestones: Vec<usize>,
    data_dir: Option<PathBuf>,
    normalization: Option<arturo_zoo::Normalization>,
    train_samples: Option<usize>,
    test_samples: Option<usize>,
}

enum Workload {
    Images { model: Model, train: Dataset, test: Dataset },
    Quadratic,
}

struct SeedOutcome {
    rows: Vec<MetricsRow>,
    timing: Vec<TimingRow>,
    etas: Vec<f64>,
}

/// Loads the datasets named by the task.
pub fn load_task_data(task: Task, data_dir: &Path) -> Result<(Dataset, Dataset)> {
    let dir = data_dir.join(task.data_subdir());
    let pair = match task {
        Task::FashionMnist => load_fashion_mnist(&dir)?,
        Task::Cifar10 => load_cifar_binary(&dir, 10)?,
        Task::Cifar100 => load_cifar_binary(&dir, 100)?,
        Task::Quadratic => return Err(BenchError::Config("the quadratic task has no dataset".into())),
    };
    Ok(pair)
}

pub fn default_out_dir(cfg: &RunConfig) -> PathBuf {
    let name = cfg.name.clone().unwrap_or_else(|| cfg.task.id().to_string());
    Path::new("runs").join(name)
}

pub fn run(cfg: &RunConfig, opts: &RunOptions) -> Result<RunReport> {
    run_with_presets(cfg, opts, &PresetSet::builtin())
}

pub fn run_with_presets(cfg: &RunConfig, opts: &RunOptions, presets: &PresetSet) -> Result<RunReport> {
    cfg.validate()?;
    let seeds = opts.seeds.clone().unwrap_or_else(|| cfg.seeds.clone());
    if seeds.is_empty() {
        return Err(BenchError::Config("no seeds selected".into()));
    }
    let spec = cfg.optimizer_spec(presets, opts.variant, opts.fixed_eta)?;
    let out_dir = opts.out.clone().unwrap_or_else(|| default_out_dir(cfg));

    let (workload, data_dir) = match cfg.task {
        Task::Quadratic => (Workload::Quadratic, None),
        task => {
            let data_dir = cfg.resolved_data_dir();
            let (mut train, mut test) = load_task_data(task, &data_dir)?;
            if let Some(n) = cfg.train_limit {
                train = train.truncate(n);
            }
            if let Some(n) = cfg.test_limit {
                test = test.truncate(n);
            }
            let arch = cfg.model.arch(task).expect("image task");
            let model = Model::new(arch, cfg.loss)?;
            (Workload::Images { model, train, test }, Some(data_dir))
        }
    };

    let mut rows = Vec::new();
    let mut timing = Vec::new();
    let mut eta_trace = Vec::new();
    for &seed in &seeds {
        let outcome = run_seed(cfg, &spec, &workload, seed);
        let cell = out_dir.join("cells").join(format!("{}-{}-seed{seed}.csv", spec.name(), spec.variant()));
        write_csv(&cell, &outcome.rows)?;
        rows.extend(outcome.rows);
        timing.extend(outcome.timing);
        eta_trace.push((seed, outcome.etas));
    }

    write_csv(&out_dir.join("metrics.csv"), &rows)?;
    write_csv(&out_dir.join("timing.csv"), &timing)?;
    let summary = summarize(&rows);
    write_json(&out_dir.join("summary.json"), &summary)?;
    let (normalization, train_samples, test_samples) = match &workload {
        Workload::Images { train, test, .. } => (Some(train.normalization), Some(train.len()), Some(test.len())),
        Workload::Quadratic => (None, None, None),
    };
    let meta = Meta {
        package_version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        optimizer: &spec,
        seeds: &seeds,
        milestones: cfg.resolved_milestones(),
        data_dir,
        normalization,
        train_samples,
        test_samples,
    };
    write_json(&out_dir.join("meta.json"), &meta)?;
    Ok(RunReport { out_dir, rows, timing, summary, eta_trace })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(io_err(path))
}

fn build_optimizer(spec: &OptimizerSpec, params: &[f64]) -> Result<Box<dyn Optimizer>> {
    Ok(match spec {
        OptimizerSpec::Arturo(c) => Box::new(Arturo::new(c.clone(), params.to_vec())?),
        OptimizerSpec::Baseline(c) => Box::new(Baseline::new(c.clone(), params.len())?),
    })
}

#[derive(Default)]
struct EpochStats {
    loss_sum: f64,
    batches: usize,
    etas: Vec<f64>,
    c_mu_sum: f64,
    iters_sum: usize,
    clamps: u64,
}

impl EpochStats {
    fn record(&mut self, loss: f64, diag: Option<StepDiagnostics>) {
        self.loss_sum += loss;
        self.batches += 1;
        if let Some(d) = diag {
            self.etas.push(d.eta);
            self.c_mu_sum += d.c_mu;
            self.iters_sum += d.bisection_iters;
            self.clamps += d.clamped as u64;
        }
    }

    fn row(&self, spec: &OptimizerSpec, seed: u64, epoch: usize) -> MetricsRow {
        let steps = self.etas.len();
        let tr = steps > 0;
        MetricsRow {
            variant: spec.variant().into(),
            optimizer: spec.name().into(),
            seed,
            epoch,
            train_loss: (self.batches > 0).then(|| self.loss_sum / self.batches as f64),
            test_loss: None,
            test_accuracy: None,
            eta_star: tr.then(|| median(&self.etas)),
            c_mu: tr.then(|| self.c_mu_sum / steps as f64),
            bisection_iters: tr.then(|| self.iters_sum as f64 / steps as f64),
            clamp_count: tr.then_some(self.clamps),
            status: STATUS_OK.into(),
        }
    }
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Trains one seed. Failures end the seed with a status row instead of
/// aborting the run.
fn run_seed(cfg: &RunConfig, spec: &OptimizerSpec, workload: &Workload, seed: u64) -> SeedOutcome {
    let mut out = SeedOutcome { rows: Vec::new(), timing: Vec::new(), etas: Vec::new() };
    if let Err(e) = train_seed(cfg, spec, workload, seed, &mut out) {
        let epoch = out.rows.last().map_or(1, |r| r.epoch + 1);
        out.rows.push(MetricsRow {
            variant: spec.variant().into(),
            optimizer: spec.name().into(),
            seed,
            epoch,
            train_loss: None,
            test_loss: None,
            test_accuracy: None,
            eta_star: None,
            c_mu: None,
            bisection_iters: None,
            clamp_count: None,
            status: format!("failed: {e}"),
        });
    }
    out
}

fn train_seed(
    cfg: &RunConfig,
    spec: &OptimizerSpec,
    workload: &Workload,
    seed: u64,
    out: &mut SeedOutcome,
) -> Result<()> {
    let task = match workload {
        Workload::Quadratic => {
            let q = &cfg.quadratic;
            Some(SyntheticQuadraticTask::random(
                q.dim,
                q.d_min,
                q.d_max,
                q.noise,
                q.instance_seed.unwrap_or(seed),
            )?)
        }
        Workload::Images { .. } => None,
    };
    let mut params = match workload {
        Workload::Images { model, .. } => model.init_params(seed),
        Workload::Quadratic => vec![0.0; cfg.quadratic.dim],
    };
    let mut opt = build_optimizer(spec, &params)?;

    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let mut stats = EpochStats::default();
        match workload {
            Workload::Images { model, train, .. } => {
                for idx in minibatch_indices(train.len(), cfg.batch_size, seed, epoch as u64)? {
                    let batch = train.batch(&idx);
                    let (loss, grad) = model.loss_and_grad(&params, &batch)?;
                    if !loss.is_finite() {
                        return Err(BenchError::Config(format!("non-finite training loss at epoch {}", epoch + 1)));
                    }
                    let diag = opt.step(&mut params, &grad)?;
                    out.etas.extend(diag.map(|d| d.eta));
                    stats.record(loss, diag);
                }
            }
            Workload::Quadratic => {
                let task = task.as_ref().unwrap();
                let steps = cfg.quadratic.steps_per_epoch;
                for s in 0..steps {
                    let batch_seed = (seed << 32) ^ (epoch * steps + s) as u64;
                    let grad = task.grad_batch(&params, batch_seed, cfg.batch_size)?;
                    let loss = task.loss(&params);
                    let diag = opt.step(&mut params, &grad)?;
                    out.etas.extend(diag.map(|d| d.eta));
                    stats.record(loss, diag);
                }
            }
        }
        opt.on_epoch_end();

        let mut row = stats.row(spec, seed, epoch + 1);
        if (epoch + 1) % cfg.eval_every == 0 || epoch + 1 == cfg.epochs {
            match workload {
                Workload::Images { model, test, .. } => {
                    let (loss, acc) = evaluate(model, &params, test)?;
                    row.test_loss = Some(loss);
                    row.test_accuracy = Some(acc);
                }
                Workload::Quadratic => {
                    let task = task.as_ref().unwrap();
                    row.test_loss = Some(task.loss(&params));
                }
            }
        }
        out.timing.push(TimingRow {
            variant: row.variant.clone(),
            optimizer: row.optimizer.clone(),
            seed,
            epoch: epoch + 1,
            wall_seconds: started.elapsed().as_secs_f64(),
        });
        let finite = row.test_loss.is_none_or(f64::is_finite);
        out.rows.push(row);
        if !finite {
            return Err(BenchError::Config(format!("non-finite test loss at epoch {}", epoch + 1)));
        }
    }
    Ok(())
}

/// Mean loss and accuracy over a whole dataset.
pub fn evaluate(model: &Model, params: &[f64], data: &Dataset) -> Result<(f64, f64)> {
    let (mut loss, mut correct) = (0.0, 0.0);
    for batch in data.sequential_batches(1000) {
        let (l, a) = model.evaluate(params, &batch)?;
        loss += l * batch.len() as f64;
        correct += a * batch.len() as f64;
    }
    Ok((loss / data.len() as f64, correct / data.len() as f64))
}

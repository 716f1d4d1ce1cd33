//! Per-epoch metric rows and their aggregation across seeds.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{io_err, Result};

pub const STATUS_OK: &str = "ok";

/// One CSV row per (seed, epoch). Trust-region columns are empty for the
/// baselines; test columns are empty on epochs without evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub variant: String,
    pub optimizer: String,
    pub seed: u64,
    pub epoch: usize,
    pub train_loss: Option<f64>,
    pub test_loss: Option<f64>,
    pub test_accuracy: Option<f64>,
    /// Median multiplier over the epoch's steps.
    pub eta_star: Option<f64>,
    /// Mean mean-change term over the epoch's steps.
    pub c_mu: Option<f64>,
    /// Mean bisection iterations per step.
    pub bisection_iters: Option<f64>,
    /// Curvature entries clamped to zero, summed over the epoch.
    pub clamp_count: Option<u64>,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub variant: String,
    pub optimizer: String,
    pub seed: u64,
    pub epoch: usize,
    pub wall_seconds: f64,
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<std::result::Result<Vec<T>, _>>()?;
    Ok(rows)
}

/// Sample mean and doubled standard error `2·s/√n`; the error is `None` for
/// fewer than two values.
pub fn mean_2se(values: &[f64]) -> (Option<f64>, Option<f64>) {
    let n = values.len();
    if n == 0 {
        return (None, None);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (Some(mean), None);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (Some(mean), Some(2.0 * var.sqrt() / (n as f64).sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochSummary {
    pub epoch: usize,
    /// Seeds contributing to this epoch.
    pub seeds: usize,
    pub test_accuracy_mean: Option<f64>,
    pub test_accuracy_2se: Option<f64>,
    pub test_loss_mean: Option<f64>,
    pub test_loss_2se: Option<f64>,
    pub train_loss_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub variant: String,
    pub optimizer: String,
    pub seeds: Vec<u64>,
    pub failed_seeds: Vec<u64>,
    pub epochs: Vec<EpochSummary>,
}

impl GroupSummary {
    /// Last epoch that has test metrics.
    pub fn final_epoch(&self) -> Option<&EpochSummary> {
        self.epochs.iter().rev().find(|e| e.test_accuracy_mean.is_some() || e.test_loss_mean.is_some())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub groups: Vec<GroupSummary>,
}

impl Summary {
    pub fn group(&self, optimizer: &str, variant: &str) -> Option<&GroupSummary> {
        self.groups.iter().find(|g| g.optimizer == optimizer && g.variant == variant)
    }
}

/// Aggregates rows per (variant, optimizer) and epoch. Rows from seeds that
/// failed at any point are excluded from the statistics.
pub fn summarize(rows: &[MetricsRow]) -> Summary {
    let mut by_group: BTreeMap<(String, String), Vec<&MetricsRow>> = BTreeMap::new();
    for r in rows {
        by_group.entry((r.variant.clone(), r.optimizer.clone())).or_default().push(r);
    }
    let groups = by_group
        .into_iter()
        .map(|((variant, optimizer), rows)| {
            let mut seeds: Vec<u64> = rows.iter().map(|r| r.seed).collect();
            seeds.sort_unstable();
            seeds.dedup();
            let mut failed: Vec<u64> = rows.iter().filter(|r| r.status != STATUS_OK).map(|r| r.seed).collect();
            failed.sort_unstable();
            failed.dedup();
            let mut by_epoch: BTreeMap<usize, Vec<&MetricsRow>> = BTreeMap::new();
            for r in rows.iter().filter(|r| !failed.contains(&r.seed)) {
                by_epoch.entry(r.epoch).or_default().push(r);
            }
            let epochs = by_epoch
                .into_iter()
                .map(|(epoch, rs)| {
                    let col = |f: fn(&MetricsRow) -> Option<f64>| rs.iter().filter_map(|r| f(r)).collect::<Vec<_>>();
                    let acc = col(|r| r.test_accuracy);
                    let (test_accuracy_mean, test_accuracy_2se) = mean_2se(&acc);
                    let (test_loss_mean, test_loss_2se) = mean_2se(&col(|r| r.test_loss));
                    let (train_loss_mean, _) = mean_2se(&col(|r| r.train_loss));
                    EpochSummary {
                        epoch,
                        seeds: rs.len(),
                        test_accuracy_mean,
                        test_accuracy_2se,
                        test_loss_mean,
                        test_loss_2se,
                        train_loss_mean,
                    }
                })
                .collect();
            GroupSummary { variant, optimizer, seeds, failed_seeds: failed, epochs }
        })
        .collect();
    Summary { groups }
}

//! Benchmark harness: TOML run configs, seeded training loops over the model
//! zoo, CSV metrics with seed-level aggregation, and the tuned presets.

pub mod config;
pub mod error;
pub mod metrics;
pub mod presets;
pub mod runner;

pub use config::{ModelSpec, OptimizerSpec, QuadraticSpec, RunConfig, Task, Variant, DATA_DIR_ENV};
pub use error::{BenchError, Result};
pub use metrics::{mean_2se, read_csv, summarize, write_csv, MetricsRow, Summary, TimingRow};
pub use presets::{verify, PresetSet, VerifyReport};
pub use runner::{evaluate, load_task_data, run, run_with_presets, RunOptions, RunReport};

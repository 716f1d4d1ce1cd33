//! Tuned hyperparameter presets and their reference values.
//!
//! Presets ship as one TOML file per optimizer with a table per benchmark
//! column. [`verify`] checks them against the reference values compiled into
//! this module, which are maintained independently of the files.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::Serialize;

use crate::error::{io_err, BenchError, Result};

pub const OPTIMIZERS: [&str; 4] = ["arturo", "sgd", "adam", "adamw"];

pub const COLUMNS: [&str; 6] = [
    "fmnist-cnn",
    "fmnist-resnet18",
    "cifar10-cnn",
    "cifar10-resnet34",
    "cifar100-cnn",
    "cifar100-resnet34",
];

const ARTURO_FILE: &str = include_str!("../presets/arturo.toml");
const SGD_FILE: &str = include_str!("../presets/sgd.toml");
const ADAM_FILE: &str = include_str!("../presets/adam.toml");
const ADAMW_FILE: &str = include_str!("../presets/adamw.toml");

type Row = (&'static str, [f64; 6]);

const ARTURO_REF: &[Row] = &[
    ("epsilon", [0.085675, 0.085675, 0.002787, 0.007133, 0.002787, 0.007234]),
    ("rho", [0.058657, 0.058657, 0.296786, 1.597354, 0.296786, 1.676770]),
    ("r", [2.816791, 2.816791, 1.219750, 9.328440, 1.219750, 4.822032]),
    ("q", [0.017393, 0.017393, 0.002455, 0.089381, 0.002455, 0.009779]),
    ("weight_decay", [0.000002, 0.000002, 0.000000, 0.000703, 0.000000, 0.000000]),
];

const SGD_REF: &[Row] = &[
    ("learning_rate", [0.071049, 0.137031, 0.017834, 0.056480, 0.017834, 0.067994]),
    ("momentum", [0.865730, 0.854087, 0.946762, 0.866487, 0.946762, 0.867370]),
    ("weight_decay", [0.000225, 0.001963, 0.000163, 0.001697, 0.000163, 0.001800]),
];

const ADAM_REF: &[Row] = &[
    ("learning_rate", [0.001012, 0.045115, 0.001129, 0.006652, 0.001129, 0.001612]),
    ("beta1", [0.945256, 0.907895, 0.851157, 0.890313, 0.851157, 0.864582]),
    ("beta2", [0.990342, 0.999999, 0.998940, 0.999387, 0.998940, 0.999953]),
    ("weight_decay", [0.000000, 0.000002, 0.001090, 0.000447, 0.001090, 0.001941]),
];

const ADAMW_REF: &[Row] = &[
    ("learning_rate", [0.001004, 0.018744, 0.001129, 0.006652, 0.001129, 0.001245]),
    ("beta1", [0.922247, 0.862748, 0.851157, 0.890313, 0.851157, 0.858643]),
    ("beta2", [0.999945, 0.999999, 0.998940, 0.999387, 0.998940, 0.998802]),
    ("weight_decay", [0.000142, 0.000040, 0.001090, 0.000447, 0.001090, 0.001804]),
];

fn reference(optimizer: &str) -> &'static [Row] {
    match optimizer {
        "arturo" => ARTURO_REF,
        "sgd" => SGD_REF,
        "adam" => ADAM_REF,
        "adamw" => ADAMW_REF,
        _ => &[],
    }
}

/// Text of the shipped preset file for `optimizer`.
pub fn builtin(optimizer: &str) -> Option<&'static str> {
    match optimizer {
        "arturo" => Some(ARTURO_FILE),
        "sgd" => Some(SGD_FILE),
        "adam" => Some(ADAM_FILE),
        "adamw" => Some(ADAMW_FILE),
        _ => None,
    }
}

/// All preset tables, keyed by optimizer then column.
#[derive(Debug, Clone, PartialEq)]
pub struct PresetSet {
    tables: BTreeMap<String, toml::Table>,
}

impl PresetSet {
    pub fn builtin() -> Self {
        let tables = OPTIMIZERS
            .iter()
            .map(|&o| (o.to_string(), builtin(o).unwrap().parse::<toml::Table>().expect("shipped preset parses")))
            .collect();
        Self { tables }
    }

    /// Reads `<dir>/<optimizer>.toml` for every optimizer.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let mut tables = BTreeMap::new();
        for o in OPTIMIZERS {
            let path = dir.join(format!("{o}.toml"));
            let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
            let table = text.parse::<toml::Table>().map_err(|source| BenchError::Toml { path, source })?;
            tables.insert(o.to_string(), table);
        }
        Ok(Self { tables })
    }

    /// Hyperparameter table of `optimizer` for benchmark `column`.
    pub fn get(&self, optimizer: &str, column: &str) -> Option<&toml::Table> {
        self.tables.get(optimizer)?.get(column)?.as_table()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Mismatch {
    pub optimizer: &'static str,
    pub column: &'static str,
    pub key: &'static str,
    pub expected: f64,
    /// `None` when the key is missing or not a number.
    pub found: Option<f64>,
}

impl fmt::Display for Mismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let found = self.found.map_or_else(|| "missing".to_string(), |v| v.to_string());
        write!(f, "{}.{}.{}: expected {}, found {found}", self.optimizer, self.column, self.key, self.expected)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub checked: usize,
    pub mismatches: Vec<Mismatch>,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.mismatches.is_empty()
    }
}

fn as_f64(v: &toml::Value) -> Option<f64> {
    match v {
        toml::Value::Float(x) => Some(*x),
        toml::Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

/// Compares every reference value with the presets, exactly.
pub fn verify(presets: &PresetSet) -> VerifyReport {
    let mut checked = 0;
    let mut mismatches = Vec::new();
    for optimizer in OPTIMIZERS {
        for &(key, values) in reference(optimizer) {
            for (column, expected) in COLUMNS.into_iter().zip(values) {
                checked += 1;
                let found = presets.get(optimizer, column).and_then(|t| t.get(key)).and_then(as_f64);
                if found != Some(expected) {
                    mismatches.push(Mismatch { optimizer, column, key, expected, found });
                }
            }
        }
    }
    VerifyReport { checked, mismatches }
}

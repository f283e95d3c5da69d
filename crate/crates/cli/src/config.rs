//! TOML experiment configuration.

use std::path::{Path, PathBuf};

use ddr_core::bench::{BenchConfig, Method};
use ddr_core::datagen::{
    gen_classification, gen_regression1, gen_regression2, load_csv, Dataset, Reg1Model,
    Reg2Model, Scenario, Shape, Task, DEFAULT_CLASS_NOISE,
};
use ddr_core::trainer::TrainConfig;
use ddr_core::{DdrError, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    /// `regression1-{a,b}`, `regression2-{a,b,c}`, `circles`, `moons`,
    /// `gauss3d6` or `csv`.
    pub generator: String,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_scenario")]
    pub scenario: String,
    #[serde(default = "default_n_per_class")]
    pub n_per_class: usize,
    #[serde(default = "default_ambient")]
    pub ambient_dim: usize,
    #[serde(default = "default_noise")]
    pub noise: f64,
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub target_columns: Vec<usize>,
    #[serde(default)]
    pub has_header: bool,
    pub task: Option<Task>,
}

fn default_n() -> usize {
    10_000
}
fn default_sigma() -> f64 {
    0.1
}
fn default_scenario() -> String {
    "i".into()
}
fn default_n_per_class() -> usize {
    500
}
fn default_ambient() -> usize {
    100
}
fn default_noise() -> f64 {
    DEFAULT_CLASS_NOISE
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkSection {
    pub methods: Vec<Method>,
    pub folds: usize,
    pub slices: usize,
    pub knn_k: usize,
    pub reduced_dim: Option<usize>,
    pub standardize: bool,
    pub svg: bool,
}

impl Default for BenchmarkSection {
    fn default() -> Self {
        let b = BenchConfig::default();
        BenchmarkSection {
            methods: b.methods,
            folds: b.folds,
            slices: b.slices,
            knn_k: b.knn_k,
            reduced_dim: None,
            standardize: true,
            svg: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub dataset: DatasetSpec,
    /// Training overrides on top of the task's defaults.
    #[serde(default)]
    pub train: toml::Table,
    #[serde(default)]
    pub benchmark: BenchmarkSection,
    /// Checkpoint to continue training from.
    pub resume: Option<PathBuf>,
    #[serde(default = "default_true")]
    pub standardize: bool,
}

fn default_true() -> bool {
    true
}

pub fn cfg_err(msg: impl Into<String>) -> DdrError {
    DdrError::InvalidParameter(msg.into())
}

impl ExperimentConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| cfg_err(format!("{}: {e}", origin.display())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| DdrError::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Task-specific defaults with the `[train]` table applied on top.
    pub fn train_config(&self, task: Task) -> Result<TrainConfig> {
        let base = match task {
            Task::Regression => TrainConfig::regression(),
            Task::Classification => TrainConfig::classification(),
        };
        let mut value = toml::Table::try_from(&base).map_err(|e| cfg_err(e.to_string()))?;
        for (k, v) in &self.train {
            if !value.contains_key(k) && k != "rep_lr_schedule" {
                return Err(cfg_err(format!("unknown [train] key '{k}'")));
            }
            value.insert(k.clone(), v.clone());
        }
        let mut cfg: TrainConfig = toml::Value::Table(value)
            .try_into()
            .map_err(|e| cfg_err(format!("[train]: {e}")))?;
        if !self.train.contains_key("seed") {
            cfg.seed = self.seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn bench_config(&self, task: Task, threads: usize) -> Result<BenchConfig> {
        let b = &self.benchmark;
        Ok(BenchConfig {
            methods: b.methods.clone(),
            folds: b.folds,
            seed: self.seed,
            reduced_dim: b.reduced_dim,
            slices: b.slices,
            knn_k: b.knn_k,
            standardize: b.standardize,
            train: self.train_config(task)?,
            threads,
            keep_features: b.svg,
        })
    }

    pub fn dataset(&self) -> Result<Dataset> {
        let d = &self.dataset;
        let g = d.generator.to_ascii_lowercase();
        let seed = self.seed;
        if let Some(model) = g.strip_prefix("regression1-") {
            let model: Reg1Model = model.parse()?;
            return gen_regression1(model, d.n, d.sigma, seed);
        }
        if let Some(model) = g.strip_prefix("regression2-") {
            let model: Reg2Model = model.parse()?;
            let scenario: Scenario = d.scenario.parse()?;
            return gen_regression2(model, scenario, d.n, seed);
        }
        if g == "csv" {
            let path = d
                .path
                .as_ref()
                .ok_or_else(|| cfg_err("csv dataset needs 'path'"))?;
            let targets = if d.target_columns.is_empty() {
                return Err(cfg_err("csv dataset needs 'target_columns'"));
            } else {
                &d.target_columns
            };
            return load_csv(path, targets, d.has_header, d.task.unwrap_or(Task::Regression));
        }
        match g.parse::<Shape>() {
            Ok(shape) => gen_classification(shape, d.n_per_class, d.ambient_dim, d.noise, seed),
            Err(_) => Err(cfg_err(format!("unknown generator '{}'", d.generator))),
        }
    }
}

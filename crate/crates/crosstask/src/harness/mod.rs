//! End-to-end experiment harness: configuration, the synthetic dual corpus,
//! hyperparameter tuning and the full split/sample/relate/tune/train/evaluate
//! protocol with table output.

mod run;
mod synth;
mod tune;

pub use run::{run_experiment, AuditedDataset, CellKey, ExperimentOutcome};
pub use synth::generate_synthetic_dual_corpus;
pub use tune::{tune_hyperparams, CellContext, LambdaGrids, TunedLambdas};

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::learners::Regime;
use crate::optim::OptConfig;

/// Optimizer settings exposed through the experiment config.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct OptimizerSettings {
    pub step_size: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for OptimizerSettings {
    fn default() -> OptimizerSettings {
        let base = OptConfig::default();
        OptimizerSettings {
            step_size: base.step_size,
            max_iters: base.max_iters,
            tol: base.tol,
        }
    }
}

impl OptimizerSettings {
    pub fn to_config(self, lambda1: f64, lambda2: f64, lambda3: f64, seed: u64) -> OptConfig {
        OptConfig {
            step_size: self.step_size,
            max_iters: self.max_iters,
            tol: self.tol,
            lambda1,
            lambda2,
            lambda3,
            seed,
        }
    }
}

fn default_distribution_sizes() -> Vec<usize> {
    vec![25, 250]
}

fn default_k_values() -> Vec<usize> {
    vec![2, 3, 4, 5, 6]
}

fn default_lambda_grid() -> Vec<f64> {
    vec![1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0]
}

fn default_runs() -> usize {
    5
}

fn default_base_seed() -> u64 {
    42
}

fn default_regimes() -> Vec<Regime> {
    Regime::ALL.to_vec()
}

fn default_true() -> bool {
    true
}

/// Full experiment description, loadable from JSON.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ExperimentConfig {
    pub s1_path: PathBuf,
    pub s2_path: PathBuf,
    #[serde(default = "default_distribution_sizes")]
    pub distribution_sizes: Vec<usize>,
    #[serde(default = "default_k_values")]
    pub k_values: Vec<usize>,
    #[serde(default = "default_lambda_grid")]
    pub lambda1_grid: Vec<f64>,
    #[serde(default = "default_lambda_grid")]
    pub lambda2_grid: Vec<f64>,
    #[serde(default = "default_lambda_grid")]
    pub lambda3_grid: Vec<f64>,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default = "default_base_seed")]
    pub base_seed: u64,
    #[serde(default = "default_regimes")]
    pub regimes: Vec<Regime>,
    pub output_dir: PathBuf,
    /// Scale every document to unit length at ingest.
    #[serde(default)]
    pub l2_normalize: bool,
    /// Scale centroids to unit length before the neighbor search.
    #[serde(default)]
    pub normalize_centroids: bool,
    /// Tie lambda1 = lambda2 when tuning the joint regimes, keeping the grid
    /// tractable.
    #[serde(default = "default_true")]
    pub tie_mtl_l2: bool,
    #[serde(default)]
    pub optimizer: OptimizerSettings,
}

impl ExperimentConfig {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::Config("runs must be >= 1".into()));
        }
        if self.distribution_sizes.is_empty() || self.distribution_sizes.contains(&0) {
            return Err(Error::Config(
                "distribution_sizes must be non-empty and positive".into(),
            ));
        }
        if self.regimes.is_empty() {
            return Err(Error::Config("regimes must be non-empty".into()));
        }
        let needs_k = self.regimes.iter().any(|r| r.uses_k());
        if needs_k && (self.k_values.is_empty() || self.k_values.contains(&0)) {
            return Err(Error::Config(
                "k_values must be non-empty and positive".into(),
            ));
        }
        for (name, grid) in [
            ("lambda1_grid", &self.lambda1_grid),
            ("lambda2_grid", &self.lambda2_grid),
            ("lambda3_grid", &self.lambda3_grid),
        ] {
            if grid.is_empty() {
                return Err(Error::Config(format!("{name} must be non-empty")));
            }
            if grid.iter().any(|&l| l < 0.0 || !l.is_finite()) {
                return Err(Error::Config(format!(
                    "{name} must hold finite non-negative values"
                )));
            }
        }
        Ok(())
    }
}

/// One aggregated metric cell of the results table.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub regime: Regime,
    pub k: usize,
    pub distribution: usize,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub stderr: f64,
}

/// Mean per-class training seconds for one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct TimingRow {
    pub regime: Regime,
    pub k: usize,
    pub distribution: usize,
    pub seconds_per_class: f64,
}

/// Aggregated experiment output: one metric row per (regime, k,
/// distribution) and one timing row per cell.
#[derive(Debug, Clone, Default)]
pub struct ResultsTable {
    pub rows: Vec<ResultRow>,
    pub timings: Vec<TimingRow>,
}

impl ResultsTable {
    pub fn metric_mean(
        &self,
        regime: Regime,
        k: usize,
        distribution: usize,
        metric: &str,
    ) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| {
                r.regime == regime && r.k == k && r.distribution == distribution && r.metric == metric
            })
            .map(|r| r.mean)
    }

    pub fn seconds_per_class(
        &self,
        regime: Regime,
        k: usize,
        distribution: usize,
    ) -> Option<f64> {
        self.timings
            .iter()
            .find(|t| t.regime == regime && t.k == k && t.distribution == distribution)
            .map(|t| t.seconds_per_class)
    }

    /// `regime,k,distribution,metric,mean,std,stderr` with fixed 6-decimal
    /// formatting, so identical runs produce identical bytes.
    pub fn write_results_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        writeln!(out, "regime,k,distribution,metric,mean,std,stderr")
            .map_err(|e| Error::io(path, e))?;
        for row in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{:.6},{:.6},{:.6}",
                row.regime, row.k, row.distribution, row.metric, row.mean, row.std, row.stderr
            )
            .map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }

    /// `regime,k,distribution,seconds_per_class`.
    pub fn write_timings_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        writeln!(out, "regime,k,distribution,seconds_per_class")
            .map_err(|e| Error::io(path, e))?;
        for row in &self.timings {
            writeln!(
                out,
                "{},{},{},{:.6}",
                row.regime, row.k, row.distribution, row.seconds_per_class
            )
            .map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }
}

/// Sample mean, sample standard deviation (n-1) and standard error; a single
/// observation has zero spread.
pub(crate) fn mean_std_stderr(values: &[f64]) -> (f64, f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    let std = var.sqrt();
    (mean, std, std / (n as f64).sqrt())
}

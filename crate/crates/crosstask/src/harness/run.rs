//! The experiment driver: per run, split 3:1:1, draw the distribution
//! samples, relate classes, tune, retrain and evaluate on the held-out test
//! part, then aggregate means and spreads across runs.
//!
//! The test partitions are wrapped in an access-counting guard; nothing may
//! touch them until the evaluation phase, and the outcome reports any
//! premature read.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicUsize, Ordering};

use crate::corpus::{
    compute_centroids, parse_sparse_dataset_with, sample_distribution, split_dataset, Dataset,
};
use crate::error::{Error, Result};
use crate::harness::{
    mean_std_stderr, CellContext, ExperimentConfig, LambdaGrids, ResultRow, ResultsTable,
    TimingRow,
};
use crate::learners::{train_regime, Regime, TrainedModel};
use crate::metrics::evaluate;
use crate::relatedness::{knn_related_with, NeighborMap};
use crate::seeding;

/// One cell of the experiment grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct CellKey {
    pub regime: Regime,
    pub k: usize,
    pub distribution: usize,
}

impl std::fmt::Display for CellKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/k={}/{}", self.regime, self.k, self.distribution)
    }
}

/// A dataset behind a read counter. Every access to the underlying data goes
/// through [`AuditedDataset::read`] and is counted.
pub struct AuditedDataset {
    data: Dataset,
    reads: AtomicUsize,
}

impl AuditedDataset {
    pub fn new(data: Dataset) -> AuditedDataset {
        AuditedDataset {
            data,
            reads: AtomicUsize::new(0),
        }
    }

    /// Number of reads so far.
    pub fn reads(&self) -> usize {
        self.reads.load(Ordering::SeqCst)
    }

    /// Counted access to the wrapped dataset.
    pub fn read(&self) -> &Dataset {
        self.reads.fetch_add(1, Ordering::SeqCst);
        &self.data
    }
}

/// Everything a finished experiment reports.
#[derive(Debug)]
pub struct ExperimentOutcome {
    pub table: ResultsTable,
    /// Cells that failed, with the run number and reason; completed cells are
    /// unaffected.
    pub failed_cells: Vec<(CellKey, String)>,
    /// Reads of the test partitions observed before an evaluation phase;
    /// 0 when the protocol held.
    pub test_reads_before_eval: usize,
}

impl ExperimentOutcome {
    pub fn all_cells_completed(&self) -> bool {
        self.failed_cells.is_empty()
    }
}

fn restrict_to_classes(data: &Dataset, classes: &BTreeSet<u32>) -> Dataset {
    let indices: Vec<usize> = (0..data.len())
        .filter(|&idx| classes.contains(&data.examples()[idx].class_id))
        .collect();
    data.subset(&indices)
}

fn model_classes(model: &TrainedModel, source: crate::corpus::Source) -> BTreeSet<u32> {
    model
        .theta
        .columns()
        .keys()
        .filter(|id| id.source == source && !id.is_pooled())
        .map(|id| id.class_id)
        .collect()
}

/// Test-set metrics averaged over the two sources, in `named_metrics` order.
fn test_metrics(
    model: &TrainedModel,
    test_s1: &Dataset,
    test_s2: &Dataset,
) -> Result<[(&'static str, f64); 5]> {
    let mut combined: Option<[(&'static str, f64); 5]> = None;
    for test in [test_s1, test_s2] {
        let classes = model_classes(model, test.source());
        let restricted = restrict_to_classes(test, &classes);
        let predictions = model.predict_dataset(&restricted)?;
        let truth: Vec<u32> = restricted.examples().iter().map(|e| e.class_id).collect();
        let report = evaluate(&predictions, &truth, &classes)?;
        let named = report.named_metrics();
        combined = Some(match combined {
            None => named,
            Some(mut acc) => {
                for (slot, (_, value)) in acc.iter_mut().zip(named) {
                    slot.1 = (slot.1 + value) / 2.0;
                }
                acc
            }
        });
    }
    Ok(combined.expect("two sources evaluated"))
}

/// Runs the full protocol described by `cfg` and writes `results.csv` and
/// `timings.csv` into the output directory. A failing stage aborts only the
/// cells that depend on it.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let s1_full = parse_sparse_dataset_with(&cfg.s1_path, crate::corpus::Source::S1, cfg.l2_normalize)?;
    let s2_full = parse_sparse_dataset_with(&cfg.s2_path, crate::corpus::Source::S2, cfg.l2_normalize)?;
    let n_features = s1_full.dimension().max(s2_full.dimension());

    let grids = LambdaGrids {
        lambda1: &cfg.lambda1_grid,
        lambda2: &cfg.lambda2_grid,
        lambda3: &cfg.lambda3_grid,
        tie_mtl_l2: cfg.tie_mtl_l2,
    };

    let mut metric_acc: BTreeMap<CellKey, BTreeMap<&'static str, Vec<f64>>> = BTreeMap::new();
    let mut timing_acc: BTreeMap<CellKey, Vec<f64>> = BTreeMap::new();
    let mut run_rows: Vec<RunRow> = Vec::new();
    let mut failed_cells: Vec<(CellKey, String)> = Vec::new();
    let mut test_reads_before_eval = 0usize;

    let ks_for = |regime: Regime| -> Vec<usize> {
        if regime.uses_k() {
            cfg.k_values.clone()
        } else {
            vec![0]
        }
    };

    for run in 1..=cfg.runs as u64 {
        let run_seed = cfg.base_seed.wrapping_add(run);
        let (s1_train, s1_val, s1_test) =
            split_dataset(&s1_full, seeding::derive(run_seed, &[seeding::TAG_RUN, 1]))?;
        let (s2_train, s2_val, s2_test) =
            split_dataset(&s2_full, seeding::derive(run_seed, &[seeding::TAG_RUN, 2]))?;
        let test_s1 = AuditedDataset::new(s1_test);
        let test_s2 = AuditedDataset::new(s2_test);
        let mut expected_reads = 0usize;

        for &size in &cfg.distribution_sizes {
            let fail_all = |reason: &str, failed: &mut Vec<(CellKey, String)>| {
                for &regime in &cfg.regimes {
                    for k in ks_for(regime) {
                        failed.push((
                            CellKey {
                                regime,
                                k,
                                distribution: size,
                            },
                            format!("run {run}: {reason}"),
                        ));
                    }
                }
            };

            let sample_seed = seeding::derive(run_seed, &[seeding::TAG_RUN, 3]);
            let (s1_dist, s2_dist) = match (
                sample_distribution(&s1_train, size, sample_seed),
                sample_distribution(&s2_train, size, sample_seed),
            ) {
                (Ok(a), Ok(b)) => (a, b),
                (Err(e), _) | (_, Err(e)) => {
                    log::error!("run {run}, size {size}: sampling failed: {e}");
                    fail_all(&format!("sampling failed: {e}"), &mut failed_cells);
                    continue;
                }
            };

            let s1_classes: BTreeSet<u32> = s1_dist.classes().into_iter().collect();
            let s2_classes: BTreeSet<u32> = s2_dist.classes().into_iter().collect();
            let s1_val_r = restrict_to_classes(&s1_val, &s1_classes);
            let s2_val_r = restrict_to_classes(&s2_val, &s2_classes);
            let centroids_s1 = compute_centroids(&s1_dist);
            let centroids_s2 = compute_centroids(&s2_dist);

            let mut neighbor_cache: BTreeMap<usize, NeighborMap> = BTreeMap::new();
            let mut neighbor_map = |k: usize| -> Result<NeighborMap> {
                if let Some(map) = neighbor_cache.get(&k) {
                    return Ok(map.clone());
                }
                let forward =
                    knn_related_with(&centroids_s1, &centroids_s2, k, cfg.normalize_centroids)?;
                let backward =
                    knn_related_with(&centroids_s2, &centroids_s1, k, cfg.normalize_centroids)?;
                let merged = NeighborMap::merge(&forward, &backward)?;
                neighbor_cache.insert(k, merged.clone());
                Ok(merged)
            };

            // training phase: the test partitions stay untouched
            let mut trained: Vec<(CellKey, TrainedModel)> = Vec::new();
            for &regime in &cfg.regimes {
                for k in ks_for(regime) {
                    let cell = CellKey {
                        regime,
                        k,
                        distribution: size,
                    };
                    let neighbors = if k == 0 {
                        None
                    } else {
                        match neighbor_map(k) {
                            Ok(map) => Some(map),
                            Err(e) => {
                                log::error!("run {run}, cell {cell}: {e}");
                                failed_cells.push((cell, format!("run {run}: {e}")));
                                continue;
                            }
                        }
                    };
                    let ctx = CellContext {
                        s1_dist: &s1_dist,
                        s2_dist: &s2_dist,
                        s1_val: &s1_val_r,
                        s2_val: &s2_val_r,
                        neighbors: neighbors.as_ref(),
                        n_features,
                        optimizer: cfg.optimizer,
                        seed: run_seed,
                    };
                    let tuned = match crate::harness::tune_hyperparams(regime, &ctx, &grids) {
                        Ok(tuned) => tuned,
                        Err(e) => {
                            log::error!("run {run}, cell {cell}: tuning failed: {e}");
                            failed_cells.push((cell, format!("run {run}: tuning failed: {e}")));
                            continue;
                        }
                    };
                    let final_cfg = cfg.optimizer.to_config(
                        tuned.lambda1,
                        tuned.lambda2,
                        tuned.lambda3,
                        run_seed,
                    );
                    match train_regime(regime, &ctx.regime_data(), &final_cfg) {
                        Ok(model) => trained.push((cell, model)),
                        Err(e) => {
                            log::error!("run {run}, cell {cell}: training failed: {e}");
                            failed_cells.push((cell, format!("run {run}: training failed: {e}")));
                        }
                    }
                }
            }

            // protocol audit: no test reads may have happened yet
            let reads_now = test_s1.reads() + test_s2.reads();
            let excess = reads_now.saturating_sub(expected_reads);
            if excess > 0 {
                log::error!("run {run}, size {size}: {excess} premature test read(s)");
                test_reads_before_eval += excess;
            }

            // evaluation phase
            for (cell, model) in trained {
                let t1 = test_s1.read();
                let t2 = test_s2.read();
                expected_reads += 2;
                match test_metrics(&model, t1, t2) {
                    Ok(named) => {
                        let slot = metric_acc.entry(cell).or_default();
                        for (name, value) in named {
                            slot.entry(name).or_default().push(value);
                        }
                        run_rows.push((cell, run, named));
                        timing_acc
                            .entry(cell)
                            .or_default()
                            .push(model.seconds_per_class());
                    }
                    Err(e) => {
                        log::error!("run {run}, cell {cell}: evaluation failed: {e}");
                        failed_cells.push((cell, format!("run {run}: evaluation failed: {e}")));
                    }
                }
            }
        }
    }

    let mut table = ResultsTable::default();
    for (cell, metrics) in &metric_acc {
        for name in ["micro_f1", "map", "mar", "maf1", "amcc"] {
            if let Some(values) = metrics.get(name) {
                let (mean, std, stderr) = mean_std_stderr(values);
                table.rows.push(ResultRow {
                    regime: cell.regime,
                    k: cell.k,
                    distribution: cell.distribution,
                    metric: name.to_string(),
                    mean,
                    std,
                    stderr,
                });
            }
        }
    }
    for (cell, seconds) in &timing_acc {
        let (mean, _, _) = mean_std_stderr(seconds);
        table.timings.push(TimingRow {
            regime: cell.regime,
            k: cell.k,
            distribution: cell.distribution,
            seconds_per_class: mean,
        });
    }

    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
    table.write_results_csv(cfg.output_dir.join("results.csv"))?;
    table.write_timings_csv(cfg.output_dir.join("timings.csv"))?;
    write_run_rows(&run_rows, cfg.output_dir.join("runs.csv"))?;

    Ok(ExperimentOutcome {
        table,
        failed_cells,
        test_reads_before_eval,
    })
}

/// One cell's metrics for one run, in `named_metrics` order.
type RunRow = (CellKey, u64, [(&'static str, f64); 5]);

/// Per-run detail rows backing the aggregated table: one CSV row per
/// (regime, k, distribution, run) with the full metric suite.
fn write_run_rows(rows: &[RunRow], path: std::path::PathBuf) -> Result<()> {
    use std::io::Write;
    let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut out = std::io::BufWriter::new(file);
    writeln!(out, "regime,k,distribution,run,micro_f1,map,mar,maf1,amcc")
        .map_err(|e| Error::io(&path, e))?;
    for (cell, run, metrics) in rows {
        write!(
            out,
            "{},{},{},{run}",
            cell.regime, cell.k, cell.distribution
        )
        .map_err(|e| Error::io(&path, e))?;
        for (_, value) in metrics {
            write!(out, ",{value:.6}").map_err(|e| Error::io(&path, e))?;
        }
        writeln!(out).map_err(|e| Error::io(&path, e))?;
    }
    out.flush().map_err(|e| Error::io(&path, e))
}

//! Scratch calibration runs (ignored by default; invoked explicitly while
//! sizing the acceptance corpus).

use std::time::Instant;

use crosstask::corpus::write_sparse_dataset;
use crosstask::harness::{
    generate_synthetic_dual_corpus, run_experiment, ExperimentConfig, OptimizerSettings,
};
use crosstask::learners::Regime;

fn report(label: &str, outcome: &crosstask::harness::ExperimentOutcome, elapsed: f64) {
    println!("=== {label} ({elapsed:.1}s total) ===");
    for row in &outcome.table.rows {
        if row.metric == "micro_f1" {
            println!(
                "{:8} k={} micro_f1 = {:.4} (+-{:.4})",
                row.regime.to_string(),
                row.k,
                row.mean,
                row.std
            );
        }
    }
    for t in &outcome.table.timings {
        println!(
            "{:8} k={} seconds_per_class = {:.4}",
            t.regime.to_string(),
            t.k,
            t.seconds_per_class
        );
    }
    assert!(outcome.all_cells_completed(), "{:?}", outcome.failed_cells);
}

fn write_corpus(dir: &std::path::Path, examples: usize) -> (std::path::PathBuf, std::path::PathBuf) {
    let (s1, s2) = generate_synthetic_dual_corpus(20, examples, 2000, 0.8, 20250809).unwrap();
    let p1 = dir.join("s1.txt");
    let p2 = dir.join("s2.txt");
    write_sparse_dataset(&s1, &p1).unwrap();
    write_sparse_dataset(&s2, &p2).unwrap();
    (p1, p2)
}

fn base_config(s1: std::path::PathBuf, s2: std::path::PathBuf, out: std::path::PathBuf) -> ExperimentConfig {
    ExperimentConfig {
        s1_path: s1,
        s2_path: s2,
        distribution_sizes: vec![25],
        k_values: vec![2],
        lambda1_grid: vec![0.01, 0.1, 1.0],
        lambda2_grid: vec![0.1, 1.0],
        lambda3_grid: vec![1.0, 10.0],
        runs: 3,
        base_seed: 100,
        regimes: vec![Regime::Stl, Regime::Ssl, Regime::MtlNpa, Regime::MtlIna],
        output_dir: out,
        l2_normalize: false,
        normalize_centroids: false,
        tie_mtl_l2: true,
        optimizer: OptimizerSettings {
            step_size: 1.0,
            max_iters: 1000,
            tol: 1e-6,
        },
    }
}

#[test]
#[ignore]
fn calibrate_ld_trend() {
    let dir = tempfile::tempdir().unwrap();
    let (p1, p2) = write_corpus(dir.path(), 45);
    let cfg = base_config(p1, p2, dir.path().join("out"));
    let start = Instant::now();
    let outcome = run_experiment(&cfg).unwrap();
    report("LD calibration", &outcome, start.elapsed().as_secs_f64());
}

#[test]
#[ignore]
fn calibrate_ld_k6() {
    let dir = tempfile::tempdir().unwrap();
    let (p1, p2) = write_corpus(dir.path(), 45);
    let mut cfg = base_config(p1, p2, dir.path().join("out"));
    cfg.k_values = vec![6];
    cfg.regimes = vec![Regime::MtlNpa];
    let start = Instant::now();
    let outcome = run_experiment(&cfg).unwrap();
    report("LD k=6 calibration", &outcome, start.elapsed().as_secs_f64());
}

#[test]
#[ignore]
fn calibrate_hd_trend() {
    let dir = tempfile::tempdir().unwrap();
    let (p1, p2) = write_corpus(dir.path(), 420);
    let mut cfg = base_config(p1, p2, dir.path().join("out"));
    cfg.distribution_sizes = vec![250];
    cfg.regimes = vec![Regime::Stl, Regime::MtlNpa];
    cfg.runs = 2;
    cfg.optimizer.max_iters = 400;
    let start = Instant::now();
    let outcome = run_experiment(&cfg).unwrap();
    report("HD calibration", &outcome, start.elapsed().as_secs_f64());
}

//! Command-line front end: ingest, split, sample, knn, tune, train, evaluate,
//! experiment and synth subcommands over the library. Logs go to stderr;
//! structured output (JSON summaries, CSV tables) goes to stdout or files.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crosstask::corpus::{
    compute_centroids, parse_sparse_dataset_with, sample_indices, split_indices,
    write_sparse_dataset, Dataset, Source, SplitPart,
};
use crosstask::error::{Error, Result};
use crosstask::harness::{
    generate_synthetic_dual_corpus, run_experiment, tune_hyperparams, CellContext,
    ExperimentConfig, LambdaGrids, OptimizerSettings,
};
use crosstask::learners::{train_regime_run, Regime, RegimeData};
use crosstask::metrics::evaluate;
use crosstask::persist;
use crosstask::relatedness::{knn_related_with, NeighborMap};

#[derive(Parser)]
#[command(
    name = "crosstask",
    version,
    about = "Coupled one-versus-rest text classification across two class taxonomies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct OptimizerArgs {
    /// Initial (and maximum) line-search step size
    #[arg(long, default_value_t = 1.0)]
    step_size: f64,
    /// Gradient-descent iteration cap
    #[arg(long, default_value_t = 1000)]
    max_iters: usize,
    /// Relative objective-decrease stopping tolerance
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
}

impl OptimizerArgs {
    fn settings(&self) -> OptimizerSettings {
        OptimizerSettings {
            step_size: self.step_size,
            max_iters: self.max_iters,
            tol: self.tol,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a sparse dataset, printing a JSON summary
    Ingest {
        input: PathBuf,
        #[arg(long, default_value = "S1")]
        source: Source,
        /// Scale every document to unit length
        #[arg(long)]
        l2_normalize: bool,
    },
    /// Stratified 3:1:1 split into train/val/test files plus a manifest
    Split {
        input: PathBuf,
        #[arg(long, default_value = "S1")]
        source: Source,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Draw a fixed-size-per-class distribution sample from a training file
    Sample {
        input: PathBuf,
        #[arg(long, default_value = "S1")]
        source: Source,
        /// Examples per retained class (25 = LD, 250 = HD)
        #[arg(long)]
        size: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Optional `example_index,part` manifest
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Nearest classes across the two sources, as CSV
    Knn {
        #[arg(long)]
        s1: PathBuf,
        #[arg(long)]
        s2: PathBuf,
        #[arg(long)]
        k: usize,
        /// Scale centroids to unit length before comparing
        #[arg(long)]
        normalize_centroids: bool,
        #[arg(long)]
        l2_normalize: bool,
        /// Output file; stdout when omitted
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Grid-search the regularization weights on a validation split
    Tune {
        #[arg(long)]
        regime: Regime,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long)]
        s1_train: PathBuf,
        #[arg(long)]
        s2_train: PathBuf,
        #[arg(long)]
        s1_val: PathBuf,
        #[arg(long)]
        s2_val: PathBuf,
        /// Comma-separated candidate values
        #[arg(long, default_value = "0.0001,0.001,0.01,0.1,1,10,100", value_parser = parse_grid)]
        lambda1_grid: std::vec::Vec<f64>,
        #[arg(long, default_value = "0.0001,0.001,0.01,0.1,1,10,100", value_parser = parse_grid)]
        lambda2_grid: std::vec::Vec<f64>,
        #[arg(long, default_value = "0.0001,0.001,0.01,0.1,1,10,100", value_parser = parse_grid)]
        lambda3_grid: std::vec::Vec<f64>,
        /// Search the joint regimes with lambda2 = lambda1
        #[arg(long, default_value_t = true)]
        tie_mtl_l2: bool,
        #[arg(long)]
        normalize_centroids: bool,
        #[arg(long)]
        l2_normalize: bool,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[command(flatten)]
        optimizer: OptimizerArgs,
    },
    /// Train one regime on two distribution samples and save the model
    Train {
        #[arg(long)]
        regime: Regime,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long)]
        s1: PathBuf,
        #[arg(long)]
        s2: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        lambda1: f64,
        #[arg(long, default_value_t = 0.1)]
        lambda2: f64,
        #[arg(long, default_value_t = 0.1)]
        lambda3: f64,
        #[arg(long)]
        normalize_centroids: bool,
        #[arg(long)]
        l2_normalize: bool,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also export the weights as `task_id,feature_id,weight` CSV
        #[arg(long)]
        export_csv: Option<PathBuf>,
        /// Dump per-optimization `iter,objective,step_size` traces here
        #[arg(long)]
        trace_dir: Option<PathBuf>,
        #[command(flatten)]
        optimizer: OptimizerArgs,
    },
    /// Evaluate a saved model on a labeled dataset, printing a JSON report
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "S1")]
        source: Source,
        #[arg(long)]
        l2_normalize: bool,
        /// Report file; stdout when omitted
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full experiment protocol from a JSON config
    Experiment {
        #[arg(long)]
        config: PathBuf,
    },
    /// Generate a synthetic dual corpus with paired classes
    Synth {
        #[arg(long, default_value_t = 20)]
        classes: usize,
        #[arg(long, default_value_t = 45)]
        examples: usize,
        #[arg(long, default_value_t = 2000)]
        dim: usize,
        /// Fraction of each document drawn from the class pair's shared topic
        #[arg(long, default_value_t = 0.8)]
        overlap: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn parse_grid(s: &str) -> std::result::Result<Vec<f64>, String> {
    let values: Vec<f64> = s
        .split(',')
        .filter(|part| !part.trim().is_empty())
        .map(|part| part.trim().parse::<f64>().map_err(|e| e.to_string()))
        .collect::<std::result::Result<_, _>>()?;
    if values.is_empty() {
        return Err("empty grid".to_string());
    }
    Ok(values)
}

fn restrict_to_classes(data: &Dataset, classes: &BTreeSet<u32>) -> Dataset {
    let indices: Vec<usize> = (0..data.len())
        .filter(|&idx| classes.contains(&data.examples()[idx].class_id))
        .collect();
    if indices.len() < data.len() {
        log::warn!(
            "{}: dropped {} example(s) from classes outside the model/train scope",
            data.source(),
            data.len() - indices.len()
        );
    }
    data.subset(&indices)
}

fn merged_neighbors(s1: &Dataset, s2: &Dataset, k: usize, normalize: bool) -> Result<NeighborMap> {
    let c1 = compute_centroids(s1);
    let c2 = compute_centroids(s2);
    NeighborMap::merge(
        &knn_related_with(&c1, &c2, k, normalize)?,
        &knn_related_with(&c2, &c1, k, normalize)?,
    )
}

fn dataset_summary_json(ds: &Dataset) -> serde_json::Value {
    let sizes: Vec<usize> = ds.class_index().values().map(Vec::len).collect();
    serde_json::json!({
        "source": ds.source().to_string(),
        "examples": ds.len(),
        "classes": ds.n_classes(),
        "dimension": ds.dimension(),
        "min_class_size": sizes.iter().min().copied().unwrap_or(0),
        "max_class_size": sizes.iter().max().copied().unwrap_or(0),
    })
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Ingest {
            input,
            source,
            l2_normalize,
        } => {
            let ds = parse_sparse_dataset_with(&input, source, l2_normalize)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&dataset_summary_json(&ds)).unwrap()
            );
        }
        Command::Split {
            input,
            source,
            seed,
            out_dir,
        } => {
            let ds = parse_sparse_dataset_with(&input, source, false)?;
            let idx = split_indices(&ds, seed)?;
            std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
            write_sparse_dataset(&ds.subset(&idx.train), out_dir.join("train.txt"))?;
            write_sparse_dataset(&ds.subset(&idx.val), out_dir.join("val.txt"))?;
            write_sparse_dataset(&ds.subset(&idx.test), out_dir.join("test.txt"))?;
            let mut parts: Vec<(usize, SplitPart)> = Vec::with_capacity(ds.len());
            parts.extend(idx.train.iter().map(|&i| (i, SplitPart::Train)));
            parts.extend(idx.val.iter().map(|&i| (i, SplitPart::Val)));
            parts.extend(idx.test.iter().map(|&i| (i, SplitPart::Test)));
            parts.sort_unstable_by_key(|&(i, _)| i);
            persist::write_manifest(&parts, out_dir.join("manifest.csv"))?;
            log::info!(
                "split {} examples into {}/{}/{}",
                ds.len(),
                idx.train.len(),
                idx.val.len(),
                idx.test.len()
            );
        }
        Command::Sample {
            input,
            source,
            size,
            seed,
            out,
            manifest,
        } => {
            let ds = parse_sparse_dataset_with(&input, source, false)?;
            let (kept, dropped) = sample_indices(&ds, size, seed)?;
            if !dropped.is_empty() {
                log::warn!("dropped {} class(es) below {size} examples: {dropped:?}", dropped.len());
            }
            write_sparse_dataset(&ds.subset(&kept), &out)?;
            if let Some(manifest_path) = manifest {
                let kept_set: BTreeSet<usize> = kept.iter().copied().collect();
                let parts: Vec<(usize, &str)> = (0..ds.len())
                    .map(|i| (i, if kept_set.contains(&i) { "sampled" } else { "excluded" }))
                    .collect();
                persist::write_labeled_manifest(&parts, manifest_path)?;
            }
        }
        Command::Knn {
            s1,
            s2,
            k,
            normalize_centroids,
            l2_normalize,
            out,
        } => {
            let ds1 = parse_sparse_dataset_with(&s1, Source::S1, l2_normalize)?;
            let ds2 = parse_sparse_dataset_with(&s2, Source::S2, l2_normalize)?;
            let map = merged_neighbors(&ds1, &ds2, k, normalize_centroids)?;
            match out {
                Some(path) => persist::write_neighbor_csv(&map, path)?,
                None => print!("{}", persist::neighbor_csv(&map)),
            }
        }
        Command::Tune {
            regime,
            k,
            s1_train,
            s2_train,
            s1_val,
            s2_val,
            lambda1_grid,
            lambda2_grid,
            lambda3_grid,
            tie_mtl_l2,
            normalize_centroids,
            l2_normalize,
            seed,
            optimizer,
        } => {
            let s1 = parse_sparse_dataset_with(&s1_train, Source::S1, l2_normalize)?;
            let s2 = parse_sparse_dataset_with(&s2_train, Source::S2, l2_normalize)?;
            let v1 = parse_sparse_dataset_with(&s1_val, Source::S1, l2_normalize)?;
            let v2 = parse_sparse_dataset_with(&s2_val, Source::S2, l2_normalize)?;
            let v1 = restrict_to_classes(&v1, &s1.classes().into_iter().collect());
            let v2 = restrict_to_classes(&v2, &s2.classes().into_iter().collect());
            let neighbors = if regime.uses_k() {
                Some(merged_neighbors(&s1, &s2, k, normalize_centroids)?)
            } else {
                None
            };
            let ctx = CellContext {
                s1_dist: &s1,
                s2_dist: &s2,
                s1_val: &v1,
                s2_val: &v2,
                neighbors: neighbors.as_ref(),
                n_features: s1.dimension().max(s2.dimension()),
                optimizer: optimizer.settings(),
                seed,
            };
            let grids = LambdaGrids {
                lambda1: &lambda1_grid,
                lambda2: &lambda2_grid,
                lambda3: &lambda3_grid,
                tie_mtl_l2,
            };
            let tuned = tune_hyperparams(regime, &ctx, &grids)?;
            println!(
                "{}",
                serde_json::json!({
                    "regime": regime.to_string(),
                    "k": if regime.uses_k() { k } else { 0 },
                    "lambda1": tuned.lambda1,
                    "lambda2": tuned.lambda2,
                    "lambda3": tuned.lambda3,
                    "val_micro_f1": tuned.val_micro_f1,
                })
            );
        }
        Command::Train {
            regime,
            k,
            s1,
            s2,
            lambda1,
            lambda2,
            lambda3,
            normalize_centroids,
            l2_normalize,
            seed,
            out,
            export_csv,
            trace_dir,
            optimizer,
        } => {
            let ds1 = parse_sparse_dataset_with(&s1, Source::S1, l2_normalize)?;
            let ds2 = parse_sparse_dataset_with(&s2, Source::S2, l2_normalize)?;
            let neighbors = if regime.uses_k() {
                Some(merged_neighbors(&ds1, &ds2, k, normalize_centroids)?)
            } else {
                None
            };
            let cfg = optimizer
                .settings()
                .to_config(lambda1, lambda2, lambda3, seed);
            let data = RegimeData {
                s1: &ds1,
                s2: &ds2,
                n_features: ds1.dimension().max(ds2.dimension()),
                neighbors: neighbors.as_ref(),
            };
            let run = train_regime_run(regime, &data, &cfg)?;
            persist::save_model(&run.model, &out)?;
            if let Some(csv_path) = export_csv {
                persist::export_model_csv(&run.model, csv_path)?;
            }
            if let Some(dir) = trace_dir {
                std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                for (label, descent) in &run.traces {
                    let name = format!("trace_{}.csv", label.replace(':', "_"));
                    persist::write_trace_csv(descent, dir.join(name))?;
                }
            }
            println!(
                "{}",
                serde_json::json!({
                    "regime": regime.to_string(),
                    "k": run.model.k,
                    "columns": run.model.theta.n_columns(),
                    "dimension": run.model.theta.dimension(),
                    "seconds_per_class": run.model.seconds_per_class(),
                    "model": out,
                })
            );
        }
        Command::Evaluate {
            model,
            data,
            source,
            l2_normalize,
            out,
        } => {
            let trained = persist::load_model(&model)?;
            let ds = parse_sparse_dataset_with(&data, source, l2_normalize)?;
            let classes: BTreeSet<u32> = trained
                .theta
                .columns()
                .keys()
                .filter(|id| id.source == source && !id.is_pooled())
                .map(|id| id.class_id)
                .collect();
            let restricted = restrict_to_classes(&ds, &classes);
            let predictions = trained.predict_dataset(&restricted)?;
            let truth: Vec<u32> = restricted.examples().iter().map(|e| e.class_id).collect();
            let report = evaluate(&predictions, &truth, &classes)?;
            match out {
                Some(path) => persist::write_eval_report(&report, path)?,
                None => println!("{}", serde_json::to_string_pretty(&report).unwrap()),
            }
        }
        Command::Experiment { config } => {
            let cfg = ExperimentConfig::from_json_file(&config)?;
            let outcome = run_experiment(&cfg)?;
            let summary = serde_json::json!({
                "cells_failed": outcome.failed_cells.len(),
                "test_reads_before_eval": outcome.test_reads_before_eval,
                "results": cfg.output_dir.join("results.csv"),
                "timings": cfg.output_dir.join("timings.csv"),
            });
            println!("{summary}");
            if !outcome.all_cells_completed() {
                for (cell, reason) in &outcome.failed_cells {
                    log::error!("cell {cell} failed: {reason}");
                }
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Synth {
            classes,
            examples,
            dim,
            overlap,
            seed,
            out_dir,
        } => {
            let (ds1, ds2) = generate_synthetic_dual_corpus(classes, examples, dim, overlap, seed)?;
            std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
            write_sparse_dataset(&ds1, out_dir.join("s1.txt"))?;
            write_sparse_dataset(&ds2, out_dir.join("s2.txt"))?;
            log::info!(
                "wrote {} + {} documents to {}",
                ds1.len(),
                ds2.len(),
                out_dir.display()
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}

//! Exhaustive grid search over the regularization weights, maximizing
//! validation micro-F1.

use crate::corpus::Dataset;
use crate::error::{Error, Result};
use crate::harness::OptimizerSettings;
use crate::learners::{train_regime, Regime, RegimeData, TrainedModel};
use crate::metrics::evaluate;
use crate::relatedness::NeighborMap;

/// Everything a tuning (or final training) cell needs: the two training
/// distribution samples, validation parts restricted to the sampled classes,
/// the merged neighbor map and the shared feature-space size.
pub struct CellContext<'a> {
    pub s1_dist: &'a Dataset,
    pub s2_dist: &'a Dataset,
    pub s1_val: &'a Dataset,
    pub s2_val: &'a Dataset,
    pub neighbors: Option<&'a NeighborMap>,
    pub n_features: usize,
    pub optimizer: OptimizerSettings,
    pub seed: u64,
}

impl<'a> CellContext<'a> {
    pub fn regime_data(&self) -> RegimeData<'a> {
        RegimeData {
            s1: self.s1_dist,
            s2: self.s2_dist,
            n_features: self.n_features,
            neighbors: self.neighbors,
        }
    }
}

/// Candidate grids; `tie_mtl_l2` searches the joint regimes with
/// lambda2 = lambda1.
#[derive(Debug, Clone, Copy)]
pub struct LambdaGrids<'a> {
    pub lambda1: &'a [f64],
    pub lambda2: &'a [f64],
    pub lambda3: &'a [f64],
    pub tie_mtl_l2: bool,
}

/// Winning cell of a grid search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TunedLambdas {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub val_micro_f1: f64,
}

fn candidate_cells(regime: Regime, grids: &LambdaGrids<'_>) -> Vec<(f64, f64, f64)> {
    let mut cells = Vec::new();
    match regime {
        Regime::Stl | Regime::Ssl => {
            for &l1 in grids.lambda1 {
                cells.push((l1, 0.0, 0.0));
            }
        }
        Regime::TlNpa | Regime::TlIna => {
            for &l1 in grids.lambda1 {
                for &l2 in grids.lambda2 {
                    cells.push((l1, l2, 0.0));
                }
            }
        }
        Regime::MtlNpa | Regime::MtlIna => {
            if grids.tie_mtl_l2 {
                for &l in grids.lambda1 {
                    for &l3 in grids.lambda3 {
                        cells.push((l, l, l3));
                    }
                }
            } else {
                for &l1 in grids.lambda1 {
                    for &l2 in grids.lambda2 {
                        for &l3 in grids.lambda3 {
                            cells.push((l1, l2, l3));
                        }
                    }
                }
            }
        }
    }
    // ties resolve toward the lexicographically smallest (lambda3, lambda2,
    // lambda1): iterate in that order and replace only on a strict improvement
    cells.sort_by(|a, b| {
        (a.2, a.1, a.0)
            .partial_cmp(&(b.2, b.1, b.0))
            .expect("grids are finite")
    });
    cells.dedup();
    cells
}

/// Validation micro-F1 of `model`, averaged over the two sources.
pub(crate) fn validation_micro_f1(
    model: &TrainedModel,
    s1_val: &Dataset,
    s2_val: &Dataset,
) -> Result<f64> {
    let mut scores = Vec::with_capacity(2);
    for val in [s1_val, s2_val] {
        let predictions = model.predict_dataset(val)?;
        let truth: Vec<u32> = val.examples().iter().map(|e| e.class_id).collect();
        let classes = model
            .theta
            .columns()
            .keys()
            .filter(|id| id.source == val.source() && !id.is_pooled())
            .map(|id| id.class_id)
            .collect();
        scores.push(evaluate(&predictions, &truth, &classes)?.micro_f1);
    }
    Ok((scores[0] + scores[1]) / 2.0)
}

/// Trains every grid cell and keeps the one with the best validation
/// micro-F1. Cells that fail to train are skipped with a warning; if all
/// fail, tuning fails.
pub fn tune_hyperparams(
    regime: Regime,
    ctx: &CellContext<'_>,
    grids: &LambdaGrids<'_>,
) -> Result<TunedLambdas> {
    let cells = candidate_cells(regime, grids);
    let mut best: Option<TunedLambdas> = None;
    for (l1, l2, l3) in cells {
        let cfg = ctx.optimizer.to_config(l1, l2, l3, ctx.seed);
        let model = match train_regime(regime, &ctx.regime_data(), &cfg) {
            Ok(model) => model,
            Err(err) => {
                log::warn!("{regime} cell (l1={l1}, l2={l2}, l3={l3}) failed: {err}");
                continue;
            }
        };
        let score = match validation_micro_f1(&model, ctx.s1_val, ctx.s2_val) {
            Ok(score) => score,
            Err(err) => {
                log::warn!("{regime} cell (l1={l1}, l2={l2}, l3={l3}) eval failed: {err}");
                continue;
            }
        };
        let candidate = TunedLambdas {
            lambda1: l1,
            lambda2: l2,
            lambda3: l3,
            val_micro_f1: score,
        };
        match best {
            Some(current) if candidate.val_micro_f1 <= current.val_micro_f1 => {}
            _ => best = Some(candidate),
        }
    }
    best.ok_or(Error::TuningFailed)
}

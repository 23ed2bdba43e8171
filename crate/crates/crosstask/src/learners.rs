//! The six training regimes and multi-class prediction.
//!
//! Every regime assembles an [`ObjectiveSpec`](crate::optim::ObjectiveSpec)
//! and hands it to the shared optimizer:
//!
//! - STL: each task alone, loss + `lambda1 |theta|^2`.
//! - SSL: STL with positives augmented by the k neighbor classes' examples
//!   from the other source.
//! - TL-NPA / TL-INA: neighbor models trained first and frozen, then the
//!   target task is pulled toward them with weight `lambda2` (one pooled
//!   anchor for NPA, k individual anchors for INA).
//! - MTL-NPA / MTL-INA: one joint problem over all columns of both sources,
//!   coupled with weight `lambda3`; NPA adds a pooled surrogate column per
//!   original task, INA couples originals to each other directly.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rayon::prelude::*;

use crate::corpus::{build_tasks, BinaryTask, Dataset, Source, TaskId};
use crate::error::{Error, Result};
use crate::optim::{
    minimize_objective, Coupling, CouplingTarget, Descent, ModelMatrix, ModelVector, ObjectiveSpec,
    OptConfig, TaskTerm,
};
use crate::relatedness::NeighborMap;
use crate::sparse::SparseVector;

/// Training regime.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize,
)]
pub enum Regime {
    #[serde(rename = "STL")]
    Stl,
    #[serde(rename = "SSL")]
    Ssl,
    #[serde(rename = "TL-NPA")]
    TlNpa,
    #[serde(rename = "TL-INA")]
    TlIna,
    #[serde(rename = "MTL-NPA")]
    MtlNpa,
    #[serde(rename = "MTL-INA")]
    MtlIna,
}

impl Regime {
    pub const ALL: [Regime; 6] = [
        Regime::Stl,
        Regime::Ssl,
        Regime::TlNpa,
        Regime::TlIna,
        Regime::MtlNpa,
        Regime::MtlIna,
    ];

    /// Whether the regime depends on the neighbor structure at all.
    pub fn uses_k(self) -> bool {
        self != Regime::Stl
    }

    /// Whether the coupling weight is lambda2 (transfer) or lambda3 (joint).
    pub fn coupling_lambda(self) -> Option<&'static str> {
        match self {
            Regime::Stl | Regime::Ssl => None,
            Regime::TlNpa | Regime::TlIna => Some("lambda2"),
            Regime::MtlNpa | Regime::MtlIna => Some("lambda3"),
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Regime::Stl => "STL",
            Regime::Ssl => "SSL",
            Regime::TlNpa => "TL-NPA",
            Regime::TlIna => "TL-INA",
            Regime::MtlNpa => "MTL-NPA",
            Regime::MtlIna => "MTL-INA",
        };
        write!(f, "{name}")
    }
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Regime> {
        match s.to_ascii_uppercase().as_str() {
            "STL" => Ok(Regime::Stl),
            "SSL" => Ok(Regime::Ssl),
            "TL-NPA" => Ok(Regime::TlNpa),
            "TL-INA" => Ok(Regime::TlIna),
            "MTL-NPA" => Ok(Regime::MtlNpa),
            "MTL-INA" => Ok(Regime::MtlIna),
            other => Err(Error::Config(format!("unknown regime {other:?}"))),
        }
    }
}

/// A trained model: one weight column per task in the regime's scope.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub regime: Regime,
    /// Neighbor count, 0 for STL.
    pub k: usize,
    pub theta: ModelMatrix,
    pub config: OptConfig,
    pub neighbor_map: Option<NeighborMap>,
    pub per_task_train_seconds: BTreeMap<TaskId, f64>,
}

impl TrainedModel {
    /// Classifies `x` within `source`'s taxonomy.
    pub fn predict(&self, source: Source, x: &SparseVector) -> Result<u32> {
        predict(&self.theta, source, x)
    }

    /// Predictions for every example of `data`, in order.
    pub fn predict_dataset(&self, data: &Dataset) -> Result<Vec<u32>> {
        data.examples()
            .iter()
            .map(|e| self.predict(data.source(), &e.features))
            .collect()
    }

    /// Mean training seconds per original task.
    pub fn seconds_per_class(&self) -> f64 {
        if self.per_task_train_seconds.is_empty() {
            return 0.0;
        }
        self.per_task_train_seconds.values().sum::<f64>()
            / self.per_task_train_seconds.len() as f64
    }
}

/// Argmax of `<theta_c, [x;1]>` over `source`'s original columns; ties go to
/// the lower class id.
pub fn predict(theta: &ModelMatrix, source: Source, x: &SparseVector) -> Result<u32> {
    let mut best: Option<(u32, f64)> = None;
    for (id, column) in theta.columns() {
        if id.source != source || id.is_pooled() {
            continue;
        }
        let score = column.score(x);
        match best {
            Some((_, best_score)) if score <= best_score => {}
            _ => best = Some((id.class_id, score)),
        }
    }
    best.map(|(class, _)| class).ok_or(Error::EmptyModel)
}

fn check_task_sides(task: &BinaryTask) -> Result<()> {
    if task.positives.is_empty() || task.negatives.is_empty() {
        return Err(Error::EmptyTaskSide(task.task_id.to_string()));
    }
    Ok(())
}

fn single_column_init(id: TaskId, n_features: usize) -> ModelMatrix {
    ModelMatrix::zeros_for(&[id], n_features + 1)
}

/// Regularized logistic regression for one task alone.
pub fn train_stl(
    task: &BinaryTask,
    data: &Dataset,
    n_features: usize,
    cfg: &OptConfig,
) -> Result<ModelVector> {
    train_stl_traced(task, data, n_features, cfg).map(|(theta, _)| theta)
}

pub(crate) fn train_stl_traced(
    task: &BinaryTask,
    data: &Dataset,
    n_features: usize,
    cfg: &OptConfig,
) -> Result<(ModelVector, Descent)> {
    check_task_sides(task)?;
    let spec = ObjectiveSpec::new(vec![TaskTerm::from_task(task, data, cfg.lambda1)]);
    let init = single_column_init(task.task_id, n_features);
    let (matrix, descent) = minimize_objective(&spec, init, cfg)?;
    Ok((matrix.column(&task.task_id).unwrap().clone(), descent))
}

/// Other-source example indices contributed by the task's k neighbor classes,
/// de-duplicated and sorted.
pub(crate) fn ssl_positive_indices(
    task_id: &TaskId,
    neighbors: &NeighborMap,
    other_source: &Dataset,
) -> Result<Vec<usize>> {
    let list = neighbors
        .neighbors(task_id)
        .ok_or_else(|| Error::MissingNeighbors {
            task: task_id.to_string(),
        })?;
    let mut indices = BTreeSet::new();
    for &(class, _) in list {
        let members = other_source
            .class_examples(class)
            .ok_or(Error::MissingNeighborClass { class })?;
        indices.extend(members.iter().copied());
    }
    Ok(indices.into_iter().collect())
}

/// STL on the task with its positives augmented by every example of the k
/// neighbor classes from the other source.
pub fn train_ssl(
    task: &BinaryTask,
    data: &Dataset,
    neighbors: &NeighborMap,
    other_source: &Dataset,
    n_features: usize,
    cfg: &OptConfig,
) -> Result<ModelVector> {
    train_ssl_traced(task, data, neighbors, other_source, n_features, cfg).map(|(theta, _)| theta)
}

pub(crate) fn train_ssl_traced(
    task: &BinaryTask,
    data: &Dataset,
    neighbors: &NeighborMap,
    other_source: &Dataset,
    n_features: usize,
    cfg: &OptConfig,
) -> Result<(ModelVector, Descent)> {
    check_task_sides(task)?;
    let borrowed = ssl_positive_indices(&task.task_id, neighbors, other_source)?;
    let mut examples: Vec<(&SparseVector, f64)> =
        Vec::with_capacity(task.n_t() + borrowed.len());
    for &idx in &task.positives {
        examples.push((&data.examples()[idx].features, 1.0));
    }
    for &idx in &borrowed {
        examples.push((&other_source.examples()[idx].features, 1.0));
    }
    for &idx in &task.negatives {
        examples.push((&data.examples()[idx].features, -1.0));
    }
    let spec = ObjectiveSpec::new(vec![TaskTerm {
        id: task.task_id,
        examples,
        l2: cfg.lambda1,
    }]);
    let init = single_column_init(task.task_id, n_features);
    let (matrix, descent) = minimize_objective(&spec, init, cfg)?;
    Ok((matrix.column(&task.task_id).unwrap().clone(), descent))
}

/// Builds the pooled surrogate task for `for_task`: the union of its
/// neighbor classes' examples versus the rest of the other source's sample.
pub fn build_pooled_task(
    for_task: TaskId,
    neighbor_classes: &[(u32, f64)],
    other_source: &Dataset,
) -> Result<BinaryTask> {
    if other_source.source() != for_task.source.other() {
        return Err(Error::Config(format!(
            "pooled task for {for_task} must come from source {}",
            for_task.source.other()
        )));
    }
    let mut positives = BTreeSet::new();
    for &(class, _) in neighbor_classes {
        let members = other_source
            .class_examples(class)
            .ok_or(Error::MissingNeighborClass { class })?;
        positives.extend(members.iter().copied());
    }
    let positives: Vec<usize> = positives.into_iter().collect();
    let positive_set: BTreeSet<usize> = positives.iter().copied().collect();
    let negatives: Vec<usize> = (0..other_source.len())
        .filter(|idx| !positive_set.contains(idx))
        .collect();
    let id = TaskId::pooled(other_source.source(), for_task.class_id);
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::DegeneratePooledTask(id.to_string()));
    }
    Ok(BinaryTask {
        task_id: id,
        positives,
        negatives,
    })
}

/// Transfer with a pooled anchor: the pooled model is trained first (STL on
/// the pooled task) and frozen, then the target minimizes
/// loss + `lambda1 |theta|^2` + `lambda2 |theta - theta_pooled|^2`.
pub fn train_tl_npa(
    task: &BinaryTask,
    data: &Dataset,
    pooled_task: &BinaryTask,
    other_source: &Dataset,
    n_features: usize,
    cfg: &OptConfig,
) -> Result<ModelVector> {
    train_tl_npa_traced(task, data, pooled_task, other_source, n_features, cfg)
        .map(|(theta, _, _)| theta)
}

pub(crate) fn train_tl_npa_traced(
    task: &BinaryTask,
    data: &Dataset,
    pooled_task: &BinaryTask,
    other_source: &Dataset,
    n_features: usize,
    cfg: &OptConfig,
) -> Result<(ModelVector, Descent, ModelVector)> {
    check_task_sides(task)?;
    if pooled_task.positives.is_empty() || pooled_task.negatives.is_empty() {
        return Err(Error::DegeneratePooledTask(pooled_task.task_id.to_string()));
    }
    let theta_pooled = train_stl(pooled_task, other_source, n_features, cfg)?;
    let (theta, descent) =
        train_with_frozen_anchors(task, data, vec![theta_pooled.clone()], n_features, cfg)?;
    Ok((theta, descent, theta_pooled))
}

/// Transfer with individual anchors: each neighbor task is trained first
/// (STL, frozen), then the target minimizes
/// loss + `lambda1 |theta|^2` + `lambda2 sum_l |theta - theta_l|^2`.
pub fn train_tl_ina(
    task: &BinaryTask,
    data: &Dataset,
    neighbor_tasks: &[BinaryTask],
    other_source: &Dataset,
    n_features: usize,
    cfg: &OptConfig,
) -> Result<ModelVector> {
    train_tl_ina_traced(task, data, neighbor_tasks, other_source, n_features, cfg)
        .map(|(theta, _, _)| theta)
}

pub(crate) fn train_tl_ina_traced(
    task: &BinaryTask,
    data: &Dataset,
    neighbor_tasks: &[BinaryTask],
    other_source: &Dataset,
    n_features: usize,
    cfg: &OptConfig,
) -> Result<(ModelVector, Descent, Vec<ModelVector>)> {
    check_task_sides(task)?;
    if neighbor_tasks.is_empty() {
        return Err(Error::MissingNeighbors {
            task: task.task_id.to_string(),
        });
    }
    let anchors: Vec<ModelVector> = neighbor_tasks
        .iter()
        .map(|neighbor| train_stl(neighbor, other_source, n_features, cfg))
        .collect::<Result<_>>()?;
    let (theta, descent) =
        train_with_frozen_anchors(task, data, anchors.clone(), n_features, cfg)?;
    Ok((theta, descent, anchors))
}

fn train_with_frozen_anchors(
    task: &BinaryTask,
    data: &Dataset,
    anchors: Vec<ModelVector>,
    n_features: usize,
    cfg: &OptConfig,
) -> Result<(ModelVector, Descent)> {
    let couplings = (0..anchors.len())
        .map(|idx| Coupling {
            task: task.task_id,
            target: CouplingTarget::Frozen(idx),
            weight: cfg.lambda2,
        })
        .collect();
    let spec = ObjectiveSpec {
        tasks: vec![TaskTerm::from_task(task, data, cfg.lambda1)],
        couplings,
        frozen: anchors,
    };
    let init = single_column_init(task.task_id, n_features);
    let (matrix, descent) = minimize_objective(&spec, init, cfg)?;
    Ok((matrix.column(&task.task_id).unwrap().clone(), descent))
}

fn l2_for(source: Source, cfg: &OptConfig) -> f64 {
    match source {
        Source::S1 => cfg.lambda1,
        Source::S2 => cfg.lambda2,
    }
}

fn joint_terms<'a>(
    s1_data: &'a Dataset,
    s2_data: &'a Dataset,
    tasks: impl IntoIterator<Item = &'a BinaryTask>,
    cfg: &OptConfig,
) -> Result<Vec<TaskTerm<'a>>> {
    let mut terms = Vec::new();
    for task in tasks {
        check_task_sides(task)?;
        let data = match task.task_id.source {
            Source::S1 => s1_data,
            Source::S2 => s2_data,
        };
        terms.push(TaskTerm::from_task(
            task,
            data,
            l2_for(task.task_id.source, cfg),
        ));
    }
    terms.sort_by_key(|t| t.id);
    Ok(terms)
}

/// Joint multi-task training with pooled surrogates: every original task and
/// every pooled task keeps its own loss and squared-norm term, and each
/// original column is pulled toward its pooled surrogate in the other source
/// with weight `lambda3`. All columns are learned simultaneously.
#[allow(clippy::too_many_arguments)]
pub fn train_mtl_npa(
    s1_data: &Dataset,
    s2_data: &Dataset,
    tasks_s1: &[BinaryTask],
    tasks_s2: &[BinaryTask],
    pooled_in_s2: &[BinaryTask],
    pooled_in_s1: &[BinaryTask],
    n_features: usize,
    cfg: &OptConfig,
) -> Result<ModelMatrix> {
    train_mtl_npa_traced(
        s1_data,
        s2_data,
        tasks_s1,
        tasks_s2,
        pooled_in_s2,
        pooled_in_s1,
        n_features,
        cfg,
    )
    .map(|(theta, _)| theta)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn train_mtl_npa_traced(
    s1_data: &Dataset,
    s2_data: &Dataset,
    tasks_s1: &[BinaryTask],
    tasks_s2: &[BinaryTask],
    pooled_in_s2: &[BinaryTask],
    pooled_in_s1: &[BinaryTask],
    n_features: usize,
    cfg: &OptConfig,
) -> Result<(ModelMatrix, Descent)> {
    let all_tasks = tasks_s1
        .iter()
        .chain(tasks_s2)
        .chain(pooled_in_s2)
        .chain(pooled_in_s1);
    let terms = joint_terms(s1_data, s2_data, all_tasks, cfg)?;

    let mut couplings = Vec::new();
    for task in tasks_s1.iter().chain(tasks_s2) {
        let surrogate = TaskId::pooled(task.task_id.source.other(), task.task_id.class_id);
        couplings.push(Coupling {
            task: task.task_id,
            target: CouplingTarget::Column(surrogate),
            weight: cfg.lambda3,
        });
    }
    couplings.sort_by_key(|c| c.task);

    let column_ids: Vec<TaskId> = terms.iter().map(|t| t.id).collect();
    let spec = ObjectiveSpec {
        tasks: terms,
        couplings,
        frozen: vec![],
    };
    let init = ModelMatrix::zeros_for(&column_ids, n_features + 1);
    minimize_objective(&spec, init, cfg)
}

/// Joint multi-task training with individual couplings: each original column
/// is pulled toward each of its k neighbor columns in the other source with
/// weight `lambda3`; all columns are learned simultaneously.
pub fn train_mtl_ina(
    s1_data: &Dataset,
    s2_data: &Dataset,
    tasks_s1: &[BinaryTask],
    tasks_s2: &[BinaryTask],
    neighbors: &NeighborMap,
    n_features: usize,
    cfg: &OptConfig,
) -> Result<ModelMatrix> {
    train_mtl_ina_traced(
        s1_data, s2_data, tasks_s1, tasks_s2, neighbors, n_features, cfg,
    )
    .map(|(theta, _)| theta)
}

pub(crate) fn train_mtl_ina_traced(
    s1_data: &Dataset,
    s2_data: &Dataset,
    tasks_s1: &[BinaryTask],
    tasks_s2: &[BinaryTask],
    neighbors: &NeighborMap,
    n_features: usize,
    cfg: &OptConfig,
) -> Result<(ModelMatrix, Descent)> {
    let terms = joint_terms(s1_data, s2_data, tasks_s1.iter().chain(tasks_s2), cfg)?;

    let mut couplings = Vec::new();
    for task in tasks_s1.iter().chain(tasks_s2) {
        let list = neighbors
            .neighbors(&task.task_id)
            .ok_or_else(|| Error::MissingNeighbors {
                task: task.task_id.to_string(),
            })?;
        for &(class, _) in list {
            couplings.push(Coupling {
                task: task.task_id,
                target: CouplingTarget::Column(TaskId::original(
                    task.task_id.source.other(),
                    class,
                )),
                weight: cfg.lambda3,
            });
        }
    }
    couplings.sort_by_key(|c| c.task);

    let column_ids: Vec<TaskId> = terms.iter().map(|t| t.id).collect();
    let spec = ObjectiveSpec {
        tasks: terms,
        couplings,
        frozen: vec![],
    };
    let init = ModelMatrix::zeros_for(&column_ids, n_features + 1);
    minimize_objective(&spec, init, cfg)
}

/// Shared inputs for training one regime over both sources' distribution
/// samples.
#[derive(Clone, Copy)]
pub struct RegimeData<'a> {
    pub s1: &'a Dataset,
    pub s2: &'a Dataset,
    /// Shared feature-space size: at least the max dimension of both corpora.
    pub n_features: usize,
    /// Merged neighbor map (both directions); not needed for STL.
    pub neighbors: Option<&'a NeighborMap>,
}

/// A trained model plus per-optimization objective traces keyed by a label
/// (the task id, or "joint" for the MTL regimes).
pub struct TrainRun {
    pub model: TrainedModel,
    pub traces: Vec<(String, Descent)>,
}

/// Trains `regime` over every task of both sources.
pub fn train_regime(regime: Regime, data: &RegimeData<'_>, cfg: &OptConfig) -> Result<TrainedModel> {
    train_regime_run(regime, data, cfg).map(|run| run.model)
}

/// As [`train_regime`], also returning optimizer traces.
pub fn train_regime_run(
    regime: Regime,
    data: &RegimeData<'_>,
    cfg: &OptConfig,
) -> Result<TrainRun> {
    let tasks_s1 = build_tasks(data.s1)?;
    let tasks_s2 = build_tasks(data.s2)?;
    let n_original = tasks_s1.len() + tasks_s2.len();
    let k = data.neighbors.map(|n| n.k()).unwrap_or(0);

    let neighbors = || {
        data.neighbors.ok_or_else(|| {
            Error::Config(format!("regime {regime} needs a neighbor map"))
        })
    };
    let dataset_for = |source: Source| match source {
        Source::S1 => data.s1,
        Source::S2 => data.s2,
    };

    let mut theta = ModelMatrix::new(data.n_features + 1);
    let mut per_task_seconds = BTreeMap::new();
    let mut traces = Vec::new();

    match regime {
        Regime::Stl | Regime::Ssl | Regime::TlNpa | Regime::TlIna => {
            let all_tasks: Vec<&BinaryTask> = tasks_s1.iter().chain(&tasks_s2).collect();
            let results: Vec<(TaskId, ModelVector, Descent, f64)> = all_tasks
                .par_iter()
                .map(|task| {
                    let own = dataset_for(task.task_id.source);
                    let other = dataset_for(task.task_id.source.other());
                    let start = Instant::now();
                    let (column, descent) = match regime {
                        Regime::Stl => train_stl_traced(task, own, data.n_features, cfg)?,
                        Regime::Ssl => train_ssl_traced(
                            task,
                            own,
                            neighbors()?,
                            other,
                            data.n_features,
                            cfg,
                        )?,
                        Regime::TlNpa => {
                            let list = neighbors()?
                                .neighbors(&task.task_id)
                                .ok_or_else(|| Error::MissingNeighbors {
                                    task: task.task_id.to_string(),
                                })?;
                            let pooled = build_pooled_task(task.task_id, list, other)?;
                            let (column, descent, _) = train_tl_npa_traced(
                                task,
                                own,
                                &pooled,
                                other,
                                data.n_features,
                                cfg,
                            )?;
                            (column, descent)
                        }
                        Regime::TlIna => {
                            let list = neighbors()?
                                .neighbors(&task.task_id)
                                .ok_or_else(|| Error::MissingNeighbors {
                                    task: task.task_id.to_string(),
                                })?;
                            let neighbor_tasks: Vec<BinaryTask> = list
                                .iter()
                                .map(|&(class, _)| one_vs_rest_task(other, class))
                                .collect::<Result<_>>()?;
                            let (column, descent, _) = train_tl_ina_traced(
                                task,
                                own,
                                &neighbor_tasks,
                                other,
                                data.n_features,
                                cfg,
                            )?;
                            (column, descent)
                        }
                        _ => unreachable!(),
                    };
                    let seconds = start.elapsed().as_secs_f64();
                    Ok((task.task_id, column, descent, seconds))
                })
                .collect::<Result<_>>()?;
            for (id, column, descent, seconds) in results {
                theta.insert(id, column)?;
                per_task_seconds.insert(id, seconds);
                traces.push((id.to_string(), descent));
            }
        }
        Regime::MtlNpa => {
            let nm = neighbors()?;
            let pooled_for = |tasks: &[BinaryTask]| -> Result<Vec<BinaryTask>> {
                tasks
                    .iter()
                    .map(|task| {
                        let list =
                            nm.neighbors(&task.task_id)
                                .ok_or_else(|| Error::MissingNeighbors {
                                    task: task.task_id.to_string(),
                                })?;
                        build_pooled_task(
                            task.task_id,
                            list,
                            dataset_for(task.task_id.source.other()),
                        )
                    })
                    .collect()
            };
            let pooled_in_s2 = pooled_for(&tasks_s1)?;
            let pooled_in_s1 = pooled_for(&tasks_s2)?;
            let start = Instant::now();
            let (matrix, descent) = train_mtl_npa_traced(
                data.s1,
                data.s2,
                &tasks_s1,
                &tasks_s2,
                &pooled_in_s2,
                &pooled_in_s1,
                data.n_features,
                cfg,
            )?;
            let share = start.elapsed().as_secs_f64() / n_original as f64;
            theta = matrix;
            for task in tasks_s1.iter().chain(&tasks_s2) {
                per_task_seconds.insert(task.task_id, share);
            }
            traces.push(("joint".to_string(), descent));
        }
        Regime::MtlIna => {
            let nm = neighbors()?;
            let start = Instant::now();
            let (matrix, descent) = train_mtl_ina_traced(
                data.s1,
                data.s2,
                &tasks_s1,
                &tasks_s2,
                nm,
                data.n_features,
                cfg,
            )?;
            let share = start.elapsed().as_secs_f64() / n_original as f64;
            theta = matrix;
            for task in tasks_s1.iter().chain(&tasks_s2) {
                per_task_seconds.insert(task.task_id, share);
            }
            traces.push(("joint".to_string(), descent));
        }
    }

    Ok(TrainRun {
        model: TrainedModel {
            regime,
            k: if regime.uses_k() { k } else { 0 },
            theta,
            config: *cfg,
            neighbor_map: if regime.uses_k() {
                data.neighbors.cloned()
            } else {
                None
            },
            per_task_train_seconds: per_task_seconds,
        },
        traces,
    })
}

/// One-versus-rest task for a single class of `dist`.
pub fn one_vs_rest_task(dist: &Dataset, class: u32) -> Result<BinaryTask> {
    let positives = dist
        .class_examples(class)
        .ok_or(Error::MissingNeighborClass { class })?
        .to_vec();
    let negatives: Vec<usize> = (0..dist.len())
        .filter(|&idx| dist.examples()[idx].class_id != class)
        .collect();
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::EmptyTaskSide(
            TaskId::original(dist.source(), class).to_string(),
        ));
    }
    Ok(BinaryTask {
        task_id: TaskId::original(dist.source(), class),
        positives,
        negatives,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Example;
    use crate::optim::composite_objective;
    use crate::relatedness::{knn_related, NeighborMap};
    use crate::corpus::compute_centroids;

    fn example(class: u32, entries: &[(u32, f64)]) -> Example {
        Example {
            features: SparseVector::new(entries.to_vec()).unwrap(),
            class_id: class,
        }
    }

    /// Two sources, two classes each. Class 0 lives on features 0/1, class 1
    /// on features 2/3; the S2 classes mirror them with small perturbations.
    fn toy_pair() -> (Dataset, Dataset) {
        let s1 = Dataset::new(
            Source::S1,
            vec![
                example(0, &[(0, 2.0), (1, 1.0)]),
                example(0, &[(0, 1.5), (1, 1.5)]),
                example(0, &[(0, 2.5), (1, 0.5)]),
                example(1, &[(2, 2.0), (3, 1.0)]),
                example(1, &[(2, 1.2), (3, 1.8)]),
                example(1, &[(2, 2.2), (3, 0.7)]),
            ],
        );
        let s2 = Dataset::new(
            Source::S2,
            vec![
                example(0, &[(0, 1.8), (1, 1.1)]),
                example(0, &[(0, 2.1), (1, 0.9)]),
                example(0, &[(0, 1.4), (1, 1.6)]),
                example(1, &[(2, 1.9), (3, 1.2)]),
                example(1, &[(2, 1.1), (3, 1.9)]),
                example(1, &[(2, 2.4), (3, 0.6)]),
            ],
        );
        (s1, s2)
    }

    fn toy_neighbors(s1: &Dataset, s2: &Dataset, k: usize) -> NeighborMap {
        let c1 = compute_centroids(s1);
        let c2 = compute_centroids(s2);
        let forward = knn_related(&c1, &c2, k).unwrap();
        let backward = knn_related(&c2, &c1, k).unwrap();
        NeighborMap::merge(&forward, &backward).unwrap()
    }

    fn tight() -> OptConfig {
        OptConfig {
            tol: 1e-12,
            max_iters: 5000,
            ..OptConfig::default()
        }
    }

    #[test]
    fn huge_regularization_shrinks_weights() {
        let (s1, _) = toy_pair();
        let task = one_vs_rest_task(&s1, 0).unwrap();
        let cfg = OptConfig {
            lambda1: 1e6,
            ..tight()
        };
        let theta = train_stl(&task, &s1, 4, &cfg).unwrap();
        assert!(theta.weights().iter().all(|w| w.abs() < 1e-3));
    }

    #[test]
    fn separable_toy_reaches_full_training_accuracy() {
        let (s1, _) = toy_pair();
        let task = one_vs_rest_task(&s1, 0).unwrap();
        let cfg = OptConfig {
            lambda1: 0.01,
            ..tight()
        };
        let theta = train_stl(&task, &s1, 4, &cfg).unwrap();
        for &idx in &task.positives {
            assert!(theta.score(&s1.examples()[idx].features) > 0.0);
        }
        for &idx in &task.negatives {
            assert!(theta.score(&s1.examples()[idx].features) < 0.0);
        }
    }

    #[test]
    fn label_mirror_negates_weights() {
        let (s1, _) = toy_pair();
        let task = one_vs_rest_task(&s1, 0).unwrap();
        let mirrored = BinaryTask {
            task_id: task.task_id,
            positives: task.negatives.clone(),
            negatives: task.positives.clone(),
        };
        let cfg = OptConfig {
            lambda1: 0.5,
            ..tight()
        };
        let a = train_stl(&task, &s1, 4, &cfg).unwrap();
        let b = train_stl(&mirrored, &s1, 4, &cfg).unwrap();
        assert!(a.max_abs_diff(&b.scaled(-1.0)) < 1e-6);
    }

    #[test]
    fn stl_rejects_empty_sides() {
        let (s1, _) = toy_pair();
        let task = BinaryTask {
            task_id: TaskId::original(Source::S1, 0),
            positives: vec![0, 1],
            negatives: vec![],
        };
        assert!(matches!(
            train_stl(&task, &s1, 4, &OptConfig::default()),
            Err(Error::EmptyTaskSide(_))
        ));
    }

    #[test]
    fn stl_final_objective_agrees_with_evaluator() {
        let (s1, _) = toy_pair();
        let task = one_vs_rest_task(&s1, 0).unwrap();
        let cfg = OptConfig {
            lambda1: 0.3,
            ..tight()
        };
        let (theta, descent) = train_stl_traced(&task, &s1, 4, &cfg).unwrap();
        let spec = ObjectiveSpec::new(vec![TaskTerm::from_task(&task, &s1, cfg.lambda1)]);
        let mut matrix = ModelMatrix::new(5);
        matrix.insert(task.task_id, theta).unwrap();
        let recomputed = composite_objective(&matrix, &spec).unwrap();
        assert!((descent.objectives.last().unwrap() - recomputed).abs() < 1e-10);
    }

    #[test]
    fn ssl_counts_augmented_positives() {
        let (s1, s2) = toy_pair();
        let nm = toy_neighbors(&s1, &s2, 2);
        // k = 2 with 2 classes per source: every S2 example becomes a positive
        let task = one_vs_rest_task(&s1, 0).unwrap();
        let borrowed = ssl_positive_indices(&task.task_id, &nm, &s2).unwrap();
        assert_eq!(borrowed.len(), s2.len());

        let nm1 = toy_neighbors(&s1, &s2, 1);
        let borrowed1 = ssl_positive_indices(&task.task_id, &nm1, &s2).unwrap();
        let expected: usize = nm1
            .neighbors(&task.task_id)
            .unwrap()
            .iter()
            .map(|&(c, _)| s2.class_examples(c).unwrap().len())
            .sum();
        assert_eq!(borrowed1.len(), expected);
    }

    #[test]
    fn ssl_trains_with_augmentation() {
        let (s1, s2) = toy_pair();
        let nm = toy_neighbors(&s1, &s2, 1);
        let task = one_vs_rest_task(&s1, 0).unwrap();
        let cfg = OptConfig {
            lambda1: 0.1,
            ..tight()
        };
        let theta = train_ssl(&task, &s1, &nm, &s2, 4, &cfg).unwrap();
        // neighbor class 0 in S2 has the same support; its examples should
        // score positive too
        for &idx in s2.class_examples(0).unwrap() {
            assert!(theta.score(&s2.examples()[idx].features) > 0.0);
        }
    }

    #[test]
    fn tl_npa_decouples_at_zero_lambda2() {
        let (s1, s2) = toy_pair();
        let nm = toy_neighbors(&s1, &s2, 1);
        let task = one_vs_rest_task(&s1, 0).unwrap();
        let pooled =
            build_pooled_task(task.task_id, nm.neighbors(&task.task_id).unwrap(), &s2).unwrap();
        let cfg = OptConfig {
            lambda1: 0.2,
            lambda2: 0.0,
            ..tight()
        };
        let coupled = train_tl_npa(&task, &s1, &pooled, &s2, 4, &cfg).unwrap();
        let alone = train_stl(&task, &s1, 4, &cfg).unwrap();
        assert!(coupled.max_abs_diff(&alone) < 1e-6);
    }

    #[test]
    fn tl_npa_huge_lambda2_pins_to_pooled_anchor() {
        let (s1, s2) = toy_pair();
        let nm = toy_neighbors(&s1, &s2, 1);
        let task = one_vs_rest_task(&s1, 0).unwrap();
        let pooled =
            build_pooled_task(task.task_id, nm.neighbors(&task.task_id).unwrap(), &s2).unwrap();
        let cfg = OptConfig {
            lambda1: 0.1,
            lambda2: 1e6,
            ..tight()
        };
        let (theta, _, anchor) =
            train_tl_npa_traced(&task, &s1, &pooled, &s2, 4, &cfg).unwrap();
        assert!(theta.max_abs_diff(&anchor) < 1e-3);
    }

    #[test]
    fn tl_npa_objective_matches_composite_oracle() {
        let (s1, s2) = toy_pair();
        let nm = toy_neighbors(&s1, &s2, 1);
        let task = one_vs_rest_task(&s1, 0).unwrap();
        let pooled =
            build_pooled_task(task.task_id, nm.neighbors(&task.task_id).unwrap(), &s2).unwrap();
        let cfg = OptConfig {
            lambda1: 0.2,
            lambda2: 0.7,
            ..tight()
        };
        let (theta, descent, anchor) =
            train_tl_npa_traced(&task, &s1, &pooled, &s2, 4, &cfg).unwrap();

        let spec = ObjectiveSpec {
            tasks: vec![TaskTerm::from_task(&task, &s1, cfg.lambda1)],
            couplings: vec![Coupling {
                task: task.task_id,
                target: CouplingTarget::Frozen(0),
                weight: cfg.lambda2,
            }],
            frozen: vec![anchor],
        };
        let mut matrix = ModelMatrix::new(5);
        matrix.insert(task.task_id, theta).unwrap();
        let recomputed = composite_objective(&matrix, &spec).unwrap();
        assert!((descent.objectives.last().unwrap() - recomputed).abs() < 1e-12);
    }

    #[test]
    fn tl_source_vectors_stay_frozen() {
        let (s1, s2) = toy_pair();
        let nm = toy_neighbors(&s1, &s2, 1);
        let task = one_vs_rest_task(&s1, 0).unwrap();
        let pooled =
            build_pooled_task(task.task_id, nm.neighbors(&task.task_id).unwrap(), &s2).unwrap();
        let cfg = OptConfig {
            lambda1: 0.2,
            lambda2: 0.9,
            ..tight()
        };
        let (_, _, anchor) = train_tl_npa_traced(&task, &s1, &pooled, &s2, 4, &cfg).unwrap();
        // anchor must be exactly what STL alone produces: bit-identical
        let independent = train_stl(&pooled, &s2, 4, &cfg).unwrap();
        for (a, b) in anchor.weights().iter().zip(independent.weights()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn tl_ina_decouples_at_zero_lambda2() {
        let (s1, s2) = toy_pair();
        let nm = toy_neighbors(&s1, &s2, 2);
        let task = one_vs_rest_task(&s1, 0).unwrap();
        let neighbor_tasks: Vec<BinaryTask> = nm
            .neighbors(&task.task_id)
            .unwrap()
            .iter()
            .map(|&(c, _)| one_vs_rest_task(&s2, c).unwrap())
            .collect();
        let cfg = OptConfig {
            lambda1: 0.2,
            lambda2: 0.0,
            ..tight()
        };
        let coupled = train_tl_ina(&task, &s1, &neighbor_tasks, &s2, 4, &cfg).unwrap();
        let alone = train_stl(&task, &s1, 4, &cfg).unwrap();
        assert!(coupled.max_abs_diff(&alone) < 1e-6);
    }

    #[test]
    fn tl_ina_huge_lambda2_reaches_anchor_mean() {
        // Closed form: the minimizer of sum_l |theta - theta_l|^2 is the mean
        // of the anchors, and the loss term becomes negligible.
        let (s1, s2) = toy_pair();
        let nm = toy_neighbors(&s1, &s2, 2);
        let task = one_vs_rest_task(&s1, 0).unwrap();
        let neighbor_tasks: Vec<BinaryTask> = nm
            .neighbors(&task.task_id)
            .unwrap()
            .iter()
            .map(|&(c, _)| one_vs_rest_task(&s2, c).unwrap())
            .collect();
        let cfg = OptConfig {
            lambda1: 0.1,
            lambda2: 1e6,
            ..tight()
        };
        let (theta, _, anchors) =
            train_tl_ina_traced(&task, &s1, &neighbor_tasks, &s2, 4, &cfg).unwrap();
        let mut mean = vec![0.0; theta.len()];
        for anchor in &anchors {
            for (m, w) in mean.iter_mut().zip(anchor.weights()) {
                *m += w / anchors.len() as f64;
            }
        }
        let mean = ModelVector::new(mean).unwrap();
        assert!(theta.max_abs_diff(&mean) < 1e-3);
    }

    #[test]
    fn tl_ina_with_one_neighbor_equals_tl_npa() {
        // With k = 1 the pooled task is exactly the single neighbor's
        // one-versus-rest task, so both paths minimize the same objective.
        let (s1, s2) = toy_pair();
        let nm = toy_neighbors(&s1, &s2, 1);
        let task = one_vs_rest_task(&s1, 0).unwrap();
        let list = nm.neighbors(&task.task_id).unwrap();
        let pooled = build_pooled_task(task.task_id, list, &s2).unwrap();
        let neighbor_tasks = vec![one_vs_rest_task(&s2, list[0].0).unwrap()];
        let cfg = OptConfig {
            lambda1: 0.2,
            lambda2: 0.5,
            ..tight()
        };
        let npa = train_tl_npa(&task, &s1, &pooled, &s2, 4, &cfg).unwrap();
        let ina = train_tl_ina(&task, &s1, &neighbor_tasks, &s2, 4, &cfg).unwrap();
        assert!(npa.max_abs_diff(&ina) < 1e-6);
    }

    fn mtl_inputs(
        s1: &Dataset,
        s2: &Dataset,
        k: usize,
    ) -> (Vec<BinaryTask>, Vec<BinaryTask>, NeighborMap) {
        let tasks_s1 = build_tasks(s1).unwrap();
        let tasks_s2 = build_tasks(s2).unwrap();
        let nm = toy_neighbors(s1, s2, k);
        (tasks_s1, tasks_s2, nm)
    }

    fn pooled_both(
        s1: &Dataset,
        s2: &Dataset,
        tasks_s1: &[BinaryTask],
        tasks_s2: &[BinaryTask],
        nm: &NeighborMap,
    ) -> (Vec<BinaryTask>, Vec<BinaryTask>) {
        let pooled_in_s2: Vec<BinaryTask> = tasks_s1
            .iter()
            .map(|t| build_pooled_task(t.task_id, nm.neighbors(&t.task_id).unwrap(), s2).unwrap())
            .collect();
        let pooled_in_s1: Vec<BinaryTask> = tasks_s2
            .iter()
            .map(|t| build_pooled_task(t.task_id, nm.neighbors(&t.task_id).unwrap(), s1).unwrap())
            .collect();
        (pooled_in_s2, pooled_in_s1)
    }

    #[test]
    fn mtl_npa_decouples_at_zero_lambda3() {
        let (s1, s2) = toy_pair();
        let (tasks_s1, tasks_s2, nm) = mtl_inputs(&s1, &s2, 1);
        let (pooled_in_s2, pooled_in_s1) = pooled_both(&s1, &s2, &tasks_s1, &tasks_s2, &nm);
        let cfg = OptConfig {
            lambda1: 0.2,
            lambda2: 0.2,
            lambda3: 0.0,
            ..tight()
        };
        let theta = train_mtl_npa(
            &s1,
            &s2,
            &tasks_s1,
            &tasks_s2,
            &pooled_in_s2,
            &pooled_in_s1,
            4,
            &cfg,
        )
        .unwrap();
        for task in tasks_s1.iter().chain(&tasks_s2) {
            let data = if task.task_id.source == Source::S1 {
                &s1
            } else {
                &s2
            };
            let alone = train_stl(task, data, 4, &cfg).unwrap();
            let joint = theta.column(&task.task_id).unwrap();
            assert!(
                joint.max_abs_diff(&alone) < 1e-4,
                "column {} drifted",
                task.task_id
            );
        }
    }

    #[test]
    fn mtl_npa_huge_lambda3_pins_columns_together() {
        let (s1, s2) = toy_pair();
        let (tasks_s1, tasks_s2, nm) = mtl_inputs(&s1, &s2, 1);
        let (pooled_in_s2, pooled_in_s1) = pooled_both(&s1, &s2, &tasks_s1, &tasks_s2, &nm);
        let cfg = OptConfig {
            lambda1: 0.1,
            lambda2: 0.1,
            lambda3: 1e6,
            ..tight()
        };
        let theta = train_mtl_npa(
            &s1,
            &s2,
            &tasks_s1,
            &tasks_s2,
            &pooled_in_s2,
            &pooled_in_s1,
            4,
            &cfg,
        )
        .unwrap();
        for task in tasks_s1.iter().chain(&tasks_s2) {
            let original = theta.column(&task.task_id).unwrap();
            let surrogate = theta
                .column(&TaskId::pooled(
                    task.task_id.source.other(),
                    task.task_id.class_id,
                ))
                .unwrap();
            assert!(original.max_abs_diff(surrogate) < 1e-3);
        }
    }

    #[test]
    fn mtl_npa_missing_pooled_counterpart_rejected() {
        let (s1, s2) = toy_pair();
        let (tasks_s1, tasks_s2, nm) = mtl_inputs(&s1, &s2, 1);
        let (pooled_in_s2, _) = pooled_both(&s1, &s2, &tasks_s1, &tasks_s2, &nm);
        let cfg = OptConfig::with_lambdas(0.1, 0.1, 0.5);
        let err = train_mtl_npa(
            &s1, &s2, &tasks_s1, &tasks_s2, &pooled_in_s2, &[], 4, &cfg,
        )
        .unwrap_err();
        assert!(matches!(err, Error::DanglingCoupling(_)));
    }

    #[test]
    fn mtl_ina_decouples_at_zero_lambda3() {
        let (s1, s2) = toy_pair();
        let (tasks_s1, tasks_s2, nm) = mtl_inputs(&s1, &s2, 2);
        let cfg = OptConfig {
            lambda1: 0.2,
            lambda2: 0.2,
            lambda3: 0.0,
            ..tight()
        };
        let theta = train_mtl_ina(&s1, &s2, &tasks_s1, &tasks_s2, &nm, 4, &cfg).unwrap();
        for task in tasks_s1.iter().chain(&tasks_s2) {
            let data = if task.task_id.source == Source::S1 {
                &s1
            } else {
                &s2
            };
            let alone = train_stl(task, data, 4, &cfg).unwrap();
            assert!(theta.column(&task.task_id).unwrap().max_abs_diff(&alone) < 1e-4);
        }
    }

    #[test]
    fn mtl_ina_symmetric_sources_learn_equal_columns() {
        // S1 and S2 share identical data per class, and with k = 1 the paired
        // classes are mutual sole neighbors, so the joint objective is
        // symmetric under swapping the sources.
        let examples = vec![
            example(0, &[(0, 2.0), (1, 1.0)]),
            example(0, &[(0, 1.5), (1, 1.5)]),
            example(0, &[(0, 2.5), (1, 0.5)]),
            example(1, &[(2, 2.0), (3, 1.0)]),
            example(1, &[(2, 1.2), (3, 1.8)]),
            example(1, &[(2, 2.2), (3, 0.7)]),
        ];
        let s1 = Dataset::new(Source::S1, examples.clone());
        let s2 = Dataset::new(Source::S2, examples);
        let (tasks_s1, tasks_s2, nm) = mtl_inputs(&s1, &s2, 1);
        let cfg = OptConfig {
            lambda1: 0.2,
            lambda2: 0.2,
            lambda3: 0.5,
            ..tight()
        };
        let theta = train_mtl_ina(&s1, &s2, &tasks_s1, &tasks_s2, &nm, 4, &cfg).unwrap();
        for class in [0, 1] {
            let a = theta.column(&TaskId::original(Source::S1, class)).unwrap();
            let b = theta.column(&TaskId::original(Source::S2, class)).unwrap();
            assert!(a.max_abs_diff(b) < 1e-4);
        }
    }

    #[test]
    fn mtl_ina_unknown_neighbor_rejected() {
        let (s1, s2) = toy_pair();
        let (tasks_s1, _, nm) = mtl_inputs(&s1, &s2, 1);
        // drop the S2 tasks: the S2 neighbor columns no longer exist
        let err = train_mtl_ina(&s1, &s2, &tasks_s1, &[], &nm, 4, &OptConfig::default())
            .unwrap_err();
        assert!(matches!(
            err,
            Error::DanglingCoupling(_) | Error::MissingNeighbors { .. }
        ));
    }

    #[test]
    fn mtl_final_objective_agrees_with_evaluator() {
        let (s1, s2) = toy_pair();
        let (tasks_s1, tasks_s2, nm) = mtl_inputs(&s1, &s2, 1);
        let cfg = OptConfig::with_lambdas(0.2, 0.3, 0.7);
        let (theta, descent) =
            train_mtl_ina_traced(&s1, &s2, &tasks_s1, &tasks_s2, &nm, 4, &cfg).unwrap();

        // rebuild the same objective and re-evaluate it standalone
        let terms = joint_terms(&s1, &s2, tasks_s1.iter().chain(&tasks_s2), &cfg).unwrap();
        let mut couplings = Vec::new();
        for task in tasks_s1.iter().chain(&tasks_s2) {
            for &(class, _) in nm.neighbors(&task.task_id).unwrap() {
                couplings.push(Coupling {
                    task: task.task_id,
                    target: CouplingTarget::Column(TaskId::original(
                        task.task_id.source.other(),
                        class,
                    )),
                    weight: cfg.lambda3,
                });
            }
        }
        let spec = ObjectiveSpec {
            tasks: terms,
            couplings,
            frozen: vec![],
        };
        let recomputed = composite_objective(&theta, &spec).unwrap();
        assert!((descent.objectives.last().unwrap() - recomputed).abs() < 1e-10);
    }

    #[test]
    fn joint_training_is_order_invariant() {
        let (s1, s2) = toy_pair();
        let (tasks_s1, tasks_s2, nm) = mtl_inputs(&s1, &s2, 1);
        let cfg = OptConfig::with_lambdas(0.2, 0.2, 0.4);
        let theta = train_mtl_ina(&s1, &s2, &tasks_s1, &tasks_s2, &nm, 4, &cfg).unwrap();

        let mut rev_s1 = tasks_s1.clone();
        rev_s1.reverse();
        let mut rev_s2 = tasks_s2.clone();
        rev_s2.reverse();
        let theta_perm = train_mtl_ina(&s1, &s2, &rev_s1, &rev_s2, &nm, 4, &cfg).unwrap();
        for (id, column) in theta.columns() {
            assert!(column.max_abs_diff(theta_perm.column(id).unwrap()) < 1e-6);
        }
    }

    #[test]
    fn predict_single_class_model() {
        let mut theta = ModelMatrix::new(3);
        theta
            .insert(
                TaskId::original(Source::S1, 4),
                ModelVector::new(vec![1.0, -1.0, 0.0]).unwrap(),
            )
            .unwrap();
        let x = SparseVector::new(vec![(1, 5.0)]).unwrap();
        assert_eq!(predict(&theta, Source::S1, &x).unwrap(), 4);
        assert!(matches!(
            predict(&theta, Source::S2, &x),
            Err(Error::EmptyModel)
        ));
    }

    #[test]
    fn predict_takes_dominant_score() {
        let mut theta = ModelMatrix::new(2);
        theta
            .insert(
                TaskId::original(Source::S1, 0),
                ModelVector::new(vec![0.0, 2.0]).unwrap(),
            )
            .unwrap();
        theta
            .insert(
                TaskId::original(Source::S1, 1),
                ModelVector::new(vec![0.0, -1.0]).unwrap(),
            )
            .unwrap();
        let x = SparseVector::empty();
        assert_eq!(predict(&theta, Source::S1, &x).unwrap(), 0);
    }

    #[test]
    fn predict_matches_score_and_sort_oracle() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let mut theta = ModelMatrix::new(6);
        for class in 0..5u32 {
            let weights: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            theta
                .insert(
                    TaskId::original(Source::S1, class),
                    ModelVector::new(weights).unwrap(),
                )
                .unwrap();
        }
        for _ in 0..100 {
            let mut entries: Vec<(u32, f64)> = Vec::new();
            for id in 0..5u32 {
                if rng.random_bool(0.6) {
                    entries.push((id, rng.random_range(-2.0..2.0)));
                }
            }
            let x = SparseVector::new(entries).unwrap();
            // oracle: score every class, sort by (score desc, class asc)
            let mut scored: Vec<(u32, f64)> = (0..5u32)
                .map(|c| {
                    (
                        c,
                        theta
                            .column(&TaskId::original(Source::S1, c))
                            .unwrap()
                            .score(&x),
                    )
                })
                .collect();
            scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            assert_eq!(predict(&theta, Source::S1, &x).unwrap(), scored[0].0);
        }
    }

    #[test]
    fn predict_ignores_pooled_columns_and_scale() {
        let mut theta = ModelMatrix::new(2);
        theta
            .insert(
                TaskId::original(Source::S1, 0),
                ModelVector::new(vec![0.0, 1.0]).unwrap(),
            )
            .unwrap();
        theta
            .insert(
                TaskId::original(Source::S1, 1),
                ModelVector::new(vec![0.0, 0.5]).unwrap(),
            )
            .unwrap();
        theta
            .insert(
                TaskId::pooled(Source::S1, 1),
                ModelVector::new(vec![0.0, 100.0]).unwrap(),
            )
            .unwrap();
        let x = SparseVector::empty();
        assert_eq!(predict(&theta, Source::S1, &x).unwrap(), 0);

        // argmax is invariant under a common positive rescaling
        let mut scaled = ModelMatrix::new(2);
        for (id, col) in theta.columns() {
            scaled.insert(*id, col.scaled(7.5)).unwrap();
        }
        assert_eq!(
            predict(&scaled, Source::S1, &x).unwrap(),
            predict(&theta, Source::S1, &x).unwrap()
        );
    }

    #[test]
    fn train_regime_covers_all_tasks_and_times_them() {
        let (s1, s2) = toy_pair();
        let nm = toy_neighbors(&s1, &s2, 1);
        let data = RegimeData {
            s1: &s1,
            s2: &s2,
            n_features: 4,
            neighbors: Some(&nm),
        };
        for regime in Regime::ALL {
            let cfg = OptConfig::with_lambdas(0.2, 0.2, 0.3);
            let model = train_regime(regime, &data, &cfg).unwrap();
            assert_eq!(model.regime, regime);
            let original_columns = model
                .theta
                .columns()
                .keys()
                .filter(|id| !id.is_pooled())
                .count();
            assert_eq!(original_columns, 4, "regime {regime}");
            assert_eq!(model.per_task_train_seconds.len(), 4);
            assert!(model
                .per_task_train_seconds
                .values()
                .all(|&s| s >= 0.0));
            assert_eq!(model.k, if regime.uses_k() { 1 } else { 0 });
        }
    }

    #[test]
    fn regime_names_round_trip() {
        for regime in Regime::ALL {
            let parsed: Regime = regime.to_string().parse().unwrap();
            assert_eq!(parsed, regime);
        }
    }
}

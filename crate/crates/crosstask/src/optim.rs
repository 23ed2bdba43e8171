//! Logistic loss, composite regularized objectives and full-batch gradient
//! descent with a backtracking (Armijo) line search.
//!
//! One objective evaluator serves every training regime: a sum of per-task
//! logistic losses, per-task squared-norm penalties and quadratic coupling
//! penalties `w * |theta_t - target|^2`, where the target is either another
//! column of the same matrix (joint training) or a frozen external vector
//! (transfer).

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::corpus::{BinaryTask, Dataset, TaskId};
use crate::error::{Error, Result};
use crate::sparse::SparseVector;

/// Sufficient-decrease constant for the Armijo test.
const ARMIJO_C: f64 = 1e-4;
/// Step halvings before the line search gives up.
const MAX_HALVINGS: usize = 50;

/// Dense weight vector of length d+1; the last coordinate is the bias and
/// pairs with an implicit constant-1 feature.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelVector {
    weights: Vec<f64>,
}

impl ModelVector {
    pub fn zeros(n_weights: usize) -> ModelVector {
        ModelVector {
            weights: vec![0.0; n_weights],
        }
    }

    pub fn new(weights: Vec<f64>) -> Result<ModelVector> {
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("model weights".into()));
        }
        Ok(ModelVector { weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `<theta, [x; 1]>`: sparse dot plus the bias.
    pub fn score(&self, x: &SparseVector) -> f64 {
        score_slice(&self.weights, x)
    }

    pub fn max_abs_diff(&self, other: &ModelVector) -> f64 {
        self.weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn norm_sq(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum()
    }

    pub fn scaled(&self, factor: f64) -> ModelVector {
        ModelVector {
            weights: self.weights.iter().map(|w| w * factor).collect(),
        }
    }
}

fn score_slice(weights: &[f64], x: &SparseVector) -> f64 {
    debug_assert!(!weights.is_empty());
    let mut sum = weights[weights.len() - 1]; // bias
    for &(id, value) in x.entries() {
        debug_assert!((id as usize) < weights.len() - 1);
        sum += weights[id as usize] * value;
    }
    sum
}

/// Per-task weight vectors stacked by task id; all columns share one
/// dimension (d+1, bias included).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelMatrix {
    columns: BTreeMap<TaskId, ModelVector>,
    dimension: usize,
}

impl ModelMatrix {
    /// `dimension` counts weights per column, bias included.
    pub fn new(dimension: usize) -> ModelMatrix {
        ModelMatrix {
            columns: BTreeMap::new(),
            dimension,
        }
    }

    pub fn zeros_for(task_ids: &[TaskId], dimension: usize) -> ModelMatrix {
        let mut matrix = ModelMatrix::new(dimension);
        for &id in task_ids {
            matrix
                .insert(id, ModelVector::zeros(dimension))
                .expect("zero columns match the declared dimension");
        }
        matrix
    }

    pub fn insert(&mut self, task: TaskId, column: ModelVector) -> Result<()> {
        if column.len() != self.dimension {
            return Err(Error::Config(format!(
                "column {task} has {} weights, matrix expects {}",
                column.len(),
                self.dimension
            )));
        }
        self.columns.insert(task, column);
        Ok(())
    }

    pub fn column(&self, task: &TaskId) -> Option<&ModelVector> {
        self.columns.get(task)
    }

    pub fn columns(&self) -> &BTreeMap<TaskId, ModelVector> {
        &self.columns
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    fn flatten(&self) -> (Vec<TaskId>, Vec<f64>) {
        let order: Vec<TaskId> = self.columns.keys().copied().collect();
        let mut flat = Vec::with_capacity(order.len() * self.dimension);
        for id in &order {
            flat.extend_from_slice(self.columns[id].weights());
        }
        (order, flat)
    }

    fn unflatten(order: &[TaskId], flat: &[f64], dimension: usize) -> ModelMatrix {
        let mut columns = BTreeMap::new();
        for (i, &id) in order.iter().enumerate() {
            let weights = flat[i * dimension..(i + 1) * dimension].to_vec();
            columns.insert(id, ModelVector { weights });
        }
        ModelMatrix { columns, dimension }
    }
}

/// Optimizer and regularization settings.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct OptConfig {
    /// Initial (and maximum) line-search step.
    pub step_size: f64,
    pub max_iters: usize,
    /// Relative objective-decrease stopping threshold.
    pub tol: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub seed: u64,
}

impl Default for OptConfig {
    fn default() -> OptConfig {
        OptConfig {
            step_size: 1.0,
            max_iters: 1000,
            tol: 1e-6,
            lambda1: 0.0,
            lambda2: 0.0,
            lambda3: 0.0,
            seed: 0,
        }
    }
}

impl OptConfig {
    pub fn with_lambdas(lambda1: f64, lambda2: f64, lambda3: f64) -> OptConfig {
        OptConfig {
            lambda1,
            lambda2,
            lambda3,
            ..OptConfig::default()
        }
    }
}

/// Overflow-safe `ln(1 + exp(z))`.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Overflow-safe logistic function.
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Logistic loss `ln(1 + exp(-y <theta, [x;1]>))` for a label `y` in {-1, +1}.
pub fn logistic_loss(theta: &ModelVector, x: &SparseVector, y: f64) -> f64 {
    debug_assert!(y == 1.0 || y == -1.0);
    softplus(-y * theta.score(x))
}

/// Scalar `g` such that the loss gradient is `g * [x; 1]`.
pub fn logistic_gradient_coef(theta: &ModelVector, x: &SparseVector, y: f64) -> f64 {
    debug_assert!(y == 1.0 || y == -1.0);
    -y * sigmoid(-y * theta.score(x))
}

/// Dense gradient of the logistic loss with respect to `theta`.
pub fn logistic_gradient(theta: &ModelVector, x: &SparseVector, y: f64) -> ModelVector {
    let coef = logistic_gradient_coef(theta, x, y);
    let mut grad = vec![0.0; theta.len()];
    for &(id, value) in x.entries() {
        grad[id as usize] = coef * value;
    }
    grad[theta.len() - 1] = coef;
    ModelVector { weights: grad }
}

/// One task's contribution to a composite objective: its labeled examples and
/// the weight of its squared-norm penalty.
pub struct TaskTerm<'a> {
    pub id: TaskId,
    pub examples: Vec<(&'a SparseVector, f64)>,
    pub l2: f64,
}

impl<'a> TaskTerm<'a> {
    /// Labels a one-versus-rest task's examples +1/-1 against `data`.
    pub fn from_task(task: &BinaryTask, data: &'a Dataset, l2: f64) -> TaskTerm<'a> {
        let mut examples = Vec::with_capacity(task.n_t());
        for &idx in &task.positives {
            examples.push((&data.examples()[idx].features, 1.0));
        }
        for &idx in &task.negatives {
            examples.push((&data.examples()[idx].features, -1.0));
        }
        TaskTerm {
            id: task.task_id,
            examples,
            l2,
        }
    }
}

/// What a coupling penalty pulls a column toward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CouplingTarget {
    /// Another (free) column of the same matrix.
    Column(TaskId),
    /// Index into [`ObjectiveSpec::frozen`].
    Frozen(usize),
}

/// Quadratic penalty `weight * |theta_task - target|^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coupling {
    pub task: TaskId,
    pub target: CouplingTarget,
    pub weight: f64,
}

/// A complete composite objective: loss + per-task penalties + couplings.
pub struct ObjectiveSpec<'a> {
    pub tasks: Vec<TaskTerm<'a>>,
    pub couplings: Vec<Coupling>,
    /// Pre-trained vectors referenced by [`CouplingTarget::Frozen`].
    pub frozen: Vec<ModelVector>,
}

impl<'a> ObjectiveSpec<'a> {
    pub fn new(tasks: Vec<TaskTerm<'a>>) -> ObjectiveSpec<'a> {
        ObjectiveSpec {
            tasks,
            couplings: Vec::new(),
            frozen: Vec::new(),
        }
    }
}

enum TargetRef {
    Col(usize),
    Frozen(usize),
}

/// Spec resolved against a fixed column order, so objective and gradient
/// evaluations are plain slice arithmetic.
struct Prepared<'s, 'a> {
    spec: &'s ObjectiveSpec<'a>,
    dimension: usize,
    task_cols: Vec<usize>,
    couplings: Vec<(usize, TargetRef, f64)>,
}

impl<'s, 'a> Prepared<'s, 'a> {
    fn new(theta: &ModelMatrix, spec: &'s ObjectiveSpec<'a>) -> Result<Prepared<'s, 'a>> {
        let order: Vec<TaskId> = theta.columns().keys().copied().collect();
        let col_of = |id: &TaskId| -> Result<usize> {
            order
                .binary_search(id)
                .map_err(|_| Error::DanglingCoupling(id.to_string()))
        };
        let mut task_cols = Vec::with_capacity(spec.tasks.len());
        for term in &spec.tasks {
            task_cols.push(col_of(&term.id)?);
        }
        let mut couplings = Vec::with_capacity(spec.couplings.len());
        for coupling in &spec.couplings {
            let t = col_of(&coupling.task)?;
            let target = match coupling.target {
                CouplingTarget::Column(id) => TargetRef::Col(col_of(&id)?),
                CouplingTarget::Frozen(idx) => {
                    let frozen = spec
                        .frozen
                        .get(idx)
                        .ok_or_else(|| Error::DanglingCoupling(format!("frozen#{idx}")))?;
                    if frozen.len() != theta.dimension() {
                        return Err(Error::Config(format!(
                            "frozen target #{idx} has {} weights, matrix expects {}",
                            frozen.len(),
                            theta.dimension()
                        )));
                    }
                    TargetRef::Frozen(idx)
                }
            };
            couplings.push((t, target, coupling.weight));
        }
        Ok(Prepared {
            spec,
            dimension: theta.dimension(),
            task_cols,
            couplings,
        })
    }

    fn col<'f>(&self, flat: &'f [f64], idx: usize) -> &'f [f64] {
        &flat[idx * self.dimension..(idx + 1) * self.dimension]
    }

    fn objective(&self, flat: &[f64]) -> f64 {
        // Per-task partials in parallel, reduced in task order.
        let per_task: Vec<f64> = self
            .spec
            .tasks
            .par_iter()
            .zip(&self.task_cols)
            .map(|(term, &col_idx)| {
                let col = self.col(flat, col_idx);
                let mut sum = 0.0;
                for &(x, y) in &term.examples {
                    sum += softplus(-y * score_slice(col, x));
                }
                sum + term.l2 * col.iter().map(|w| w * w).sum::<f64>()
            })
            .collect();
        let mut total: f64 = per_task.iter().sum();

        for &(t, ref target, weight) in &self.couplings {
            let col_t = self.col(flat, t);
            let target: &[f64] = match *target {
                TargetRef::Col(s) => self.col(flat, s),
                TargetRef::Frozen(idx) => self.spec.frozen[idx].weights(),
            };
            total += weight
                * col_t
                    .iter()
                    .zip(target)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>();
        }
        total
    }

    fn gradient(&self, flat: &[f64]) -> Vec<f64> {
        let partials: Vec<(usize, Vec<f64>)> = self
            .spec
            .tasks
            .par_iter()
            .zip(&self.task_cols)
            .map(|(term, &col_idx)| {
                let col = self.col(flat, col_idx);
                let mut grad = vec![0.0; self.dimension];
                for &(x, y) in &term.examples {
                    let coef = -y * sigmoid(-y * score_slice(col, x));
                    for &(id, value) in x.entries() {
                        grad[id as usize] += coef * value;
                    }
                    grad[self.dimension - 1] += coef;
                }
                for (g, w) in grad.iter_mut().zip(col) {
                    *g += 2.0 * term.l2 * w;
                }
                (col_idx, grad)
            })
            .collect();

        let mut full = vec![0.0; flat.len()];
        for (col_idx, grad) in partials {
            let base = col_idx * self.dimension;
            for (slot, g) in full[base..base + self.dimension].iter_mut().zip(&grad) {
                *slot += g;
            }
        }

        for &(t, ref target, weight) in &self.couplings {
            let (target_vals, free_target): (Vec<f64>, Option<usize>) = match *target {
                TargetRef::Col(s) => (self.col(flat, s).to_vec(), Some(s)),
                TargetRef::Frozen(idx) => (self.spec.frozen[idx].weights().to_vec(), None),
            };
            let base_t = t * self.dimension;
            for (j, target_val) in target_vals.iter().enumerate() {
                let diff = flat[base_t + j] - target_val;
                full[base_t + j] += 2.0 * weight * diff;
                if let Some(s) = free_target {
                    full[s * self.dimension + j] -= 2.0 * weight * diff;
                }
            }
        }
        full
    }
}

/// Value of the composite objective at `theta`.
///
/// With no couplings and a single task this is the plain regularized
/// single-task objective; with column couplings it covers the joint
/// multi-task objectives, and with frozen targets the transfer ones.
pub fn composite_objective(theta: &ModelMatrix, spec: &ObjectiveSpec<'_>) -> Result<f64> {
    let prepared = Prepared::new(theta, spec)?;
    let (_, flat) = theta.flatten();
    Ok(prepared.objective(&flat))
}

/// Gradient of the composite objective, shaped like `theta`.
pub fn composite_gradient(theta: &ModelMatrix, spec: &ObjectiveSpec<'_>) -> Result<ModelMatrix> {
    let prepared = Prepared::new(theta, spec)?;
    let (order, flat) = theta.flatten();
    let grad = prepared.gradient(&flat);
    Ok(ModelMatrix::unflatten(&order, &grad, theta.dimension()))
}

/// Result of a descent run: the final point and the accepted objective/step
/// trace. `objectives` is non-increasing by construction.
#[derive(Debug, Clone)]
pub struct Descent {
    pub x: Vec<f64>,
    pub objectives: Vec<f64>,
    pub steps: Vec<f64>,
}

/// Full-batch gradient descent with backtracking line search.
///
/// Each iteration halves the step until the Armijo sufficient-decrease test
/// holds, then stops once the relative objective decrease falls below
/// `cfg.tol` (or after `cfg.max_iters` iterations). The accepted step is
/// doubled (capped at `cfg.step_size`) as the next iteration's first try.
pub fn minimize<F, G>(objective: F, gradient: G, init: Vec<f64>, cfg: &OptConfig) -> Result<Descent>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    let mut x = init;
    let mut f_current = objective(&x);
    if !f_current.is_finite() {
        return Err(Error::NonFiniteObjective);
    }
    let mut objectives = vec![f_current];
    let mut steps = Vec::new();
    let mut step = cfg.step_size;

    for _ in 0..cfg.max_iters {
        let grad = gradient(&x);
        let grad_norm_sq: f64 = grad.iter().map(|g| g * g).sum();

        let mut alpha = (step * 2.0).min(cfg.step_size);
        let mut halvings = 0;
        let (x_next, f_next) = loop {
            let candidate: Vec<f64> = x
                .iter()
                .zip(&grad)
                .map(|(xi, gi)| xi - alpha * gi)
                .collect();
            let f_candidate = objective(&candidate);
            if f_candidate.is_finite() && f_candidate <= f_current - ARMIJO_C * alpha * grad_norm_sq
            {
                break (candidate, f_candidate);
            }
            halvings += 1;
            if halvings >= MAX_HALVINGS {
                return Err(Error::LineSearchFailed(MAX_HALVINGS));
            }
            alpha *= 0.5;
        };

        step = alpha;
        let decrease = f_current - f_next;
        x = x_next;
        f_current = f_next;
        objectives.push(f_current);
        steps.push(alpha);

        if decrease < cfg.tol * f_current.abs().max(1.0) {
            break;
        }
    }

    Ok(Descent {
        x,
        objectives,
        steps,
    })
}

/// Minimizes a composite objective over the columns of `init`.
///
/// Convenience wrapper tying [`minimize`] to [`composite_objective`] /
/// [`composite_gradient`]; the returned trace's last objective equals
/// `composite_objective` at the returned matrix.
pub fn minimize_objective(
    spec: &ObjectiveSpec<'_>,
    init: ModelMatrix,
    cfg: &OptConfig,
) -> Result<(ModelMatrix, Descent)> {
    let prepared = Prepared::new(&init, spec)?;
    let (order, flat) = init.flatten();
    let dimension = init.dimension();
    let descent = minimize(
        |x| prepared.objective(x),
        |x| prepared.gradient(x),
        flat,
        cfg,
    )?;
    let matrix = ModelMatrix::unflatten(&order, &descent.x, dimension);
    Ok((matrix, descent))
}


#[cfg(test)]
mod properties {
    use super::*;
    use crate::corpus::Source;
    use proptest::prelude::*;

    fn weights(n: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-3.0f64..3.0, n)
    }

    proptest! {
        #[test]
        fn objective_is_convex_along_midpoints(wa in weights(3), wb in weights(3)) {
            let x0 = SparseVector::new(vec![(0, 1.0), (1, -0.5)]).unwrap();
            let x1 = SparseVector::new(vec![(1, 2.0)]).unwrap();
            let id = TaskId::original(Source::S1, 0);
            let spec = ObjectiveSpec::new(vec![TaskTerm {
                id,
                examples: vec![(&x0, 1.0), (&x1, -1.0)],
                l2: 0.2,
            }]);
            let eval = |w: &[f64]| {
                let mut theta = ModelMatrix::new(3);
                theta.insert(id, ModelVector::new(w.to_vec()).unwrap()).unwrap();
                composite_objective(&theta, &spec).unwrap()
            };
            let mid: Vec<f64> = wa.iter().zip(&wb).map(|(a, b)| 0.5 * (a + b)).collect();
            prop_assert!(eval(&mid) <= 0.5 * (eval(&wa) + eval(&wb)) + 1e-12);
        }
    }
}

//! Per-class confusion counts and the five evaluation metrics: micro-averaged
//! F1, macro-averaged precision/recall/F1, and the averaged Matthews
//! correlation coefficient.
//!
//! Zero denominators resolve to 0 everywhere (precision, recall, F1 and MCC
//! alike), so degraded predictions degrade scores instead of producing NaNs.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};

/// One-versus-rest counts for a single class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ClassCounts {
    pub true_pos: usize,
    pub false_pos: usize,
    pub true_neg: usize,
    pub false_neg: usize,
}

impl ClassCounts {
    pub fn total(&self) -> usize {
        self.true_pos + self.false_pos + self.true_neg + self.false_neg
    }
}

/// Confusion counts for every class of an evaluation, derived from
/// multi-class decisions.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ConfusionCounts {
    per_class: BTreeMap<u32, ClassCounts>,
    n_examples: usize,
}

impl ConfusionCounts {
    /// Builds counts from predicted and true labels over a fixed class set.
    pub fn from_predictions(
        predictions: &[u32],
        truth: &[u32],
        classes: &BTreeSet<u32>,
    ) -> Result<ConfusionCounts> {
        if predictions.len() != truth.len() {
            return Err(Error::Eval(format!(
                "{} predictions vs {} labels",
                predictions.len(),
                truth.len()
            )));
        }
        for &label in predictions.iter().chain(truth) {
            if !classes.contains(&label) {
                return Err(Error::Eval(format!("unknown label {label}")));
            }
        }
        let n = predictions.len();
        let mut per_class = BTreeMap::new();
        for &class in classes {
            let mut counts = ClassCounts {
                true_pos: 0,
                false_pos: 0,
                true_neg: 0,
                false_neg: 0,
            };
            for (&pred, &actual) in predictions.iter().zip(truth) {
                match (pred == class, actual == class) {
                    (true, true) => counts.true_pos += 1,
                    (true, false) => counts.false_pos += 1,
                    (false, true) => counts.false_neg += 1,
                    (false, false) => counts.true_neg += 1,
                }
            }
            debug_assert_eq!(counts.total(), n);
            per_class.insert(class, counts);
        }
        Ok(ConfusionCounts {
            per_class,
            n_examples: n,
        })
    }

    /// Builds counts directly; every class's four counts must sum to
    /// `n_examples`.
    pub fn from_per_class(
        per_class: BTreeMap<u32, ClassCounts>,
        n_examples: usize,
    ) -> Result<ConfusionCounts> {
        for (class, counts) in &per_class {
            if counts.total() != n_examples {
                return Err(Error::Eval(format!(
                    "class {class}: counts sum to {} but n_examples is {n_examples}",
                    counts.total()
                )));
            }
        }
        Ok(ConfusionCounts {
            per_class,
            n_examples,
        })
    }

    pub fn per_class(&self) -> &BTreeMap<u32, ClassCounts> {
        &self.per_class
    }

    pub fn n_examples(&self) -> usize {
        self.n_examples
    }

    pub fn n_classes(&self) -> usize {
        self.per_class.len()
    }
}

/// See [`ConfusionCounts::from_predictions`].
pub fn confusion_counts(
    predictions: &[u32],
    truth: &[u32],
    classes: &BTreeSet<u32>,
) -> Result<ConfusionCounts> {
    ConfusionCounts::from_predictions(predictions, truth, classes)
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1_of(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Micro-averaged F1: global precision and recall from summed counts, then
/// their harmonic mean.
pub fn micro_f1(counts: &ConfusionCounts) -> f64 {
    let tp: usize = counts.per_class.values().map(|c| c.true_pos).sum();
    let fp: usize = counts.per_class.values().map(|c| c.false_pos).sum();
    let fn_: usize = counts.per_class.values().map(|c| c.false_neg).sum();
    f1_of(ratio(tp, tp + fp), ratio(tp, tp + fn_))
}

/// Macro-averaged precision, recall and F1: per-class scores averaged with
/// equal class weight. The macro F1 is the mean of per-class F1 values, not
/// the harmonic mean of the macro precision and recall.
pub fn macro_prf1(counts: &ConfusionCounts) -> (f64, f64, f64) {
    let n = counts.n_classes();
    if n == 0 {
        return (0.0, 0.0, 0.0);
    }
    let mut p_sum = 0.0;
    let mut r_sum = 0.0;
    let mut f_sum = 0.0;
    for c in counts.per_class.values() {
        let p = ratio(c.true_pos, c.true_pos + c.false_pos);
        let r = ratio(c.true_pos, c.true_pos + c.false_neg);
        p_sum += p;
        r_sum += r;
        f_sum += f1_of(p, r);
    }
    (p_sum / n as f64, r_sum / n as f64, f_sum / n as f64)
}

/// Per-class Matthews correlation coefficients and their unweighted mean.
/// A class with any zero factor in the denominator scores 0.
pub fn amcc(counts: &ConfusionCounts) -> (BTreeMap<u32, f64>, f64) {
    let mut per_class = BTreeMap::new();
    for (&class, c) in &counts.per_class {
        let (tp, fp, tn, fn_) = (
            c.true_pos as f64,
            c.false_pos as f64,
            c.true_neg as f64,
            c.false_neg as f64,
        );
        // product of square roots, not the root of the product: keeps large
        // counts away from overflow; the clamp absorbs the rounding this
        // form introduces at the +-1 extremes
        let denom = (tp + fp).sqrt() * (tp + fn_).sqrt() * (tn + fp).sqrt() * (tn + fn_).sqrt();
        let mcc = if denom == 0.0 {
            0.0
        } else {
            ((tp * tn - fp * fn_) / denom).clamp(-1.0, 1.0)
        };
        per_class.insert(class, mcc);
    }
    let mean = if per_class.is_empty() {
        0.0
    } else {
        per_class.values().sum::<f64>() / per_class.len() as f64
    };
    (per_class, mean)
}

/// The full metric suite for one evaluation.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct EvalReport {
    pub micro_f1: f64,
    pub map: f64,
    pub mar: f64,
    pub maf1: f64,
    pub amcc: f64,
    pub per_class_mcc: BTreeMap<u32, f64>,
    pub counts: ConfusionCounts,
}

impl EvalReport {
    pub fn from_counts(counts: ConfusionCounts) -> EvalReport {
        let micro = micro_f1(&counts);
        let (map, mar, maf1) = macro_prf1(&counts);
        let (per_class_mcc, amcc_value) = amcc(&counts);
        EvalReport {
            micro_f1: micro,
            map,
            mar,
            maf1,
            amcc: amcc_value,
            per_class_mcc,
            counts,
        }
    }

    /// `(name, value)` pairs in the reporting order used by the tables.
    pub fn named_metrics(&self) -> [(&'static str, f64); 5] {
        [
            ("micro_f1", self.micro_f1),
            ("map", self.map),
            ("mar", self.mar),
            ("maf1", self.maf1),
            ("amcc", self.amcc),
        ]
    }
}

/// Evaluates multi-class predictions against the truth in one step.
pub fn evaluate(predictions: &[u32], truth: &[u32], classes: &BTreeSet<u32>) -> Result<EvalReport> {
    Ok(EvalReport::from_counts(ConfusionCounts::from_predictions(
        predictions,
        truth,
        classes,
    )?))
}


#[cfg(test)]
mod properties {
    use super::*;
    use proptest::prelude::*;

    /// Naive implementations straight from the formulas — the oracle the
    /// library functions must agree with.
    pub(super) mod oracle {
        use std::collections::BTreeSet;

        pub fn all_metrics(
            pred: &[u32],
            truth: &[u32],
            classes: &BTreeSet<u32>,
        ) -> (f64, f64, f64, f64, f64) {
            let nc = classes.len() as f64;
            let mut tp_sum = 0.0;
            let mut fp_sum = 0.0;
            let mut fn_sum = 0.0;
            let mut map = 0.0;
            let mut mar = 0.0;
            let mut maf1 = 0.0;
            let mut amcc = 0.0;
            for &c in classes {
                let tp = pred
                    .iter()
                    .zip(truth)
                    .filter(|&(&p, &t)| p == c && t == c)
                    .count() as f64;
                let fp = pred
                    .iter()
                    .zip(truth)
                    .filter(|&(&p, &t)| p == c && t != c)
                    .count() as f64;
                let fn_ = pred
                    .iter()
                    .zip(truth)
                    .filter(|&(&p, &t)| p != c && t == c)
                    .count() as f64;
                let tn = pred
                    .iter()
                    .zip(truth)
                    .filter(|&(&p, &t)| p != c && t != c)
                    .count() as f64;
                tp_sum += tp;
                fp_sum += fp;
                fn_sum += fn_;
                let p_c = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
                let r_c = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
                map += p_c / nc;
                mar += r_c / nc;
                maf1 += if p_c + r_c > 0.0 {
                    2.0 * p_c * r_c / (p_c + r_c) / nc
                } else {
                    0.0
                };
                let den =
                    ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
                amcc += if den > 0.0 {
                    (tp * tn - fp * fn_) / den / nc
                } else {
                    0.0
                };
            }
            let p = if tp_sum + fp_sum > 0.0 {
                tp_sum / (tp_sum + fp_sum)
            } else {
                0.0
            };
            let r = if tp_sum + fn_sum > 0.0 {
                tp_sum / (tp_sum + fn_sum)
            } else {
                0.0
            };
            let micro = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
            (micro, map, mar, maf1, amcc)
        }
    }

    fn labeled_pairs() -> impl Strategy<Value = (Vec<u32>, Vec<u32>, u32)> {
        (2u32..=5, 1usize..60).prop_flat_map(|(n_classes, len)| {
            (
                proptest::collection::vec(0..n_classes, len),
                proptest::collection::vec(0..n_classes, len),
                Just(n_classes),
            )
                .prop_map(|(pred, truth, n)| (pred, truth, n))
        })
    }

    proptest! {
        #[test]
        fn metrics_match_oracle((pred, truth, n_classes) in labeled_pairs()) {
            let classes: BTreeSet<u32> = (0..n_classes).collect();
            let report = evaluate(&pred, &truth, &classes).unwrap();
            let (micro, map, mar, maf1, amcc_value) =
                oracle::all_metrics(&pred, &truth, &classes);
            prop_assert!((report.micro_f1 - micro).abs() < 1e-12);
            prop_assert!((report.map - map).abs() < 1e-12);
            prop_assert!((report.mar - mar).abs() < 1e-12);
            prop_assert!((report.maf1 - maf1).abs() < 1e-12);
            prop_assert!((report.amcc - amcc_value).abs() < 1e-12);
        }

        #[test]
        fn metrics_stay_in_bounds((pred, truth, n_classes) in labeled_pairs()) {
            let classes: BTreeSet<u32> = (0..n_classes).collect();
            let report = evaluate(&pred, &truth, &classes).unwrap();
            for value in [report.micro_f1, report.map, report.mar, report.maf1] {
                prop_assert!((0.0..=1.0).contains(&value));
            }
            prop_assert!((-1.0..=1.0).contains(&report.amcc));
            for counts in report.counts.per_class().values() {
                prop_assert_eq!(counts.total(), report.counts.n_examples());
            }
        }

        #[test]
        fn metrics_invariant_under_joint_shuffle(
            (pred, truth, n_classes) in labeled_pairs(),
            seed in 0u64..1000,
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let classes: BTreeSet<u32> = (0..n_classes).collect();
            let before = evaluate(&pred, &truth, &classes).unwrap();

            let mut paired: Vec<(u32, u32)> =
                pred.iter().copied().zip(truth.iter().copied()).collect();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            paired.shuffle(&mut rng);
            let (sp, st): (Vec<u32>, Vec<u32>) = paired.into_iter().unzip();
            let after = evaluate(&sp, &st, &classes).unwrap();

            prop_assert_eq!(before.micro_f1, after.micro_f1);
            prop_assert_eq!(before.map, after.map);
            prop_assert_eq!(before.mar, after.mar);
            prop_assert_eq!(before.maf1, after.maf1);
            prop_assert_eq!(before.amcc, after.amcc);
        }
    }
}

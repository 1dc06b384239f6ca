//! Confusion-matrix based evaluation: accuracy and one-vs-rest precision,
//! recall and F1 per class.
//!
//! Any metric whose denominator is zero is reported as 0 with its `undefined`
//! flag set.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::ActivityLabel;
use crate::format::sig;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("{truth} true labels but {predicted} predictions")]
    LengthMismatch { truth: usize, predicted: usize },
    #[error("label {0} is not in the class order")]
    UnknownLabel(ActivityLabel),
    #[error("no samples were scored")]
    Empty,
    #[error("cannot average an empty list of reports")]
    NothingToAverage,
}

/// `counts[i][j]`: samples of true class `class_order[i]` predicted as `class_order[j]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub class_order: Vec<ActivityLabel>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }

    fn position(&self, label: ActivityLabel) -> Result<usize, MetricsError> {
        self.class_order
            .iter()
            .position(|&l| l == label)
            .ok_or(MetricsError::UnknownLabel(label))
    }

    /// One-vs-rest (TP, FP, FN) for `label`.
    pub fn one_vs_rest(&self, label: ActivityLabel) -> Result<(u64, u64, u64), MetricsError> {
        let i = self.position(label)?;
        let tp = self.counts[i][i];
        let predicted: u64 = self.counts.iter().map(|row| row[i]).sum();
        let actual: u64 = self.counts[i].iter().sum();
        Ok((tp, predicted - tp, actual - tp))
    }
}

pub fn confusion_matrix(
    y_true: &[ActivityLabel],
    y_pred: &[ActivityLabel],
    class_order: &[ActivityLabel],
) -> Result<ConfusionMatrix, MetricsError> {
    if y_true.len() != y_pred.len() {
        return Err(MetricsError::LengthMismatch {
            truth: y_true.len(),
            predicted: y_pred.len(),
        });
    }
    let mut slot = [usize::MAX; 6];
    for (i, l) in class_order.iter().enumerate() {
        slot[l.index()] = i;
    }
    let k = class_order.len();
    let mut counts = vec![vec![0u64; k]; k];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        let (i, j) = (slot[t.index()], slot[p.index()]);
        if i == usize::MAX {
            return Err(MetricsError::UnknownLabel(t));
        }
        if j == usize::MAX {
            return Err(MetricsError::UnknownLabel(p));
        }
        counts[i][j] += 1;
    }
    Ok(ConfusionMatrix {
        class_order: class_order.to_vec(),
        counts,
    })
}

/// trace / total.
pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64, MetricsError> {
    match cm.total() {
        0 => Err(MetricsError::Empty),
        total => Ok(cm.trace() as f64 / total as f64),
    }
}

/// Fraction of equal entries; the usual shortcut when no matrix is needed.
pub fn accuracy_of(y_true: &[ActivityLabel], y_pred: &[ActivityLabel]) -> Result<f64, MetricsError> {
    if y_true.len() != y_pred.len() {
        return Err(MetricsError::LengthMismatch {
            truth: y_true.len(),
            predicted: y_pred.len(),
        });
    }
    if y_true.is_empty() {
        return Err(MetricsError::Empty);
    }
    let hits = y_true.iter().zip(y_pred).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / y_true.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: ActivityLabel,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    pub precision_undefined: bool,
    pub recall_undefined: bool,
    pub f1_undefined: bool,
}

fn ratio(num: f64, den: f64) -> (f64, bool) {
    if den == 0.0 {
        (0.0, true)
    } else {
        (num / den, false)
    }
}

pub fn precision_recall_f1(cm: &ConfusionMatrix, label: ActivityLabel) -> Result<ClassMetrics, MetricsError> {
    let (tp, fp, fn_) = cm.one_vs_rest(label)?;
    let (precision, precision_undefined) = ratio(tp as f64, (tp + fp) as f64);
    let (recall, recall_undefined) = ratio(tp as f64, (tp + fn_) as f64);
    let (f1, f1_undefined) = ratio(2.0 * precision * recall, precision + recall);
    Ok(ClassMetrics {
        label,
        precision,
        recall,
        f1,
        support: tp + fn_,
        precision_undefined,
        recall_undefined,
        f1_undefined,
    })
}

/// Micro-averaged precision and recall. Both equal the accuracy for
/// single-label multiclass predictions.
pub fn micro_precision_recall(cm: &ConfusionMatrix) -> Result<(f64, f64), MetricsError> {
    let mut sums = (0u64, 0u64, 0u64);
    for &l in &cm.class_order {
        let (tp, fp, fn_) = cm.one_vs_rest(l)?;
        sums = (sums.0 + tp, sums.1 + fp, sums.2 + fn_);
    }
    let (tp, fp, fn_) = sums;
    if tp + fp == 0 {
        return Err(MetricsError::Empty);
    }
    Ok((tp as f64 / (tp + fp) as f64, tp as f64 / (tp + fn_) as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub per_class: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

impl ClassReport {
    /// Rows follow `cm.class_order`.
    pub fn from_confusion(cm: &ConfusionMatrix) -> Result<Self, MetricsError> {
        let per_class = cm
            .class_order
            .iter()
            .map(|&l| precision_recall_f1(cm, l))
            .collect::<Result<Vec<_>, _>>()?;
        let accuracy = accuracy(cm)?;
        Ok(Self::with_macros(per_class, accuracy))
    }

    fn with_macros(per_class: Vec<ClassMetrics>, accuracy: f64) -> Self {
        let k = per_class.len().max(1) as f64;
        let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / k;
        let (macro_precision, macro_recall, macro_f1) =
            (mean(|m| m.precision), mean(|m| m.recall), mean(|m| m.f1));
        Self {
            per_class,
            accuracy,
            macro_precision,
            macro_recall,
            macro_f1,
        }
    }

    /// Element-wise mean of reports over the same class order. An undefined flag
    /// is kept if it was set in any of the inputs.
    pub fn average(reports: &[ClassReport]) -> Result<Self, MetricsError> {
        let first = reports.first().ok_or(MetricsError::NothingToAverage)?;
        let n = reports.len() as f64;
        let mut per_class = first.per_class.clone();
        for (c, slot) in per_class.iter_mut().enumerate() {
            let rows: Vec<&ClassMetrics> = reports.iter().map(|r| &r.per_class[c]).collect();
            if let Some(bad) = rows.iter().find(|m| m.label != slot.label) {
                return Err(MetricsError::UnknownLabel(bad.label));
            }
            slot.precision = rows.iter().map(|m| m.precision).sum::<f64>() / n;
            slot.recall = rows.iter().map(|m| m.recall).sum::<f64>() / n;
            slot.f1 = rows.iter().map(|m| m.f1).sum::<f64>() / n;
            slot.support = rows.iter().map(|m| m.support).sum();
            slot.precision_undefined = rows.iter().any(|m| m.precision_undefined);
            slot.recall_undefined = rows.iter().any(|m| m.recall_undefined);
            slot.f1_undefined = rows.iter().any(|m| m.f1_undefined);
        }
        let accuracy = reports.iter().map(|r| r.accuracy).sum::<f64>() / n;
        Ok(Self::with_macros(per_class, accuracy))
    }

    /// `class,precision,recall,f1,support`, one row per class code.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,precision,recall,f1,support\n");
        for m in &self.per_class {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                m.label.code(),
                sig(m.precision, 4),
                sig(m.recall, 4),
                sig(m.f1, 4),
                m.support
            );
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| Class | Precision | Recall | F1-score |\n|---|---|---|---|\n");
        for m in &self.per_class {
            let flag = |v: f64, undefined: bool| {
                if undefined {
                    format!("{}*", sig(v, 4))
                } else {
                    sig(v, 4)
                }
            };
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} |",
                m.label.code(),
                flag(m.precision, m.precision_undefined),
                flag(m.recall, m.recall_undefined),
                flag(m.f1, m.f1_undefined)
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::Rng;

    use ActivityLabel::*;

    fn labels(codes: &[u8]) -> Vec<ActivityLabel> {
        codes.iter().map(|&c| ActivityLabel::from_code(i64::from(c)).unwrap()).collect()
    }

    #[test]
    fn perfect_prediction_is_diagonal() {
        let y = labels(&[1, 2, 2, 3]);
        let cm = confusion_matrix(&y, &y, &[Walking, WalkingUpstairs, WalkingDownstairs]).unwrap();
        assert_eq!(cm.counts, vec![vec![1, 0, 0], vec![0, 2, 0], vec![0, 0, 1]]);
        assert_eq!(accuracy(&cm).unwrap(), 1.0);
    }

    #[test]
    fn small_hand_example() {
        let cm = confusion_matrix(&labels(&[1, 1, 2]), &labels(&[1, 2, 2]), &[Walking, WalkingUpstairs]).unwrap();
        assert_eq!(cm.counts, vec![vec![1, 1], vec![0, 1]]);
        assert!((accuracy(&cm).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let m = precision_recall_f1(&cm, Walking).unwrap();
        assert_eq!((m.precision, m.recall), (1.0, 0.5));
        assert!((m.f1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn absent_class_is_flagged_zero() {
        let y = labels(&[1, 2]);
        let cm = confusion_matrix(&y, &y, &[Walking, WalkingUpstairs, Laying]).unwrap();
        let m = precision_recall_f1(&cm, Laying).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
        assert!(m.precision_undefined && m.recall_undefined && m.f1_undefined);
    }

    #[test]
    fn errors() {
        let y = labels(&[1, 2]);
        assert!(matches!(
            confusion_matrix(&y, &y[..1], &[Walking]),
            Err(MetricsError::LengthMismatch { .. })
        ));
        assert_eq!(
            confusion_matrix(&y, &y, &[Walking]),
            Err(MetricsError::UnknownLabel(WalkingUpstairs))
        );
        let empty = confusion_matrix(&[], &[], &[Walking]).unwrap();
        assert_eq!(accuracy(&empty), Err(MetricsError::Empty));
    }

    /// Per-sample counting with no matrix at all.
    fn oracle(y_true: &[ActivityLabel], y_pred: &[ActivityLabel], label: ActivityLabel) -> (f64, f64, f64) {
        let mut tp = 0u64;
        let mut fp = 0u64;
        let mut fn_ = 0u64;
        for i in 0..y_true.len() {
            let t = y_true[i] == label;
            let p = y_pred[i] == label;
            if t && p {
                tp += 1;
            } else if p {
                fp += 1;
            } else if t {
                fn_ += 1;
            }
        }
        let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
        let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        (precision, recall, f1)
    }

    #[test]
    fn thousand_random_cases_match_per_sample_oracle() {
        let mut rng = crate::rng::rng_from_seed(11);
        for case in 0..1000 {
            let n = rng.gen_range(1..200);
            let y_true: Vec<_> = (0..n).map(|_| ActivityLabel::ALL[rng.gen_range(0..6)]).collect();
            let y_pred: Vec<_> = (0..n)
                .map(|i| if rng.gen_bool(0.6) { y_true[i] } else { ActivityLabel::ALL[rng.gen_range(0..6)] })
                .collect();
            let cm = confusion_matrix(&y_true, &y_pred, &ActivityLabel::ALL).unwrap();
            for i in 0..6 {
                for j in 0..6 {
                    let naive = (0..n)
                        .filter(|&s| y_true[s] == ActivityLabel::ALL[i] && y_pred[s] == ActivityLabel::ALL[j])
                        .count() as u64;
                    assert_eq!(cm.counts[i][j], naive, "case {case}");
                }
            }
            let hits = (0..n).filter(|&s| y_true[s] == y_pred[s]).count() as f64 / n as f64;
            assert_eq!(accuracy(&cm).unwrap(), hits);
            for l in ActivityLabel::ALL {
                let m = precision_recall_f1(&cm, l).unwrap();
                assert_eq!((m.precision, m.recall, m.f1), oracle(&y_true, &y_pred, l), "case {case}");
            }
        }
    }

    proptest! {
        #[test]
        fn identities_and_permutation_invariance(
            pairs in prop::collection::vec((1u8..=6, 1u8..=6), 1..300),
            seed: u64,
        ) {
            let y_true: Vec<_> = labels(&pairs.iter().map(|p| p.0).collect::<Vec<_>>());
            let y_pred: Vec<_> = labels(&pairs.iter().map(|p| p.1).collect::<Vec<_>>());
            let cm = confusion_matrix(&y_true, &y_pred, &ActivityLabel::ALL).unwrap();
            prop_assert_eq!(cm.total(), pairs.len() as u64);

            let tp_sum: u64 = ActivityLabel::ALL.iter().map(|&l| cm.one_vs_rest(l).unwrap().0).sum();
            prop_assert_eq!(tp_sum, cm.trace());

            let acc = accuracy(&cm).unwrap();
            let (mp, mr) = micro_precision_recall(&cm).unwrap();
            prop_assert!((mp - acc).abs() <= 1e-12 && (mr - acc).abs() <= 1e-12);

            let report = ClassReport::from_confusion(&cm).unwrap();
            for m in &report.per_class {
                if !m.precision_undefined && !m.recall_undefined && !m.f1_undefined {
                    let h = 2.0 * m.precision * m.recall / (m.precision + m.recall);
                    prop_assert!((m.f1 - h).abs() <= 1e-15);
                }
            }

            let mut order: Vec<usize> = (0..pairs.len()).collect();
            order.shuffle(&mut crate::rng::rng_from_seed(seed));
            let t2: Vec<_> = order.iter().map(|&i| y_true[i]).collect();
            let p2: Vec<_> = order.iter().map(|&i| y_pred[i]).collect();
            let cm2 = confusion_matrix(&t2, &p2, &ActivityLabel::ALL).unwrap();
            prop_assert_eq!(ClassReport::from_confusion(&cm2).unwrap(), report);
        }
    }

    #[test]
    fn averaging_and_rendering() {
        let a = confusion_matrix(&labels(&[1, 2]), &labels(&[1, 2]), &[Walking, WalkingUpstairs]).unwrap();
        let b = confusion_matrix(&labels(&[1, 2]), &labels(&[2, 2]), &[Walking, WalkingUpstairs]).unwrap();
        let avg = ClassReport::average(&[
            ClassReport::from_confusion(&a).unwrap(),
            ClassReport::from_confusion(&b).unwrap(),
        ])
        .unwrap();
        assert_eq!(avg.accuracy, 0.75);
        assert_eq!(avg.per_class[0].recall, 0.5);
        assert_eq!(avg.per_class[1].precision, 0.75);
        assert!(avg.per_class[0].precision_undefined);
        assert!(avg.to_csv().starts_with("class,precision,recall,f1,support\n1,0.5000,0.5000,0.5000,2\n"));
        assert!(avg.to_markdown().contains("| 2 | 0.7500 | 1.000 |"));
        assert_eq!(ClassReport::average(&[]), Err(MetricsError::NothingToAverage));
    }
}

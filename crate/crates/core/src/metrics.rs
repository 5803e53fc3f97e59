//! Multi-label evaluation metrics.
//!
//! Degenerate ratios follow one convention throughout: a 0/0 precision,
//! recall or F1 is 0, and an instance with empty true and predicted label
//! sets has Jaccard similarity 1.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{EmotionLabelSet, LabelMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClassCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

fn check(y_true: &LabelMatrix, y_pred: &LabelMatrix) -> Result<()> {
    if y_true.rows() != y_pred.rows() || y_true.cols() != y_pred.cols() {
        return Err(Error::Shape(format!(
            "y_true is {}×{}, y_pred is {}×{}",
            y_true.rows(),
            y_true.cols(),
            y_pred.rows(),
            y_pred.cols()
        )));
    }
    Ok(())
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

pub fn class_counts(y_true: &LabelMatrix, y_pred: &LabelMatrix) -> Result<Vec<ClassCounts>> {
    check(y_true, y_pred)?;
    let mut counts = vec![ClassCounts::default(); y_true.cols()];
    for i in 0..y_true.rows() {
        for (c, (&t, &p)) in y_true.row(i).iter().zip(y_pred.row(i)).enumerate() {
            match (t, p) {
                (1, 1) => counts[c].tp += 1,
                (0, 1) => counts[c].fp += 1,
                (1, 0) => counts[c].fn_ += 1,
                _ => {}
            }
        }
    }
    Ok(counts)
}

fn pooled(y_true: &LabelMatrix, y_pred: &LabelMatrix) -> Result<ClassCounts> {
    Ok(class_counts(y_true, y_pred)?
        .into_iter()
        .fold(ClassCounts::default(), |a, c| ClassCounts {
            tp: a.tp + c.tp,
            fp: a.fp + c.fp,
            fn_: a.fn_ + c.fn_,
        }))
}

/// `Σ TP / Σ (TP + FP)`.
pub fn micro_precision(y_true: &LabelMatrix, y_pred: &LabelMatrix) -> Result<f64> {
    let c = pooled(y_true, y_pred)?;
    Ok(ratio(c.tp, c.tp + c.fp))
}

/// `Σ TP / Σ (TP + FN)`.
pub fn micro_recall(y_true: &LabelMatrix, y_pred: &LabelMatrix) -> Result<f64> {
    let c = pooled(y_true, y_pred)?;
    Ok(ratio(c.tp, c.tp + c.fn_))
}

/// Harmonic mean of micro precision and micro recall.
pub fn micro_f1(y_true: &LabelMatrix, y_pred: &LabelMatrix) -> Result<f64> {
    let c = pooled(y_true, y_pred)?;
    Ok(harmonic(ratio(c.tp, c.tp + c.fp), ratio(c.tp, c.tp + c.fn_)))
}

/// Unweighted mean of per-class F1.
pub fn macro_f1(y_true: &LabelMatrix, y_pred: &LabelMatrix) -> Result<f64> {
    let counts = class_counts(y_true, y_pred)?;
    if counts.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = counts
        .iter()
        .map(|c| harmonic(ratio(c.tp, c.tp + c.fp), ratio(c.tp, c.tp + c.fn_)))
        .sum();
    Ok(sum / counts.len() as f64)
}

/// Mean over instances of `|Ŷ ∩ Y| / |Ŷ ∪ Y|`.
pub fn jaccard_accuracy(y_true: &LabelMatrix, y_pred: &LabelMatrix) -> Result<f64> {
    check(y_true, y_pred)?;
    if y_true.rows() == 0 {
        return Ok(0.0);
    }
    let total: f64 = (0..y_true.rows())
        .map(|i| {
            let (t, p) = (y_true.row(i), y_pred.row(i));
            let inter = t.iter().zip(p).filter(|(a, b)| **a == 1 && **b == 1).count();
            let union = t.iter().zip(p).filter(|(a, b)| **a == 1 || **b == 1).count();
            if union == 0 {
                1.0
            } else {
                inter as f64 / union as f64
            }
        })
        .sum();
    Ok(total / y_true.rows() as f64)
}

/// Fraction of label slots that disagree.
pub fn hamming_loss(y_true: &LabelMatrix, y_pred: &LabelMatrix) -> Result<f64> {
    check(y_true, y_pred)?;
    let slots = y_true.rows() * y_true.cols();
    let wrong = y_true
        .as_slice()
        .iter()
        .zip(y_pred.as_slice())
        .filter(|(a, b)| a != b)
        .count();
    Ok(ratio(wrong, slots))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassReport {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationReport {
    pub precision_micro: f64,
    pub recall_micro: f64,
    pub f1_micro: f64,
    pub f1_macro: f64,
    pub jaccard_accuracy: f64,
    pub hamming_loss: f64,
    pub per_class: Vec<ClassReport>,
}

/// Top-level keys of the JSON rendering of [`EvaluationReport`].
pub const REPORT_KEYS: [&str; 7] = [
    "precision_micro",
    "recall_micro",
    "f1_micro",
    "f1_macro",
    "jaccard_accuracy",
    "hamming_loss",
    "per_class",
];

/// Keys of each `per_class` entry.
pub const CLASS_REPORT_KEYS: [&str; 5] = ["label", "precision", "recall", "f1", "support"];

pub fn classwise_report(
    y_true: &LabelMatrix,
    y_pred: &LabelMatrix,
    schema: &EmotionLabelSet,
) -> Result<EvaluationReport> {
    check(y_true, y_pred)?;
    if y_true.cols() != schema.len() {
        return Err(Error::Shape(format!(
            "{} label columns, schema has {}",
            y_true.cols(),
            schema.len()
        )));
    }
    let counts = class_counts(y_true, y_pred)?;
    let per_class = counts
        .iter()
        .zip(schema.labels())
        .map(|(c, label)| {
            let (p, r) = (ratio(c.tp, c.tp + c.fp), ratio(c.tp, c.tp + c.fn_));
            ClassReport {
                label: label.clone(),
                precision: p,
                recall: r,
                f1: harmonic(p, r),
                support: c.tp + c.fn_,
            }
        })
        .collect();
    let precision_micro = micro_precision(y_true, y_pred)?;
    let recall_micro = micro_recall(y_true, y_pred)?;
    Ok(EvaluationReport {
        precision_micro,
        recall_micro,
        f1_micro: harmonic(precision_micro, recall_micro),
        f1_macro: macro_f1(y_true, y_pred)?,
        jaccard_accuracy: jaccard_accuracy(y_true, y_pred)?,
        hamming_loss: hamming_loss(y_true, y_pred)?,
        per_class,
    })
}

impl EvaluationReport {
    pub fn aggregates(&self) -> [(&'static str, f64); 6] {
        [
            ("precision_micro", self.precision_micro),
            ("recall_micro", self.recall_micro),
            ("f1_micro", self.f1_micro),
            ("f1_macro", self.f1_macro),
            ("jaccard_accuracy", self.jaccard_accuracy),
            ("hamming_loss", self.hamming_loss),
        ]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        for (name, v) in self.aggregates() {
            let _ = writeln!(out, "{name:<18}{v:.4}");
        }
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{:<14}{:>9}{:>11}{:>9}{:>9}",
            "class", "support", "precision", "recall", "f1"
        );
        for c in &self.per_class {
            let _ = writeln!(
                out,
                "{:<14}{:>9}{:>11.4}{:>9.4}{:>9.4}",
                c.label, c.support, c.precision, c.recall, c.f1
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[u8]]) -> LabelMatrix {
        LabelMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn micro_fixture() {
        let t = m(&[&[1, 0], &[1, 1]]);
        let p = m(&[&[1, 1], &[0, 1]]);
        let c = pooled(&t, &p).unwrap();
        assert_eq!((c.tp, c.fp, c.fn_), (2, 1, 1));
        assert_eq!(micro_precision(&t, &p).unwrap(), 2.0 / 3.0);
        assert_eq!(micro_recall(&t, &p).unwrap(), 2.0 / 3.0);
        assert!((micro_f1(&t, &p).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn micro_conventions() {
        let t = m(&[&[1, 0], &[0, 1]]);
        assert_eq!(micro_f1(&t, &t).unwrap(), 1.0);
        let zeros = m(&[&[0, 0], &[0, 0]]);
        assert_eq!(micro_precision(&t, &zeros).unwrap(), 0.0);
        assert_eq!(micro_recall(&t, &zeros).unwrap(), 0.0);
        assert_eq!(micro_f1(&t, &zeros).unwrap(), 0.0);
    }

    #[test]
    fn macro_cases() {
        let t = m(&[&[1, 1], &[0, 1]]);
        assert_eq!(macro_f1(&t, &t).unwrap(), 1.0);
        let p = m(&[&[1, 0], &[0, 0]]);
        assert_eq!(macro_f1(&t, &p).unwrap(), 0.5);
        let z = m(&[&[0, 0]]);
        assert_eq!(macro_f1(&z, &z).unwrap(), 0.0);
    }

    #[test]
    fn jaccard_cases() {
        let t = m(&[&[1, 1, 0]]);
        assert_eq!(jaccard_accuracy(&t, &t).unwrap(), 1.0);
        assert_eq!(jaccard_accuracy(&t, &m(&[&[0, 0, 1]])).unwrap(), 0.0);
        assert_eq!(jaccard_accuracy(&t, &m(&[&[0, 1, 1]])).unwrap(), 1.0 / 3.0);
        let z = m(&[&[0, 0, 0]]);
        assert_eq!(jaccard_accuracy(&z, &z).unwrap(), 1.0);
    }

    #[test]
    fn hamming_cases() {
        let t = m(&[&[1, 0], &[0, 1]]);
        assert_eq!(hamming_loss(&t, &t).unwrap(), 0.0);
        assert_eq!(hamming_loss(&t, &m(&[&[0, 1], &[1, 0]])).unwrap(), 1.0);
        assert_eq!(hamming_loss(&t, &m(&[&[1, 1], &[0, 1]])).unwrap(), 0.25);
    }

    #[test]
    fn shape_mismatch() {
        let a = m(&[&[1, 0]]);
        let b = m(&[&[1, 0, 0]]);
        assert!(matches!(micro_f1(&a, &b), Err(Error::Shape(_))));
        assert!(matches!(hamming_loss(&a, &m(&[&[1, 0], &[0, 0]])), Err(Error::Shape(_))));
    }

    fn pad(rows: &[&[u8]]) -> LabelMatrix {
        let padded: Vec<Vec<u8>> = rows
            .iter()
            .map(|r| {
                let mut v = r.to_vec();
                v.resize(12, 0);
                v
            })
            .collect();
        LabelMatrix::from_rows(&padded).unwrap()
    }

    #[test]
    fn report_rows() {
        let schema = EmotionLabelSet::default();
        let t = pad(&[&[1, 0], &[1, 1]]);
        let p = pad(&[&[1, 1], &[0, 1]]);
        let r = classwise_report(&t, &p, &schema).unwrap();
        assert_eq!(r.per_class[0].label, "anger");
        assert_eq!((r.per_class[0].precision, r.per_class[0].recall), (1.0, 0.5));
        assert_eq!(r.per_class[0].support, 2);
        assert_eq!((r.per_class[1].precision, r.per_class[1].recall), (0.5, 1.0));
        assert_eq!(r.per_class[1].support, 1);
        let empty = &r.per_class[5];
        assert_eq!((empty.precision, empty.recall, empty.f1, empty.support), (0.0, 0.0, 0.0, 0));

        let perfect = classwise_report(&t, &t, &schema).unwrap();
        for row in &perfect.per_class[..2] {
            assert_eq!((row.precision, row.recall, row.f1), (1.0, 1.0, 1.0));
        }
        let text = r.render_text();
        assert!(text.contains("f1_micro") && text.contains("neutral"));
    }

    #[test]
    fn report_json_keys() {
        let schema = EmotionLabelSet::default();
        let t = pad(&[&[1, 0]]);
        let v: serde_json::Value =
            serde_json::from_str(&classwise_report(&t, &t, &schema).unwrap().to_json()).unwrap();
        let mut keys: Vec<&str> = v.as_object().unwrap().keys().map(|s| s.as_str()).collect();
        keys.sort();
        let mut expected = REPORT_KEYS.to_vec();
        expected.sort();
        assert_eq!(keys, expected);
        let mut ck: Vec<&str> = v["per_class"][0].as_object().unwrap().keys().map(|s| s.as_str()).collect();
        ck.sort();
        let mut ce = CLASS_REPORT_KEYS.to_vec();
        ce.sort();
        assert_eq!(ck, ce);
    }
}

//! Binary classification metrics over thresholded scores.

use std::fmt;
use std::io::{self, Write};

use thiserror::Error;

use crate::dataset::Dataset;
use crate::linalg::DenseVector;
use crate::mlp::{MlpError, MlpModel};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("{scores} scores for {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("label {value} at position {index} is not 0 or 1")]
    NonBinaryLabel { index: usize, value: f64 },
    #[error("confusion matrix is empty")]
    Empty,
    #[error("no checkpoints to evaluate")]
    NoCheckpoints,
    #[error(transparent)]
    Model(#[from] MlpError),
}

/// Counts with class 1 as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// 2×2 CSV, rows actual, columns predicted.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "actual\\predicted,0,1")?;
        writeln!(out, "0,{},{}", self.tn, self.fp)?;
        writeln!(out, "1,{},{}", self.fn_, self.tp)
    }
}

/// Predicted positive iff `score >= threshold`.
pub fn confusion(
    scores: &DenseVector,
    labels: &DenseVector,
    threshold: f64,
) -> Result<ConfusionMatrix, MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    let mut cm = ConfusionMatrix::default();
    for (index, (&s, &l)) in scores.iter().zip(labels.iter()).enumerate() {
        let predicted = s >= threshold;
        match (l, predicted) {
            (1.0, true) => cm.tp += 1,
            (1.0, false) => cm.fn_ += 1,
            (0.0, true) => cm.fp += 1,
            (0.0, false) => cm.tn += 1,
            (value, _) => return Err(MetricsError::NonBinaryLabel { index, value }),
        }
    }
    Ok(cm)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    /// `None` when no sample was predicted positive.
    pub precision: Option<f64>,
    /// `None` when there are no positive samples.
    pub recall: Option<f64>,
    /// `None` when precision or recall is undefined or both are zero.
    pub f1: Option<f64>,
    pub threshold: f64,
    pub samples: usize,
    pub confusion: ConfusionMatrix,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn report(cm: &ConfusionMatrix, threshold: f64) -> Result<EvalReport, MetricsError> {
    let total = cm.total();
    if total == 0 {
        return Err(MetricsError::Empty);
    }
    let precision = ratio(cm.tp, cm.tp + cm.fp);
    let recall = ratio(cm.tp, cm.tp + cm.fn_);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    Ok(EvalReport {
        accuracy: (cm.tp + cm.tn) as f64 / total as f64,
        precision,
        recall,
        f1,
        threshold,
        samples: total,
        confusion: *cm,
    })
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |v| v.to_string());
        writeln!(f, "accuracy = {}", self.accuracy)?;
        writeln!(f, "precision = {}", opt(self.precision))?;
        writeln!(f, "recall = {}", opt(self.recall))?;
        writeln!(f, "f1 = {}", opt(self.f1))?;
        writeln!(f, "threshold = {}", self.threshold)?;
        writeln!(f, "samples = {}", self.samples)?;
        writeln!(f, "tp = {}", self.confusion.tp)?;
        writeln!(f, "fp = {}", self.confusion.fp)?;
        writeln!(f, "tn = {}", self.confusion.tn)?;
        writeln!(f, "fn = {}", self.confusion.fn_)
    }
}

/// Scores `eval_set` (already normalized) with `model`.
pub fn evaluate(
    model: &MlpModel,
    eval_set: &Dataset,
    threshold: f64,
) -> Result<EvalReport, MetricsError> {
    let scores = model.predict_scores(&eval_set.x)?;
    report(&confusion(&scores, &eval_set.y, threshold)?, threshold)
}

/// Accuracy of each checkpoint on `eval_set`, indexed by position.
pub fn accuracy_curve(
    checkpoints: &[MlpModel],
    eval_set: &Dataset,
    threshold: f64,
) -> Result<Vec<(usize, f64)>, MetricsError> {
    if checkpoints.is_empty() {
        return Err(MetricsError::NoCheckpoints);
    }
    checkpoints
        .iter()
        .enumerate()
        .map(|(i, m)| Ok((i, evaluate(m, eval_set, threshold)?.accuracy)))
        .collect()
}

pub fn write_accuracy_curve<W: Write>(curve: &[(usize, f64)], mut out: W) -> io::Result<()> {
    writeln!(out, "iteration,accuracy")?;
    for (i, a) in curve {
        writeln!(out, "{i},{a}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(data: &[f64]) -> DenseVector {
        DenseVector::new(data.to_vec()).unwrap()
    }

    #[test]
    fn perfect_predictor_has_no_off_diagonal() {
        let labels = v(&[0.0, 1.0, 1.0, 0.0]);
        let cm = confusion(&labels, &labels, 0.5).unwrap();
        assert_eq!((cm.fp, cm.fn_, cm.tp, cm.tn), (0, 0, 2, 2));
    }

    #[test]
    fn all_ones_on_published_rows() {
        let cm = confusion(&v(&[1.0; 5]), &v(&[1.0; 5]), 0.5).unwrap();
        assert_eq!(
            cm,
            ConfusionMatrix {
                tp: 5,
                fp: 0,
                tn: 0,
                fn_: 0
            }
        );
    }

    #[test]
    fn tie_counts_as_positive() {
        let cm = confusion(&v(&[0.5]), &v(&[0.0]), 0.5).unwrap();
        assert_eq!(cm.fp, 1);
    }

    #[test]
    fn confusion_errors() {
        assert!(matches!(
            confusion(&v(&[0.1, 0.2]), &v(&[1.0]), 0.5),
            Err(MetricsError::LengthMismatch { .. })
        ));
        assert!(matches!(
            confusion(&v(&[0.1]), &v(&[2.0]), 0.5),
            Err(MetricsError::NonBinaryLabel { index: 0, .. })
        ));
    }

    #[test]
    fn report_examples() {
        let r = report(
            &ConfusionMatrix {
                tp: 5,
                fp: 0,
                tn: 0,
                fn_: 0,
            },
            0.5,
        )
        .unwrap();
        assert_eq!(
            (r.accuracy, r.precision, r.recall, r.f1),
            (1.0, Some(1.0), Some(1.0), Some(1.0))
        );

        let r = report(
            &ConfusionMatrix {
                tp: 0,
                fp: 0,
                tn: 10,
                fn_: 0,
            },
            0.5,
        )
        .unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!((r.precision, r.recall, r.f1), (None, None, None));

        let r = report(
            &ConfusionMatrix {
                tp: 45,
                fp: 4,
                tn: 48,
                fn_: 3,
            },
            0.5,
        )
        .unwrap();
        assert!((r.accuracy - 0.93).abs() < 1e-15);
        assert_eq!(r.samples, 100);

        let zero = report(
            &ConfusionMatrix {
                tp: 0,
                fp: 3,
                tn: 0,
                fn_: 2,
            },
            0.5,
        )
        .unwrap();
        assert_eq!(
            (zero.precision, zero.recall, zero.f1),
            (Some(0.0), Some(0.0), None)
        );

        assert!(matches!(
            report(&ConfusionMatrix::default(), 0.5),
            Err(MetricsError::Empty)
        ));
    }

    #[test]
    fn report_text_and_confusion_csv() {
        let r = report(
            &ConfusionMatrix {
                tp: 0,
                fp: 0,
                tn: 3,
                fn_: 1,
            },
            0.5,
        )
        .unwrap();
        assert_eq!(
            r.to_string(),
            "accuracy = 0.75\nprecision = undefined\nrecall = 0\nf1 = undefined\n\
             threshold = 0.5\nsamples = 4\ntp = 0\nfp = 0\ntn = 3\nfn = 1\n"
        );
        let mut buf = Vec::new();
        r.confusion.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "actual\\predicted,0,1\n0,3,0\n1,1,0\n"
        );
    }
}

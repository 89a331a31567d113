//! Confusion matrices and precision / recall / F1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows are actual classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    num_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        Self {
            num_classes,
            counts: vec![0; num_classes * num_classes],
        }
    }

    pub fn from_counts(num_classes: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != num_classes * num_classes {
            return Err(Error::invalid(
                "confusion counts do not match the class count",
            ));
        }
        Ok(Self {
            num_classes,
            counts,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn get(&self, actual: usize, predicted: usize) -> u64 {
        self.counts[actual * self.num_classes + predicted]
    }

    pub fn record(&mut self, actual: usize, predicted: usize) -> Result<()> {
        if actual >= self.num_classes || predicted >= self.num_classes {
            return Err(Error::invalid(format!(
                "class ({actual}, {predicted}) outside 0..{}",
                self.num_classes
            )));
        }
        self.counts[actual * self.num_classes + predicted] += 1;
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn true_positives(&self, c: usize) -> u64 {
        self.get(c, c)
    }

    pub fn false_positives(&self, c: usize) -> u64 {
        (0..self.num_classes)
            .filter(|&a| a != c)
            .map(|a| self.get(a, c))
            .sum()
    }

    pub fn false_negatives(&self, c: usize) -> u64 {
        (0..self.num_classes)
            .filter(|&p| p != c)
            .map(|p| self.get(c, p))
            .sum()
    }

    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        (0..self.num_classes).map(|c| self.get(c, c)).sum::<u64>() as f64 / total as f64
    }

    /// Adds the counts of another matrix of the same size.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.num_classes != self.num_classes {
            return Err(Error::invalid(
                "cannot merge confusion matrices of different sizes",
            ));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }
}

/// Builds a confusion matrix from zero-based class indices.
pub fn confusion(
    predictions: &[usize],
    labels: &[usize],
    num_classes: usize,
) -> Result<ConfusionMatrix> {
    if predictions.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut m = ConfusionMatrix::new(num_classes);
    for (&p, &a) in predictions.iter().zip(labels) {
        m.record(a, p)?;
    }
    Ok(m)
}

/// Precision, recall and F1 of one class. A zero denominator yields 0 and
/// clears the matching `*_defined` flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub precision_defined: bool,
    pub recall_defined: bool,
    /// The class occurs among the labels or the predictions.
    pub active: bool,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, false)
    } else {
        (num as f64 / den as f64, true)
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

pub fn prf1(matrix: &ConfusionMatrix, class: usize) -> ClassMetrics {
    let tp = matrix.true_positives(class);
    let fp = matrix.false_positives(class);
    let fn_ = matrix.false_negatives(class);
    prf1_from_counts(tp, fp, fn_)
}

pub fn prf1_from_counts(tp: u64, fp: u64, fn_: u64) -> ClassMetrics {
    let (precision, precision_defined) = ratio(tp, tp + fp);
    let (recall, recall_defined) = ratio(tp, tp + fn_);
    ClassMetrics {
        precision,
        recall,
        f1: harmonic(precision, recall),
        precision_defined,
        recall_defined,
        active: tp + fp + fn_ > 0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_class: Vec<ClassMetrics>,
    /// Unweighted mean over the active classes.
    pub macro_avg: Averages,
    /// Computed from TP/FP/FN pooled across classes.
    pub micro_avg: Averages,
    pub accuracy: f64,
    pub samples: u64,
    pub repetitions: usize,
}

/// Per-class metrics plus macro and micro averages.
///
/// Classes that never occur in either labels or predictions are left out of
/// the macro mean, so a head sized for the full label schema can be scored
/// on data that only uses some of the levels.
pub fn macro_report(matrix: &ConfusionMatrix) -> EvalReport {
    let per_class: Vec<ClassMetrics> = (0..matrix.num_classes()).map(|c| prf1(matrix, c)).collect();
    let active: Vec<&ClassMetrics> = per_class.iter().filter(|m| m.active).collect();
    let n = active.len().max(1) as f64;
    let macro_avg = Averages {
        precision: active.iter().map(|m| m.precision).sum::<f64>() / n,
        recall: active.iter().map(|m| m.recall).sum::<f64>() / n,
        f1: active.iter().map(|m| m.f1).sum::<f64>() / n,
    };
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for c in 0..matrix.num_classes() {
        tp += matrix.true_positives(c);
        fp += matrix.false_positives(c);
        fn_ += matrix.false_negatives(c);
    }
    let micro = prf1_from_counts(tp, fp, fn_);
    EvalReport {
        per_class,
        macro_avg,
        micro_avg: Averages {
            precision: micro.precision,
            recall: micro.recall,
            f1: micro.f1,
        },
        accuracy: matrix.accuracy(),
        samples: matrix.total(),
        repetitions: 1,
    }
}

fn mean_averages<'a>(items: impl Iterator<Item = &'a Averages>, n: f64) -> Averages {
    let mut acc = Averages {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
    };
    for a in items {
        acc.precision += a.precision;
        acc.recall += a.recall;
        acc.f1 += a.f1;
    }
    Averages {
        precision: acc.precision / n,
        recall: acc.recall / n,
        f1: acc.f1 / n,
    }
}

/// Elementwise mean of reports from repeated runs.
pub fn average_reports(reports: &[EvalReport]) -> Result<EvalReport> {
    let first = reports
        .first()
        .ok_or_else(|| Error::invalid("no reports to average"))?;
    let k = first.per_class.len();
    if reports.iter().any(|r| r.per_class.len() != k) {
        return Err(Error::invalid("reports have different class counts"));
    }
    let n = reports.len() as f64;
    let per_class = (0..k)
        .map(|c| {
            let items = reports.iter().map(|r| &r.per_class[c]);
            let mut m = ClassMetrics {
                precision: 0.0,
                recall: 0.0,
                f1: 0.0,
                precision_defined: true,
                recall_defined: true,
                active: false,
            };
            for it in items {
                m.precision += it.precision / n;
                m.recall += it.recall / n;
                m.f1 += it.f1 / n;
                m.precision_defined &= it.precision_defined;
                m.recall_defined &= it.recall_defined;
                m.active |= it.active;
            }
            m
        })
        .collect();
    Ok(EvalReport {
        per_class,
        macro_avg: mean_averages(reports.iter().map(|r| &r.macro_avg), n),
        micro_avg: mean_averages(reports.iter().map(|r| &r.micro_avg), n),
        accuracy: reports.iter().map(|r| r.accuracy).sum::<f64>() / n,
        samples: reports.iter().map(|r| r.samples).sum(),
        repetitions: reports.iter().map(|r| r.repetitions).sum(),
    })
}

pub const REPORT_CSV_HEADER: &str = "model,aspect,split,P,R,F1";

/// One `model,aspect,split,P,R,F1` row with the macro averages.
pub fn report_csv_row(model: &str, aspect: &str, split: &str, report: &EvalReport) -> String {
    format!(
        "{model},{aspect},{split},{:.6},{:.6},{:.6}",
        report.macro_avg.precision, report.macro_avg.recall, report.macro_avg.f1
    )
}

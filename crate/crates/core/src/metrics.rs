//! Confusion matrices and per-class precision / recall / F1 / accuracy.
//!
//! Per-class accuracy is one-vs-rest, `(TP + TN) / total`. Any ratio with a
//! zero denominator is reported as 0 so tables always render.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::labels::{ClassLabel, Organ};

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub classes: Vec<ClassLabel>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(classes: Vec<ClassLabel>) -> Self {
        let n = classes.len();
        Self { classes, counts: vec![vec![0; n]; n] }
    }

    pub fn n(&self) -> usize {
        self.classes.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sum(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    pub fn col_sum(&self, j: usize) -> u64 {
        self.counts.iter().map(|r| r[j]).sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n()).map(|i| self.counts[i][i]).sum()
    }

    fn position(&self, c: ClassLabel) -> Option<usize> {
        self.classes.iter().position(|&k| k == c)
    }

    /// Sub-matrix over one organ's classes (5×5 heart, 6×6 lung).
    /// Samples whose true or predicted class lies outside the organ are dropped.
    pub fn restrict(&self, organ: Organ) -> Self {
        let keep: Vec<usize> = (0..self.n()).filter(|&i| self.classes[i].organ() == organ).collect();
        Self {
            classes: keep.iter().map(|&i| self.classes[i]).collect(),
            counts: keep.iter().map(|&i| keep.iter().map(|&j| self.counts[i][j]).collect()).collect(),
        }
    }

    /// Reorder classes; `order` must be a permutation of this matrix's classes.
    pub fn permuted(&self, order: &[ClassLabel]) -> Result<Self> {
        let idx: Option<Vec<usize>> = order.iter().map(|&c| self.position(c)).collect();
        let idx = idx.filter(|v| v.len() == self.n()).ok_or_else(|| Error::shape("order is not a permutation of the classes"))?;
        Ok(Self {
            classes: order.to_vec(),
            counts: idx.iter().map(|&i| idx.iter().map(|&j| self.counts[i][j]).collect()).collect(),
        })
    }

    /// CSV with a leading unnamed column of true-class tokens.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("true\\predicted");
        for c in &self.classes {
            write!(out, ",{c}").unwrap();
        }
        out.push('\n');
        for (c, row) in self.classes.iter().zip(&self.counts) {
            out.push_str(c.token());
            for v in row {
                write!(out, ",{v}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Count `(true, predicted)` pairs over the 11 classes in canonical order.
pub fn confusion(truth: &[ClassLabel], predicted: &[ClassLabel]) -> Result<ConfusionMatrix> {
    if truth.len() != predicted.len() {
        return Err(Error::shape(format!("{} true labels but {} predictions", truth.len(), predicted.len())));
    }
    let mut cm = ConfusionMatrix::zeros(ClassLabel::ALL.to_vec());
    for (t, p) in truth.iter().zip(predicted) {
        cm.counts[t.index()][p.index()] += 1;
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassMetrics {
    pub class: ClassLabel,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    /// Number of samples whose true class is this one.
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub per_class: Vec<ClassMetrics>,
    pub overall_accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub total: u64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

pub fn metrics_from_confusion(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Domain("confusion matrix is empty".into()));
    }
    let per_class: Vec<ClassMetrics> = (0..cm.n())
        .map(|i| {
            let tp = cm.counts[i][i];
            let fp = cm.col_sum(i) - tp;
            let fn_ = cm.row_sum(i) - tp;
            let tn = total - tp - fp - fn_;
            // Each figure is one division of exact integers, so it is the
            // correctly rounded value of the underlying rational.
            ClassMetrics {
                class: cm.classes[i],
                precision: ratio(tp, tp + fp),
                recall: ratio(tp, tp + fn_),
                f1: ratio(2 * tp, 2 * tp + fp + fn_),
                accuracy: ratio(tp + tn, total),
                support: tp + fn_,
            }
        })
        .collect();
    let n = per_class.len() as f64;
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / n;
    Ok(MetricsReport {
        overall_accuracy: ratio(cm.trace(), total),
        macro_precision: mean(|m| m.precision),
        macro_recall: mean(|m| m.recall),
        macro_f1: mean(|m| m.f1),
        total,
        per_class,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableStyle {
    /// Fractions with two decimals, e.g. `0.90`.
    Lung,
    /// Percentages with two decimals, e.g. `93.45`.
    Heart,
    /// Comma-separated, full precision.
    Csv,
}

pub const TABLE_COLUMNS: [&str; 4] = ["Precision", "Recall", "F1-Score", "Accuracy"];

/// Render a per-class table under a `Model` column.
pub fn render_table(report: &MetricsReport, style: TableStyle, model: &str) -> String {
    let mut out = String::new();
    match style {
        TableStyle::Csv => {
            out.push_str("model,class,precision,recall,f1_score,accuracy,support\n");
            for m in &report.per_class {
                writeln!(out, "{model},{},{},{},{},{},{}", m.class, m.precision, m.recall, m.f1, m.accuracy, m.support).unwrap();
            }
        }
        TableStyle::Lung | TableStyle::Heart => {
            let fmt = |v: f64| match style {
                TableStyle::Heart => format!("{:.2}", v * 100.0),
                _ => format!("{v:.2}"),
            };
            let model_w = model.chars().count().max(5);
            let class_w = report.per_class.iter().map(|m| m.class.full_name().len()).max().unwrap_or(5).max(5);
            write!(out, "{:<model_w$}  {:<class_w$}", "Model", "Class").unwrap();
            for c in TABLE_COLUMNS {
                write!(out, "  {c:>9}").unwrap();
            }
            out.push('\n');
            for (i, m) in report.per_class.iter().enumerate() {
                let name = if i == 0 { model } else { "" };
                write!(out, "{name:<model_w$}  {:<class_w$}", m.class.full_name()).unwrap();
                for v in [m.precision, m.recall, m.f1, m.accuracy] {
                    write!(out, "  {:>9}", fmt(v)).unwrap();
                }
                out.push('\n');
            }
            writeln!(out, "{:<model_w$}  {:<class_w$}  overall accuracy {}", "", "", fmt(report.overall_accuracy)).unwrap();
        }
    }
    out
}

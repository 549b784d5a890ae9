use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use spdtraj::{Error, Result};

use crate::pipeline::Choice;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub test_subjects: Vec<String>,
    pub n_test: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub hyperparameters: Choice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub sample_id: String,
    pub subject_id: String,
    pub true_label: String,
    pub predicted: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub total_ms: u128,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: String,
    pub kernel: String,
    pub fusion: String,
    pub channels: Vec<String>,
    pub classes: Vec<String>,
    pub folds: Vec<FoldReport>,
    pub overall_accuracy: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub predictions: Vec<PredictionRecord>,
    pub final_hyperparameters: Choice,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

/// `confusion[true][predicted]` from label indices.
pub fn confusion_matrix(n_classes: usize, truth: &[usize], predicted: &[usize]) -> Vec<Vec<usize>> {
    let mut m = vec![vec![0; n_classes]; n_classes];
    for (&t, &p) in truth.iter().zip(predicted) {
        m[t][p] += 1;
    }
    m
}

pub fn trace(m: &[Vec<usize>]) -> usize {
    (0..m.len()).map(|i| m[i][i]).sum()
}

pub fn total(m: &[Vec<usize>]) -> usize {
    m.iter().flatten().sum()
}

impl EvalReport {
    /// Checks the internal consistency of a report read from disk.
    pub fn validate(&self) -> Result<()> {
        let l = self.classes.len();
        let bad = |msg: String| Err(Error::Validation(format!("malformed eval report: {msg}")));
        if self.confusion.len() != l || self.confusion.iter().any(|r| r.len() != l) {
            return bad(format!("confusion matrix is not {l}x{l}"));
        }
        let index = |name: &str| self.classes.iter().position(|c| c == name);
        let mut truth = Vec::new();
        let mut pred = Vec::new();
        for p in &self.predictions {
            match (index(&p.true_label), index(&p.predicted)) {
                (Some(t), Some(q)) => {
                    truth.push(t);
                    pred.push(q);
                }
                _ => return bad(format!("sample `{}` has a label outside the class list", p.sample_id)),
            }
        }
        if confusion_matrix(l, &truth, &pred) != self.confusion {
            return bad("confusion matrix disagrees with the prediction list".into());
        }
        let n = total(&self.confusion);
        if n > 0 && (self.overall_accuracy - trace(&self.confusion) as f64 / n as f64).abs() > 1e-12 {
            return bad("overall accuracy is not trace / total".into());
        }
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| crate::data::io_err(path, e))?;
        let report: EvalReport = serde_json::from_str(&text)
            .map_err(|e| Error::Validation(format!("malformed eval report {}: {e}", path.display())))?;
        report.validate()?;
        Ok(report)
    }
}

/// Confusion matrix CSV with a header row of predicted labels and one row
/// per true label.
pub fn confusion_csv(classes: &[String], m: &[Vec<usize>]) -> String {
    let mut out = String::from("true\\predicted");
    for c in classes {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for (c, row) in classes.iter().zip(m) {
        out.push_str(c);
        for v in row {
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Sums the confusion matrices of several reports over the same classes.
pub fn combine(reports: &[EvalReport]) -> Result<(Vec<String>, Vec<Vec<usize>>)> {
    let first = reports
        .first()
        .ok_or_else(|| Error::Validation("no eval reports given".into()))?;
    let l = first.classes.len();
    let mut m = vec![vec![0; l]; l];
    for r in reports {
        if r.classes != first.classes {
            return Err(Error::Validation("eval reports use different class lists".into()));
        }
        for (row, add) in m.iter_mut().zip(&r.confusion) {
            for (a, b) in row.iter_mut().zip(add) {
                *a += b;
            }
        }
    }
    Ok((first.classes.clone(), m))
}

pub fn summary(classes: &[String], m: &[Vec<usize>]) -> String {
    let n = total(m);
    let correct = trace(m);
    let acc = if n == 0 { 0.0 } else { 100.0 * correct as f64 / n as f64 };
    let mut out = format!("overall accuracy: {acc:.2}% ({correct}/{n})\n");
    for (c, row) in classes.iter().zip(m) {
        let k: usize = row.iter().sum();
        let hit = row[classes.iter().position(|x| x == c).unwrap()];
        let a = if k == 0 { 0.0 } else { 100.0 * hit as f64 / k as f64 };
        writeln!(out, "  {c}: {a:.2}% ({hit}/{k})").unwrap();
    }
    out
}

//! Classification metrics in the usual precision/recall/f1/support shape.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub name: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AverageMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub schema_version: u32,
    pub classes: Vec<ClassMetrics>,
    pub macro_avg: AverageMetrics,
    pub weighted_avg: AverageMetrics,
    pub accuracy: f64,
    pub total: usize,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

impl ClassReport {
    /// Builds the report from parallel truth/prediction label lists.
    pub fn from_predictions(y_true: &[usize], y_pred: &[usize], names: &[&str]) -> Result<Self> {
        if y_true.is_empty() {
            return Err(CoreError::EmptyTestSet);
        }
        if y_true.len() != y_pred.len() {
            return Err(CoreError::DimensionMismatch {
                expected: y_true.len(),
                got: y_pred.len(),
            });
        }
        let k = names.len();
        let mut confusion = vec![vec![0usize; k]; k];
        let mut correct = 0;
        for (&t, &p) in y_true.iter().zip(y_pred) {
            confusion[t][p] += 1;
            if t == p {
                correct += 1;
            }
        }

        let mut classes = Vec::with_capacity(k);
        for c in 0..k {
            let tp = confusion[c][c] as f64;
            let support: usize = confusion[c].iter().sum();
            let predicted: usize = (0..k).map(|t| confusion[t][c]).sum();
            let precision = ratio(tp, predicted as f64);
            let recall = ratio(tp, support as f64);
            let f1 = ratio(2.0 * precision * recall, precision + recall);
            classes.push(ClassMetrics { name: names[c].to_string(), precision, recall, f1, support });
        }

        let total = y_true.len();
        let kf = k as f64;
        let macro_avg = AverageMetrics {
            precision: classes.iter().map(|c| c.precision).sum::<f64>() / kf,
            recall: classes.iter().map(|c| c.recall).sum::<f64>() / kf,
            f1: classes.iter().map(|c| c.f1).sum::<f64>() / kf,
        };
        let wsum = |f: fn(&ClassMetrics) -> f64| {
            classes.iter().map(|c| f(c) * c.support as f64).sum::<f64>() / total as f64
        };
        let weighted_avg = AverageMetrics {
            precision: wsum(|c| c.precision),
            recall: wsum(|c| c.recall),
            f1: wsum(|c| c.f1),
        };
        Ok(Self {
            schema_version: 1,
            classes,
            macro_avg,
            weighted_avg,
            accuracy: correct as f64 / total as f64,
            total,
        })
    }

    pub fn macro_f1(&self) -> f64 {
        self.macro_avg.f1
    }

    /// Text table: one row per class plus macro/weighted average rows.
    pub fn text_table(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!(
            "{:>12} {:>9} {:>9} {:>9} {:>9}\n",
            "", "precision", "recall", "f1-score", "support"
        ));
        for c in &self.classes {
            s.push_str(&format!(
                "{:>12} {:>9.2} {:>9.2} {:>9.2} {:>9}\n",
                c.name, c.precision, c.recall, c.f1, c.support
            ));
        }
        s.push_str(&format!(
            "{:>12} {:>9.2} {:>9.2} {:>9.2} {:>9}\n",
            "macro avg", self.macro_avg.precision, self.macro_avg.recall, self.macro_avg.f1, self.total
        ));
        s.push_str(&format!(
            "{:>12} {:>9.2} {:>9.2} {:>9.2} {:>9}\n",
            "weighted avg",
            self.weighted_avg.precision,
            self.weighted_avg.recall,
            self.weighted_avg.f1,
            self.total
        ));
        s
    }
}

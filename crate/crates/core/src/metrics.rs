//! Many / medium / few split assignment and accuracy reports.

use serde::{Deserialize, Serialize};

use crate::dataset::FeatureDataset;
use crate::error::{Error, Result};
use crate::labels::{ClassId, ClassStats};
use crate::losses::{balanced_error, BalancedError};
use crate::model::ClassifierState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Many,
    Medium,
    Few,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Many, Split::Medium, Split::Few];

    /// More than 100 is many, fewer than 20 is few, 20..=100 is medium.
    pub fn of_count(count: u64) -> Split {
        if count > 100 {
            Split::Many
        } else if count < 20 {
            Split::Few
        } else {
            Split::Medium
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    splits: Vec<Split>,
}

impl SplitAssignment {
    pub fn from_splits(splits: Vec<Split>) -> Self {
        Self { splits }
    }

    pub fn get(&self, class: ClassId) -> Option<Split> {
        self.splits.get(class).copied()
    }

    pub fn len(&self) -> usize {
        self.splits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.splits.is_empty()
    }

    pub fn classes_in(&self, split: Split) -> Vec<ClassId> {
        (0..self.splits.len()).filter(|&c| self.splits[c] == split).collect()
    }

    pub fn as_slice(&self) -> &[Split] {
        &self.splits
    }
}

pub fn assign_splits(stats: &ClassStats) -> SplitAssignment {
    SplitAssignment {
        splits: stats.counts().iter().map(|&n| Split::of_count(n)).collect(),
    }
}

/// Sample totals `(N_h, N_m, N_t)` per split.
pub fn split_totals(stats: &ClassStats, splits: &SplitAssignment) -> [u64; 3] {
    let mut totals = [0u64; 3];
    for (c, &n) in stats.counts().iter().enumerate() {
        if let Some(s) = splits.get(c) {
            totals[s.index()] += n;
        }
    }
    totals
}

/// Accuracies are percentages. A split without test samples is `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub overall_acc: f64,
    pub many_acc: Option<f64>,
    pub med_acc: Option<f64>,
    pub few_acc: Option<f64>,
    pub head_tail_gap: Option<f64>,
    pub split_samples: [usize; 3],
    pub num_samples: usize,
    pub balanced_error: Option<BalancedError>,
    pub masked: bool,
    pub num_output_classes: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

impl EvalReport {
    pub fn split_acc(&self, split: Split) -> Option<f64> {
        match split {
            Split::Many => self.many_acc,
            Split::Medium => self.med_acc,
            Split::Few => self.few_acc,
        }
    }

    /// One-decimal human summary.
    pub fn summary_line(&self) -> String {
        let f = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.1}"));
        format!(
            "overall {:.1} | many {} | medium {} | few {} | gap {}",
            self.overall_acc,
            f(self.many_acc),
            f(self.med_acc),
            f(self.few_acc),
            f(self.head_tail_gap)
        )
    }
}

/// Accuracy report from predictions. `labels` must be target classes
/// covered by `splits`.
pub fn report_from_predictions(
    predictions: &[ClassId],
    labels: &[ClassId],
    splits: &SplitAssignment,
) -> Result<EvalReport> {
    if predictions.len() != labels.len() {
        return Err(Error::data("predictions and labels differ in length"));
    }
    if labels.is_empty() {
        return Err(Error::data("empty test set"));
    }
    let mut correct = [0usize; 3];
    let mut total = [0usize; 3];
    for (&p, &y) in predictions.iter().zip(labels) {
        let s = splits
            .get(y)
            .ok_or_else(|| Error::data(format!("test label {y} has no split assignment")))?;
        total[s.index()] += 1;
        if p == y {
            correct[s.index()] += 1;
        }
    }
    let acc = |i: usize| (total[i] > 0).then(|| 100.0 * correct[i] as f64 / total[i] as f64);
    let (many, med, few) = (acc(0), acc(1), acc(2));
    let n: usize = total.iter().sum();
    let overall = 100.0 * correct.iter().sum::<usize>() as f64 / n as f64;
    let balanced = balanced_error(predictions, labels, splits.len()).ok();
    Ok(EvalReport {
        overall_acc: overall,
        many_acc: many,
        med_acc: med,
        few_acc: few,
        head_tail_gap: many.zip(few).map(|(m, f)| m - f),
        split_samples: total,
        num_samples: n,
        balanced_error: balanced,
        masked: false,
        num_output_classes: 0,
        seed: None,
        config: None,
    })
}

/// Evaluates `state` on `test`. With `mask` the auxiliary rows are dropped
/// first; without it predictions range over every class of the state.
pub fn evaluate(
    state: &ClassifierState,
    test: &FeatureDataset,
    splits: &SplitAssignment,
    mask: bool,
) -> Result<EvalReport> {
    let masked_state;
    let view = if mask && !state.is_masked() {
        masked_state = state.masked();
        &masked_state
    } else {
        state
    };
    let preds = view.predict_batch(test.feature_matrix())?;
    let mut report = report_from_predictions(&preds, test.labels(), splits)?;
    report.masked = mask;
    report.num_output_classes = view.num_classes();
    Ok(report)
}

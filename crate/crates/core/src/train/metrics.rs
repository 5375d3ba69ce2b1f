use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Node targets: one class per node, or a binary vector per node.
#[derive(Clone, Debug, PartialEq)]
pub enum Labels {
    Classes {
        labels: Vec<usize>,
        num_classes: usize,
    },
    /// `N x C` matrix of 0/1 targets.
    MultiLabel(Tensor),
}

impl Labels {
    pub fn classes(labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::LabelOutOfRange {
                label: bad,
                num_classes,
            });
        }
        Ok(Labels::Classes {
            labels,
            num_classes,
        })
    }

    pub fn multi_label(targets: Tensor) -> Result<Self> {
        if targets.data().iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::invalid("multi-label targets must be 0 or 1"));
        }
        Ok(Labels::MultiLabel(targets))
    }

    pub fn len(&self) -> usize {
        match self {
            Labels::Classes { labels, .. } => labels.len(),
            Labels::MultiLabel(t) => t.rows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Width of the model output: classes, or target columns.
    pub fn num_outputs(&self) -> usize {
        match self {
            Labels::Classes { num_classes, .. } => *num_classes,
            Labels::MultiLabel(t) => t.cols(),
        }
    }

    /// The metric matching the label type.
    pub fn default_metric(&self) -> Metric {
        match self {
            Labels::Classes { .. } => Metric::Accuracy,
            Labels::MultiLabel(_) => Metric::RocAuc,
        }
    }

    /// Labels of the given nodes, in order.
    pub fn select(&self, rows: &[usize]) -> Labels {
        match self {
            Labels::Classes {
                labels,
                num_classes,
            } => Labels::Classes {
                labels: rows.iter().map(|&r| labels[r]).collect(),
                num_classes: *num_classes,
            },
            Labels::MultiLabel(t) => Labels::MultiLabel(t.select_rows(rows)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    Accuracy,
    RocAuc,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::RocAuc => "rocauc",
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "accuracy" => Ok(Metric::Accuracy),
            "rocauc" => Ok(Metric::RocAuc),
            other => Err(Error::invalid(format!("unknown metric `{other}`"))),
        }
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// Fraction of `rows` whose argmax logit equals the label.
pub fn accuracy(logits: &Tensor, labels: &[usize], rows: &[usize]) -> Result<f64> {
    if rows.is_empty() {
        return Err(Error::invalid("accuracy over an empty node set"));
    }
    let mut hits = 0usize;
    for &r in rows {
        if r >= logits.rows() || r >= labels.len() {
            return Err(Error::NodeOutOfRange {
                index: r,
                num_nodes: logits.rows().min(labels.len()),
            });
        }
        if argmax(logits.row(r)) == labels[r] {
            hits += 1;
        }
    }
    Ok(hits as f64 / rows.len() as f64)
}

/// Area under the ROC curve via the rank-sum statistic, with tied scores
/// given their average rank. `column` only labels a single-class error.
pub fn roc_auc(scores: &[f64], positive: &[bool], column: usize) -> Result<f64> {
    if scores.len() != positive.len() {
        return Err(Error::invalid(
            "roc_auc scores and targets differ in length",
        ));
    }
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass { column });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("roc_auc scores".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their average
        let avg = (i + j + 2) as f64 / 2.0;
        rank_sum += avg * order[i..=j].iter().filter(|&&k| positive[k]).count() as f64;
        i = j + 1;
    }
    let p = n_pos as f64;
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n_neg as f64))
}

/// ROC-AUC per target column over `rows`, averaged.
pub fn mean_roc_auc(scores: &Tensor, targets: &Tensor, rows: &[usize]) -> Result<f64> {
    if scores.cols() != targets.cols() {
        return Err(Error::ShapeMismatch {
            op: "roc_auc",
            left: scores.shape(),
            right: targets.shape(),
        });
    }
    if rows.is_empty() {
        return Err(Error::invalid("roc_auc over an empty node set"));
    }
    let mut total = 0.0;
    for c in 0..targets.cols() {
        let s: Vec<f64> = rows.iter().map(|&r| scores.get(r, c)).collect();
        let t: Vec<bool> = rows.iter().map(|&r| targets.get(r, c) == 1.0).collect();
        total += roc_auc(&s, &t, c)?;
    }
    Ok(total / targets.cols() as f64)
}

/// Scores the given nodes. Accuracy needs class labels; ROC-AUC needs binary
/// targets.
pub fn evaluate(logits: &Tensor, labels: &Labels, rows: &[usize], metric: Metric) -> Result<f64> {
    match (metric, labels) {
        (Metric::Accuracy, Labels::Classes { labels, .. }) => accuracy(logits, labels, rows),
        (Metric::RocAuc, Labels::MultiLabel(targets)) => mean_roc_auc(logits, targets, rows),
        (m, _) => Err(Error::invalid(format!(
            "metric {} does not match the label type",
            m.as_str()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn perfect_and_tied_accuracy() {
        let logits = Tensor::from_rows(&[vec![2.0, 1.0], vec![0.0, 3.0], vec![1.0, 1.0]]).unwrap();
        assert_eq!(accuracy(&logits, &[0, 1, 0], &[0, 1, 2]).unwrap(), 1.0);
        // tie on row 2 resolves to class 0
        assert_eq!(accuracy(&logits, &[0, 1, 1], &[2]).unwrap(), 0.0);
    }

    #[test]
    fn auc_of_labels_is_one() {
        let t = [true, false, true, false];
        let s: Vec<f64> = t.iter().map(|&b| f64::from(u8::from(b))).collect();
        assert_eq!(roc_auc(&s, &t, 0).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.5; 4], &t, 0).unwrap(), 0.5);
        assert!(matches!(
            roc_auc(&[0.1, 0.2], &[true, true], 3),
            Err(Error::SingleClass { column: 3 })
        ));
    }

    #[test]
    fn random_scores_have_auc_one_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let n = 10_000;
        let s: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
        let t: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
        let auc = roc_auc(&s, &t, 0).unwrap();
        assert!((auc - 0.5).abs() < 0.02, "{auc}");
    }

    #[test]
    fn metric_must_match_labels() {
        let logits = Tensor::zeros(2, 2);
        let labels = Labels::classes(vec![0, 1], 2).unwrap();
        assert!(evaluate(&logits, &labels, &[0, 1], Metric::RocAuc).is_err());
        assert!(Labels::classes(vec![2], 2).is_err());
        assert!(Labels::multi_label(Tensor::filled(1, 1, 0.5)).is_err());
    }
}

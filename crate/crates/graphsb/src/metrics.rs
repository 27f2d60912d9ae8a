//! Classification metrics (accuracy, macro-F1, one-vs-rest macro
//! ROC-AUC) and the intra/inter embedding distance ratio R.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SbError};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PrecisionRecall {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub roc_auc: f64,
    pub per_class: Vec<PrecisionRecall>,
    pub distance_ratio: Option<f64>,
    pub distance_ratio_degenerate: bool,
    pub seed: u64,
    pub config_hash: String,
    pub wall_time_s: f64,
}

pub fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    assert_eq!(pred.len(), truth.len());
    if truth.is_empty() {
        return 0.0;
    }
    let hits = pred.iter().zip(truth).filter(|(a, b)| a == b).count();
    hits as f64 / truth.len() as f64
}

/// Per-class precision/recall/F1; undefined ratios count as 0.
pub fn per_class_stats(pred: &[usize], truth: &[usize], num_classes: usize) -> Vec<PrecisionRecall> {
    let mut tp = vec![0usize; num_classes];
    let mut fp = vec![0usize; num_classes];
    let mut fnn = vec![0usize; num_classes];
    for (&p, &t) in pred.iter().zip(truth) {
        if p == t {
            tp[t] += 1;
        } else {
            fp[p] += 1;
            fnn[t] += 1;
        }
    }
    (0..num_classes)
        .map(|c| {
            let precision = if tp[c] + fp[c] > 0 {
                tp[c] as f64 / (tp[c] + fp[c]) as f64
            } else {
                0.0
            };
            let recall = if tp[c] + fnn[c] > 0 {
                tp[c] as f64 / (tp[c] + fnn[c]) as f64
            } else {
                0.0
            };
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            PrecisionRecall {
                precision,
                recall,
                f1,
                support: tp[c] + fnn[c],
            }
        })
        .collect()
}

/// Unweighted mean of per-class F1 over all classes.
pub fn macro_f1(pred: &[usize], truth: &[usize], num_classes: usize) -> f64 {
    let stats = per_class_stats(pred, truth, num_classes);
    stats.iter().map(|s| s.f1).sum::<f64>() / num_classes as f64
}

/// Binary AUC by pair counting (equivalent to trapezoidal ROC
/// integration) with 0.5 credit for tied scores.
fn binary_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let pos: Vec<f64> = scores
        .iter()
        .zip(positive)
        .filter(|(_, &p)| p)
        .map(|(&s, _)| s)
        .collect();
    let neg: Vec<f64> = scores
        .iter()
        .zip(positive)
        .filter(|(_, &p)| !p)
        .map(|(&s, _)| s)
        .collect();
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    let mut acc = 0.0;
    for &p in &pos {
        for &n in &neg {
            if p > n {
                acc += 1.0;
            } else if p == n {
                acc += 0.5;
            }
        }
    }
    Some(acc / (pos.len() * neg.len()) as f64)
}

/// Macro one-vs-rest ROC-AUC over classes with both positives and
/// negatives present.
pub fn roc_auc_macro(probs: &Array2<f64>, truth: &[usize]) -> f64 {
    let c = probs.ncols();
    let mut aucs = Vec::new();
    for class in 0..c {
        let scores: Vec<f64> = (0..truth.len()).map(|i| probs[[i, class]]).collect();
        let positive: Vec<bool> = truth.iter().map(|&t| t == class).collect();
        if let Some(a) = binary_auc(&scores, &positive) {
            aucs.push(a);
        }
    }
    if aucs.is_empty() {
        0.0
    } else {
        aucs.iter().sum::<f64>() / aucs.len() as f64
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DistanceRatio {
    /// mean inter-class distance / mean intra-class distance; `None`
    /// when the intra mean degenerates to zero (flagged, not infinity)
    pub ratio: Option<f64>,
    pub mean_intra: f64,
    pub mean_inter: f64,
    pub excluded_singletons: usize,
}

/// R = (mean over classes of inter-class distance) / (mean over classes
/// of intra-class distance), Euclidean; classes with fewer than 2
/// members are excluded from the intra mean.
pub fn distance_ratio(h: &Array2<f64>, labels: &[usize]) -> Result<DistanceRatio> {
    let n = h.nrows();
    if n != labels.len() {
        return Err(SbError::Shape(format!(
            "{n} embeddings but {} labels",
            labels.len()
        )));
    }
    let num_classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    if num_classes < 2 {
        return Err(SbError::Config(
            "distance ratio needs at least 2 classes".into(),
        ));
    }
    let dist = |i: usize, j: usize| -> f64 {
        h.row(i)
            .iter()
            .zip(h.row(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    };
    let mut intra_means = Vec::new();
    let mut inter_means = Vec::new();
    let mut excluded = 0;
    for c in 0..num_classes {
        let members: Vec<usize> = (0..n).filter(|&v| labels[v] == c).collect();
        let others: Vec<usize> = (0..n).filter(|&v| labels[v] != c).collect();
        if members.len() >= 2 {
            let mut acc = 0.0;
            let mut cnt = 0usize;
            for a in 0..members.len() {
                for b in (a + 1)..members.len() {
                    acc += dist(members[a], members[b]);
                    cnt += 1;
                }
            }
            intra_means.push(acc / cnt as f64);
        } else {
            excluded += 1;
        }
        if !members.is_empty() && !others.is_empty() {
            let mut acc = 0.0;
            for &a in &members {
                for &b in &others {
                    acc += dist(a, b);
                }
            }
            inter_means.push(acc / (members.len() * others.len()) as f64);
        }
    }
    if intra_means.is_empty() {
        return Err(SbError::Config(
            "every class is a singleton; intra-class distance undefined".into(),
        ));
    }
    let mean_intra = intra_means.iter().sum::<f64>() / intra_means.len() as f64;
    let mean_inter = inter_means.iter().sum::<f64>() / inter_means.len() as f64;
    let ratio = if mean_intra > 0.0 {
        Some(mean_inter / mean_intra)
    } else {
        None
    };
    Ok(DistanceRatio {
        ratio,
        mean_intra,
        mean_inter,
        excluded_singletons: excluded,
    })
}

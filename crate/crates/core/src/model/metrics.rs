use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

/// Area under the ROC curve: the fraction of (positive, negative) pairs
/// where the positive scores higher, ties counting one half. `None` unless
/// both classes are present.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let (mut pos, mut neg) = (0u64, 0u64);
    // Twice the Mann-Whitney U, in integers so ties need no halves.
    let mut u2: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut p, mut n) = (0u64, 0u64);
        while j < order.len() && scores[order[j]].total_cmp(&scores[order[i]]).is_eq() {
            if labels[order[j]] {
                p += 1;
            } else {
                n += 1;
            }
            j += 1;
        }
        // Positives in this group beat every earlier negative and tie with
        // the negatives in the group.
        u2 += p * (2 * neg + n);
        pos += p;
        neg += n;
        i = j;
    }
    if pos == 0 || neg == 0 {
        return None;
    }
    Some(u2 as f64 / (2 * pos * neg) as f64)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BinaryMetrics {
    pub rows: usize,
    pub positives: usize,
    pub auroc: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub precision: Option<f64>,
    pub f1: Option<f64>,
    pub accuracy: Option<f64>,
    pub true_positives: usize,
    pub false_positives: usize,
    pub true_negatives: usize,
    pub false_negatives: usize,
}

fn ratio(a: usize, b: usize) -> Option<f64> {
    (b > 0).then(|| a as f64 / b as f64)
}

fn f1(precision: Option<f64>, recall: Option<f64>) -> Option<f64> {
    match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        (Some(_), Some(_)) => Some(0.0),
        _ => None,
    }
}

/// Scores at or above `threshold` are predicted positive.
pub fn binary_metrics(scores: &[f64], labels: &[bool], threshold: f64) -> BinaryMetrics {
    let mut m = BinaryMetrics { rows: scores.len(), ..Default::default() };
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= threshold, y) {
            (true, true) => m.true_positives += 1,
            (true, false) => m.false_positives += 1,
            (false, false) => m.true_negatives += 1,
            (false, true) => m.false_negatives += 1,
        }
    }
    m.positives = m.true_positives + m.false_negatives;
    m.auroc = auroc(scores, labels);
    m.sensitivity = ratio(m.true_positives, m.positives);
    m.specificity = ratio(m.true_negatives, m.true_negatives + m.false_positives);
    m.precision = ratio(m.true_positives, m.true_positives + m.false_positives);
    m.f1 = f1(m.precision, m.sensitivity);
    m.accuracy = ratio(m.true_positives + m.true_negatives, m.rows);
    m
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub support: usize,
    pub recall: Option<f64>,
    pub precision: Option<f64>,
    pub f1: Option<f64>,
    /// One-vs-rest.
    pub auroc: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MulticlassMetrics {
    pub rows: usize,
    pub accuracy: Option<f64>,
    /// Mean one-vs-rest AUROC over classes where it is defined.
    pub macro_auroc: Option<f64>,
    pub macro_f1: Option<f64>,
    pub classes: Vec<ClassMetrics>,
}

/// `probs[row][class]`; prediction is the argmax, ties to the lower class.
pub fn multiclass_metrics(probs: &[Vec<f64>], labels: &[usize], classes: &[String]) -> MulticlassMetrics {
    let argmax = |p: &Vec<f64>| {
        let mut best = 0;
        for (k, &x) in p.iter().enumerate() {
            if x > p[best] {
                best = k;
            }
        }
        best
    };
    let predicted: Vec<usize> = probs.iter().map(argmax).collect();
    let correct = predicted.iter().zip(labels).filter(|(a, b)| a == b).count();
    let per_class: Vec<ClassMetrics> = classes
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let support = labels.iter().filter(|&&y| y == k).count();
            let predicted_k = predicted.iter().filter(|&&p| p == k).count();
            let hits = predicted.iter().zip(labels).filter(|(p, y)| **p == k && **y == k).count();
            let recall = ratio(hits, support);
            let precision = ratio(hits, predicted_k);
            let scores: Vec<f64> = probs.iter().map(|p| p[k]).collect();
            let is_k: Vec<bool> = labels.iter().map(|&y| y == k).collect();
            ClassMetrics { class: name.clone(), support, recall, precision, f1: f1(precision, recall), auroc: auroc(&scores, &is_k) }
        })
        .collect();
    let mean = |xs: Vec<f64>| (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);
    MulticlassMetrics {
        rows: labels.len(),
        accuracy: ratio(correct, labels.len()),
        macro_auroc: mean(per_class.iter().filter_map(|c| c.auroc).collect()),
        macro_f1: mean(per_class.iter().filter(|c| c.support > 0).filter_map(|c| c.f1).collect()),
        classes: per_class,
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RegressionMetrics {
    pub rows: usize,
    pub r2: Option<f64>,
    pub mse: Option<f64>,
    pub mae: Option<f64>,
}

pub fn r2(pred: &[f64], y: &[f64]) -> Option<f64> {
    if y.is_empty() {
        return None;
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    let ss_res: f64 = pred.iter().zip(y).map(|(p, v)| (v - p) * (v - p)).sum();
    (ss_tot > 0.0).then(|| 1.0 - ss_res / ss_tot)
}

pub fn regression_metrics(pred: &[f64], y: &[f64]) -> RegressionMetrics {
    let n = y.len();
    let mean = |s: f64| (n > 0).then(|| s / n as f64);
    RegressionMetrics {
        rows: n,
        r2: r2(pred, y),
        mse: mean(pred.iter().zip(y).map(|(p, v)| (v - p) * (v - p)).sum()),
        mae: mean(pred.iter().zip(y).map(|(p, v)| libm::fabs(v - p)).sum()),
    }
}

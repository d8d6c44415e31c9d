//! Classification metrics and seed aggregation.

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Positive class for binary metrics (label 1 in 1-based files).
pub const POSITIVE_CLASS: usize = 0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// `2PR / (P + R)`, or 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// One-vs-rest confusion counts and derived scores for `positive`.
/// Undefined precision, recall or F1 are reported as 0.
pub fn confusion_metrics(pred: &[usize], truth: &[usize], positive: usize) -> Result<Confusion> {
    if pred.len() != truth.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions for {} labels",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::InvalidArgument("metrics of an empty set".into()));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (&p, &t) in pred.iter().zip(truth) {
        match (p == positive, t == positive) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let correct = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    Ok(Confusion {
        tp,
        fp,
        fn_,
        tn,
        accuracy: ratio(correct, pred.len()),
        precision,
        recall,
        f1: f1_score(precision, recall),
    })
}

/// Unweighted mean of per-class F1 scores.
pub fn macro_f1(pred: &[usize], truth: &[usize], classes: usize) -> Result<f64> {
    let mut s = 0.0;
    for c in 0..classes {
        s += confusion_metrics(pred, truth, c)?.f1;
    }
    Ok(s / classes as f64)
}

/// Area under the ROC curve as the Mann-Whitney statistic with midranks.
pub fn auc_roc(scores: &[f64], positive: &[bool]) -> Result<f64> {
    if scores.len() != positive.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} scores for {} labels",
            scores.len(),
            positive.len()
        )));
    }
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::InvalidArgument(
            "AUC needs both classes present".into(),
        ));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite {
            component: "scores".into(),
        });
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
        // ranks i+1 ..= j+1 share their mean
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if positive[k] {
                rank_sum += mid;
            }
        }
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Unweighted mean of one-vs-rest AUCs over classes that are present with
/// both signs.
pub fn macro_auc_ovr(probs: &Tensor, truth: &[usize]) -> Result<f64> {
    let c = probs.cols();
    let mut total = 0.0;
    let mut used = 0;
    for k in 0..c {
        let pos: Vec<bool> = truth.iter().map(|&t| t == k).collect();
        let scores: Vec<f64> = (0..probs.rows()).map(|i| probs.get2(i, k)).collect();
        if let Ok(a) = auc_roc(&scores, &pos) {
            total += a;
            used += 1;
        }
    }
    if used == 0 {
        return Err(Error::InvalidArgument(
            "AUC needs both classes present".into(),
        ));
    }
    Ok(total / used as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub accuracy: f64,
    /// NaN when the evaluated set holds a single class.
    pub auc: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    /// Macro-averaged F1 over classes.
    pub balanced_f1: f64,
    pub support: Vec<usize>,
}

/// Binary sets score the [`POSITIVE_CLASS`]; with more classes precision,
/// recall and F1 are macro averages and AUC is one-vs-rest.
pub fn metric_row(
    pred: &[usize],
    probs: &Tensor,
    truth: &[usize],
    classes: usize,
) -> Result<MetricRow> {
    if probs.rank() != 2 || probs.rows() != truth.len() || probs.cols() != classes {
        return Err(Error::DimensionMismatch(format!(
            "probabilities of shape {:?} for {} labels and {classes} classes",
            probs.shape(),
            truth.len()
        )));
    }
    let mut support = vec![0; classes];
    for &t in truth {
        support[t] += 1;
    }
    let balanced_f1 = macro_f1(pred, truth, classes)?;
    if classes == 2 {
        let m = confusion_metrics(pred, truth, POSITIVE_CLASS)?;
        let scores: Vec<f64> = (0..probs.rows())
            .map(|i| probs.get2(i, POSITIVE_CLASS))
            .collect();
        let pos: Vec<bool> = truth.iter().map(|&t| t == POSITIVE_CLASS).collect();
        Ok(MetricRow {
            accuracy: m.accuracy,
            auc: auc_roc(&scores, &pos).unwrap_or(f64::NAN),
            f1: m.f1,
            precision: m.precision,
            recall: m.recall,
            balanced_f1,
            support,
        })
    } else {
        let per: Vec<Confusion> = (0..classes)
            .map(|c| confusion_metrics(pred, truth, c))
            .collect::<Result<_>>()?;
        let avg = |f: fn(&Confusion) -> f64| per.iter().map(f).sum::<f64>() / classes as f64;
        Ok(MetricRow {
            accuracy: per[0].accuracy,
            auc: macro_auc_ovr(probs, truth).unwrap_or(f64::NAN),
            f1: balanced_f1,
            precision: avg(|c| c.precision),
            recall: avg(|c| c.recall),
            balanced_f1,
            support,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aggregate {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    /// `100 * std / mean`; absent when the mean is zero.
    pub cv_percent: Option<f64>,
}

pub fn seed_aggregate(values: &[f64]) -> Result<Aggregate> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("aggregate of no values".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    let cv_percent = (mean != 0.0).then(|| 100.0 * std / mean);
    Ok(Aggregate {
        mean,
        std,
        cv_percent,
    })
}

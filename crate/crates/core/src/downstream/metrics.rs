use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Classification,
    Regression,
}

impl std::str::FromStr for TaskKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classification" => Ok(TaskKind::Classification),
            "regression" => Ok(TaskKind::Regression),
            other => Err(Error::invalid(format!("unknown task kind {other:?}"))),
        }
    }
}

/// Operating threshold for precision and recall.
pub const DECISION_THRESHOLD: f64 = 0.5;

/// Metrics for one evaluation; fields not defined for the task kind are
/// `None`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub roc_auc: Option<f64>,
    pub aupr: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub rmse: Option<f64>,
}

impl MetricReport {
    pub const FIELDS: [&'static str; 5] = ["roc_auc", "aupr", "precision", "recall", "rmse"];

    pub fn values(&self) -> [Option<f64>; 5] {
        [self.roc_auc, self.aupr, self.precision, self.recall, self.rmse]
    }

    fn from_values(v: [Option<f64>; 5]) -> Self {
        MetricReport { roc_auc: v[0], aupr: v[1], precision: v[2], recall: v[3], rmse: v[4] }
    }
}

/// Mean and sample standard deviation of each metric over repeats or folds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub n: usize,
    pub mean: MetricReport,
    pub std: MetricReport,
}

pub fn summarize(reports: &[MetricReport]) -> Result<MetricSummary> {
    if reports.is_empty() {
        return Err(Error::invalid("no metric reports to summarize"));
    }
    let mut mean = [None; 5];
    let mut std = [None; 5];
    for f in 0..5 {
        let xs: Vec<f64> = reports.iter().filter_map(|r| r.values()[f]).collect();
        if xs.len() != reports.len() {
            continue;
        }
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let var = if xs.len() > 1 { xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        mean[f] = Some(m);
        std[f] = Some(var.sqrt());
    }
    Ok(MetricSummary { n: reports.len(), mean: MetricReport::from_values(mean), std: MetricReport::from_values(std) })
}

fn binary_labels(labels: &[f64]) -> Result<Vec<bool>> {
    labels
        .iter()
        .enumerate()
        .map(|(i, &y)| match y {
            0.0 => Ok(false),
            1.0 => Ok(true),
            _ => Err(Error::invalid(format!("classification label {i} is {y}, expected 0 or 1"))),
        })
        .collect()
}

fn check_inputs(scores: &[f64], labels: &[f64]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::shape("metrics", format!("{} scores vs {} labels", scores.len(), labels.len())));
    }
    if scores.is_empty() {
        return Err(Error::invalid("no scores to evaluate"));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::Numeric(format!("score {i} is {}", scores[i])));
    }
    Ok(())
}

fn class_counts(y: &[bool]) -> Result<(usize, usize)> {
    let pos = y.iter().filter(|&&b| b).count();
    let neg = y.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::degenerate(format!("ranking metrics need both classes ({pos} positive, {neg} negative)")));
    }
    Ok((pos, neg))
}

/// Indices sorted by descending score; returns groups of tied indices.
fn tie_groups(scores: &[f64]) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in order {
        match groups.last_mut() {
            Some(g) if scores[g[0]] == scores[i] => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    groups
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half.
pub fn roc_auc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    check_inputs(scores, labels)?;
    let y = binary_labels(labels)?;
    let (pos, neg) = class_counts(&y)?;
    let mut neg_below = neg as f64;
    let mut concordant = 0.0;
    for g in tie_groups(scores) {
        let p = g.iter().filter(|&&i| y[i]).count() as f64;
        let n = g.len() as f64 - p;
        neg_below -= n;
        concordant += p * (neg_below + 0.5 * n);
    }
    Ok(concordant / (pos as f64 * neg as f64))
}

/// Average precision: `Σ (R_t − R_{t−1}) · P_t` over descending distinct
/// score thresholds.
pub fn average_precision(scores: &[f64], labels: &[f64]) -> Result<f64> {
    check_inputs(scores, labels)?;
    let y = binary_labels(labels)?;
    let (pos, _) = class_counts(&y)?;
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut ap = 0.0;
    for g in tie_groups(scores) {
        let p = g.iter().filter(|&&i| y[i]).count();
        tp += p;
        fp += g.len() - p;
        ap += (p as f64 / pos as f64) * (tp as f64 / (tp + fp) as f64);
    }
    Ok(ap)
}

/// Precision and recall with `score ≥ threshold` predicted positive. Precision
/// with no predicted positives is 0.
pub fn precision_recall(scores: &[f64], labels: &[f64], threshold: f64) -> Result<(f64, f64)> {
    check_inputs(scores, labels)?;
    let y = binary_labels(labels)?;
    let (mut tp, mut fp, mut fnc) = (0usize, 0usize, 0usize);
    for (&s, &t) in scores.iter().zip(&y) {
        match (s >= threshold, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fnc += 1,
            (false, false) => {}
        }
    }
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fnc == 0 { 0.0 } else { tp as f64 / (tp + fnc) as f64 };
    Ok((precision, recall))
}

pub fn rmse(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_inputs(pred, target)?;
    if let Some(i) = target.iter().position(|t| !t.is_finite()) {
        return Err(Error::Numeric(format!("target {i} is {}", target[i])));
    }
    Ok((pred.iter().zip(target).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / pred.len() as f64).sqrt())
}

/// Classification: ROC-AUC, AUPR, precision and recall at
/// [`DECISION_THRESHOLD`]. Regression: RMSE.
pub fn compute_metrics(scores: &[f64], labels: &[f64], kind: TaskKind) -> Result<MetricReport> {
    match kind {
        TaskKind::Classification => {
            let (precision, recall) = precision_recall(scores, labels, DECISION_THRESHOLD)?;
            Ok(MetricReport {
                roc_auc: Some(roc_auc(scores, labels)?),
                aupr: Some(average_precision(scores, labels)?),
                precision: Some(precision),
                recall: Some(recall),
                rmse: None,
            })
        }
        TaskKind::Regression => Ok(MetricReport { rmse: Some(rmse(scores, labels)?), ..MetricReport::default() }),
    }
}

use serde::{Deserialize, Serialize};

use super::{ExperimentError, Result};
use crate::datagen::PairType;
use crate::mining::{PairFlag, PairVerdict};

/// Index of the largest score in each row; ties go to the lowest index.
pub fn argmax_rows(scores: &[f64], classes: usize) -> Vec<usize> {
    scores
        .chunks_exact(classes)
        .map(|row| row.iter().enumerate().fold(0, |best, (j, &v)| if v > row[best] { j } else { best }))
        .collect()
}

pub fn accuracy(scores: &[f64], labels: &[usize], classes: usize) -> Result<f64> {
    if classes == 0 || scores.len() != labels.len() * classes || labels.is_empty() {
        return Err(ExperimentError::Metric(format!("{} scores for {} labels x {classes} classes", scores.len(), labels.len())));
    }
    let hits = argmax_rows(scores, classes).iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Step-wise area under one precision-recall curve.
///
/// Items are visited by decreasing score; a block of tied scores is one
/// threshold step. Each step adds `(R_k - R_{k-1}) * P_k`. `None` when the
/// positives or negatives are missing.
pub fn average_precision(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let total_pos = positive.iter().filter(|&&p| p).count();
    if total_pos == 0 || total_pos == positive.len() {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut seen, mut area, mut prev_recall) = (0usize, 0usize, 0.0, 0.0);
    let mut k = 0;
    while k < order.len() {
        let s = scores[order[k]];
        while k < order.len() && scores[order[k]] == s {
            tp += usize::from(positive[order[k]]);
            seen += 1;
            k += 1;
        }
        let recall = tp as f64 / total_pos as f64;
        area += (recall - prev_recall) * (tp as f64 / seen as f64);
        prev_recall = recall;
    }
    Some(area)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Auprc {
    /// Macro average over the classes that have a defined curve.
    pub macro_average: f64,
    pub per_class: Vec<Option<f64>>,
    /// Classes left out because they lack positives or negatives.
    pub excluded_classes: Vec<usize>,
}

/// Macro one-vs-rest AUPRC of `B x classes` scores.
pub fn auprc(scores: &[f64], labels: &[usize], classes: usize) -> Result<Auprc> {
    if classes == 0 || scores.len() != labels.len() * classes || labels.is_empty() {
        return Err(ExperimentError::Metric(format!("{} scores for {} labels x {classes} classes", scores.len(), labels.len())));
    }
    let mut per_class = Vec::with_capacity(classes);
    let mut excluded = Vec::new();
    for c in 0..classes {
        let column: Vec<f64> = scores.chunks_exact(classes).map(|r| r[c]).collect();
        let positive: Vec<bool> = labels.iter().map(|&l| l == c).collect();
        let ap = average_precision(&column, &positive);
        if ap.is_none() {
            log::warn!("class {c} has no positives or no negatives; left out of AUPRC");
            excluded.push(c);
        }
        per_class.push(ap);
    }
    let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(ExperimentError::Metric("AUPRC undefined for every class".into()));
    }
    Ok(Auprc { macro_average: defined.iter().sum::<f64>() / defined.len() as f64, per_class, excluded_classes: excluded })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypeMetrics {
    /// `None` when nothing was flagged.
    pub precision: Option<f64>,
    /// `None` when no pair truly has this type.
    pub recall: Option<f64>,
    pub flagged: usize,
    pub actual: usize,
    pub correct: usize,
}

impl TypeMetrics {
    fn from_counts(flagged: usize, actual: usize, correct: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { None } else { Some(num as f64 / den as f64) };
        Self { precision: ratio(correct, flagged), recall: ratio(correct, actual), flagged, actual, correct }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentificationMetrics {
    pub noisy: TypeMetrics,
    pub faulty: TypeMetrics,
}

/// Flags against ground-truth pair types; faulty kinds are pooled.
pub fn identification_metrics(verdicts: &[PairVerdict], truth: Option<&[PairType]>) -> Result<IdentificationMetrics> {
    let truth = truth.ok_or(ExperimentError::NoGroundTruth)?;
    if verdicts.len() != truth.len() {
        return Err(ExperimentError::Metric(format!("{} verdicts for {} pairs", verdicts.len(), truth.len())));
    }
    let counts = |flag: PairFlag, is_type: &dyn Fn(PairType) -> bool| {
        let mut flagged = 0;
        let mut actual = 0;
        let mut correct = 0;
        for (v, &t) in verdicts.iter().zip(truth) {
            let f = v.flag == flag;
            let a = is_type(t);
            flagged += usize::from(f);
            actual += usize::from(a);
            correct += usize::from(f && a);
        }
        TypeMetrics::from_counts(flagged, actual, correct)
    };
    Ok(IdentificationMetrics {
        noisy: counts(PairFlag::Noisy, &|t| t == PairType::Noisy),
        faulty: counts(PairFlag::Faulty, &|t| t.is_faulty()),
    })
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    /// `std` is 0 for a single value.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

/// Rank-based AUC: probability that a random `high` value exceeds a random
/// `low` value, ties counting one half.
pub fn rank_auc(high: &[f64], low: &[f64]) -> Option<f64> {
    if high.is_empty() || low.is_empty() {
        return None;
    }
    let mut sorted = low.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut wins = 0.0;
    for &h in high {
        let below = sorted.partition_point(|&l| l < h);
        let not_above = sorted.partition_point(|&l| l <= h);
        wins += below as f64 + 0.5 * (not_above - below) as f64;
    }
    Some(wins / (high.len() * low.len()) as f64)
}

//! Hit@k evaluation and prediction averaging.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Index of the largest score, lowest index on ties.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// True when `label` ranks among the `k` best scores. Ties rank the lower
/// class id first.
pub fn hit_at_k(scores: &[f64], label: usize, k: usize) -> Result<bool> {
    if label >= scores.len() {
        return Err(Error::Label(format!(
            "label {label} outside {} classes",
            scores.len()
        )));
    }
    if k == 0 || k > scores.len() {
        return Err(Error::Config(format!(
            "k={k} must be between 1 and the number of classes ({})",
            scores.len()
        )));
    }
    let target = scores[label];
    let ahead = scores
        .iter()
        .enumerate()
        .filter(|&(i, &s)| s > target || (s == target && i < label))
        .count();
    Ok(ahead < k)
}

/// Hit@k percentages keyed by k, each rounded to two decimals.
pub type HitTable = BTreeMap<usize, f64>;

pub fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

pub fn evaluate(predictions: &[(Vec<f64>, usize)], ks: &[usize]) -> Result<HitTable> {
    if predictions.is_empty() {
        return Err(Error::Data("no predictions to evaluate".into()));
    }
    let mut table = HitTable::new();
    for &k in ks {
        let mut hits = 0usize;
        for (scores, label) in predictions {
            if hit_at_k(scores, *label, k)? {
                hits += 1;
            }
        }
        table.insert(k, round2(100.0 * hits as f64 / predictions.len() as f64));
    }
    Ok(table)
}

/// Mean of per-frame probability vectors.
pub fn average_frame_predictions(frame_scores: &[Vec<f64>]) -> Result<Vec<f64>> {
    let Some(first) = frame_scores.first() else {
        return Err(Error::Data("no frame predictions to average".into()));
    };
    let n = first.len();
    let mut mean = vec![0.0; n];
    for (i, frame) in frame_scores.iter().enumerate() {
        if frame.len() != n {
            return Err(Error::Dimension(format!(
                "frame {i} has {} scores, expected {n}",
                frame.len()
            )));
        }
        let total: f64 = frame.iter().sum();
        if (total - 1.0).abs() > 1e-6 || frame.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::Data(format!(
                "frame {i} is not a probability vector (sums to {total})"
            )));
        }
        mean.iter_mut().zip(frame).for_each(|(m, p)| *m += p);
    }
    let scale = 1.0 / frame_scores.len() as f64;
    mean.iter_mut().for_each(|m| *m *= scale);
    Ok(mean)
}

/// Mean over evaluation splits.
pub fn split_mean(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Data("no split results to average".into()));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

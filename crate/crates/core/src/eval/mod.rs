//! Relevance functions, NDCG, prediction error and the experiment driver.

mod experiment;

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::measure::ImportanceVector;

pub use experiment::{
    run_experiment, write_outputs, DataSource, Diagnostics, ExperimentConfig, ExperimentOutput, FileSource, Metric,
    PredictionSummary, RankedResult, Report, Task, BASELINE_SETTING,
};

fn cosine(a: &[f64], b: &[f64], what: &str) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::argument(format!("{what} vectors of length {} and {}", a.len(), b.len())));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Precondition(format!("{what} relevance is undefined for a zero vector")));
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Cosine of two importance vectors over the same vocabulary.
pub fn relevance_rg(a: &[f64], b: &[f64]) -> Result<f64> {
    cosine(a, b, "importance")
}

/// Cosine of the binarized (`> 0`) vectors.
pub fn relevance_rb(a: &[f64], b: &[f64]) -> Result<f64> {
    let bin = |v: &[f64]| v.iter().map(|x| f64::from(u8::from(*x > 0.0))).collect::<Vec<_>>();
    cosine(&bin(a), &bin(b), "binary")
}

fn dcg(relevances: &[f64], k: usize) -> f64 {
    relevances
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, r)| (2f64.powf(*r) - 1.0) / ((i + 2) as f64).log2())
        .sum()
}

/// NDCG@k of relevances in ranked order, normalized by the DCG@k of
/// `ideal` (the same relevances sorted descending). Gains are `2^r - 1`
/// with a `log2(i + 1)` discount. Returns 0 when the ideal DCG is 0.
pub fn ndcg_at_k(ranked: &[f64], ideal: &[f64], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::argument("k must be at least 1"));
    }
    let z = dcg(ideal, k);
    if z <= 0.0 {
        return Ok(0.0);
    }
    Ok(dcg(ranked, k) / z)
}

/// `true` when every relevance is zero, i.e. NDCG is undefined and reported as 0.
pub fn is_zero_gain(relevances: &[f64]) -> bool {
    relevances.iter().all(|r| *r <= 0.0)
}

/// Relevances sorted descending.
pub fn ideal_order(relevances: &[f64]) -> Vec<f64> {
    let mut v = relevances.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// Mean absolute difference over the tags of `truth`.
pub fn image_mad(predicted: &ImportanceVector, truth: &ImportanceVector) -> Result<f64> {
    if truth.is_empty() {
        return Err(Error::argument("truth vector has no tags"));
    }
    if let Some((tag, _)) = predicted.iter().find(|(t, _)| truth.get(t).is_none()) {
        return Err(Error::argument(format!("predicted tag `{tag}` is not among the true tags")));
    }
    Ok(truth.iter().map(|(t, v)| (predicted.value(t) - v).abs()).sum::<f64>() / truth.len() as f64)
}

/// Mean per-image MAD; both maps must cover the same image ids.
pub fn prediction_error(
    predicted: &BTreeMap<String, ImportanceVector>,
    truth: &BTreeMap<String, ImportanceVector>,
) -> Result<f64> {
    if predicted.is_empty() || !predicted.keys().eq(truth.keys()) {
        return Err(Error::argument("predicted and true importance cover different images"));
    }
    let mut sum = 0.0;
    for (id, t) in truth {
        sum += image_mad(&predicted[id], t).map_err(|e| Error::argument(format!("image `{id}`: {e}")))?;
    }
    Ok(sum / truth.len() as f64)
}

/// Every tag of `truth` gets `1 / |tags|`.
pub fn equal_importance(truth: &ImportanceVector) -> Result<ImportanceVector> {
    let share = 1.0 / truth.len().max(1) as f64;
    ImportanceVector::new(truth.iter().map(|(t, _)| (t.to_string(), share)).collect())
}

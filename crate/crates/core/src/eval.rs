//! Threshold-free performance metrics and across-seed aggregation.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::stats;
use crate::{Error, Result};

/// Which training mode produced a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Constrained,
    Unconstrained,
    /// Constrained in the direction opposite to the elicited one.
    Opposite,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Constrained => "constrained",
            ModelKind::Unconstrained => "unconstrained",
            ModelKind::Opposite => "opposite",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "constrained" => Ok(ModelKind::Constrained),
            "unconstrained" => Ok(ModelKind::Unconstrained),
            "opposite" => Ok(ModelKind::Opposite),
            other => Err(format!("unknown model kind `{other}`")),
        }
    }
}

/// Held-out performance of one trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricPoint {
    pub train_size: usize,
    pub seed: u64,
    pub kind: ModelKind,
    pub auc_roc: f64,
    pub avg_precision: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    AucRoc,
    AvgPrecision,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::AucRoc => "auc_roc",
            Metric::AvgPrecision => "avg_precision",
        }
    }

    fn of(self, p: &MetricPoint) -> f64 {
        match self {
            Metric::AucRoc => p.auc_roc,
            Metric::AvgPrecision => p.avg_precision,
        }
    }
}

fn check_inputs(scores: &[f64], labels: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: labels.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::UndefinedMetric("scores contain NaN".into()));
    }
    let pos = labels.iter().filter(|&&y| y == 1).count();
    Ok((pos, labels.len() - pos))
}

/// Indices ordered by descending score.
fn descending(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal));
    idx
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half.
pub fn auc_roc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (pos, neg) = check_inputs(scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric("AUC-ROC needs both classes".into()));
    }
    let order = descending(scores);
    // Twice the Mann-Whitney count, kept integral so the result is exact.
    let mut twice_wins: u128 = 0;
    let mut neg_seen: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut p_grp, mut n_grp) = (0u128, 0u128);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] == 1 {
                p_grp += 1;
            } else {
                n_grp += 1;
            }
            j += 1;
        }
        // Positives in this block beat every negative not yet seen (lower
        // scores) and tie with negatives in the block.
        let neg_below = neg as u128 - neg_seen - n_grp;
        twice_wins += 2 * p_grp * neg_below + p_grp * n_grp;
        neg_seen += n_grp;
        i = j;
    }
    Ok(twice_wins as f64 / (2.0 * pos as f64 * neg as f64))
}

/// `Σ_k (R_k − R_{k−1}) · P_k` over descending thresholds, with equal scores
/// forming a single threshold step.
pub fn average_precision(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (pos, _) = check_inputs(scores, labels)?;
    if pos == 0 {
        return Err(Error::UndefinedMetric("average precision needs a positive".into()));
    }
    let order = descending(scores);
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            j += 1;
        }
        let recall = tp as f64 / pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    Ok(ap)
}

/// One point on a learning curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub train_size: usize,
    pub kind: String,
    pub metric: String,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
}

/// Groups values by `(train_size, kind)` and reports `mean ± 1.96·sd/√R`.
pub(crate) fn aggregate<K: Ord + Clone + ToString>(
    values: impl IntoIterator<Item = (usize, K, f64)>,
    metric: &str,
) -> Result<Vec<CurvePoint>> {
    let mut groups: BTreeMap<(usize, K), Vec<f64>> = BTreeMap::new();
    for (size, kind, v) in values {
        groups.entry((size, kind)).or_default().push(v);
    }
    groups
        .into_iter()
        .map(|((size, kind), vals)| {
            if vals.len() < 2 {
                return Err(Error::InvalidArgument(format!(
                    "train size {size} ({}) has {} run(s); at least 2 are needed for an interval",
                    kind.to_string(),
                    vals.len()
                )));
            }
            let (mean, lo, hi) = stats::normal_ci(&vals);
            Ok(CurvePoint {
                train_size: size,
                kind: kind.to_string(),
                metric: metric.to_string(),
                mean,
                ci_low: lo,
                ci_high: hi,
                n: vals.len(),
            })
        })
        .collect()
}

pub fn aggregate_curve(points: &[MetricPoint], metric: Metric) -> Result<Vec<CurvePoint>> {
    aggregate(
        points.iter().map(|p| (p.train_size, p.kind, metric.of(p))),
        metric.as_str(),
    )
}

/// CSV with columns `train_size,model_kind,metric,mean,ci_low,ci_high`.
pub fn write_curve_csv(path: &Path, curves: &[CurvePoint]) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "train_size,model_kind,metric,mean,ci_low,ci_high").unwrap();
    for c in curves {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            c.train_size, c.kind, c.metric, c.mean, c.ci_low, c.ci_high
        )
        .unwrap();
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_curve_csv(path: &Path) -> Result<Vec<CurvePoint>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::InvalidArgument(format!("bad curve CSV field {i}")))
        };
        out.push(CurvePoint {
            train_size: num(0)? as usize,
            kind: rec.get(1).unwrap_or("").to_string(),
            metric: rec.get(2).unwrap_or("").to_string(),
            mean: num(3)?,
            ci_low: num(4)?,
            ci_high: num(5)?,
            n: 0,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_examples() {
        assert_eq!(auc_roc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(auc_roc(&[0.5; 6], &[0, 1, 0, 1, 1, 0]).unwrap(), 0.5);
        assert_eq!(auc_roc(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]).unwrap(), 0.75);
        assert!(auc_roc(&[0.1, 0.2], &[1, 1]).is_err());
        assert!(auc_roc(&[0.1], &[1, 0]).is_err());
    }

    #[test]
    fn ap_examples() {
        assert_eq!(average_precision(&[0.9, 0.8, 0.2, 0.1], &[1, 1, 0, 0]).unwrap(), 1.0);
        assert_eq!(average_precision(&[0.2, 0.9], &[1, 0]).unwrap(), 0.5);
        assert!(average_precision(&[0.2, 0.9], &[0, 0]).is_err());
    }

    #[test]
    fn ap_groups_ties() {
        // One block of two rows: recall 1 at precision 1/2.
        assert_eq!(average_precision(&[0.5, 0.5], &[1, 0]).unwrap(), 0.5);
    }

    #[test]
    fn aggregate_known_values() {
        let pts: Vec<MetricPoint> = [0.6, 0.8]
            .iter()
            .enumerate()
            .map(|(i, &v)| MetricPoint {
                train_size: 100,
                seed: i as u64,
                kind: ModelKind::Constrained,
                auc_roc: v,
                avg_precision: 0.5,
            })
            .collect();
        let c = aggregate_curve(&pts, Metric::AucRoc).unwrap();
        assert_eq!(c.len(), 1);
        assert!((c[0].mean - 0.7).abs() < 1e-12);
        assert!((c[0].ci_high - c[0].mean - 0.196).abs() < 1e-3);

        let flat = aggregate_curve(&pts, Metric::AvgPrecision).unwrap();
        assert_eq!(flat[0].ci_low, flat[0].ci_high);

        assert!(aggregate_curve(&pts[..1], Metric::AucRoc).is_err());
    }
}

//! Spearman rank correlation, correlation-strength buckets and
//! metric-driven teacher ranking.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{MetricKind, MetricSummary};
use crate::numerics::KahanSum;

/// Minimum number of (metric, accuracy) points for a reported correlation.
pub const MIN_CORRELATION_POINTS: usize = 3;

/// Upper bound (inclusive) of |rho| for the weak bucket.
pub const WEAK_MAX: f64 = 0.50;
/// Upper bound (inclusive) of |rho| for the modest bucket.
pub const MODEST_MAX: f64 = 0.70;

/// 1-based ranks; tied values share the average of the ranks they span.
pub fn rank_with_ties(x: &[f64]) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::EmptyInput("rank_with_ties"));
    }
    if let Some(index) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { context: "rank input", index });
    }
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && x[order[end]] == x[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let avg = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    Ok(ranks)
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().copied().collect::<KahanSum>().total() / n;
    let my = y.iter().copied().collect::<KahanSum>().total() / n;
    let mut sxy = KahanSum::new();
    let mut sxx = KahanSum::new();
    let mut syy = KahanSum::new();
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy.add(dx * dy);
        sxx.add(dx * dx);
        syy.add(dy * dy);
    }
    if sxx.total() == 0.0 || syy.total() == 0.0 {
        return Err(Error::UndefinedCorrelation("zero rank variance"));
    }
    Ok((sxy.total() / (sxx.total() * syy.total()).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's rho: Pearson correlation of the tie-averaged ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput(format!("lengths differ: {} vs {}", x.len(), y.len())));
    }
    if x.len() < MIN_CORRELATION_POINTS {
        return Err(Error::InvalidInput(format!(
            "spearman needs at least {MIN_CORRELATION_POINTS} points, got {}",
            x.len()
        )));
    }
    pearson(&rank_with_ties(x)?, &rank_with_ties(y)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bucket {
    Weak,
    Modest,
    Strong,
}

impl Bucket {
    pub const ALL: [Bucket; 3] = [Bucket::Weak, Bucket::Modest, Bucket::Strong];
}

impl fmt::Display for Bucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Bucket::Weak => "Weak",
            Bucket::Modest => "Modest",
            Bucket::Strong => "Strong",
        })
    }
}

/// Strength bucket of a correlation, judged on |rho|:
/// weak up to 0.50, modest up to 0.70, strong above.
pub fn classify_correlation(rho: f64) -> Bucket {
    let a = rho.abs();
    if a <= WEAK_MAX {
        Bucket::Weak
    } else if a <= MODEST_MAX {
        Bucket::Modest
    } else {
        Bucket::Strong
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEntry {
    pub kind: MetricKind,
    pub rho: f64,
    pub abs_rho: f64,
    pub bucket: Bucket,
    pub n_points: usize,
}

impl CorrelationEntry {
    pub fn from_rho(kind: MetricKind, rho: f64, n_points: usize) -> Self {
        Self { kind, rho, abs_rho: rho.abs(), bucket: classify_correlation(rho), n_points }
    }

    /// Correlates per-teacher metric values with per-teacher student accuracy.
    pub fn compute(kind: MetricKind, metric: &[f64], accuracy: &[f64]) -> Result<Self> {
        let rho = spearman(metric, accuracy)?;
        Ok(Self::from_rho(kind, rho, metric.len()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TeacherRanking {
    pub kind: MetricKind,
    /// Best first.
    pub order: Vec<String>,
    pub selected: String,
}

/// Orders teachers by one metric: TAC and SSP descending, R12 ascending.
/// Equal scores fall back to teacher id order.
pub fn rank_teachers(summaries: &BTreeMap<String, MetricSummary>, kind: MetricKind) -> Result<TeacherRanking> {
    if summaries.len() < 2 {
        return Err(Error::InvalidInput(format!("ranking needs at least 2 teachers, got {}", summaries.len())));
    }
    if let Some((id, s)) = summaries.iter().find(|(_, s)| s.kind != kind) {
        return Err(Error::InvalidInput(format!("teacher `{id}` has a {} summary, expected {kind}", s.kind)));
    }
    let mut entries: Vec<(&String, f64)> = summaries.iter().map(|(id, s)| (id, s.mean)).collect();
    // BTreeMap iteration is already id-ordered and sort_by is stable
    if kind.higher_is_better() {
        entries.sort_by(|a, b| b.1.total_cmp(&a.1));
    } else {
        entries.sort_by(|a, b| a.1.total_cmp(&b.1));
    }
    let order: Vec<String> = entries.into_iter().map(|(id, _)| id.clone()).collect();
    Ok(TeacherRanking { kind, selected: order[0].clone(), order })
}

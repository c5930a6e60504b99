//! Teacher-side metrics: accuracy (TAC), dispersion of secondary soft
//! probabilities (SSP) and the top-1/top-2 raw logit ratio (R12), plus the
//! sample-weighted aggregation used to turn per-sample values into one
//! score per teacher.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{argmax, sort_desc_topk, stable_softmax, KahanSum, Matrix};

/// Default number of secondary probabilities in SSP (positions 2..=4).
pub const DEFAULT_SSP_K: usize = 3;

/// Skipped-sample fraction above which R12 aggregation logs a warning.
pub const SKIP_WARN_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Tac,
    Ssp,
    R12,
}

impl MetricKind {
    pub const ALL: [MetricKind; 3] = [MetricKind::Tac, MetricKind::Ssp, MetricKind::R12];

    /// Whether a larger value marks a better teacher.
    pub fn higher_is_better(self) -> bool {
        !matches!(self, MetricKind::R12)
    }

    pub fn label(self) -> &'static str {
        match self {
            MetricKind::Tac => "TAC",
            MetricKind::Ssp => "SSP",
            MetricKind::R12 => "R12",
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tac" => Ok(MetricKind::Tac),
            "ssp" => Ok(MetricKind::Ssp),
            "r12" | "ratio12" => Ok(MetricKind::R12),
            other => Err(Error::InvalidArgument(format!("unknown metric `{other}`"))),
        }
    }
}

/// How teacher logits are collected for aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EpochMode {
    /// One pass over the training set stands for every epoch.
    #[default]
    Static,
    /// Accumulate over every batch the teacher sees during student training.
    Online,
}

impl std::str::FromStr for EpochMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "static" => Ok(EpochMode::Static),
            "online" => Ok(EpochMode::Online),
            other => Err(Error::InvalidArgument(format!("unknown mode `{other}`"))),
        }
    }
}

/// Probabilities sorted in descending order.
#[derive(Debug, Clone, PartialEq)]
pub struct SortedProbs(Vec<f64>);

impl SortedProbs {
    pub fn from_logits(row: &[f64]) -> Result<Self> {
        let mut q = stable_softmax(row)?;
        // sort_by on a permutation-free copy; ties are irrelevant for values
        q.sort_by(|a, b| b.total_cmp(a));
        Ok(Self(q))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Raw logits sorted in descending order.
#[derive(Debug, Clone, PartialEq)]
pub struct SortedLogits(Vec<f64>);

impl SortedLogits {
    pub fn from_logits(row: &[f64]) -> Result<Self> {
        let (values, _) = sort_desc_topk(row, row.len())?;
        Ok(Self(values))
    }

    pub fn top1(&self) -> f64 {
        self.0[0]
    }

    pub fn top2(&self) -> f64 {
        self.0[1]
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Fraction of positions where the prediction equals the label.
pub fn tac(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::InvalidInput(format!(
            "{} predictions vs {} labels",
            predicted.len(),
            truth.len()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::EmptyInput("tac"));
    }
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / predicted.len() as f64)
}

/// Row-wise argmax with lowest-index tie-break.
pub fn predicted_labels(logits: &Matrix) -> Vec<usize> {
    logits.iter_rows().map(argmax).collect()
}

/// Population standard deviation of sorted softmax positions `2..=k+1`.
pub fn ssp_sample(row: &[f64], k: usize) -> Result<f64> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("SSP needs k >= 2, got {k}")));
    }
    if row.len() <= k {
        return Err(Error::InvalidInput(format!(
            "SSP with k = {k} needs more than {k} classes, got {}",
            row.len()
        )));
    }
    let q = SortedProbs::from_logits(row)?;
    // deviations from Q2 first: equal probabilities give exactly zero
    let anchor = q.values()[1];
    let d: Vec<f64> = q.values()[1..=k].iter().map(|x| x - anchor).collect();
    let mean = d.iter().sum::<f64>() / k as f64;
    let var = d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / k as f64;
    Ok(var.sqrt())
}

/// `P1 / P2` of the raw logits, or `None` when `P2 <= 0`.
pub fn r12_sample(row: &[f64]) -> Result<Option<f64>> {
    if row.len() < 2 {
        return Err(Error::InvalidInput("R12 needs at least 2 logits".into()));
    }
    let p = SortedLogits::from_logits(row)?;
    if p.top2() <= 0.0 {
        return Ok(None);
    }
    Ok(Some(p.top1() / p.top2()))
}

/// Aggregated value of one metric for one teacher.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub kind: MetricKind,
    pub mean: f64,
    pub n_included: u64,
    pub n_skipped: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_epoch_means: Vec<f64>,
}

impl MetricSummary {
    pub fn n_seen(&self) -> u64 {
        self.n_included + self.n_skipped
    }

    pub fn skipped_fraction(&self) -> f64 {
        if self.n_seen() == 0 {
            0.0
        } else {
            self.n_skipped as f64 / self.n_seen() as f64
        }
    }
}

/// Streaming accumulator behind [`aggregate`]. Push batches in the global
/// sample order; call [`end_epoch`](Self::end_epoch) between epochs.
#[derive(Debug, Clone)]
pub struct MetricAccumulator {
    kind: MetricKind,
    ssp_k: usize,
    n_classes: Option<usize>,
    total: KahanSum,
    n_included: u64,
    n_skipped: u64,
    epoch_total: KahanSum,
    epoch_included: u64,
    epoch_seen: u64,
    per_epoch_means: Vec<f64>,
}

impl MetricAccumulator {
    pub fn new(kind: MetricKind) -> Self {
        Self::with_ssp_k(kind, DEFAULT_SSP_K)
    }

    pub fn with_ssp_k(kind: MetricKind, ssp_k: usize) -> Self {
        Self {
            kind,
            ssp_k,
            n_classes: None,
            total: KahanSum::new(),
            n_included: 0,
            n_skipped: 0,
            epoch_total: KahanSum::new(),
            epoch_included: 0,
            epoch_seen: 0,
            per_epoch_means: Vec::new(),
        }
    }

    pub fn kind(&self) -> MetricKind {
        self.kind
    }

    /// Feeds one batch. TAC requires `labels`; the other metrics ignore them.
    pub fn push_batch(&mut self, logits: &Matrix, labels: Option<&[usize]>) -> Result<()> {
        logits.check_logits()?;
        match self.n_classes {
            None => self.n_classes = Some(logits.cols()),
            Some(n) if n != logits.cols() => {
                return Err(Error::ShapeMismatch(format!(
                    "batch has {} classes, earlier batches had {n}",
                    logits.cols()
                )))
            }
            Some(_) => {}
        }
        let labels = match (self.kind, labels) {
            (MetricKind::Tac, None) => {
                return Err(Error::InvalidInput("TAC aggregation needs labels".into()))
            }
            (MetricKind::Tac, Some(l)) if l.len() != logits.rows() => {
                return Err(Error::InvalidInput(format!(
                    "{} labels for {} rows",
                    l.len(),
                    logits.rows()
                )))
            }
            (_, l) => l,
        };
        for (i, row) in logits.iter_rows().enumerate() {
            let value = match self.kind {
                MetricKind::Tac => {
                    let label = labels.map(|l| l[i]).unwrap_or_default();
                    Some(if argmax(row) == label { 1.0 } else { 0.0 })
                }
                MetricKind::Ssp => Some(ssp_sample(row, self.ssp_k)?),
                MetricKind::R12 => r12_sample(row)?,
            };
            self.epoch_seen += 1;
            match value {
                Some(v) => {
                    self.total.add(v);
                    self.epoch_total.add(v);
                    self.n_included += 1;
                    self.epoch_included += 1;
                }
                None => self.n_skipped += 1,
            }
        }
        Ok(())
    }

    /// Closes the current epoch and records its mean (if it saw any sample).
    pub fn end_epoch(&mut self) {
        if self.epoch_seen > 0 && self.epoch_included > 0 {
            self.per_epoch_means.push(self.epoch_total.total() / self.epoch_included as f64);
        }
        self.epoch_total = KahanSum::new();
        self.epoch_included = 0;
        self.epoch_seen = 0;
    }

    pub fn finish(mut self) -> Result<MetricSummary> {
        if self.epoch_seen > 0 {
            self.end_epoch();
        }
        if self.n_included == 0 {
            return Err(Error::DegenerateAggregate { kind: self.kind, skipped: self.n_skipped });
        }
        let summary = MetricSummary {
            kind: self.kind,
            mean: self.total.total() / self.n_included as f64,
            n_included: self.n_included,
            n_skipped: self.n_skipped,
            per_epoch_means: self.per_epoch_means,
        };
        if summary.skipped_fraction() > SKIP_WARN_FRACTION {
            log::warn!(
                "{}: skipped {} of {} samples with a non-positive second logit",
                summary.kind,
                summary.n_skipped,
                summary.n_seen()
            );
        }
        Ok(summary)
    }
}

/// One batch of teacher logits, with labels when the metric needs them.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub logits: &'a Matrix,
    pub labels: Option<&'a [usize]>,
}

impl<'a> Batch<'a> {
    pub fn new(logits: &'a Matrix, labels: Option<&'a [usize]>) -> Self {
        Self { logits, labels }
    }
}

/// Sample-weighted mean of a metric over every batch of every epoch.
///
/// `epochs` yields one batch list per epoch. In static mode pass a single
/// epoch.
pub fn aggregate<'a, E, B>(kind: MetricKind, ssp_k: usize, epochs: E) -> Result<MetricSummary>
where
    E: IntoIterator<Item = B>,
    B: IntoIterator<Item = Batch<'a>>,
{
    let mut acc = MetricAccumulator::with_ssp_k(kind, ssp_k);
    for epoch in epochs {
        for batch in epoch {
            acc.push_batch(batch.logits, batch.labels)?;
        }
        acc.end_epoch();
    }
    acc.finish()
}

/// Top-k raw logits of one sample, for listings in reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopK {
    pub values: Vec<f64>,
    pub indices: Vec<usize>,
}

pub fn summarize_topk(row: &[f64], k: usize) -> Result<TopK> {
    let (values, indices) = sort_desc_topk(row, k)?;
    Ok(TopK { values, indices })
}

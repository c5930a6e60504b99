//! generate -> train teacher pool -> teacher metrics -> distill students ->
//! correlate -> report.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kd::{self, make_overconfident, sharpen_logits, FixedLogits, Hyper, Mlp, Teacher, TrainOptions, TrainTrace};
use crate::logit_io;
use crate::metrics::{self, summarize_topk, Batch, EpochMode, MetricKind, MetricSummary, TopK};
use crate::numerics::{seq_mean, KahanSum, Matrix};
use crate::stats::{rank_teachers, CorrelationEntry, TeacherRanking, MIN_CORRELATION_POINTS};
use crate::synthgen::{self, Dataset, Prepared};

use super::config::{DatasetSource, ExperimentConfig, TeacherSource};

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Loads or generates the target data, split and standardized.
pub fn load_data(cfg: &ExperimentConfig) -> Result<Prepared> {
    match &cfg.dataset {
        DatasetSource::Synthetic(spec) => synthgen::generate_prepared(spec, cfg.test_fraction),
        DatasetSource::External { dir } => load_external_data(dir),
    }
}

pub fn load_external_data(dir: &Path) -> Result<Prepared> {
    let (train, _) = synthgen::load_dataset(dir, "train")?;
    let (test, _) = synthgen::load_dataset(dir, "test")?;
    if train.n_classes != test.n_classes || train.dim() != test.dim() {
        return Err(Error::ShapeMismatch("train and test splits disagree on shape".into()));
    }
    synthgen::prepare(train, test)
}

/// A resolved teacher with its logits on both splits.
pub struct PoolMember {
    pub id: String,
    pub description: String,
    pub teacher: Box<dyn Teacher>,
    pub train_logits: Matrix,
    pub test_logits: Matrix,
    /// Present for teachers trained here.
    pub model: Option<Mlp>,
}

enum BaseTeacher {
    Model(Mlp),
    Fixed(FixedLogits),
}

/// Builds a thread pool with exactly `jobs` workers.
pub fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Trains a teacher recipe with plain cross-entropy.
pub fn train_teacher(source: &TeacherSource, data: &Prepared) -> Result<(Mlp, TrainTrace)> {
    let TeacherSource::Train { hidden, activation, epochs, lr, batch_size, strategy, seed } = source else {
        return Err(Error::Config("not a trainable teacher".into()));
    };
    let mut sizes = vec![data.train.dim()];
    sizes.extend_from_slice(hidden);
    sizes.push(data.train.n_classes);
    let mut model = Mlp::new(&sizes, *activation, *seed)?;
    let hyper = Hyper { beta: 0.0, epochs: *epochs, lr: *lr, batch_size: *batch_size, seed: *seed, strategy: *strategy, ..Hyper::default() };
    let trace = kd::train(&mut model, &data.train, &data.test, &hyper, None)?;
    Ok((model, trace))
}

fn load_external_logits(path: &Path, split: &Dataset) -> Result<Matrix> {
    let (logits, _, labels) = logit_io::read_logits_with_labels(path)?;
    if logits.rows() != split.len() || logits.cols() != split.n_classes {
        return Err(Error::ShapeMismatch(format!(
            "{}: {}x{} logits for a {}-sample, {}-class split",
            path.display(),
            logits.rows(),
            logits.cols(),
            split.len(),
            split.n_classes
        )));
    }
    if labels != split.labels {
        return Err(Error::InvalidInput(format!("{}: labels are not aligned with the dataset rows", path.display())));
    }
    Ok(logits)
}

fn resolve_base(source: &TeacherSource, data: &Prepared) -> Result<Option<(BaseTeacher, String)>> {
    Ok(match source {
        TeacherSource::Train { hidden, strategy, epochs, .. } => {
            let (model, _) = train_teacher(source, data)?;
            Some((BaseTeacher::Model(model), format!("mlp{hidden:?} {} {epochs} epochs", strategy.label())))
        }
        TeacherSource::External { train_logits, test_logits } => {
            let train = load_external_logits(train_logits, &data.train)?;
            load_external_logits(test_logits, &data.test)?;
            Some((BaseTeacher::Fixed(FixedLogits::new(train)?), format!("external {}", train_logits.display())))
        }
        TeacherSource::Overconfident { .. } => None,
    })
}

/// Resolves every pool entry, training the trainable ones in parallel.
pub fn build_pool(cfg: &ExperimentConfig, data: &Prepared, pool: &rayon::ThreadPool) -> Result<Vec<PoolMember>> {
    let bases: Vec<Result<Option<(BaseTeacher, String)>>> = pool.install(|| {
        cfg.teachers
            .par_iter()
            .map(|entry| resolve_base(&entry.source, data).map_err(|e| e.in_cell(&entry.id, None)))
            .collect()
    });

    let mut members: BTreeMap<String, PoolMember> = BTreeMap::new();
    for (entry, base) in cfg.teachers.iter().zip(bases) {
        let Some((base, description)) = base? else { continue };
        let member = match base {
            BaseTeacher::Model(model) => PoolMember {
                id: entry.id.clone(),
                description,
                train_logits: model.forward(&data.train.features)?,
                test_logits: model.forward(&data.test.features)?,
                teacher: Box::new(model.clone()),
                model: Some(model),
            },
            BaseTeacher::Fixed(fixed) => {
                let TeacherSource::External { test_logits, .. } = &entry.source else { unreachable!() };
                PoolMember {
                    id: entry.id.clone(),
                    description,
                    train_logits: fixed.train_logits().clone(),
                    test_logits: load_external_logits(test_logits, &data.test)?,
                    teacher: Box::new(fixed),
                    model: None,
                }
            }
        };
        members.insert(entry.id.clone(), member);
    }

    for entry in &cfg.teachers {
        let TeacherSource::Overconfident { base, margin } = &entry.source else { continue };
        let b = members.get(base).ok_or_else(|| Error::Config(format!("unknown base `{base}`")))?;
        let teacher: Box<dyn Teacher> = match &b.model {
            Some(m) => Box::new(make_overconfident(m.clone(), *margin)?),
            None => Box::new(make_overconfident(FixedLogits::new(b.train_logits.clone())?, *margin)?),
        };
        let member = PoolMember {
            id: entry.id.clone(),
            description: format!("{base} + margin {margin}"),
            train_logits: sharpen_logits(&b.train_logits, *margin)?,
            test_logits: sharpen_logits(&b.test_logits, *margin)?,
            teacher,
            model: None,
        };
        members.insert(entry.id.clone(), member);
    }
    Ok(members.into_values().collect())
}

/// TAC on the test split; SSP and R12 over one pass of the training split
/// in `batch_size` chunks.
pub fn static_metrics(member: &PoolMember, data: &Prepared, ssp_k: usize, batch_size: usize) -> Result<[MetricSummary; 3]> {
    let tac = metrics::aggregate(MetricKind::Tac, ssp_k, [[Batch::new(&member.test_logits, Some(&data.test.labels))]])?;
    let chunks: Vec<Matrix> = (0..member.train_logits.rows())
        .step_by(batch_size.max(1))
        .map(|start| {
            let end = (start + batch_size).min(member.train_logits.rows());
            member.train_logits.select_rows(&(start..end).collect::<Vec<_>>())
        })
        .collect();
    let batches = || chunks.iter().map(|c| Batch::new(c, None));
    let ssp = metrics::aggregate(MetricKind::Ssp, ssp_k, [batches()])?;
    let r12 = metrics::aggregate(MetricKind::R12, ssp_k, [batches()])?;
    Ok([tac, ssp, r12])
}

/// Pools summaries of the same metric, weighting each by its sample count.
pub fn merge_summaries(parts: &[MetricSummary]) -> Result<MetricSummary> {
    let first = parts.first().ok_or(Error::EmptyInput("merge_summaries"))?;
    if parts.iter().any(|p| p.kind != first.kind) {
        return Err(Error::InvalidInput("cannot merge different metric kinds".into()));
    }
    let n_included: u64 = parts.iter().map(|p| p.n_included).sum();
    let n_skipped: u64 = parts.iter().map(|p| p.n_skipped).sum();
    if n_included == 0 {
        return Err(Error::DegenerateAggregate { kind: first.kind, skipped: n_skipped });
    }
    let total: KahanSum = parts.iter().map(|p| p.mean * p.n_included as f64).collect();
    Ok(MetricSummary {
        kind: first.kind,
        mean: total.total() / n_included as f64,
        n_included,
        n_skipped,
        per_epoch_means: parts.iter().flat_map(|p| p.per_epoch_means.iter().copied()).collect(),
    })
}

/// Trains one student. `teacher = None` gives the cross-entropy baseline.
pub fn distill_student(cfg: &ExperimentConfig, data: &Prepared, teacher: Option<&dyn Teacher>, seed: u64) -> Result<TrainTrace> {
    let sizes = cfg.student.layer_sizes(data.train.dim(), data.train.n_classes);
    let mut student = Mlp::new(&sizes, cfg.student.activation, seed)?;
    let mut hyper = Hyper { seed, ..cfg.hyper.clone() };
    if teacher.is_none() {
        hyper.beta = 0.0;
    }
    let opts = TrainOptions {
        record_teacher_metrics: teacher.is_some() && cfg.effective_mode() == EpochMode::Online,
        ssp_k: cfg.ssp_k,
    };
    kd::train_with(&mut student, &data.train, &data.test, &hyper, teacher, &opts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedAccuracy {
    pub seed: u64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopKListing {
    pub sample: usize,
    pub label: usize,
    #[serde(flatten)]
    pub top: TopK,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherRow {
    pub id: String,
    pub source: String,
    pub tac: MetricSummary,
    pub ssp: MetricSummary,
    pub r12: MetricSummary,
    pub students: Vec<SeedAccuracy>,
    pub mean_accuracy: f64,
    pub topk: Vec<TopKListing>,
}

impl TeacherRow {
    pub fn summary(&self, kind: MetricKind) -> &MetricSummary {
        match kind {
            MetricKind::Tac => &self.tac,
            MetricKind::Ssp => &self.ssp,
            MetricKind::R12 => &self.r12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub students: Vec<SeedAccuracy>,
    pub mean_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub kind: MetricKind,
    pub ranking: Option<TeacherRanking>,
    pub correlation: Option<CorrelationEntry>,
    /// Why `correlation` is absent, when it is.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    /// Mean student accuracy under the teacher this metric selects.
    pub selected_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub toolkit_version: String,
    pub generated_at_unix: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub dataset_id: String,
    pub student: String,
    pub strategy: String,
    pub metric_mode: EpochMode,
    pub beta: f64,
    pub tau: f64,
    pub seeds: Vec<u64>,
    pub teachers: Vec<TeacherRow>,
    pub baseline: Option<BaselineRow>,
    pub metrics: Vec<MetricResult>,
    pub provenance: Provenance,
}

impl ExperimentReport {
    pub fn teacher(&self, id: &str) -> Option<&TeacherRow> {
        self.teachers.iter().find(|t| t.id == id)
    }

    pub fn metric(&self, kind: MetricKind) -> Option<&MetricResult> {
        self.metrics.iter().find(|m| m.kind == kind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub jobs: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { jobs: 1 }
    }
}

/// Runs every stage for one config. Output is identical for any `jobs`.
pub fn run_pipeline(cfg: &ExperimentConfig, opts: RunOptions) -> Result<ExperimentReport> {
    cfg.validate()?;
    let pool = thread_pool(opts.jobs)?;
    let data = load_data(cfg)?;
    let members = build_pool(cfg, &data, &pool)?;
    let mode = cfg.effective_mode();

    let mut seeds = cfg.seeds.clone();
    seeds.sort_unstable();

    // (member index or None for the baseline, seed), canonical order
    let mut cells: Vec<(Option<usize>, u64)> = Vec::new();
    for i in 0..members.len() {
        cells.extend(seeds.iter().map(|&s| (Some(i), s)));
    }
    if cfg.baseline {
        cells.extend(seeds.iter().map(|&s| (None, s)));
    }
    let traces: Vec<Result<TrainTrace>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(m, seed)| {
                let teacher = m.map(|i| members[i].teacher.as_ref());
                distill_student(cfg, &data, teacher, seed).map_err(|e| {
                    let id = m.map_or("baseline", |i| members[i].id.as_str());
                    e.in_cell(id, Some(seed))
                })
            })
            .collect()
    });
    let traces = traces.into_iter().collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::with_capacity(members.len());
    for (i, member) in members.iter().enumerate() {
        let cell_traces: Vec<&TrainTrace> = cells.iter().zip(&traces).filter(|((m, _), _)| *m == Some(i)).map(|(_, t)| t).collect();
        let [tac, mut ssp, mut r12] = static_metrics(member, &data, cfg.ssp_k, cfg.hyper.batch_size).map_err(|e| e.in_cell(&member.id, None))?;
        if mode == EpochMode::Online {
            let online = |kind: MetricKind| {
                let parts: Vec<MetricSummary> =
                    cell_traces.iter().filter_map(|t| t.teacher_metrics.iter().find(|s| s.kind == kind).cloned()).collect();
                merge_summaries(&parts)
            };
            ssp = online(MetricKind::Ssp).map_err(|e| e.in_cell(&member.id, None))?;
            r12 = online(MetricKind::R12).map_err(|e| e.in_cell(&member.id, None))?;
        }
        let students: Vec<SeedAccuracy> = seeds.iter().zip(&cell_traces).map(|(&seed, t)| SeedAccuracy { seed, accuracy: t.test_accuracy }).collect();
        let mean_accuracy = seq_mean(students.iter().map(|s| s.accuracy))?;
        let topk = (0..cfg.topk_samples.min(data.train.len()))
            .map(|s| {
                let row = member.train_logits.row(s);
                Ok(TopKListing { sample: s, label: data.train.labels[s], top: summarize_topk(row, cfg.topk.min(row.len()))? })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(TeacherRow {
            id: member.id.clone(),
            source: member.description.clone(),
            tac,
            ssp,
            r12,
            students,
            mean_accuracy,
            topk,
        });
    }

    let baseline = if cfg.baseline {
        let students: Vec<SeedAccuracy> = cells
            .iter()
            .zip(&traces)
            .filter(|((m, _), _)| m.is_none())
            .map(|((_, seed), t)| SeedAccuracy { seed: *seed, accuracy: t.test_accuracy })
            .collect();
        let mean_accuracy = seq_mean(students.iter().map(|s| s.accuracy))?;
        Some(BaselineRow { students, mean_accuracy })
    } else {
        None
    };

    let metrics = MetricKind::ALL.iter().map(|&kind| metric_result(kind, &rows)).collect::<Result<Vec<_>>>()?;

    Ok(ExperimentReport {
        dataset_id: cfg.name.clone(),
        student: format!("mlp{:?} {:?}", cfg.student.hidden, cfg.student.activation).to_lowercase(),
        strategy: cfg.hyper.strategy.label().to_string(),
        metric_mode: mode,
        beta: cfg.hyper.beta,
        tau: cfg.hyper.tau,
        seeds,
        teachers: rows,
        baseline,
        metrics,
        provenance: Provenance {
            config_hash: cfg.hash(),
            toolkit_version: TOOLKIT_VERSION.to_string(),
            generated_at_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        },
    })
}

/// Ranking, correlation and selected-teacher accuracy for one metric.
pub fn metric_result(kind: MetricKind, rows: &[TeacherRow]) -> Result<MetricResult> {
    let summaries: BTreeMap<String, MetricSummary> = rows.iter().map(|r| (r.id.clone(), r.summary(kind).clone())).collect();
    let ranking = if rows.len() >= 2 { Some(rank_teachers(&summaries, kind)?) } else { None };
    let selected_accuracy = ranking.as_ref().and_then(|r| rows.iter().find(|t| t.id == r.selected)).map(|t| t.mean_accuracy);
    let (correlation, note) = if rows.len() < MIN_CORRELATION_POINTS {
        (None, Some(format!("{} teachers, need at least {MIN_CORRELATION_POINTS}", rows.len())))
    } else {
        let values: Vec<f64> = rows.iter().map(|r| r.summary(kind).mean).collect();
        let acc: Vec<f64> = rows.iter().map(|r| r.mean_accuracy).collect();
        match CorrelationEntry::compute(kind, &values, &acc) {
            Ok(c) => (Some(c), None),
            Err(Error::UndefinedCorrelation(why)) => (None, Some(format!("undefined: {why}"))),
            Err(e) => return Err(e),
        }
    };
    Ok(MetricResult { kind, ranking, correlation, note, selected_accuracy })
}

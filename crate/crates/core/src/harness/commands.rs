//! Command-line front end. `src/main.rs` only parses and dispatches here.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::{Error, ErrorClass, Result};
use crate::kd::{load_checkpoint, save_checkpoint, SeedRecord, Teacher};
use crate::logit_io::{self, Dtype, Manifest, Split};
use crate::metrics::{EpochMode, MetricKind, MetricSummary, DEFAULT_SSP_K};
use crate::numerics::Matrix;
use crate::stats::{rank_teachers, TeacherRanking};
use crate::synthgen::{self, DatasetSpec, Prepared};

use super::config::{DatasetSource, ExperimentConfig, TeacherSource};
use super::pipeline::{self, PoolMember, RunOptions};
use super::report::{self, Format};

#[derive(Debug, Parser)]
#[command(name = "kdlab", version, about = "Teacher-selection metrics for knowledge distillation")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Experiment config (JSON). Without it the built-in default is used.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the dataset seed (gen-data), the teacher seeds
    /// (train-teacher) or the student seed list (distill, pipeline).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    /// Comma-separated: json, csv, md.
    #[arg(long, global = true, value_delimiter = ',', default_value = "json")]
    pub format: Vec<Format>,
    /// Worker threads. Results do not depend on this.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Teacher-metric aggregation: static or online.
    #[arg(long, global = true)]
    pub mode: Option<EpochMode>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic dataset and write `data/{train,test}.*`.
    GenData,
    /// Build teachers and write checkpoints plus train/test logit files.
    TrainTeacher {
        /// Teacher ids to build; all when omitted.
        #[arg(long)]
        teacher: Vec<String>,
    },
    /// TAC, SSP and R12 of logit files.
    Metrics {
        #[arg(required = true)]
        logits: Vec<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_SSP_K)]
        ssp_k: usize,
        #[arg(long, default_value_t = 32)]
        batch_size: usize,
    },
    /// Rank teachers (one logit file each) by every metric.
    Rank {
        #[arg(required = true)]
        logits: Vec<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_SSP_K)]
        ssp_k: usize,
        #[arg(long, default_value_t = 32)]
        batch_size: usize,
    },
    /// Distill one student from one teacher, or train the CE baseline.
    Distill {
        /// Teacher id from the config; omit for the cross-entropy baseline.
        #[arg(long)]
        teacher: Option<String>,
        /// Teacher checkpoint to use instead of rebuilding the teacher.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Pool correlations of many reports into bucket and mean-|rho| tables.
    Correlate {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
    },
    /// Render a report JSON in the requested formats.
    Report { report: PathBuf },
    /// Run every stage for one config.
    Pipeline,
}

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e.class() {
        ErrorClass::Config => 2,
        ErrorClass::Numeric => 3,
        ErrorClass::Io => 4,
    }
}

fn load_config(g: &GlobalArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &g.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::desk_default(),
    };
    if let Some(mode) = g.mode {
        cfg.metric_mode = Some(mode);
    }
    Ok(cfg)
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut json = serde_json::to_vec_pretty(value)?;
    json.push(b'\n');
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::GenData => gen_data(g),
        Command::TrainTeacher { teacher } => train_teachers(g, teacher),
        Command::Metrics { logits, ssp_k, batch_size } => {
            let rows = file_metrics(logits, *ssp_k, *batch_size)?;
            write_json(&g.out_dir.join("metrics.json"), &rows)?;
            print_json(&rows)
        }
        Command::Rank { logits, ssp_k, batch_size } => {
            let rows = file_metrics(logits, *ssp_k, *batch_size)?;
            let rankings = rank_files(&rows)?;
            write_json(&g.out_dir.join("ranking.json"), &rankings)?;
            print_json(&rankings)
        }
        Command::Distill { teacher, checkpoint } => distill(g, teacher.as_deref(), checkpoint.as_deref()),
        Command::Correlate { reports } => {
            let reports = reports.iter().map(|p| report::read_report(p)).collect::<Result<Vec<_>>>()?;
            let tables = report::correlate_experiments(&reports)?;
            for &f in &g.format {
                println!("{}", report::emit_tables(&tables, f, &g.out_dir)?.display());
            }
            Ok(())
        }
        Command::Report { report: path } => {
            let r = report::read_report(path)?;
            for &f in &g.format {
                println!("{}", report::emit_report(&r, f, &g.out_dir)?.display());
            }
            Ok(())
        }
        Command::Pipeline => run_pipeline(g),
    }
}

fn gen_data(g: &GlobalArgs) -> Result<()> {
    let (mut spec, test_fraction) = match &g.config {
        Some(_) => {
            let cfg = load_config(g)?;
            match cfg.dataset {
                DatasetSource::Synthetic(spec) => (spec, cfg.test_fraction),
                DatasetSource::External { .. } => return Err(Error::Config("gen-data needs a synthetic dataset config".into())),
            }
        }
        None => (DatasetSpec::default(), synthgen::DEFAULT_TEST_FRACTION),
    };
    if let Some(seed) = g.seed {
        spec.seed = seed;
    }
    let data = synthgen::generate(&spec)?;
    let (train, test) = synthgen::split(&data, test_fraction, spec.seed)?;
    let dir = g.out_dir.join("data");
    synthgen::save_dataset(&dir, "train", &train, Some(&spec))?;
    synthgen::save_dataset(&dir, "test", &test, Some(&spec))?;
    println!("{}", dir.display());
    Ok(())
}

/// The config restricted to `ids` plus the bases they derive from.
fn restrict_teachers(cfg: &mut ExperimentConfig, ids: &[String]) -> Result<()> {
    if ids.is_empty() {
        return Ok(());
    }
    let mut keep: Vec<String> = ids.to_vec();
    for id in ids {
        let entry = cfg.teachers.iter().find(|t| &t.id == id).ok_or_else(|| Error::Config(format!("unknown teacher `{id}`")))?;
        if let TeacherSource::Overconfident { base, .. } = &entry.source {
            keep.push(base.clone());
        }
    }
    cfg.teachers.retain(|t| keep.contains(&t.id));
    Ok(())
}

fn override_teacher_seeds(cfg: &mut ExperimentConfig, seed: Option<u64>) {
    let Some(s) = seed else { return };
    for t in &mut cfg.teachers {
        if let TeacherSource::Train { seed, .. } = &mut t.source {
            *seed = s;
        }
    }
}

fn build(cfg: &ExperimentConfig, jobs: usize) -> Result<(Prepared, Vec<PoolMember>)> {
    cfg.validate()?;
    let data = pipeline::load_data(cfg)?;
    let pool = pipeline::thread_pool(jobs)?;
    let members = pipeline::build_pool(cfg, &data, &pool)?;
    Ok((data, members))
}

fn train_teachers(g: &GlobalArgs, ids: &[String]) -> Result<()> {
    let mut cfg = load_config(g)?;
    restrict_teachers(&mut cfg, ids)?;
    override_teacher_seeds(&mut cfg, g.seed);
    let (data, members) = build(&cfg, g.jobs)?;
    let logit_dir = g.out_dir.join("logits");
    fs::create_dir_all(&logit_dir).map_err(|e| Error::io(&logit_dir, e))?;
    logit_io::write_labels(&logit_dir.join("train.labels"), &data.train.labels)?;
    logit_io::write_labels(&logit_dir.join("test.labels"), &data.test.labels)?;
    for m in &members {
        if !ids.is_empty() && !ids.contains(&m.id) {
            continue;
        }
        for (split, logits, labels) in [(Split::Train, &m.train_logits, "train.labels"), (Split::Test, &m.test_logits, "test.labels")] {
            let path = logit_dir.join(format!("{}.{}.lgts", m.id, split));
            let manifest = Manifest::new(&m.id, &cfg.name, split, labels);
            logit_io::write_logits(&path, logits, &manifest, Dtype::F64)?;
            println!("{}", path.display());
        }
        if let Some(model) = &m.model {
            let seed = cfg
                .teachers
                .iter()
                .find_map(|t| match (&t.source, t.id == m.id) {
                    (TeacherSource::Train { seed, .. }, true) => Some(*seed),
                    _ => None,
                })
                .unwrap_or_default();
            let lineage = [SeedRecord { role: "dataset".into(), seed: dataset_seed(&cfg) }, SeedRecord { role: "teacher".into(), seed }];
            let path = g.out_dir.join("teachers").join(format!("{}.kdck", m.id));
            save_checkpoint(&path, model, &lineage)?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn dataset_seed(cfg: &ExperimentConfig) -> u64 {
    match &cfg.dataset {
        DatasetSource::Synthetic(spec) => spec.seed,
        DatasetSource::External { .. } => 0,
    }
}

/// Metrics of one logit file.
#[derive(Debug, Clone, Serialize)]
pub struct FileMetrics {
    pub path: PathBuf,
    pub teacher_id: String,
    pub split: Split,
    pub tac: MetricSummary,
    pub ssp: MetricSummary,
    pub r12: MetricSummary,
}

pub fn file_metrics(paths: &[PathBuf], ssp_k: usize, batch_size: usize) -> Result<Vec<FileMetrics>> {
    paths
        .iter()
        .map(|path| {
            let (logits, manifest, labels) = logit_io::read_logits_with_labels(path)?;
            let [tac, ssp, r12] = logits_metrics(&logits, &labels, ssp_k, batch_size)?;
            Ok(FileMetrics { path: path.clone(), teacher_id: manifest.teacher_id, split: manifest.split, tac, ssp, r12 })
        })
        .collect()
}

/// TAC, SSP and R12 over one pass of `logits` in `batch_size` chunks.
pub fn logits_metrics(logits: &Matrix, labels: &[usize], ssp_k: usize, batch_size: usize) -> Result<[MetricSummary; 3]> {
    let chunks: Vec<(Matrix, &[usize])> = (0..logits.rows())
        .step_by(batch_size.max(1))
        .map(|start| {
            let end = (start + batch_size.max(1)).min(logits.rows());
            (logits.select_rows(&(start..end).collect::<Vec<_>>()), &labels[start..end])
        })
        .collect();
    let run = |kind| {
        crate::metrics::aggregate(kind, ssp_k, [chunks.iter().map(|(m, l)| crate::metrics::Batch::new(m, Some(l)))])
    };
    Ok([run(MetricKind::Tac)?, run(MetricKind::Ssp)?, run(MetricKind::R12)?])
}

fn rank_files(rows: &[FileMetrics]) -> Result<Vec<TeacherRanking>> {
    MetricKind::ALL
        .iter()
        .map(|&kind| {
            let mut summaries = BTreeMap::new();
            for r in rows {
                let s = match kind {
                    MetricKind::Tac => &r.tac,
                    MetricKind::Ssp => &r.ssp,
                    MetricKind::R12 => &r.r12,
                };
                if summaries.insert(r.teacher_id.clone(), s.clone()).is_some() {
                    return Err(Error::InvalidInput(format!("teacher `{}` given twice", r.teacher_id)));
                }
            }
            rank_teachers(&summaries, kind)
        })
        .collect()
}

fn distill(g: &GlobalArgs, teacher_id: Option<&str>, checkpoint: Option<&Path>) -> Result<()> {
    let mut cfg = load_config(g)?;
    let seed = g.seed.or_else(|| cfg.seeds.first().copied()).ok_or_else(|| Error::Config("no seed".into()))?;
    cfg.seeds = vec![seed];
    let (data, teacher): (Prepared, Option<Box<dyn Teacher>>) = match (teacher_id, checkpoint) {
        (_, Some(path)) => {
            cfg.validate()?;
            let (model, _) = load_checkpoint(path)?;
            (pipeline::load_data(&cfg)?, Some(Box::new(model)))
        }
        (Some(id), None) => {
            restrict_teachers(&mut cfg, &[id.to_string()])?;
            let (data, members) = build(&cfg, g.jobs)?;
            let member = members.into_iter().find(|m| m.id == id).ok_or_else(|| Error::Config(format!("unknown teacher `{id}`")))?;
            (data, Some(member.teacher))
        }
        (None, None) => {
            cfg.validate()?;
            (pipeline::load_data(&cfg)?, None)
        }
    };
    let trace = pipeline::distill_student(&cfg, &data, teacher.as_deref(), seed)?;
    let name = format!("{}-s{seed}", teacher_id.unwrap_or(if checkpoint.is_some() { "checkpoint" } else { "baseline" }));
    write_json(&g.out_dir.join("students").join(format!("{name}.json")), &trace)?;
    print_json(&trace)?;
    Ok(())
}

fn run_pipeline(g: &GlobalArgs) -> Result<()> {
    let mut cfg = load_config(g)?;
    if let Some(seed) = g.seed {
        cfg.seeds = vec![seed];
    }
    let report = pipeline::run_pipeline(&cfg, RunOptions { jobs: g.jobs })?;
    let mut formats = g.format.clone();
    if !formats.contains(&Format::Json) {
        formats.insert(0, Format::Json);
    }
    for f in formats {
        println!("{}", report::emit_report(&report, f, &g.out_dir)?.display());
    }
    Ok(())
}

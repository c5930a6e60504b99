//! Rendering reports as JSON, CSV and Markdown, and pooling correlations
//! across many reports into bucket-share and mean-|rho| tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::MetricKind;
use crate::numerics::seq_mean;
use crate::stats::{Bucket, CorrelationEntry};

use super::pipeline::ExperimentReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
    Markdown,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            "md" | "markdown" => Ok(Format::Markdown),
            other => Err(Error::InvalidArgument(format!("unknown format `{other}`"))),
        }
    }
}

fn write(dir: &Path, name: &str, contents: &[u8]) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

pub fn report_json(report: &ExperimentReport) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

pub fn read_report(path: &Path) -> Result<ExperimentReport> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

/// One line of the per-teacher CSV table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherCsvRow {
    pub teacher: String,
    pub tac: f64,
    pub tac_n: u64,
    pub ssp: f64,
    pub ssp_n: u64,
    pub r12: f64,
    pub r12_n: u64,
    pub r12_skipped: u64,
    pub mean_accuracy: f64,
    /// `seed:accuracy` pairs separated by `;`.
    pub accuracies: String,
}

fn encode_accuracies(pairs: impl Iterator<Item = (u64, f64)>) -> String {
    pairs.map(|(s, a)| format!("{s}:{a}")).collect::<Vec<_>>().join(";")
}

pub fn decode_accuracies(field: &str) -> Result<Vec<(u64, f64)>> {
    if field.is_empty() {
        return Ok(Vec::new());
    }
    field
        .split(';')
        .map(|pair| {
            let (s, a) = pair.split_once(':').ok_or_else(|| Error::Malformed(format!("bad accuracy cell `{pair}`")))?;
            let seed = s.parse().map_err(|_| Error::Malformed(format!("bad seed `{s}`")))?;
            let acc = a.parse().map_err(|_| Error::Malformed(format!("bad accuracy `{a}`")))?;
            Ok((seed, acc))
        })
        .collect()
}

pub fn teacher_csv_rows(report: &ExperimentReport) -> Vec<TeacherCsvRow> {
    let mut rows: Vec<TeacherCsvRow> = report
        .teachers
        .iter()
        .map(|t| TeacherCsvRow {
            teacher: t.id.clone(),
            tac: t.tac.mean,
            tac_n: t.tac.n_included,
            ssp: t.ssp.mean,
            ssp_n: t.ssp.n_included,
            r12: t.r12.mean,
            r12_n: t.r12.n_included,
            r12_skipped: t.r12.n_skipped,
            mean_accuracy: t.mean_accuracy,
            accuracies: encode_accuracies(t.students.iter().map(|s| (s.seed, s.accuracy))),
        })
        .collect();
    if let Some(b) = &report.baseline {
        rows.push(TeacherCsvRow {
            teacher: "(ce-baseline)".into(),
            tac: f64::NAN,
            tac_n: 0,
            ssp: f64::NAN,
            ssp_n: 0,
            r12: f64::NAN,
            r12_n: 0,
            r12_skipped: 0,
            mean_accuracy: b.mean_accuracy,
            accuracies: encode_accuracies(b.students.iter().map(|s| (s.seed, s.accuracy))),
        });
    }
    rows
}

/// Per-teacher table. Floats use the shortest text that parses back to
/// the same bits.
pub fn report_csv(report: &ExperimentReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in teacher_csv_rows(report) {
        w.serialize(row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Malformed(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Malformed(e.to_string()))
}

pub fn parse_report_csv(text: &str) -> Result<Vec<TeacherCsvRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

pub fn report_markdown(report: &ExperimentReport) -> String {
    let mut md = String::new();
    let _ = writeln!(md, "# Teacher selection report: {}\n", report.dataset_id);
    let _ = writeln!(md, "- student: {}", report.student);
    let _ = writeln!(md, "- strategy: {}", report.strategy);
    let _ = writeln!(md, "- metric mode: {:?}", report.metric_mode);
    let _ = writeln!(md, "- beta: {}, tau: {}", report.beta, report.tau);
    let _ = writeln!(md, "- seeds: {:?}", report.seeds);
    let _ = writeln!(md, "- config hash: `{}`", report.provenance.config_hash);
    let _ = writeln!(md, "- toolkit version: {}", report.provenance.toolkit_version);
    let _ = writeln!(md, "- generated_at_unix: {}\n", report.provenance.generated_at_unix);

    let _ = writeln!(md, "## Teachers\n");
    let _ = writeln!(md, "| teacher | source | TAC | SSP | R12 | R12 skipped | student acc (mean) |");
    let _ = writeln!(md, "|---|---|---:|---:|---:|---:|---:|");
    for t in &report.teachers {
        let _ = writeln!(
            md,
            "| {} | {} | {:.4} | {:.5} | {:.4} | {} | {:.4} |",
            t.id, t.source, t.tac.mean, t.ssp.mean, t.r12.mean, t.r12.n_skipped, t.mean_accuracy
        );
    }
    if let Some(b) = &report.baseline {
        let _ = writeln!(md, "| CE baseline | no teacher | - | - | - | - | {:.4} |", b.mean_accuracy);
    }

    let _ = writeln!(md, "\n## Metric-selected teachers\n");
    let _ = writeln!(md, "| metric | selected | student acc | spearman rho | strength | order (best first) |");
    let _ = writeln!(md, "|---|---|---:|---:|---|---|");
    for m in &report.metrics {
        let selected = m.ranking.as_ref().map_or("-", |r| r.selected.as_str());
        let order = m.ranking.as_ref().map_or_else(|| "-".to_string(), |r| r.order.join(" > "));
        let (rho, bucket) = match &m.correlation {
            Some(c) => (format!("{:+.4}", c.rho), c.bucket.to_string()),
            None => ("-".to_string(), m.note.clone().unwrap_or_else(|| "-".into())),
        };
        let _ = writeln!(md, "| {} | {} | {} | {} | {} | {} |", m.kind, selected, fmt_opt(m.selected_accuracy), rho, bucket, order);
    }

    let _ = writeln!(md, "\n## Top-k raw teacher logits\n");
    for t in &report.teachers {
        let _ = writeln!(md, "### {}\n", t.id);
        for l in &t.topk {
            let listing: Vec<String> = l.top.values.iter().zip(&l.top.indices).map(|(v, i)| format!("{i}: {v:.3}")).collect();
            let _ = writeln!(md, "- sample {} (label {}): {}", l.sample, l.label, listing.join(", "));
        }
        let _ = writeln!(md);
    }
    md
}

/// Writes the report in `format` into `out_dir` and returns the file path.
pub fn emit_report(report: &ExperimentReport, format: Format, out_dir: &Path) -> Result<PathBuf> {
    match format {
        Format::Json => write(out_dir, "report.json", report_json(report)?.as_bytes()),
        Format::Csv => write(out_dir, "report.csv", report_csv(report)?.as_bytes()),
        Format::Markdown => write(out_dir, "report.md", report_markdown(report).as_bytes()),
    }
}

/// Share of correlation entries per strength bucket, for one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupingRow {
    pub kind: MetricKind,
    pub n: usize,
    pub weak_pct: f64,
    pub modest_pct: f64,
    pub strong_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetAverageRow {
    pub dataset: String,
    /// Mean |rho| per metric; absent when the dataset has no entry for it.
    pub mean_abs_rho: BTreeMap<MetricKind, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationTables {
    pub groupings: Vec<GroupingRow>,
    pub datasets: Vec<DatasetAverageRow>,
    /// Mean over datasets of the per-dataset mean |rho|.
    pub overall: BTreeMap<MetricKind, f64>,
}

/// Pools `(dataset id, correlation)` pairs into bucket shares per metric and
/// mean |rho| per dataset and overall.
pub fn correlation_tables(entries: &[(String, CorrelationEntry)]) -> Result<CorrelationTables> {
    if entries.is_empty() {
        return Err(Error::EmptyInput("no correlation entries"));
    }
    let mut groupings = Vec::new();
    for kind in MetricKind::ALL {
        let of_kind: Vec<&CorrelationEntry> = entries.iter().map(|(_, e)| e).filter(|e| e.kind == kind).collect();
        if of_kind.is_empty() {
            continue;
        }
        let pct = |b: Bucket| 100.0 * of_kind.iter().filter(|e| e.bucket == b).count() as f64 / of_kind.len() as f64;
        groupings.push(GroupingRow {
            kind,
            n: of_kind.len(),
            weak_pct: pct(Bucket::Weak),
            modest_pct: pct(Bucket::Modest),
            strong_pct: pct(Bucket::Strong),
        });
    }

    let mut by_dataset: BTreeMap<&str, BTreeMap<MetricKind, Vec<f64>>> = BTreeMap::new();
    for (ds, e) in entries {
        by_dataset.entry(ds.as_str()).or_default().entry(e.kind).or_default().push(e.abs_rho);
    }
    let mut datasets = Vec::new();
    for (ds, per_kind) in &by_dataset {
        let mut mean_abs_rho = BTreeMap::new();
        for (kind, values) in per_kind {
            mean_abs_rho.insert(*kind, seq_mean(values.iter().copied())?);
        }
        datasets.push(DatasetAverageRow { dataset: ds.to_string(), mean_abs_rho });
    }
    let mut overall = BTreeMap::new();
    for kind in MetricKind::ALL {
        let values: Vec<f64> = datasets.iter().filter_map(|d| d.mean_abs_rho.get(&kind).copied()).collect();
        if !values.is_empty() {
            overall.insert(kind, seq_mean(values)?);
        }
    }
    Ok(CorrelationTables { groupings, datasets, overall })
}

/// Bucket shares and mean |rho| over the correlations of many reports,
/// grouped by dataset id.
pub fn correlate_experiments(reports: &[ExperimentReport]) -> Result<CorrelationTables> {
    if reports.is_empty() {
        return Err(Error::EmptyInput("no reports"));
    }
    let entries: Vec<(String, CorrelationEntry)> = reports
        .iter()
        .flat_map(|r| r.metrics.iter().filter_map(|m| m.correlation.clone()).map(|c| (r.dataset_id.clone(), c)))
        .collect();
    correlation_tables(&entries)
}

pub fn tables_markdown(t: &CorrelationTables) -> String {
    let mut md = String::new();
    let _ = writeln!(md, "## Correlation groupings (%)\n");
    let _ = writeln!(md, "| metric | n | weak (<= 0.50) | modest (<= 0.70) | strong |");
    let _ = writeln!(md, "|---|---:|---:|---:|---:|");
    for g in &t.groupings {
        let _ = writeln!(md, "| {} | {} | {:.1} | {:.1} | {:.1} |", g.kind, g.n, g.weak_pct, g.modest_pct, g.strong_pct);
    }
    let _ = writeln!(md, "\n## Mean |rho| by dataset\n");
    let _ = writeln!(md, "| dataset | TAC | SSP | R12 |");
    let _ = writeln!(md, "|---|---:|---:|---:|");
    let cell = |m: &BTreeMap<MetricKind, f64>, k| m.get(&k).map_or_else(|| "-".to_string(), |v| format!("{v:.3}"));
    for d in &t.datasets {
        let _ = writeln!(
            md,
            "| {} | {} | {} | {} |",
            d.dataset,
            cell(&d.mean_abs_rho, MetricKind::Tac),
            cell(&d.mean_abs_rho, MetricKind::Ssp),
            cell(&d.mean_abs_rho, MetricKind::R12)
        );
    }
    let _ = writeln!(
        md,
        "| Average | {} | {} | {} |",
        cell(&t.overall, MetricKind::Tac),
        cell(&t.overall, MetricKind::Ssp),
        cell(&t.overall, MetricKind::R12)
    );
    md
}

pub fn tables_csv(t: &CorrelationTables) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["table", "key", "metric", "value"])?;
    for g in &t.groupings {
        for (b, v) in [("weak", g.weak_pct), ("modest", g.modest_pct), ("strong", g.strong_pct)] {
            w.write_record(["grouping", b, g.kind.label(), &v.to_string()])?;
        }
    }
    for d in &t.datasets {
        for (k, v) in &d.mean_abs_rho {
            w.write_record(["mean_abs_rho", &d.dataset, k.label(), &v.to_string()])?;
        }
    }
    for (k, v) in &t.overall {
        w.write_record(["mean_abs_rho", "Average", k.label(), &v.to_string()])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Malformed(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Malformed(e.to_string()))
}

pub fn emit_tables(t: &CorrelationTables, format: Format, out_dir: &Path) -> Result<PathBuf> {
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(t)?;
            s.push('\n');
            write(out_dir, "correlation.json", s.as_bytes())
        }
        Format::Csv => write(out_dir, "correlation.csv", tables_csv(t)?.as_bytes()),
        Format::Markdown => write(out_dir, "correlation.md", tables_markdown(t).as_bytes()),
    }
}

//! Run the whole experiment for a config file and write the report in
//! every format.
//!
//! cargo run --release --example pipeline -- [config.json] [out-dir]

use std::path::PathBuf;

use kdlab::harness::{emit_report, run_pipeline, ExperimentConfig, Format, RunOptions};

fn main() -> kdlab::Result<()> {
    let mut args = std::env::args().skip(1);
    let config = args.next().map(PathBuf::from).unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/small.json"));
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("kdlab-pipeline-example"));

    let cfg = ExperimentConfig::load(&config)?;
    let report = run_pipeline(&cfg, RunOptions { jobs: 2 })?;
    for m in &report.metrics {
        let selected = m.ranking.as_ref().map_or("-", |r| r.selected.as_str());
        let rho = m.correlation.as_ref().map_or("n/a".to_string(), |c| format!("{:+.3} ({})", c.rho, c.bucket));
        println!("{}: selects {selected}, rho {rho}", m.kind);
    }
    for f in [Format::Json, Format::Csv, Format::Markdown] {
        println!("wrote {}", emit_report(&report, f, &out)?.display());
    }
    Ok(())
}

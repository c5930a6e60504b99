//! Pool correlations from several experiments (two synthetic datasets)
//! into bucket shares and mean |rho| per dataset.
//!
//! cargo run --release --example correlate_reports

use kdlab::harness::report::{correlate_experiments, tables_markdown};
use kdlab::harness::{run_pipeline, DatasetSource, ExperimentConfig, RunOptions};

fn main() -> kdlab::Result<()> {
    let base = ExperimentConfig::load(&std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/small.json"))?;
    let mut reports = Vec::new();
    for (name, seed, fine_offset) in [("easy", 11, 2.5), ("hard", 12, 0.8)] {
        let mut cfg = base.clone();
        cfg.name = name.into();
        if let DatasetSource::Synthetic(spec) = &mut cfg.dataset {
            spec.seed = seed;
            spec.fine_offset = fine_offset;
        }
        reports.push(run_pipeline(&cfg, RunOptions::default())?);
    }
    print!("{}", tables_markdown(&correlate_experiments(&reports)?));
    Ok(())
}

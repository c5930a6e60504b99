//! Spearman correlation between a teacher metric and student accuracy,
//! its strength bucket, and pooled bucket/mean-|rho| tables.
//!
//! cargo run --example spearman_buckets

use kdlab::harness::report::{correlation_tables, tables_markdown};
use kdlab::metrics::MetricKind;
use kdlab::stats::{classify_correlation, rank_with_ties, spearman, CorrelationEntry};

fn main() -> kdlab::Result<()> {
    let r12 = [1.26, 1.51, 1.89, 1.12, 1.31];
    let accuracy = [0.574, 0.573, 0.571, 0.562, 0.575];
    println!("ranks of R12 {:?}", rank_with_ties(&r12)?);
    let rho = spearman(&r12, &accuracy)?;
    println!("rho = {rho:+.4} -> {}", classify_correlation(rho));

    for rho in [0.377, 0.629, 0.717, -0.8] {
        println!("|{rho}| is {}", classify_correlation(rho));
    }

    let entries: Vec<(String, CorrelationEntry)> = [
        ("birds", MetricKind::R12, 0.717),
        ("birds", MetricKind::Tac, -0.2),
        ("cars", MetricKind::R12, -0.541),
        ("cars", MetricKind::Tac, 0.65),
    ]
    .into_iter()
    .map(|(d, k, r)| (d.to_string(), CorrelationEntry::from_rho(k, r, 8)))
    .collect();
    print!("{}", tables_markdown(&correlation_tables(&entries)?));
    Ok(())
}

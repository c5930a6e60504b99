//! TAC, SSP and R12 for a small batch of teacher logits, per sample and
//! aggregated over batches and epochs.
//!
//! cargo run --example teacher_metrics

use kdlab::metrics::{self, aggregate, Batch, MetricAccumulator, MetricKind, DEFAULT_SSP_K};
use kdlab::Matrix;

fn main() -> kdlab::Result<()> {
    let logits = Matrix::from_rows(&[
        vec![6.0, 2.0, 1.5, 1.0, -1.0],
        vec![0.3, 0.2, 0.1, 0.0, -0.1],
        vec![-1.0, 3.0, 2.9, 0.5, 0.0],
        vec![-2.0, -0.5, -1.0, -3.0, -4.0],
    ])?;
    let labels = [0, 3, 1, 1];

    for (i, row) in logits.iter_rows().enumerate() {
        let r12 = metrics::r12_sample(row)?.map_or("skipped (P2 <= 0)".to_string(), |r| format!("{r:.4}"));
        println!("sample {i}: SSP {:.5}  R12 {r12}", metrics::ssp_sample(row, DEFAULT_SSP_K)?);
    }
    println!("TAC {:.3}", metrics::tac(&metrics::predicted_labels(&logits), &labels)?);

    // two batches, same epoch: identical to a single pass
    let first = logits.select_rows(&[0, 1]);
    let second = logits.select_rows(&[2, 3]);
    for kind in MetricKind::ALL {
        let s = aggregate(kind, DEFAULT_SSP_K, [[Batch::new(&first, Some(&labels[..2])), Batch::new(&second, Some(&labels[2..]))]])?;
        println!("{kind}: mean {:.5} over {} samples ({} skipped)", s.mean, s.n_included, s.n_skipped);
    }

    // online accumulation keeps a per-epoch trail; R12 moves under a shift
    let mut acc = MetricAccumulator::new(MetricKind::R12);
    for epoch in 0..3 {
        let drift = logits.map(|x| x + 0.5 * epoch as f64)?;
        acc.push_batch(&drift, None)?;
        acc.end_epoch();
    }
    let s = acc.finish()?;
    println!("online R12 per epoch {:?}, overall {:.4}", s.per_epoch_means, s.mean);
    Ok(())
}

//! Stable softmax and a top-k listing of one row of raw logits.
//!
//! cargo run --example softmax_topk

use kdlab::metrics::{summarize_topk, SortedLogits, SortedProbs};
use kdlab::numerics::stable_softmax;

fn main() -> kdlab::Result<()> {
    let logits = [2.0, 1.0, 0.0, 4.5, -3.0, 4.5];
    let probs = stable_softmax(&logits)?;
    println!("logits  {logits:?}");
    println!("softmax {:?}", probs.iter().map(|p| format!("{p:.5}")).collect::<Vec<_>>());

    // large offsets do not overflow
    println!("softmax [1000, 1000, 1000] = {:?}", stable_softmax(&[1000.0; 3])?);

    let top = summarize_topk(&logits, 3)?;
    for (rank, (v, i)) in top.values.iter().zip(&top.indices).enumerate() {
        println!("top-{} class {i}: {v}", rank + 1);
    }
    println!("sorted probabilities Q = {:?}", SortedProbs::from_logits(&logits)?.values());
    let p = SortedLogits::from_logits(&logits)?;
    println!("P1 = {}, P2 = {}", p.top1(), p.top2());
    Ok(())
}

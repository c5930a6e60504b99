//! Raising a teacher's top logit leaves its accuracy unchanged but moves
//! SSP and R12, and changes what a student learns from it.
//!
//! cargo run --release --example overconfident_probe

use kdlab::kd::{self, make_overconfident, sharpen_logits, Activation, Hyper, Mlp, Teacher};
use kdlab::metrics::{aggregate, Batch, MetricKind};
use kdlab::synthgen::{self, DatasetSpec};

fn main() -> kdlab::Result<()> {
    let data = synthgen::generate_prepared(&DatasetSpec::default(), synthgen::DEFAULT_TEST_FRACTION)?;
    let (dim, classes) = (data.train.dim(), data.train.n_classes);
    let mut base = Mlp::new(&[dim, 128, classes], Activation::Relu, 1)?;
    kd::train(&mut base, &data.train, &data.test, &Hyper { beta: 0.0, lr: 0.05, ..Hyper::default() }, None)?;
    let train_logits = base.forward(&data.train.features)?;
    let test_logits = base.forward(&data.test.features)?;

    println!("{:>6} {:>7} {:>8} {:>7} {:>9}", "margin", "TAC", "SSP", "R12", "student");
    for margin in [0.0, 1.0, 2.0, 5.0] {
        let test = sharpen_logits(&test_logits, margin)?;
        let train = sharpen_logits(&train_logits, margin)?;
        let tac = aggregate(MetricKind::Tac, 3, [[Batch::new(&test, Some(&data.test.labels))]])?;
        let ssp = aggregate(MetricKind::Ssp, 3, [[Batch::new(&train, None)]])?;
        let r12 = aggregate(MetricKind::R12, 3, [[Batch::new(&train, None)]])?;

        let teacher: Box<dyn Teacher> = if margin > 0.0 { Box::new(make_overconfident(base.clone(), margin)?) } else { Box::new(base.clone()) };
        let mut student = Mlp::new(&[dim, 8, classes], Activation::Relu, 1)?;
        let trace = kd::train(&mut student, &data.train, &data.test, &Hyper::default(), Some(teacher.as_ref()))?;
        println!("{margin:>6} {:>7.4} {:>8.5} {:>7.3} {:>9.4}", tac.mean, ssp.mean, r12.mean, trace.test_accuracy);
    }
    Ok(())
}

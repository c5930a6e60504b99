//! Train a teacher, then distill a width-8 student with each strategy and
//! compare against cross-entropy training. Saves the teacher checkpoint.
//!
//! cargo run --release --example distill_student

use kdlab::kd::{self, load_checkpoint, save_checkpoint, Activation, Hyper, Mlp, SeedRecord, Strategy, TrainOptions};
use kdlab::synthgen::{self, DatasetSpec};

fn main() -> kdlab::Result<()> {
    let data = synthgen::generate_prepared(&DatasetSpec::default(), synthgen::DEFAULT_TEST_FRACTION)?;
    let (dim, classes) = (data.train.dim(), data.train.n_classes);

    let mut teacher = Mlp::new(&[dim, 64, classes], Activation::Relu, 1)?;
    let t_hyper = Hyper { beta: 0.0, lr: 0.05, ..Hyper::default() };
    let trace = kd::train(&mut teacher, &data.train, &data.test, &t_hyper, None)?;
    println!("teacher test accuracy {:.4}", trace.test_accuracy);

    let path = std::env::temp_dir().join("kdlab-teacher.kdck");
    save_checkpoint(&path, &teacher, &[SeedRecord { role: "teacher".into(), seed: 1 }])?;
    let (teacher, header) = load_checkpoint(&path)?;
    println!("checkpoint {} with {} parameters", path.display(), header.param_count);

    let seeds = [1, 2, 3];
    let mean_acc = |beta: f64, strategy: Strategy| -> kdlab::Result<f64> {
        let mut total = 0.0;
        for &seed in &seeds {
            let mut student = Mlp::new(&[dim, 8, classes], Activation::Relu, seed)?;
            let hyper = Hyper { beta, strategy, seed, ..Hyper::default() };
            let t = (beta > 0.0).then_some(&teacher as &dyn kd::Teacher);
            total += kd::train_with(&mut student, &data.train, &data.test, &hyper, t, &TrainOptions::default())?.test_accuracy;
        }
        Ok(total / seeds.len() as f64)
    };
    println!("CE only            {:.4}", mean_acc(0.0, Strategy::Ft)?);
    for strategy in [Strategy::Fz, Strategy::Ft, Strategy::AugKd] {
        println!("{:<18} {:.4}", strategy.label(), mean_acc(1.0, strategy)?);
    }
    Ok(())
}

//! Fine-grained synthetic data: generation, stratified split, save/load,
//! and how the subclass offset controls difficulty.
//!
//! cargo run --example synthetic_dataset

use kdlab::synthgen::{self, DatasetSpec};

fn nearest_mean_accuracy(spec: &DatasetSpec) -> kdlab::Result<f64> {
    let g = synthgen::generate_with_means(spec)?;
    let d = &g.dataset;
    let dist = |x: &[f64], c: usize| x.iter().zip(g.class_means.row(c)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    let correct = (0..d.len())
        .filter(|&i| (0..d.n_classes).min_by(|&a, &b| dist(d.features.row(i), a).total_cmp(&dist(d.features.row(i), b))) == Some(d.labels[i]))
        .count();
    Ok(correct as f64 / d.len() as f64)
}

fn main() -> kdlab::Result<()> {
    let spec = DatasetSpec::default();
    let data = synthgen::generate(&spec)?;
    println!("{} samples, {} classes, dim {}", data.len(), data.n_classes, data.dim());
    println!("class 5 is subclass {} of superclass {}", data.classes[5].subclass, data.classes[5].superclass);

    let (train, test) = synthgen::split(&data, synthgen::DEFAULT_TEST_FRACTION, spec.seed)?;
    println!("train {} / test {} (per class {:?} / {:?})", train.len(), test.len(), &train.class_counts()[..3], &test.class_counts()[..3]);

    let dir = std::env::temp_dir().join("kdlab-synthetic-example");
    synthgen::save_dataset(&dir, "train", &train, Some(&spec))?;
    let (back, _) = synthgen::load_dataset(&dir, "train")?;
    println!("reloaded from {}: identical = {}", dir.display(), back == train);

    for fine_offset in [4.0, 1.5, 0.5, 0.0001] {
        let acc = nearest_mean_accuracy(&DatasetSpec { fine_offset, ..spec.clone() })?;
        println!("fine_offset {fine_offset:>7}: Bayes accuracy {acc:.3}");
    }
    Ok(())
}

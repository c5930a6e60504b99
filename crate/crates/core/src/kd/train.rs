use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{predicted_labels, tac, MetricAccumulator, MetricKind, MetricSummary, DEFAULT_SSP_K};
use crate::numerics::{KahanSum, Matrix, RngStream};
use crate::synthgen::Dataset;

use super::loss::{kd_loss, kl_distill};
use super::mlp::Mlp;
use super::teacher::Teacher;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Only the final linear layer is trained.
    Fz,
    /// Every parameter is trained.
    #[default]
    Ft,
    /// Full training plus a second distillation term on jittered inputs.
    AugKd,
}

impl Strategy {
    pub fn label(self) -> &'static str {
        match self {
            Strategy::Fz => "FZ",
            Strategy::Ft => "FT",
            Strategy::AugKd => "AUG-KD (TGDA-structure)",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyper {
    pub beta: f64,
    pub tau: f64,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub strategy: Strategy,
    /// Std of the Gaussian input jitter used by AUG-KD.
    pub aug_sigma: f64,
}

impl Default for Hyper {
    fn default() -> Self {
        Self { beta: 1.0, tau: 1.0, lr: 0.1, epochs: 60, batch_size: 32, seed: 0, strategy: Strategy::Ft, aug_sigma: 0.3 }
    }
}

impl Hyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("beta must be >= 0, got {}", self.beta)));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!("tau must be > 0, got {}", self.tau)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be > 0, got {}", self.lr)));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be >= 1".into()));
        }
        if self.strategy == Strategy::AugKd && !(self.aug_sigma > 0.0 && self.aug_sigma.is_finite()) {
            return Err(Error::Config(format!("AUG-KD needs aug_sigma > 0, got {}", self.aug_sigma)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    /// Accumulate TAC/SSP/R12 over every teacher batch during training.
    pub record_teacher_metrics: bool,
    pub ssp_k: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self { record_teacher_metrics: false, ssp_k: DEFAULT_SSP_K }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    /// Sample-weighted mean training loss of each epoch.
    pub epoch_loss: Vec<f64>,
    /// Teacher metrics accumulated online, one summary per metric, each
    /// with one per-epoch mean per epoch.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub teacher_metrics: Vec<MetricSummary>,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

pub fn accuracy(model: &Mlp, data: &Dataset) -> Result<f64> {
    tac(&predicted_labels(&model.forward(&data.features)?), &data.labels)
}

pub fn train(model: &mut Mlp, train_set: &Dataset, test_set: &Dataset, hyper: &Hyper, teacher: Option<&dyn Teacher>) -> Result<TrainTrace> {
    train_with(model, train_set, test_set, hyper, teacher, &TrainOptions::default())
}

/// Mini-batch gradient descent on `CE + beta * KD` with a seeded shuffle.
pub fn train_with(
    model: &mut Mlp,
    train_set: &Dataset,
    test_set: &Dataset,
    hyper: &Hyper,
    teacher: Option<&dyn Teacher>,
    opts: &TrainOptions,
) -> Result<TrainTrace> {
    hyper.validate()?;
    match (hyper.beta > 0.0, teacher.is_some()) {
        (true, false) => return Err(Error::Config("beta > 0 requires a teacher".into())),
        (false, true) => return Err(Error::Config("a teacher was given but beta = 0".into())),
        _ => {}
    }
    if opts.record_teacher_metrics && teacher.is_none() {
        return Err(Error::Config("online teacher metrics need a teacher".into()));
    }
    if hyper.strategy == Strategy::AugKd && teacher.is_some_and(|t| !t.scores_any_input()) {
        return Err(Error::Config("AUG-KD needs a teacher that can score augmented inputs".into()));
    }
    if train_set.is_empty() {
        return Err(Error::EmptyInput("training set"));
    }
    if train_set.dim() != model.input_dim() || train_set.n_classes != model.n_classes() {
        return Err(Error::ShapeMismatch(format!(
            "data is {} features / {} classes, model is {} / {}",
            train_set.dim(),
            train_set.n_classes,
            model.input_dim(),
            model.n_classes()
        )));
    }

    let mut shuffle_rng = RngStream::with_stream(hyper.seed, 10);
    let mut aug_rng = RngStream::with_stream(hyper.seed, 11);
    let head_only = hyper.strategy == Strategy::Fz;
    let mut accumulators: Vec<MetricAccumulator> = if opts.record_teacher_metrics {
        MetricKind::ALL.iter().map(|&k| MetricAccumulator::with_ssp_k(k, opts.ssp_k)).collect()
    } else {
        Vec::new()
    };

    let n = train_set.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut epoch_loss = Vec::with_capacity(hyper.epochs);
    for epoch in 0..hyper.epochs {
        shuffle_rng.shuffle(&mut order);
        let mut loss_sum = KahanSum::new();
        for (b, rows) in order.chunks(hyper.batch_size).enumerate() {
            let x = train_set.features.select_rows(rows);
            let y: Vec<usize> = rows.iter().map(|&r| train_set.labels[r]).collect();
            let teacher_logits = teacher.map(|t| t.logits(&x, Some(rows))).transpose()?;
            for acc in &mut accumulators {
                acc.push_batch(teacher_logits.as_ref().unwrap(), Some(&y))?;
            }

            let trace = model.forward_trace(&x)?;
            let out = kd_loss(&trace.logits, teacher_logits.as_ref(), &y, hyper.beta, hyper.tau)?;
            let mut loss = out.loss;
            let mut grads = model.backward(&trace, &out.grad)?;

            if let (Strategy::AugKd, Some(t)) = (hyper.strategy, teacher) {
                let x_aug = jitter(&x, hyper.aug_sigma, &mut aug_rng);
                let t_aug = t.logits(&x_aug, None)?;
                for acc in &mut accumulators {
                    acc.push_batch(&t_aug, Some(&y))?;
                }
                let aug_trace = model.forward_trace(&x_aug)?;
                let (kd_aug, kd_aug_grad) = kl_distill(&aug_trace.logits, &t_aug, hyper.tau)?;
                loss += hyper.beta * kd_aug;
                let aug_grads = model.backward(&aug_trace, &kd_aug_grad)?;
                grads.add_scaled(&aug_grads, hyper.beta);
            }

            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::Divergence { epoch, batch: b, loss });
            }
            model.sgd_step(&grads, hyper.lr, head_only);
            loss_sum.add(loss * rows.len() as f64);
        }
        for acc in &mut accumulators {
            acc.end_epoch();
        }
        epoch_loss.push(loss_sum.total() / n as f64);
    }

    let teacher_metrics = accumulators.into_iter().map(MetricAccumulator::finish).collect::<Result<Vec<_>>>()?;
    Ok(TrainTrace {
        epoch_loss,
        teacher_metrics,
        train_accuracy: accuracy(model, train_set)?,
        test_accuracy: if test_set.is_empty() { f64::NAN } else { accuracy(model, test_set)? },
    })
}

fn jitter(x: &Matrix, sigma: f64, rng: &mut RngStream) -> Matrix {
    let data = x.as_slice().iter().map(|v| v + sigma * rng.normal()).collect();
    Matrix::from_vec_unchecked(x.rows(), x.cols(), data)
}

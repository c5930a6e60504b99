use crate::error::{Error, Result};
use crate::numerics::Matrix;

use super::loss::kd_loss;
use super::mlp::Mlp;

/// Denominator floor for the relative error, so parameters with a
/// vanishing gradient are judged on absolute error instead.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

/// Largest relative error between the analytic gradient returned by
/// `objective` and central differences with step `eps`, over every
/// parameter. An empty parameter vector passes with zero error.
pub fn grad_check<F>(params: &[f64], objective: F, eps: f64) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {eps}")));
    }
    if params.is_empty() {
        return Ok(0.0);
    }
    let (_, analytic) = objective(params)?;
    if analytic.len() != params.len() {
        return Err(Error::ShapeMismatch(format!("{} gradient entries for {} parameters", analytic.len(), params.len())));
    }
    let mut probe = params.to_vec();
    let mut worst = 0.0f64;
    for (j, &a) in analytic.iter().enumerate() {
        let orig = probe[j];
        probe[j] = orig + eps;
        let (up, _) = objective(&probe)?;
        probe[j] = orig - eps;
        let (down, _) = objective(&probe)?;
        probe[j] = orig;
        let numeric = (up - down) / (2.0 * eps);
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
        worst = worst.max(err);
    }
    Ok(worst)
}

/// Loss and flat parameter gradient of the distillation objective for
/// `model` with its parameters replaced by `params`.
pub fn kd_objective(
    model: &Mlp,
    params: &[f64],
    x: &Matrix,
    labels: &[usize],
    teacher_logits: Option<&Matrix>,
    beta: f64,
    tau: f64,
) -> Result<(f64, Vec<f64>)> {
    let m = Mlp::from_params(model.sizes(), model.activation(), params)?;
    let trace = m.forward_trace(x)?;
    let out = kd_loss(&trace.logits, teacher_logits, labels, beta, tau)?;
    Ok((out.loss, m.backward(&trace, &out.grad)?.flatten()))
}

/// [`grad_check`] of the distillation objective at the model's current
/// parameters.
pub fn grad_check_mlp(
    model: &Mlp,
    x: &Matrix,
    labels: &[usize],
    teacher_logits: Option<&Matrix>,
    beta: f64,
    tau: f64,
    eps: f64,
) -> Result<f64> {
    grad_check(&model.params(), |p| kd_objective(model, p, x, labels, teacher_logits, beta, tau), eps)
}

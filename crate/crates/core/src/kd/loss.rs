//! Cross-entropy plus softened teacher-to-student KL, with analytic
//! gradients w.r.t. the student logits.

use crate::error::{Error, Result};
use crate::numerics::{log_softmax_into, softmax_into, Matrix};

#[derive(Debug, Clone)]
pub struct LossOutput {
    /// `ce + beta * kd`.
    pub loss: f64,
    pub ce: f64,
    /// `tau^2 * KL(teacher || student)` at temperature `tau`, batch mean.
    pub kd: f64,
    /// d loss / d student logits.
    pub grad: Matrix,
}

fn check_labels(logits: &Matrix, labels: &[usize]) -> Result<()> {
    if labels.len() != logits.rows() {
        return Err(Error::ShapeMismatch(format!("{} labels for {} rows", labels.len(), logits.rows())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= logits.cols()) {
        return Err(Error::InvalidInput(format!("label {bad} out of range for {} classes", logits.cols())));
    }
    Ok(())
}

/// Batch-mean cross-entropy of `softmax(logits)` against hard labels.
pub fn cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    check_labels(logits, labels)?;
    let (n, c) = (logits.rows(), logits.cols());
    let inv_n = 1.0 / n as f64;
    let mut grad = Matrix::zeros(n, c);
    let mut logp = vec![0.0; c];
    let mut total = 0.0;
    for (i, row) in logits.iter_rows().enumerate() {
        log_softmax_into(row, 1.0, &mut logp);
        total -= logp[labels[i]];
        let g = grad.row_mut(i);
        for (gj, lp) in g.iter_mut().zip(&logp) {
            *gj = lp.exp() * inv_n;
        }
        g[labels[i]] -= inv_n;
    }
    Ok((total * inv_n, grad))
}

/// Batch-mean `tau^2 * KL(softmax(teacher/tau) || softmax(student/tau))`.
pub fn kl_distill(student: &Matrix, teacher: &Matrix, tau: f64) -> Result<(f64, Matrix)> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidArgument(format!("temperature must be positive, got {tau}")));
    }
    if student.rows() != teacher.rows() || student.cols() != teacher.cols() {
        return Err(Error::ShapeMismatch(format!(
            "student {}x{} vs teacher {}x{}",
            student.rows(),
            student.cols(),
            teacher.rows(),
            teacher.cols()
        )));
    }
    let (n, c) = (student.rows(), student.cols());
    let inv_n = 1.0 / n as f64;
    let mut grad = Matrix::zeros(n, c);
    let (mut log_ps, mut log_pt, mut pt) = (vec![0.0; c], vec![0.0; c], vec![0.0; c]);
    let mut total = 0.0;
    for i in 0..n {
        log_softmax_into(student.row(i), tau, &mut log_ps);
        log_softmax_into(teacher.row(i), tau, &mut log_pt);
        softmax_into(teacher.row(i), tau, &mut pt);
        let kl: f64 = pt.iter().zip(&log_pt).zip(&log_ps).map(|((p, lt), ls)| if *p > 0.0 { p * (lt - ls) } else { 0.0 }).sum();
        total += kl.max(0.0);
        // d/ds [tau^2 KL] = tau (p_s - p_t)
        for ((g, ls), p) in grad.row_mut(i).iter_mut().zip(&log_ps).zip(&pt) {
            *g = tau * (ls.exp() - p) * inv_n;
        }
    }
    Ok((tau * tau * total * inv_n, grad))
}

/// `CE(student, labels) + beta * tau^2 * KL(teacher || student)`.
///
/// `teacher` may be `None` only when `beta == 0`.
pub fn kd_loss(student: &Matrix, teacher: Option<&Matrix>, labels: &[usize], beta: f64, tau: f64) -> Result<LossOutput> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::InvalidArgument(format!("beta must be non-negative, got {beta}")));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidArgument(format!("temperature must be positive, got {tau}")));
    }
    let (ce, mut grad) = cross_entropy(student, labels)?;
    let kd = match teacher {
        Some(t) => {
            let (kd, kd_grad) = kl_distill(student, t, tau)?;
            if beta > 0.0 {
                for (g, k) in grad.as_mut_slice().iter_mut().zip(kd_grad.as_slice()) {
                    *g += beta * k;
                }
            }
            kd
        }
        None if beta > 0.0 => return Err(Error::InvalidInput("beta > 0 needs teacher logits".into())),
        None => 0.0,
    };
    Ok(LossOutput { loss: ce + beta * kd, ce, kd, grad })
}

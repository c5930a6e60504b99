use crate::error::{Error, Result};
use crate::numerics::{argmax, Matrix};

use super::mlp::Mlp;

/// Anything that can produce teacher logits for a training batch.
///
/// `rows` are the batch's positions in the training set. It is `None` for
/// inputs that are not training rows (augmented copies, other splits).
pub trait Teacher: Send + Sync {
    fn logits(&self, x: &Matrix, rows: Option<&[usize]>) -> Result<Matrix>;

    /// Whether the teacher can score arbitrary (e.g. augmented) inputs.
    fn scores_any_input(&self) -> bool {
        true
    }
}

impl Teacher for Mlp {
    fn logits(&self, x: &Matrix, _rows: Option<&[usize]>) -> Result<Matrix> {
        self.forward(x)
    }
}

impl<T: Teacher + ?Sized> Teacher for &T {
    fn logits(&self, x: &Matrix, rows: Option<&[usize]>) -> Result<Matrix> {
        (**self).logits(x, rows)
    }

    fn scores_any_input(&self) -> bool {
        (**self).scores_any_input()
    }
}

/// Adds `margin` to each row's top logit (lowest index on ties).
pub fn sharpen_logits(logits: &Matrix, margin: f64) -> Result<Matrix> {
    if !(margin >= 0.0 && margin.is_finite()) {
        return Err(Error::InvalidArgument(format!("margin must be non-negative, got {margin}")));
    }
    let mut out = logits.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let j = argmax(row);
        row[j] += margin;
    }
    Ok(out)
}

/// A teacher whose top logit is pushed up by a fixed margin. Argmax, and so
/// accuracy, is unchanged; the top-1/top-2 ratio grows.
#[derive(Debug, Clone)]
pub struct Overconfident<T> {
    base: T,
    margin: f64,
}

impl<T> Overconfident<T> {
    pub fn base(&self) -> &T {
        &self.base
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }
}

pub fn make_overconfident<T: Teacher>(teacher: T, margin: f64) -> Result<Overconfident<T>> {
    if !(margin >= 0.0 && margin.is_finite()) {
        return Err(Error::InvalidArgument(format!("margin must be non-negative, got {margin}")));
    }
    Ok(Overconfident { base: teacher, margin })
}

impl<T: Teacher> Teacher for Overconfident<T> {
    fn logits(&self, x: &Matrix, rows: Option<&[usize]>) -> Result<Matrix> {
        sharpen_logits(&self.base.logits(x, rows)?, self.margin)
    }

    fn scores_any_input(&self) -> bool {
        self.base.scores_any_input()
    }
}

/// Precomputed logits over the training set, e.g. exported from another
/// framework. Only training rows can be scored.
#[derive(Debug, Clone)]
pub struct FixedLogits {
    train: Matrix,
}

impl FixedLogits {
    pub fn new(train: Matrix) -> Result<Self> {
        train.check_logits()?;
        Ok(Self { train })
    }

    pub fn train_logits(&self) -> &Matrix {
        &self.train
    }
}

impl Teacher for FixedLogits {
    fn logits(&self, _x: &Matrix, rows: Option<&[usize]>) -> Result<Matrix> {
        let rows = rows.ok_or_else(|| Error::Config("precomputed teacher logits cannot score augmented or unseen inputs".into()))?;
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.train.rows()) {
            return Err(Error::ShapeMismatch(format!("row {bad} beyond {} precomputed rows", self.train.rows())));
        }
        Ok(self.train.select_rows(rows))
    }

    fn scores_any_input(&self) -> bool {
        false
    }
}

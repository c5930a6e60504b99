use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `z`.
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
        }
    }
}

/// Fully connected layer; `weights` is `fan_in x fan_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    fn fan_in(&self) -> usize {
        self.weights.rows()
    }

    fn fan_out(&self) -> usize {
        self.weights.cols()
    }

    fn param_count(&self) -> usize {
        self.fan_in() * self.fan_out() + self.fan_out()
    }

    /// `x W + b`, accumulated in a fixed loop order.
    fn affine(&self, x: &Matrix) -> Matrix {
        let (n, fi, fo) = (x.rows(), self.fan_in(), self.fan_out());
        let w = self.weights.as_slice();
        let mut out = Vec::with_capacity(n * fo);
        for i in 0..n {
            let xi = x.row(i);
            let start = out.len();
            out.extend_from_slice(&self.bias);
            let oi = &mut out[start..];
            for k in 0..fi {
                let xik = xi[k];
                if xik == 0.0 {
                    continue;
                }
                let wk = &w[k * fo..(k + 1) * fo];
                for (o, &wko) in oi.iter_mut().zip(wk) {
                    *o += xik * wko;
                }
            }
        }
        Matrix::from_vec_unchecked(n, fo, out)
    }
}

/// Small feed-forward classifier: hidden layers use the declared
/// activation, the output layer is linear (raw logits).
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    activation: Activation,
    layers: Vec<Dense>,
}

/// Intermediate values kept by [`Mlp::forward_trace`] for backprop.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Input to each layer (the batch itself for layer 0).
    inputs: Vec<Matrix>,
    /// Pre-activations of each hidden layer.
    pre: Vec<Matrix>,
    pub logits: Matrix,
}

/// Parameter gradients in the same layout as [`Mlp::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(l.weights.as_slice());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weights.is_finite() && l.bias.iter().all(|b| b.is_finite()))
    }

    /// Adds `scale * other` in place.
    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weights.as_mut_slice().iter_mut().zip(b.weights.as_slice()) {
                *x += scale * y;
            }
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += scale * y;
            }
        }
    }
}

fn check_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 {
        return Err(Error::Config(format!("an MLP needs input and output sizes, got {sizes:?}")));
    }
    if sizes.contains(&0) {
        return Err(Error::Config(format!("layer sizes must be positive, got {sizes:?}")));
    }
    if *sizes.last().unwrap() < 2 {
        return Err(Error::Config("a classifier needs at least 2 outputs".into()));
    }
    Ok(())
}

impl Mlp {
    /// Random initialization: He-uniform for ReLU, Glorot-uniform for tanh,
    /// zero biases.
    pub fn new(sizes: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        check_sizes(sizes)?;
        let mut rng = RngStream::with_stream(seed, 2);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (fi, fo) = (w[0], w[1]);
                let bound = match activation {
                    Activation::Relu => (6.0 / fi as f64).sqrt(),
                    Activation::Tanh => (6.0 / (fi + fo) as f64).sqrt(),
                };
                let weights = (0..fi * fo).map(|_| rng.uniform_range(-bound, bound)).collect();
                Dense { weights: Matrix::from_vec_unchecked(fi, fo, weights), bias: vec![0.0; fo] }
            })
            .collect();
        Ok(Self { sizes: sizes.to_vec(), activation, layers })
    }

    pub fn zeros(sizes: &[usize], activation: Activation) -> Result<Self> {
        check_sizes(sizes)?;
        let layers = sizes
            .windows(2)
            .map(|w| Dense { weights: Matrix::zeros(w[0], w[1]), bias: vec![0.0; w[1]] })
            .collect();
        Ok(Self { sizes: sizes.to_vec(), activation, layers })
    }

    pub fn from_params(sizes: &[usize], activation: Activation, params: &[f64]) -> Result<Self> {
        let mut m = Self::zeros(sizes, activation)?;
        m.set_params(params)?;
        Ok(m)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn n_classes(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    /// Parameters of the final linear layer.
    pub fn head_param_count(&self) -> usize {
        self.layers.last().unwrap().param_count()
    }

    /// All parameters, layer by layer: weights row-major, then bias.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(l.weights.as_slice());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::ShapeMismatch(format!("{} parameters, model has {}", params.len(), self.param_count())));
        }
        if let Some(index) = params.iter().position(|p| !p.is_finite()) {
            return Err(Error::NonFinite { context: "parameters", index });
        }
        let mut offset = 0;
        for l in &mut self.layers {
            let nw = l.weights.as_slice().len();
            l.weights.as_mut_slice().copy_from_slice(&params[offset..offset + nw]);
            offset += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&params[offset..offset + nb]);
            offset += nb;
        }
        Ok(())
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(Error::ShapeMismatch(format!("batch has {} features, model expects {}", x.cols(), self.input_dim())));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = layer.affine(&h);
            if i < last {
                for v in z.as_mut_slice() {
                    *v = self.activation.apply(*v);
                }
            }
            h = z;
        }
        if !h.is_finite() {
            return Err(Error::NonFinite { context: "forward output", index: h.as_slice().iter().position(|v| !v.is_finite()).unwrap() });
        }
        Ok(h)
    }

    pub fn forward_trace(&self, x: &Matrix) -> Result<ForwardTrace> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len() - 1);
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.affine(&h);
            inputs.push(h);
            if i < last {
                let a = Matrix::from_vec_unchecked(z.rows(), z.cols(), z.as_slice().iter().map(|&v| self.activation.apply(v)).collect());
                pre.push(z);
                h = a;
            } else {
                h = z;
            }
        }
        Ok(ForwardTrace { inputs, pre, logits: h })
    }

    /// Parameter gradients given the gradient of the loss w.r.t. the logits.
    pub fn backward(&self, trace: &ForwardTrace, dlogits: &Matrix) -> Result<Gradients> {
        if dlogits.rows() != trace.logits.rows() || dlogits.cols() != trace.logits.cols() {
            return Err(Error::ShapeMismatch("logit gradient does not match forward pass".into()));
        }
        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        let mut delta = dlogits.clone();
        for (li, layer) in self.layers.iter().enumerate().rev() {
            let input = &trace.inputs[li];
            let (n, fi, fo) = (input.rows(), layer.fan_in(), layer.fan_out());
            let mut dw = vec![0.0; fi * fo];
            let mut db = vec![0.0; fo];
            for i in 0..n {
                let xi = input.row(i);
                let di = delta.row(i);
                for (b, &d) in db.iter_mut().zip(di) {
                    *b += d;
                }
                for k in 0..fi {
                    let xik = xi[k];
                    if xik == 0.0 {
                        continue;
                    }
                    for (w, &d) in dw[k * fo..(k + 1) * fo].iter_mut().zip(di) {
                        *w += xik * d;
                    }
                }
            }
            grads.push(Dense { weights: Matrix::from_vec_unchecked(fi, fo, dw), bias: db });
            if li > 0 {
                let z = &trace.pre[li - 1];
                let w = layer.weights.as_slice();
                let mut next = vec![0.0; n * fi];
                for i in 0..n {
                    let di = delta.row(i);
                    let zi = z.row(i);
                    for k in 0..fi {
                        let wk = &w[k * fo..(k + 1) * fo];
                        let s: f64 = wk.iter().zip(di).map(|(a, b)| a * b).sum();
                        next[i * fi + k] = s * self.activation.derivative(zi[k]);
                    }
                }
                delta = Matrix::from_vec_unchecked(n, fi, next);
            }
        }
        grads.reverse();
        Ok(Gradients { layers: grads })
    }

    /// Plain gradient step. With `head_only`, every layer except the last is
    /// left untouched.
    pub fn sgd_step(&mut self, grads: &Gradients, lr: f64, head_only: bool) {
        let last = self.layers.len() - 1;
        for (i, (l, g)) in self.layers.iter_mut().zip(&grads.layers).enumerate() {
            if head_only && i != last {
                continue;
            }
            for (p, d) in l.weights.as_mut_slice().iter_mut().zip(g.weights.as_slice()) {
                *p -= lr * d;
            }
            for (p, d) in l.bias.iter_mut().zip(&g.bias) {
                *p -= lr * d;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_model_gives_zero_logits() {
        let m = Mlp::zeros(&[3, 5, 4], Activation::Relu).unwrap();
        let x = Matrix::from_rows(&[vec![1.0, -2.0, 3.0], vec![0.5, 0.5, 0.5]]).unwrap();
        let y = m.forward(&x).unwrap();
        assert_eq!((y.rows(), y.cols()), (2, 4));
        assert!(y.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_linear_layer_picks_weight_row() {
        // x W with x = e_1 selects row 1 of W (the weights leaving input 1)
        let params: Vec<f64> = (0..3 * 2).map(|v| v as f64).chain([0.0, 0.0]).collect();
        let m = Mlp::from_params(&[3, 2], Activation::Relu, &params).unwrap();
        let x = Matrix::from_rows(&[vec![0.0, 1.0, 0.0]]).unwrap();
        assert_eq!(m.forward(&x).unwrap().as_slice(), &[2.0, 3.0]);
    }

    #[test]
    fn shape_errors() {
        let m = Mlp::new(&[3, 4, 2], Activation::Tanh, 1).unwrap();
        assert!(matches!(m.forward(&Matrix::zeros(1, 2)), Err(Error::ShapeMismatch(_))));
        assert!(Mlp::new(&[3], Activation::Relu, 1).is_err());
        assert!(Mlp::new(&[3, 0, 2], Activation::Relu, 1).is_err());
        assert!(Mlp::new(&[3, 1], Activation::Relu, 1).is_err());
    }

    #[test]
    fn params_round_trip() {
        let m = Mlp::new(&[4, 6, 3], Activation::Relu, 9).unwrap();
        assert_eq!(m.param_count(), 4 * 6 + 6 + 6 * 3 + 3);
        assert_eq!(m.head_param_count(), 6 * 3 + 3);
        let p = m.params();
        let back = Mlp::from_params(m.sizes(), m.activation(), &p).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn forward_trace_matches_forward() {
        let m = Mlp::new(&[4, 7, 5, 3], Activation::Relu, 2).unwrap();
        let mut rng = RngStream::new(3);
        let x = Matrix::new(6, 4, (0..24).map(|_| rng.normal()).collect()).unwrap();
        assert_eq!(m.forward(&x).unwrap(), m.forward_trace(&x).unwrap().logits);
    }
}

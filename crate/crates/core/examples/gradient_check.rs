//! Analytic gradients of the distillation objective against central
//! finite differences.
//!
//! cargo run --example gradient_check

use kdlab::kd::{grad_check_mlp, Activation, Mlp};
use kdlab::numerics::RngStream;
use kdlab::Matrix;

fn main() -> kdlab::Result<()> {
    let mut rng = RngStream::new(9);
    let x = Matrix::new(6, 5, (0..30).map(|_| rng.normal()).collect())?;
    let labels = [0, 1, 2, 3, 0, 1];
    let teacher = Matrix::new(6, 4, (0..24).map(|_| 2.0 * rng.normal()).collect())?;
    for activation in [Activation::Tanh, Activation::Relu] {
        let model = Mlp::new(&[5, 7, 4], activation, 3)?;
        for (beta, tau) in [(0.0, 1.0), (1.0, 1.0), (0.5, 2.0), (2.0, 4.0)] {
            let err = grad_check_mlp(&model, &x, &labels, Some(&teacher), beta, tau, 1e-5)?;
            println!("{activation:?} beta {beta} tau {tau}: max relative error {err:.2e}");
        }
    }
    Ok(())
}

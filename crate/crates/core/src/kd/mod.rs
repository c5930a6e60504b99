//! Small MLP classifiers, the distillation objective and the training loop.

pub mod checkpoint;
pub mod gradcheck;
pub mod loss;
pub mod mlp;
pub mod teacher;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, SeedRecord};
pub use gradcheck::{grad_check, grad_check_mlp};
pub use loss::{cross_entropy, kd_loss, kl_distill, LossOutput};
pub use mlp::{Activation, Mlp};
pub use teacher::{make_overconfident, sharpen_logits, FixedLogits, Overconfident, Teacher};
pub use train::{accuracy, train, train_with, Hyper, Strategy, TrainOptions, TrainTrace};

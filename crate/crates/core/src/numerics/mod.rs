//! Deterministic learning substrate: tensors, dense networks with manual
//! backpropagation, losses, Adam, finite-difference checking and named RNG
//! streams.

mod adam;
mod gemm;
mod gradcheck;
mod loss;
mod mlp;
mod rng;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use gradcheck::{check_against_differences, grad_check, relative_error, FD_STEP, MAX_CHECKED_PARAMS};
pub use loss::{entropy, softmax, softmax_with_lse, Loss, Target};
pub use mlp::{Activation, Backprop, Dense, Gradients, LayerGrad, Mlp, Trace};
pub use rng::Rng;
pub use tensor::Tensor;


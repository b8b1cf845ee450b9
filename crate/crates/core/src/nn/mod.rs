//! Minimal dense network substrate: tensors, dense / ReLU / sigmoid /
//! batch-norm layers with hand-written backward passes, ADAM and the
//! reconstruction loss.

mod layers;
mod loss;
mod param;
mod sequential;
mod tensor;

pub use layers::{
    relu, relu_backward, sigmoid, sigmoid_backward, Affine, BatchNorm, BnCache, Dense, BN_EPSILON,
    BN_MOMENTUM,
};
pub use loss::mse_loss;
pub use param::{Adam, Parameter};
pub use sequential::{Layer, Mode, Sequential};
pub use tensor::Tensor;
pub(crate) use tensor::gemm;

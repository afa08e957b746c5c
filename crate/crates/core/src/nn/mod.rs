//! Dense tensor engine: layer kernels with explicit backward passes,
//! parameter storage, SGD and gradient checking.

pub mod gradcheck;
pub mod layer;
pub mod ops;
pub mod param;
pub mod sgd;
mod tensor;

pub use gradcheck::{check_random_instance, grad_check, CheckCase, GradCheckReport};
pub use layer::{Conv2d, LayerKind, Linear};
pub use param::{GradientTape, ParamId, ParamStore};
pub use sgd::{sgd_step, Sgd};
pub use tensor::Tensor;

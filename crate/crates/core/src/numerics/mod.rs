//! Dense tensors, parameter storage, Adam, gradient checking and checkpoints.

mod adam;
mod checkpoint;
mod gradcheck;
mod params;
mod tensor;

pub use adam::{adam_step, AdamConfig};
pub use checkpoint::Checkpoint;
pub use gradcheck::{finite_diff_check, finite_diff_report, relative_error, GradCheckReport};
pub use params::{embedding_uniform, uniform, xavier_uniform, Param, ParamId, ParameterStore};
pub use tensor::{axpy, dot, matmul, sigmoid, Tensor2};

pub(crate) use params::GradBuffers;
pub(crate) use tensor::{matmul_acc, matmul_nt_acc, matmul_tn_acc, vec_mat_acc};

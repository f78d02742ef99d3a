//! Small reverse-mode differentiation stack: tensors, a recording tape, MLP
//! layers, losses, SGD and a finite-difference checker.

mod gradcheck;
mod graph;
mod loss;
mod mlp;
mod sgd;
mod tensor;

pub use gradcheck::{check_gradients, relative_error, GradCheckReport, REL_ERROR_FLOOR};
pub use graph::{Activation, Gradients, Graph, Var};
pub use loss::{
    binary_distribution, cross_entropy, mse, sum_squared_error, ClassWeights, LOG_FLOOR,
};
pub use mlp::{mlp_forward, BoundMlp, MlpSpec};
pub use sgd::{sgd_step, sgd_step_from};
pub use tensor::{ParamGroup, Tensor};


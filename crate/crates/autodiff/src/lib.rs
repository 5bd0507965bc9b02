//! Minimal dense tensor algebra with reverse-mode automatic differentiation.
//!
//! Tensors are rank 1 or 2 and always `f64`. A [`Tape`] records one forward
//! pass; [`Tape::backward`] produces [`Gradients`] for every node that
//! depends on a gradient-carrying leaf.

pub mod error;
pub mod gradcheck;
pub mod kernels;
pub mod nn;
pub mod opsuite;
pub mod tape;
pub mod tensor;

pub use error::{Result, TensorError};
pub use gradcheck::{finite_difference_report, grad_check, GradCheckReport};
pub use nn::{
    Activation, BoundFfn, BoundLayerNorm, BoundLinear, BoundLstmCell, Ffn, LayerNorm, Linear, LstmCell, LstmState,
    ParamVars, Parameters,
};
pub use tape::{Gradients, OpKind, Tape, TapeNode, Var, LAYERNORM_EPS};
pub use tensor::{matvec, outer, Shape, Tensor};

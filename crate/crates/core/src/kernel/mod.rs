//! Dense tensors, a reverse-mode tape, cross-attention and AdamW.

mod attention;
pub mod ops;
mod optim;
mod tape;
mod tensor;

pub use attention::{attend, attention};
pub use optim::{AdamW, Param, ParamStore};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum KernelError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("non-finite value produced by {op} at element {index}")]
    NonFinite { op: &'static str, index: usize },
}

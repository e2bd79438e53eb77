//! Minimal reverse-mode differentiation over dense `f64` tensors.
//!
//! A [`Graph`] records exactly the operations the model needs (affine maps,
//! elementwise nonlinearities, log-softmax, embedding lookups and a few
//! reductions). Graphs are rebuilt for every document and borrow parameter
//! storage through their leaves.
//!
//! ```
//! use sengen::numerics::{Graph, Tensor};
//!
//! let w = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
//! let x = Tensor::vector(vec![1.0, 2.0]);
//! let mut g = Graph::new();
//! let (wv, xv) = (g.leaf(&w), g.leaf(&x));
//! let y = g.affine(wv, xv, None).unwrap();
//! let s = g.sum(y).unwrap();
//! assert_eq!(g.value(y), &[1.0, 2.0]);
//! let grads = g.backward(s).unwrap();
//! assert_eq!(grads.get(xv).unwrap(), &[1.0, 1.0]);
//! ```

mod check;
mod graph;
mod tensor;

pub use check::{central_difference, relative_error, GradCheck};
pub use graph::{log_softmax, log_sum_exp, sigmoid, softmax, Gradients, Graph, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("empty index subset")]
    EmptySubset,
    #[error("backward root must be a scalar, got shape {shape:?}")]
    NonScalarRoot { shape: Vec<usize> },
    #[error("backward already ran on this graph")]
    BackwardTwice,
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
}

//! Tape-based reverse-mode automatic differentiation over dense
//! `(batch, channel, height, width)` tensors.
//!
//! The engine supports a fixed operator set: convolutions, pooling,
//! attention gating primitives, elementwise arithmetic, masked reductions
//! and first-order finite-difference stencils. There is no general
//! broadcasting; every op checks its shapes up front.
//!
//! ```
//! use icepinn_autodiff::{Graph, Shape, Tensor};
//!
//! let mut g = Graph::<f64>::new();
//! let w = g.param(Tensor::from_vec(Shape::new(1, 1, 1, 3), vec![1.0, 2.0, 3.0]).unwrap());
//! let x = g.constant(Tensor::from_vec(Shape::new(1, 1, 1, 3), vec![4.0, 5.0, 6.0]).unwrap());
//! let wx = g.mul(w, x).unwrap();
//! let loss = g.sum(wx);
//! let grads = g.backward(loss).unwrap();
//! assert_eq!(grads.get(w).unwrap(), &[4.0, 5.0, 6.0]);
//! ```

mod error;
mod graph;
mod kernels;
mod real;
mod tensor;

pub use error::AutodiffError;
pub use graph::{Gradients, Graph, Var};
pub use real::Real;
pub use tensor::{Shape, Tensor};

pub type Result<T> = std::result::Result<T, AutodiffError>;

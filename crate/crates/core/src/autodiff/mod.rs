//! Dense-matrix reverse-mode automatic differentiation, the Adam optimizer,
//! and finite-difference gradient checking.

mod adam;
pub mod gradcheck;
pub mod kernels;
mod tape;

pub use adam::{AdamConfig, AdamState};
pub use kernels::SparseMatrix;
pub use tape::{EdgeIndex, Fault, Gradients, Tape, Var};

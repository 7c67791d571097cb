//! Dense linear algebra, elementwise nonlinearities and the reverse-mode tape.

pub mod linalg;
pub mod tape;
pub mod tensor;

pub use linalg::{largest_eigenvalue, lipschitz_constant, POWER_MAX_ITER, POWER_TOL};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

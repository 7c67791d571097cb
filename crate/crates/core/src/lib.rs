//! Sparse recovery by classical and unrolled iterative shrinkage.
//!
//! The crate provides problem generation ([`problems`]), the analytic
//! dictionary used by ALISTA-type solvers ([`dictionary`]), the solvers
//! themselves ([`solvers`]), and training and evaluation of the learned
//! variants ([`training`]), all on top of a small dense tensor type and a
//! reverse-mode tape ([`numerics`]).

pub mod container;
pub mod dictionary;
pub mod error;
pub mod numerics;
pub mod problems;
pub mod rng;
pub mod solvers;
pub mod training;

pub use container::Container;
pub use dictionary::AnalyticDictionary;
pub use error::{Error, Result};
pub use numerics::Tensor;
pub use problems::{Batch, ProblemEnsemble};
pub use solvers::{IterationTrace, Model, ModelKind, Operators, Solver, SupportSelectionSchedule};
pub use training::{Checkpoint, TrainConfig};

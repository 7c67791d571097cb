//! Classical and learned recovery iterations, support selection, and the
//! theory verifiers.

mod cell;
mod classical;
mod learned;
mod support;
mod trace;
mod verify;

pub use cell::{CellVars, InputFeatures, RecurrentCellParams};
pub use classical::{fista_run, ista_run, lasso_objective, DEFAULT_LAMBDA};
pub use learned::{
    adaptive_forward, alista_at_forward, calibrate_input_scale, alista_forward, model_forward, na_alista_forward, unroll,
    AlistaParams, ForwardOptions, Model, ModelKind, Operators, ParamVars, Unrolled, DEFAULT_AT_EPS,
};
pub use support::{
    exempt_count, exempt_mask, support_select_threshold, SupportSelectionSchedule, DEFAULT_P_MAX,
    DEFAULT_P_STEP,
};
pub use trace::{IterationTrace, StepRecord};
pub use verify::{
    assumption_ratio, oracle_threshold_run, verify_error_bound, verify_lemma1, AssumptionRatio, BoundReport,
};

use crate::error::Result;
use crate::numerics::Tensor;

/// Any solver that can be run for a fixed number of iterations.
#[derive(Clone, Debug, PartialEq)]
pub enum Solver {
    Ista { lambda: f64 },
    Fista { lambda: f64 },
    Learned(Model),
}

impl Solver {
    pub fn name(&self) -> &'static str {
        match self {
            Solver::Ista { .. } => "ista",
            Solver::Fista { .. } => "fista",
            Solver::Learned(m) => m.kind().name(),
        }
    }

    /// `ss` is ignored by the classical solvers.
    pub fn run(
        &self,
        ops: &Operators,
        y: &Tensor,
        iterations: usize,
        ss: &SupportSelectionSchedule,
        opts: ForwardOptions,
    ) -> Result<IterationTrace> {
        match self {
            Solver::Ista { lambda } => ista_run(&ops.phi, y, *lambda, iterations),
            Solver::Fista { lambda } => fista_run(&ops.phi, y, *lambda, iterations),
            Solver::Learned(m) => model_forward(ops, m, y, iterations, ss, opts),
        }
    }
}

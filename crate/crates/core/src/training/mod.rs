//! End-to-end training of the learned solvers, evaluation, and diagnostics.

mod checkpoint;
mod config;
mod diagnostics;
mod eval;
mod loss;
mod optim;
mod trainer;

pub use checkpoint::{Checkpoint, CurvePoint};
pub use config::{ModelSpec, TrainConfig};
pub use diagnostics::{
    norm_correlation, parameter_stats, proxy_error_correlation, ratio_stats, NormCorrelation, ParameterStats,
    ProxyCorrelation, RatioStats,
};
pub use eval::{evaluate, mean_std, pearson, spearman, EvalReport, StepStats, EVAL_CHUNK};
pub use loss::{batch_loss_and_grad, loss_and_grad, mse, mse_loss, nmse, nmse_from_sums, NMSE_FLOOR_DB};
pub use optim::{adam_step, AdamConfig, AdamState};
pub use trainer::{train, write_curve_csv, Trainer};

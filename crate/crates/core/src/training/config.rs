use serde::{Deserialize, Serialize};

use crate::container::checksum;
use crate::error::{Error, Result};
use crate::solvers::{AlistaParams, InputFeatures, Model, ModelKind, RecurrentCellParams, SupportSelectionSchedule};

use super::optim::AdamConfig;

/// Architecture of a learned solver, without its weights.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Unrolled iterations `K`.
    pub iterations: usize,
    /// Cell width `H` (recurrent model only).
    pub hidden: usize,
    pub features: InputFeatures,
    /// Rescale the cell inputs so they average to one at `x = 0` on a
    /// calibration batch (recurrent model only).
    pub normalize_inputs: bool,
    /// Reweighting scale (ALISTA-AT only).
    pub at_eps: f64,
    pub init_theta: f64,
    pub init_gamma: f64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            kind: ModelKind::NaAlista,
            iterations: 16,
            hidden: 128,
            features: InputFeatures::Both,
            normalize_inputs: true,
            at_eps: crate::solvers::DEFAULT_AT_EPS,
            init_theta: 0.1,
            init_gamma: 1.0,
        }
    }
}

impl ModelSpec {
    pub fn init(&self, seed: u64) -> Result<Model> {
        let k = self.iterations;
        let model = match self.kind {
            ModelKind::Alista => Model::Alista(AlistaParams::constant(k, self.init_theta, self.init_gamma)),
            ModelKind::AlistaAt => Model::AlistaAt {
                params: AlistaParams::constant(k, self.init_theta, self.init_gamma),
                eps: self.at_eps,
            },
            ModelKind::NaAlista => Model::NaAlista(RecurrentCellParams::init(self.features, self.hidden, seed)?),
        };
        model.validate()?;
        Ok(model)
    }

    /// Whether `model` has this architecture.
    pub fn matches(&self, model: &Model) -> bool {
        match model {
            Model::Alista(p) => self.kind == ModelKind::Alista && p.layers() == self.iterations,
            Model::AlistaAt { params, eps } => {
                self.kind == ModelKind::AlistaAt && params.layers() == self.iterations && *eps == self.at_eps
            }
            Model::NaAlista(c) => {
                self.kind == ModelKind::NaAlista && c.hidden == self.hidden && c.features == self.features
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelSpec,
    pub epochs: usize,
    pub samples_per_epoch: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Halve the learning rate at 50% and again at 75% of the epochs.
    pub lr_decay: bool,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Support-selection percentage added per layer, starting from 0.
    pub p_step: f64,
    /// Cap on the support-selection percentage.
    pub p_max: f64,
    /// Evaluate on the test set every this many epochs (0: only at the end).
    pub eval_every: usize,
    /// Rows per parallel work unit; fixes the reduction order.
    pub shard_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelSpec::default(),
            epochs: 400,
            samples_per_epoch: 50_000,
            batch_size: 512,
            learning_rate: 2e-4,
            lr_decay: true,
            adam: AdamConfig::default(),
            seed: 0,
            p_step: crate::solvers::DEFAULT_P_STEP,
            p_max: crate::solvers::DEFAULT_P_MAX,
            eval_every: 1,
            shard_size: 64,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("model.iterations", self.model.iterations),
            ("model.hidden", self.model.hidden),
            ("samples_per_epoch", self.samples_per_epoch),
            ("batch_size", self.batch_size),
            ("shard_size", self.shard_size),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        let a = &self.adam;
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0) {
            return Err(Error::Config("Adam betas must lie in [0, 1) and eps must be positive".into()));
        }
        if !(0.0..=100.0).contains(&self.p_max) {
            return Err(Error::Config(format!("p_max must lie in [0, 100], got {}", self.p_max)));
        }
        if !(self.p_step >= 0.0 && self.p_step.is_finite()) {
            return Err(Error::Config(format!("p_step must be non-negative, got {}", self.p_step)));
        }
        if self.model.kind == ModelKind::AlistaAt && !(self.model.at_eps > 0.0) {
            return Err(Error::Config(format!("at_eps must be positive, got {}", self.model.at_eps)));
        }
        Ok(())
    }

    pub fn schedule(&self) -> Result<SupportSelectionSchedule> {
        SupportSelectionSchedule::ramp(self.model.iterations, self.p_step, self.p_max)
    }

    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        if !self.lr_decay {
            return self.learning_rate;
        }
        let frac = epoch as f64 / self.epochs.max(1) as f64;
        let halvings = (frac >= 0.5) as i32 + (frac >= 0.75) as i32;
        self.learning_rate * 0.5f64.powi(halvings)
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.samples_per_epoch.div_ceil(self.batch_size)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        checksum(&serde_json::to_vec(self).expect("config serializes"))
    }
}

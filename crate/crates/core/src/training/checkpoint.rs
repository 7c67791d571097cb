use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::container::Container;
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::solvers::Model;

use super::config::ModelSpec;
use super::optim::AdamState;

/// One learning-curve row; `test_nmse_db` is NaN on epochs without evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_nmse_db: f64,
}

/// Everything needed to continue training exactly where it stopped. Data
/// streams are derived from `(seed, epoch, batch)`, so the seed and epoch
/// counter are the complete RNG state.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub spec: ModelSpec,
    pub model: Model,
    pub adam: AdamState,
    /// Completed epochs.
    pub epoch: usize,
    pub seed: u64,
    pub config_hash: String,
    pub curve: Vec<CurvePoint>,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    spec: ModelSpec,
    epoch: usize,
    seed: u64,
    config_hash: String,
    adam_t: u64,
}

fn row(v: &[f64]) -> Result<Tensor> {
    Tensor::from_raw(vec![1, v.len()], v.to_vec())
}

impl Checkpoint {
    pub fn to_container(&self) -> Result<Container> {
        let meta = Meta {
            spec: self.spec,
            epoch: self.epoch,
            seed: self.seed,
            config_hash: self.config_hash.clone(),
            adam_t: self.adam.t,
        };
        let curve: Vec<f64> = self
            .curve
            .iter()
            .flat_map(|p| [p.epoch as f64, p.train_loss, p.test_nmse_db])
            .collect();
        let input_scale = match &self.model {
            Model::NaAlista(c) => c.input_scale.clone(),
            _ => Tensor::zeros(0, 0),
        };
        Ok(Container::new("checkpoint", serde_json::to_value(meta)?)
            .with_tensor("params", row(&self.model.to_flat())?)
            .with_tensor("adam_m", row(&self.adam.m)?)
            .with_tensor("adam_v", row(&self.adam.v)?)
            .with_tensor("input_scale", input_scale)
            .with_tensor("curve", Tensor::from_raw(vec![self.curve.len(), 3], curve)?))
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        if c.kind != "checkpoint" {
            return Err(Error::Container(format!("expected a 'checkpoint' file, found '{}'", c.kind)));
        }
        let meta: Meta = serde_json::from_value(c.meta.clone())?;
        let mut model = meta.spec.init(0)?;
        model.set_flat(c.tensor("params")?.data())?;
        if let Model::NaAlista(cell) = &mut model {
            cell.input_scale = c.tensor("input_scale")?.clone();
        }
        model.validate()?;
        let adam = AdamState {
            m: c.tensor("adam_m")?.data().to_vec(),
            v: c.tensor("adam_v")?.data().to_vec(),
            t: meta.adam_t,
        };
        if adam.m.len() != model.num_params() || adam.v.len() != model.num_params() {
            return Err(Error::Container("optimizer moments do not match the model".into()));
        }
        let curve_t = c.tensor("curve")?;
        let curve = (0..curve_t.rows())
            .map(|i| {
                let r = curve_t.row(i);
                CurvePoint {
                    epoch: r[0] as usize,
                    train_loss: r[1],
                    test_nmse_db: r[2],
                }
            })
            .collect();
        Ok(Self {
            spec: meta.spec,
            model,
            adam,
            epoch: meta.epoch,
            seed: meta.seed,
            config_hash: meta.config_hash,
            curve,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_container()?.save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_container(&Container::load(path)?)
    }
}

use log::{debug, info};

use crate::error::{Error, Result};
use crate::problems::{Batch, ProblemEnsemble};
use crate::rng::{derive_seed, TAG_INIT, TAG_TRAIN};
use crate::solvers::{calibrate_input_scale, ForwardOptions, Model, Operators, Solver, SupportSelectionSchedule};

use super::checkpoint::{Checkpoint, CurvePoint};
use super::config::TrainConfig;
use super::eval::evaluate;
use super::loss::batch_loss_and_grad;
use super::optim::{adam_step, AdamState};

/// Samples used to calibrate the recurrent cell's input scale.
const CALIBRATION_SIZE: usize = 1000;

/// Epoch-by-epoch training of one learned solver.
pub struct Trainer<'a> {
    cfg: TrainConfig,
    ens: &'a ProblemEnsemble,
    ops: &'a Operators,
    test: Option<&'a Batch>,
    schedule: SupportSelectionSchedule,
    state: Checkpoint,
}

impl<'a> Trainer<'a> {
    /// Fresh parameters; records the untrained test NMSE as epoch 0.
    pub fn new(cfg: TrainConfig, ens: &'a ProblemEnsemble, ops: &'a Operators, test: Option<&'a Batch>) -> Result<Self> {
        let mut model = cfg.model.init(derive_seed(cfg.seed, &[TAG_INIT]))?;
        if let (Model::NaAlista(cell), true) = (&mut model, cfg.model.normalize_inputs) {
            let size = cfg.samples_per_epoch.min(CALIBRATION_SIZE);
            let batch = ens.sample_batch(size, derive_seed(cfg.seed, &[TAG_INIT, TAG_TRAIN]))?;
            calibrate_input_scale(cell, ops, &batch.y)?;
        }
        let state = Checkpoint {
            spec: cfg.model,
            adam: AdamState::new(model.num_params()),
            model,
            epoch: 0,
            seed: cfg.seed,
            config_hash: cfg.hash(),
            curve: Vec::new(),
        };
        let mut t = Self::with_state(cfg, ens, ops, test, state)?;
        let baseline = t.test_nmse()?;
        t.state.curve.push(CurvePoint {
            epoch: 0,
            train_loss: f64::NAN,
            test_nmse_db: baseline,
        });
        Ok(t)
    }

    /// Continue from a checkpoint written under the same configuration.
    pub fn resume(
        cfg: TrainConfig,
        ens: &'a ProblemEnsemble,
        ops: &'a Operators,
        test: Option<&'a Batch>,
        ckpt: Checkpoint,
    ) -> Result<Self> {
        if ckpt.config_hash != cfg.hash() {
            return Err(Error::Config(format!(
                "checkpoint was written for config {}, current config is {}",
                ckpt.config_hash,
                cfg.hash()
            )));
        }
        Self::with_state(cfg, ens, ops, test, ckpt)
    }

    fn with_state(
        cfg: TrainConfig,
        ens: &'a ProblemEnsemble,
        ops: &'a Operators,
        test: Option<&'a Batch>,
        state: Checkpoint,
    ) -> Result<Self> {
        cfg.validate()?;
        if ops.phi != ens.phi {
            return Err(Error::Config("dictionary was computed for a different measurement matrix".into()));
        }
        if !cfg.model.matches(&state.model) {
            return Err(Error::Config("checkpoint model does not match the configured architecture".into()));
        }
        let schedule = cfg.schedule()?;
        Ok(Self {
            cfg,
            ens,
            ops,
            test,
            schedule,
            state,
        })
    }

    pub fn epoch(&self) -> usize {
        self.state.epoch
    }

    pub fn is_done(&self) -> bool {
        self.state.epoch >= self.cfg.epochs
    }

    pub fn checkpoint(&self) -> &Checkpoint {
        &self.state
    }

    pub fn into_checkpoint(self) -> Checkpoint {
        self.state
    }

    fn test_nmse(&self) -> Result<f64> {
        match self.test {
            Some(test) => Ok(evaluate(
                &Solver::Learned(self.state.model.clone()),
                self.ops,
                test,
                self.cfg.model.iterations,
                &self.schedule,
                ForwardOptions::default(),
            )?
            .nmse_db),
            None => Ok(f64::NAN),
        }
    }

    /// Train one epoch on freshly drawn samples.
    pub fn run_epoch(&mut self) -> Result<CurvePoint> {
        let epoch = self.state.epoch;
        let lr = self.cfg.learning_rate_at(epoch);
        let k = self.cfg.model.iterations;
        let mut total = 0.0;
        let mut seen = 0usize;
        for step in 0..self.cfg.batches_per_epoch() {
            let size = self.cfg.batch_size.min(self.cfg.samples_per_epoch - seen);
            let seed = derive_seed(self.cfg.seed, &[TAG_TRAIN, epoch as u64, step as u64]);
            let batch = self.ens.sample_batch(size, seed)?;
            let (loss, grad) =
                batch_loss_and_grad(&self.state.model, self.ops, &batch, k, &self.schedule, self.cfg.shard_size)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    step,
                    checkpoint: Box::new(self.state.clone()),
                });
            }
            let mut flat = self.state.model.to_flat();
            adam_step(&mut flat, &grad, &mut self.state.adam, &self.cfg.adam, lr)?;
            self.state.model.set_flat(&flat)?;
            total += loss * size as f64;
            seen += size;
        }
        self.state.epoch += 1;
        let done = self.state.epoch;
        let evaluate_now =
            done == self.cfg.epochs || (self.cfg.eval_every > 0 && done % self.cfg.eval_every == 0);
        let point = CurvePoint {
            epoch: done,
            train_loss: total / seen as f64,
            test_nmse_db: if evaluate_now { self.test_nmse()? } else { f64::NAN },
        };
        self.state.curve.push(point);
        if evaluate_now {
            info!(
                "{} epoch {done}/{}: loss {:.6e}, test NMSE {:.3} dB",
                self.cfg.model.kind.name(),
                self.cfg.epochs,
                point.train_loss,
                point.test_nmse_db
            );
        } else {
            debug!("epoch {done}: loss {:.6e}", point.train_loss);
        }
        Ok(point)
    }

    /// Train until `epoch` epochs are complete (capped at the configured count).
    pub fn run_until(&mut self, epoch: usize) -> Result<()> {
        while self.state.epoch < epoch.min(self.cfg.epochs) {
            self.run_epoch()?;
        }
        Ok(())
    }

    pub fn run(mut self) -> Result<Checkpoint> {
        self.run_until(self.cfg.epochs)?;
        Ok(self.state)
    }
}

/// Train from scratch for the configured number of epochs.
pub fn train(cfg: TrainConfig, ens: &ProblemEnsemble, ops: &Operators, test: Option<&Batch>) -> Result<Checkpoint> {
    Trainer::new(cfg, ens, ops, test)?.run()
}

/// Learning curve as CSV with columns `epoch,train_loss,test_nmse_db`.
pub fn write_curve_csv<W: std::io::Write>(out: W, curve: &[CurvePoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let fmt = |v: f64| if v.is_nan() { String::new() } else { format!("{v:.10e}") };
    w.write_record(["epoch", "train_loss", "test_nmse_db"])
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    for p in curve {
        w.write_record([p.epoch.to_string(), fmt(p.train_loss), fmt(p.test_nmse_db)])
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    w.flush()?;
    Ok(())
}

//! Experiment configuration: a built-in profile overlaid with an optional
//! TOML file. Unknown keys are rejected at every level.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use nalista_core::container::checksum;
use nalista_core::dictionary::DictionaryOptions;
use nalista_core::solvers::{InputFeatures, ModelKind, DEFAULT_LAMBDA};
use nalista_core::training::{AdamConfig, ModelSpec, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// Small problem that trains in about a minute per model.
    Desk,
    /// Full-size protocol (M=250, N=1000, S=50, K=16, H=128).
    Paper,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub m: usize,
    pub n: usize,
    /// Expected number of nonzeros per target.
    pub s: f64,
    /// Omit for noiseless observations.
    pub snr_db: Option<f64>,
    pub test_size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DictionaryConfig {
    pub iters: usize,
    pub rel_tol: f64,
    /// Max-coherence refinement steps after the Frobenius phase.
    pub refine_iters: usize,
    /// Omit to use `1 / (2 lambda_max(Phi Phi^T))`.
    pub step: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Learned models trained by `train` and compared by `eval`.
    pub kinds: Vec<ModelKind>,
    pub iterations: usize,
    pub hidden: usize,
    pub features: InputFeatures,
    pub normalize_inputs: bool,
    pub at_eps: f64,
    pub init_theta: f64,
    pub init_gamma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub samples_per_epoch: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lr_decay: bool,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub p_step: f64,
    pub p_max: f64,
    pub eval_every: usize,
    pub shard_size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    /// LASSO weight for ISTA and FISTA.
    pub lambda: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    K,
    N,
    H,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub values: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseConfig {
    /// `(i, j)` pairs correlating `u^(i)` with `||x^(j) - x*||_1`.
    pub pairs: Vec<(usize, usize)>,
    /// Samples per sparsity level for the norm correlations.
    pub correlation_samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub profile: Profile,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub ensemble: EnsembleConfig,
    pub dictionary: DictionaryConfig,
    pub model: ModelConfig,
    pub training: TrainingConfig,
    pub baselines: BaselineConfig,
    pub sweep: SweepConfig,
    pub diagnose: DiagnoseConfig,
}

impl ExperimentConfig {
    pub fn profile(profile: Profile) -> Self {
        let desk = Self {
            profile,
            seeds: vec![0, 1, 2],
            out_dir: PathBuf::from("runs/desk"),
            ensemble: EnsembleConfig {
                m: 50,
                n: 200,
                s: 8.0,
                snr_db: Some(40.0),
                test_size: 10_000,
            },
            dictionary: DictionaryConfig {
                iters: nalista_core::dictionary::DEFAULT_ITERS,
                rel_tol: nalista_core::dictionary::DEFAULT_REL_TOL,
                refine_iters: nalista_core::dictionary::DEFAULT_REFINE_ITERS,
                step: None,
            },
            model: ModelConfig {
                kinds: vec![ModelKind::Alista, ModelKind::NaAlista],
                iterations: 12,
                hidden: 32,
                features: InputFeatures::Both,
                normalize_inputs: true,
                at_eps: nalista_core::solvers::DEFAULT_AT_EPS,
                init_theta: 0.1,
                init_gamma: 0.25,
            },
            training: TrainingConfig {
                epochs: 20,
                samples_per_epoch: 5_000,
                batch_size: 16,
                learning_rate: 1e-3,
                lr_decay: true,
                beta1: 0.9,
                beta2: 0.999,
                adam_eps: 1e-8,
                p_step: nalista_core::solvers::DEFAULT_P_STEP,
                p_max: 2.4,
                eval_every: 5,
                shard_size: 64,
            },
            baselines: BaselineConfig { lambda: DEFAULT_LAMBDA },
            sweep: SweepConfig {
                axis: SweepAxis::None,
                values: Vec::new(),
            },
            diagnose: DiagnoseConfig {
                pairs: vec![(0, 0), (5, 8), (8, 8)],
                correlation_samples: 10_000,
            },
        };
        match profile {
            Profile::Desk => desk,
            Profile::Paper => Self {
                out_dir: PathBuf::from("runs/paper"),
                ensemble: EnsembleConfig {
                    m: 250,
                    n: 1000,
                    s: 50.0,
                    ..desk.ensemble
                },
                model: ModelConfig {
                    iterations: 16,
                    hidden: 128,
                    ..desk.model
                },
                training: TrainingConfig {
                    epochs: 400,
                    samples_per_epoch: 50_000,
                    batch_size: 512,
                    learning_rate: 2e-4,
                    p_max: nalista_core::solvers::DEFAULT_P_MAX,
                    eval_every: 10,
                    ..desk.training
                },
                ..desk
            },
        }
    }

    /// Profile defaults overlaid with the keys present in `overlay`.
    pub fn from_toml(profile: Profile, overlay: &str) -> anyhow::Result<Self> {
        let user: toml::Table = toml::from_str(overlay).context("parsing TOML")?;
        let profile = match user.get("profile") {
            Some(p) => p.clone().try_into::<Profile>().context("invalid `profile`")?,
            None => profile,
        };
        let mut base = toml::Table::try_from(Self::profile(profile)).context("serializing profile")?;
        merge(&mut base, user);
        let cfg: Self = toml::Value::Table(base).try_into().context("invalid configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(profile: Profile, path: Option<&Path>) -> anyhow::Result<Self> {
        match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                Self::from_toml(profile, &text).with_context(|| format!("in {}", p.display()))
            }
            None => {
                let cfg = Self::profile(profile);
                cfg.validate()?;
                Ok(cfg)
            }
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        let e = &self.ensemble;
        if e.m == 0 || e.n == 0 || e.m > e.n {
            bail!("ensemble needs 0 < M <= N, got M={}, N={}", e.m, e.n);
        }
        if !(e.s > 0.0 && e.s <= e.n as f64) {
            bail!("ensemble sparsity must satisfy 0 < S <= N, got S={}, N={}", e.s, e.n);
        }
        if e.snr_db.is_some_and(|v| !v.is_finite()) {
            bail!("snr_db must be finite; omit it for noiseless observations");
        }
        if e.test_size == 0 {
            bail!("test_size must be positive");
        }
        if self.seeds.is_empty() {
            bail!("at least one seed is required");
        }
        if !(self.baselines.lambda > 0.0) {
            bail!("baselines.lambda must be positive");
        }
        if self.diagnose.correlation_samples < 2 {
            bail!("diagnose.correlation_samples must be at least 2");
        }
        for &(i, j) in &self.diagnose.pairs {
            if i >= self.model.iterations || j > self.model.iterations {
                bail!("diagnose pair ({i}, {j}) is out of range for K={}", self.model.iterations);
            }
        }
        if self.sweep.axis != SweepAxis::None && self.sweep.values.is_empty() {
            bail!("sweep.values must list at least one point for axis {:?}", self.sweep.axis);
        }
        for kind in &self.model.kinds {
            self.train_config(*kind, self.seeds[0]).validate()?;
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, ignoring `out_dir` so that the
    /// same experiment hashes alike wherever it is written.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        checksum(&serde_json::to_vec(&c).expect("config serializes"))
    }

    pub fn dictionary_options(&self) -> DictionaryOptions {
        DictionaryOptions {
            step: self.dictionary.step,
            iters: self.dictionary.iters,
            rel_tol: self.dictionary.rel_tol,
            refine_iters: self.dictionary.refine_iters,
        }
    }

    pub fn model_spec(&self, kind: ModelKind) -> ModelSpec {
        let m = &self.model;
        ModelSpec {
            kind,
            iterations: m.iterations,
            hidden: m.hidden,
            features: m.features,
            normalize_inputs: m.normalize_inputs,
            at_eps: m.at_eps,
            init_theta: m.init_theta,
            init_gamma: m.init_gamma,
        }
    }

    pub fn train_config(&self, kind: ModelKind, seed: u64) -> TrainConfig {
        let t = &self.training;
        TrainConfig {
            model: self.model_spec(kind),
            epochs: t.epochs,
            samples_per_epoch: t.samples_per_epoch,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            lr_decay: t.lr_decay,
            adam: AdamConfig {
                beta1: t.beta1,
                beta2: t.beta2,
                eps: t.adam_eps,
            },
            seed,
            p_step: t.p_step,
            p_max: t.p_max,
            eval_every: t.eval_every,
            shard_size: t.shard_size,
        }
    }

    /// Copy with one sweep coordinate replaced.
    pub fn at_point(&self, axis: SweepAxis, value: usize) -> Self {
        let mut c = self.clone();
        match axis {
            SweepAxis::K => c.model.iterations = value,
            SweepAxis::N => c.ensemble.n = value,
            SweepAxis::H => c.model.hidden = value,
            SweepAxis::None => {}
        }
        c.sweep = SweepConfig {
            axis: SweepAxis::None,
            values: Vec::new(),
        };
        c
    }
}

fn merge(base: &mut toml::Table, overlay: toml::Table) {
    for (k, v) in overlay {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// JSON-schema mirror of [`ExperimentConfig`].
pub const SCHEMA: &str = include_str!("../schema/experiment.schema.json");

/// Label used in file names and CSV rows for a trained model.
pub fn model_label(kind: ModelKind, features: Option<InputFeatures>) -> String {
    match features {
        Some(f) => format!("{}-{}", kind.name(), f.label()),
        None => kind.name().to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles_validate() {
        ExperimentConfig::profile(Profile::Desk).validate().unwrap();
        let paper = ExperimentConfig::profile(Profile::Paper);
        paper.validate().unwrap();
        assert_eq!((paper.ensemble.m, paper.ensemble.n, paper.ensemble.s), (250, 1000, 50.0));
        assert_eq!((paper.model.iterations, paper.model.hidden), (16, 128));
    }

    #[test]
    fn overlay_replaces_only_given_keys() {
        let cfg = ExperimentConfig::from_toml(Profile::Desk, "[ensemble]\nm = 40\n").unwrap();
        assert_eq!(cfg.ensemble.m, 40);
        assert_eq!(cfg.ensemble.n, 200);
    }

    #[test]
    fn overlay_can_switch_profile() {
        let cfg = ExperimentConfig::from_toml(Profile::Desk, "profile = \"paper\"\n").unwrap();
        assert_eq!(cfg.ensemble.n, 1000);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml(Profile::Desk, "bogus = 1\n").is_err());
        assert!(ExperimentConfig::from_toml(Profile::Desk, "[ensemble]\nmm = 1\n").is_err());
    }

    #[test]
    fn sparsity_above_n_is_rejected() {
        let err = ExperimentConfig::from_toml(Profile::Desk, "[ensemble]\ns = 500.0\n").unwrap_err();
        assert!(format!("{err:#}").contains("S <= N"));
    }

    fn assert_mirrors(schema: &serde_json::Value, value: &serde_json::Value, path: &str) {
        let serde_json::Value::Object(fields) = value else { return };
        assert_eq!(schema["additionalProperties"], false, "{path} admits unknown keys");
        let props = schema["properties"].as_object().unwrap_or_else(|| panic!("{path} has no properties"));
        let mut a: Vec<&String> = props.keys().collect();
        let mut b: Vec<&String> = fields.keys().collect();
        a.sort();
        b.sort();
        assert_eq!(a, b, "keys differ at {path}");
        for (k, v) in fields {
            assert_mirrors(&props[k], v, &format!("{path}.{k}"));
        }
    }

    #[test]
    fn schema_mirrors_config_structure() {
        let schema: serde_json::Value = serde_json::from_str(SCHEMA).unwrap();
        for p in [Profile::Desk, Profile::Paper] {
            let v = serde_json::to_value(ExperimentConfig::profile(p)).unwrap();
            assert_mirrors(&schema, &v, "$");
        }
    }

    #[test]
    fn n_sweep_keeps_measurements_and_sparsity() {
        let paper = ExperimentConfig::profile(Profile::Paper);
        for n in [500, 1000, 1500, 2000] {
            let p = paper.at_point(SweepAxis::N, n);
            assert_eq!((p.ensemble.m, p.ensemble.n, p.ensemble.s), (250, n, 50.0));
            assert_eq!(p.sweep.axis, SweepAxis::None);
        }
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::profile(Profile::Desk);
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.out_dir = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.seeds = vec![7];
        assert_ne!(a.hash(), b.hash());
    }
}

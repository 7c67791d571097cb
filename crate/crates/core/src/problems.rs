//! Synthetic compressed-sensing instances: Gaussian measurement matrices with
//! unit-norm columns, Bernoulli-Gaussian sparse targets, and additive white
//! Gaussian noise at a prescribed SNR.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::container::{tensor_checksum, Container};
use crate::error::{shape_err, Error, Result};
use crate::numerics::Tensor;
use crate::rng::{derive_seed, stream_rng, TAG_NOISE, TAG_PHI, TAG_TEST};

/// Size of the held-out evaluation set.
pub const DEFAULT_TEST_SIZE: usize = 10_000;

/// Tolerance on the unit column norms of a measurement matrix.
pub const COLUMN_NORM_TOL: f64 = 1e-12;

/// Measurement matrix plus the distribution its targets are drawn from.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemEnsemble {
    pub phi: Tensor,
    pub n: usize,
    pub m: usize,
    /// Expected sparsity; each entry is nonzero with probability `s / n`.
    pub s: f64,
    /// `None` means noiseless observations.
    pub snr_db: Option<f64>,
    pub seed: u64,
}

/// Targets and their observations, one sample per row.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    /// `B x N`
    pub x: Tensor,
    /// `B x M`
    pub y: Tensor,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn slice(&self, start: usize, end: usize) -> Batch {
        Batch {
            x: self.x.slice_rows(start, end),
            y: self.y.slice_rows(start, end),
        }
    }
}

/// Dataset header stored alongside the tensors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub m: usize,
    pub n: usize,
    pub s: f64,
    pub snr_db: Option<f64>,
    pub seed: u64,
    pub test_seed: u64,
    pub test_size: usize,
    pub phi_checksum: String,
}

/// Gaussian `M x N` matrix with every column rescaled to unit l2 norm.
pub fn gen_measurement_matrix(m: usize, n: usize, seed: u64) -> Result<Tensor> {
    if m == 0 || m > n {
        return Err(Error::Config(format!("need 1 <= M <= N, got M={m}, N={n}")));
    }
    let mut rng = stream_rng(seed, 0);
    let data: Vec<f64> = (0..m * n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut phi = Tensor::matrix(m, n, data)?;
    let norms = phi.column_norms();
    for i in 0..m {
        for (v, nrm) in phi.row_mut(i).iter_mut().zip(&norms) {
            *v /= nrm;
        }
    }
    Ok(phi)
}

/// `B x N` Bernoulli-Gaussian targets: support with probability `s / n`,
/// standard normal amplitudes. Row `i` draws from stream `i` of `seed`.
pub fn gen_sparse_batch(n: usize, s: f64, b: usize, seed: u64) -> Result<Tensor> {
    if !(s > 0.0 && s <= n as f64) {
        return Err(Error::Config(format!("need 0 < S <= N, got S={s}, N={n}")));
    }
    if b == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    let p = s / n as f64;
    let mut data = vec![0.0; b * n];
    data.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let mut rng = stream_rng(seed, i as u64);
        for v in row.iter_mut() {
            let on = rng.random::<f64>() < p;
            let amp: f64 = StandardNormal.sample(&mut rng);
            if on {
                *v = amp;
            }
        }
    });
    Tensor::matrix(b, n, data)
}

/// Add white Gaussian noise with variance
/// `mean_i ||y_i||^2 / (M * 10^(snr_db / 10))`.
pub fn add_noise(y_clean: &Tensor, snr_db: f64, seed: u64) -> Result<Tensor> {
    let (b, m) = y_clean.dims();
    let energy = y_clean.squared_norm() / b as f64;
    if energy == 0.0 {
        return Err(Error::ZeroEnergy("SNR"));
    }
    if snr_db.is_infinite() && snr_db > 0.0 {
        return Ok(y_clean.as_matrix());
    }
    let sigma = (energy / (m as f64 * 10f64.powf(snr_db / 10.0))).sqrt();
    let mut out = y_clean.as_matrix();
    out.data_mut().par_chunks_mut(m).enumerate().for_each(|(i, row)| {
        let mut rng = stream_rng(seed, i as u64);
        for v in row.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v += sigma * z;
        }
    });
    Ok(out)
}

impl ProblemEnsemble {
    pub fn generate(m: usize, n: usize, s: f64, snr_db: Option<f64>, seed: u64) -> Result<Self> {
        if !(s > 0.0 && s <= n as f64) {
            return Err(Error::Config(format!("need 0 < S <= N, got S={s}, N={n}")));
        }
        let phi = gen_measurement_matrix(m, n, derive_seed(seed, &[TAG_PHI]))?;
        Ok(Self {
            phi,
            n,
            m,
            s,
            snr_db,
            seed,
        })
    }

    /// Rebuild an ensemble around an existing matrix (e.g. one read from disk).
    pub fn from_matrix(phi: Tensor, s: f64, snr_db: Option<f64>, seed: u64) -> Result<Self> {
        let (m, n) = phi.dims();
        check_unit_columns(&phi)?;
        if m > n {
            return Err(Error::Config(format!("need M <= N, got M={m}, N={n}")));
        }
        Ok(Self {
            phi,
            n,
            m,
            s,
            snr_db,
            seed,
        })
    }

    /// Noiseless observations `X Phi^T` for row-stacked targets.
    pub fn observe(&self, x: &Tensor) -> Result<Tensor> {
        if x.cols() != self.n {
            return shape_err(format!("targets have {} columns, N = {}", x.cols(), self.n));
        }
        x.matmul_nt(&self.phi)
    }

    /// Fresh batch drawn from this ensemble under `seed`.
    pub fn sample_batch(&self, b: usize, seed: u64) -> Result<Batch> {
        let x = gen_sparse_batch(self.n, self.s, b, seed)?;
        self.batch_for(x, seed)
    }

    /// Observations for given targets, with this ensemble's noise model.
    pub fn batch_for(&self, x: Tensor, seed: u64) -> Result<Batch> {
        let clean = self.observe(&x)?;
        let y = match self.snr_db {
            Some(snr) => add_noise(&clean, snr, derive_seed(seed, &[TAG_NOISE]))?,
            None => clean,
        };
        Ok(Batch { x, y })
    }

    pub fn phi_checksum(&self) -> String {
        tensor_checksum(&self.phi)
    }
}

/// Evaluation set drawn once under `seed`; noise is fixed with it.
pub fn fixed_test_set(ensemble: &ProblemEnsemble, size: usize, seed: u64) -> Result<Batch> {
    if size == 0 {
        return Err(Error::Config("test set size must be at least 1".into()));
    }
    ensemble.sample_batch(size, derive_seed(seed, &[TAG_TEST]))
}

pub fn check_unit_columns(phi: &Tensor) -> Result<()> {
    for (j, nrm) in phi.column_norms().iter().enumerate() {
        if (nrm - 1.0).abs() > COLUMN_NORM_TOL {
            return Err(Error::Config(format!(
                "column {j} of the measurement matrix has norm {nrm}, expected 1"
            )));
        }
    }
    Ok(())
}

/// Persist an ensemble and its fixed test set.
pub fn save_dataset(
    path: impl AsRef<Path>,
    ensemble: &ProblemEnsemble,
    test: &Batch,
    test_seed: u64,
) -> Result<DatasetMeta> {
    let meta = DatasetMeta {
        m: ensemble.m,
        n: ensemble.n,
        s: ensemble.s,
        snr_db: ensemble.snr_db,
        seed: ensemble.seed,
        test_seed,
        test_size: test.len(),
        phi_checksum: ensemble.phi_checksum(),
    };
    Container::new("dataset", serde_json::to_value(&meta)?)
        .with_tensor("phi", ensemble.phi.clone())
        .with_tensor("x_test", test.x.clone())
        .with_tensor("y_test", test.y.clone())
        .save(path)?;
    Ok(meta)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<(ProblemEnsemble, Batch, DatasetMeta)> {
    let c = Container::load_kind(path, "dataset")?;
    let meta: DatasetMeta = serde_json::from_value(c.meta.clone())?;
    let phi = c.tensor("phi")?.clone();
    let ensemble = ProblemEnsemble::from_matrix(phi, meta.s, meta.snr_db, meta.seed)?;
    if ensemble.phi_checksum() != meta.phi_checksum {
        return Err(Error::Checksum {
            expected: meta.phi_checksum,
            found: ensemble.phi_checksum(),
        });
    }
    let test = Batch {
        x: c.tensor("x_test")?.clone(),
        y: c.tensor("y_test")?.clone(),
    };
    if test.x.cols() != meta.n || test.y.cols() != meta.m || test.x.rows() != test.y.rows() {
        return Err(Error::Container("test set shapes disagree with the header".into()));
    }
    Ok((ensemble, test, meta))
}

/// Number of nonzeros per row.
pub fn support_sizes(x: &Tensor) -> Vec<usize> {
    (0..x.rows())
        .map(|i| x.row(i).iter().filter(|v| **v != 0.0).count())
        .collect()
}

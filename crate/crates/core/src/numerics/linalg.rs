use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::tensor::{dot, l2, Tensor};
use crate::error::{shape_err, Error, Result};

/// Defaults for [`largest_eigenvalue`].
pub const POWER_TOL: f64 = 1e-8;
pub const POWER_MAX_ITER: usize = 10_000;
const POWER_SEED: u64 = 0x5eed_1a4b;

/// Largest eigenvalue of a symmetric positive semidefinite matrix by power
/// iteration from a fixed-seed Gaussian start vector.
///
/// Converged when the Rayleigh quotient changes by at most `tol` relative to
/// its magnitude between consecutive iterations.
pub fn largest_eigenvalue(a: &Tensor, tol: f64, max_iter: usize) -> Result<f64> {
    let (n, n2) = a.dims();
    if n != n2 {
        return shape_err(format!("largest_eigenvalue needs a square matrix, got {n}x{n2}"));
    }
    if n == 0 {
        return shape_err("largest_eigenvalue of an empty matrix");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(POWER_SEED);
    let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    normalize(&mut v);

    let mut av = vec![0.0; n];
    let mut estimate = f64::NAN;
    for _ in 0..max_iter {
        symv(a, &v, &mut av);
        let lambda = dot(&v, &av);
        let norm = l2(&av);
        if norm == 0.0 {
            // v lies in the null space; for a PSD matrix with a nonzero
            // eigenvalue this cannot persist, so the matrix is zero along v.
            return Ok(lambda.max(0.0));
        }
        if (lambda - estimate).abs() <= tol * lambda.abs() {
            return Ok(lambda);
        }
        estimate = lambda;
        v.iter_mut().zip(&av).for_each(|(vi, ai)| *vi = ai / norm);
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        estimate,
    })
}

/// Lipschitz constant of the LASSO data term, i.e. the largest eigenvalue of
/// `Phi^T Phi`. Computed on the `M x M` Gram matrix `Phi Phi^T`, which shares
/// its nonzero spectrum.
pub fn lipschitz_constant(phi: &Tensor) -> Result<f64> {
    let gram = phi.matmul_nt(phi)?;
    largest_eigenvalue(&gram, POWER_TOL, POWER_MAX_ITER)
}

fn symv(a: &Tensor, v: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o = dot(a.row(i), v);
    }
}

fn normalize(v: &mut [f64]) {
    let n = l2(v);
    v.iter_mut().for_each(|x| *x /= n);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_diagonal() {
        let l = largest_eigenvalue(&Tensor::eye(5), POWER_TOL, POWER_MAX_ITER).unwrap();
        assert!((l - 1.0).abs() < 1e-12);
        let l = largest_eigenvalue(&Tensor::diag(&[1.0, 4.0]), POWER_TOL, POWER_MAX_ITER).unwrap();
        assert!((l - 4.0).abs() < 1e-7);
    }

    #[test]
    fn zero_matrix_has_zero_eigenvalue() {
        let l = largest_eigenvalue(&Tensor::zeros(3, 3), POWER_TOL, POWER_MAX_ITER).unwrap();
        assert_eq!(l, 0.0);
    }

    #[test]
    fn non_convergence_reports_last_estimate() {
        // Equal-magnitude eigenvalues of opposite sign make the Rayleigh
        // quotient oscillate; one iteration is never enough anyway.
        let a = Tensor::diag(&[1.0, 2.0, 3.0]);
        match largest_eigenvalue(&a, 0.0, 1) {
            Err(Error::NoConvergence { iterations, estimate }) => {
                assert_eq!(iterations, 1);
                assert!(estimate.is_finite());
            }
            other => panic!("expected NoConvergence, got {other:?}"),
        }
    }

    #[test]
    fn rejects_non_square() {
        assert!(largest_eigenvalue(&Tensor::zeros(2, 3), 1e-8, 10).is_err());
    }
}

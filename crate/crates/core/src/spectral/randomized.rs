use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::condition::cond_estimate;
use super::eigen::symmetric_eigen;
use super::SymmetricMatrix;
use crate::error::{Error, Result};
use crate::rng;

const MIN_POWER_ITERS: usize = 1;
const MAX_POWER_ITERS: usize = 20;

/// Approximate leading eigenpairs from a randomized range finder.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ApproxSpectrum {
    /// Ascending among the returned pairs.
    pub eigenvalues: Vec<f64>,
    /// `n × k`, orthonormal columns.
    pub eigenvectors: DMatrix<f64>,
    /// `‖P·V − V·Λ‖_F` for the returned factors.
    pub residual_bound: f64,
    /// Sketch width `k + p` of the returned attempt.
    pub used_rank: usize,
    pub power_iterations: usize,
    /// Whether `residual_bound ≤ tol` was reached.
    pub converged: bool,
}

/// Power-iteration count `ceil(ln(1/tol)/ln κ)` clamped to `[1, 20]`.
pub fn power_iterations(tol: f64, kappa: f64) -> usize {
    let q = ((1.0 / tol).ln() / kappa.ln()).ceil();
    if q.is_nan() {
        return MAX_POWER_ITERS;
    }
    q.clamp(MIN_POWER_ITERS as f64, MAX_POWER_ITERS as f64) as usize
}

/// Randomized eigenpairs of largest magnitude.
///
/// Draws a Gaussian sketch of width `k + p`, applies `q` orthonormalized power
/// steps, solves the projected problem exactly and doubles `p` while the
/// residual exceeds `tol` and `k + p < n/2`. The best attempt is returned.
pub fn eig_randomized(
    p: &SymmetricMatrix,
    k: usize,
    oversampling: usize,
    tol: f64,
    seed: u64,
) -> Result<ApproxSpectrum> {
    let n = p.n();
    if k == 0 {
        return Err(Error::InvalidArgument("target rank k must be at least 1".into()));
    }
    if k + oversampling >= n {
        return Err(Error::InvalidArgument(format!(
            "k + p = {} must be smaller than n = {n}",
            k + oversampling
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tol must be positive".into()));
    }
    let q = power_iterations(tol, cond_estimate(p));

    let mut p_over = oversampling;
    let mut attempt = 0u64;
    let mut best = sketch_solve(p, k, p_over, q, rng::mix(seed, attempt))?;
    while best.residual_bound > tol && ((k + p_over) as f64) < n as f64 / 2.0 {
        p_over = (2 * p_over).max(1);
        if k + p_over >= n {
            break;
        }
        attempt += 1;
        let next = sketch_solve(p, k, p_over, q, rng::mix(seed, attempt))?;
        if next.residual_bound <= best.residual_bound {
            best = next;
        }
    }
    best.converged = best.residual_bound <= tol;
    Ok(best)
}

fn sketch_solve(p: &SymmetricMatrix, k: usize, oversampling: usize, q: usize, seed: u64) -> Result<ApproxSpectrum> {
    let a = p.as_matrix();
    let n = a.nrows();
    let width = k + oversampling;
    let mut draws = rng::keyed(seed, 0);
    let omega = DMatrix::from_fn(n, width, |_, _| draws.sample::<f64, _>(rand_distr::StandardNormal));

    let mut basis = orthonormalize(&(a * &omega), &omega);
    for _ in 1..q {
        basis = orthonormalize(&(a * &basis), &basis);
    }

    let projected = SymmetricMatrix::symmetrized(basis.transpose() * a * &basis);
    let (small_values, small_vectors) = symmetric_eigen(&projected)?;
    let ritz_vectors = &basis * small_vectors;

    let mut order: Vec<usize> = (0..width).collect();
    order.sort_by(|&i, &j| small_values[j].abs().total_cmp(&small_values[i].abs()));
    let mut keep: Vec<usize> = order.into_iter().take(k).collect();
    keep.sort_by(|&i, &j| small_values[i].total_cmp(&small_values[j]));

    let eigenvalues: Vec<f64> = keep.iter().map(|&i| small_values[i]).collect();
    let eigenvectors = DMatrix::from_fn(n, k, |r, c| ritz_vectors[(r, keep[c])]);
    let scaled = DMatrix::from_fn(n, k, |r, c| eigenvectors[(r, c)] * eigenvalues[c]);
    let residual_bound = (a * &eigenvectors - scaled).norm();

    Ok(ApproxSpectrum {
        eigenvalues,
        eigenvectors,
        residual_bound,
        used_rank: width,
        power_iterations: q,
        converged: false,
    })
}

/// Orthonormal basis for the columns of `y`; falls back to `fallback` columns
/// where `y` has lost rank (e.g. `P = 0`).
fn orthonormalize(y: &DMatrix<f64>, fallback: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, m) = y.shape();
    let scale = y.norm().max(f64::MIN_POSITIVE);
    let mut q = DMatrix::<f64>::zeros(n, m);
    let mut filled = 0;
    let candidates = y.column_iter().map(|c| (c.into_owned(), scale)).chain(
        fallback
            .column_iter()
            .map(|c| (c.into_owned(), fallback.norm().max(f64::MIN_POSITIVE))),
    );
    for (mut v, ref_scale) in candidates {
        if filled == m {
            break;
        }
        // Two passes of Gram-Schmidt.
        for _ in 0..2 {
            for j in 0..filled {
                let qj = q.column(j);
                let proj = qj.dot(&v);
                v.axpy(-proj, &qj, 1.0);
            }
        }
        let norm = v.norm();
        if norm > 1e-10 * ref_scale {
            q.set_column(filled, &(v / norm));
            filled += 1;
        }
    }
    // Unit vectors complete the basis if both sources were degenerate.
    let mut e = 0;
    while filled < m && e < n {
        let mut v = nalgebra::DVector::<f64>::zeros(n);
        v[e] = 1.0;
        for _ in 0..2 {
            for j in 0..filled {
                let qj = q.column(j);
                let proj = qj.dot(&v);
                v.axpy(-proj, &qj, 1.0);
            }
        }
        let norm = v.norm();
        if norm > 1e-8 {
            q.set_column(filled, &(v / norm));
            filled += 1;
        }
        e += 1;
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::symmetric_eigenvalues;
    use nalgebra::DVector;

    #[test]
    fn q_is_clamped() {
        assert_eq!(power_iterations(1e-8, 1.0), MAX_POWER_ITERS);
        assert_eq!(power_iterations(1e-8, f64::INFINITY), MIN_POWER_ITERS);
        assert_eq!(power_iterations(1e-8, 1e12), 1);
        assert_eq!(power_iterations(1e-8, 20.0), 7);
        assert_eq!(power_iterations(1e-8, 1.0001), MAX_POWER_ITERS);
    }

    #[test]
    fn rank_two_is_recovered() {
        let n = 20;
        let mut u = DVector::<f64>::zeros(n);
        let mut v = DVector::<f64>::zeros(n);
        for i in 0..n {
            u[i] = ((i + 1) as f64).sin();
            v[i] = ((i + 1) as f64 * 0.7).cos();
        }
        u /= u.norm();
        let proj = u.dot(&v);
        v.axpy(-proj, &u, 1.0);
        v /= v.norm();
        let p = SymmetricMatrix::new(&u * u.transpose() * 5.0 + &v * v.transpose() * 3.0).unwrap();
        let approx = eig_randomized(&p, 2, 4, 1e-8, 1).unwrap();
        assert!((approx.eigenvalues[0] - 3.0).abs() < 1e-10);
        assert!((approx.eigenvalues[1] - 5.0).abs() < 1e-10);
        assert!(approx.residual_bound <= 1e-8);
        assert!(approx.converged);
    }

    #[test]
    fn zero_matrix() {
        let approx = eig_randomized(&SymmetricMatrix::zeros(10), 3, 2, 1e-8, 5).unwrap();
        assert!(approx.eigenvalues.iter().all(|&v| v == 0.0));
        assert_eq!(approx.residual_bound, 0.0);
        let orth = (approx.eigenvectors.transpose() * &approx.eigenvectors - DMatrix::identity(3, 3)).norm();
        assert!(orth < 1e-12);
    }

    #[test]
    fn rejects_oversized_sketch() {
        let p = SymmetricMatrix::identity(5);
        assert!(eig_randomized(&p, 3, 2, 1e-8, 0).is_err());
        assert!(eig_randomized(&p, 0, 2, 1e-8, 0).is_err());
    }

    #[test]
    fn random_matrix_ritz_values_are_near_true_eigenvalues() {
        let mut r = crate::rng::keyed(17, 0);
        let n = 50;
        let a = DMatrix::from_fn(n, n, |_, _| r.random_range(-1.0..1.0));
        let p = SymmetricMatrix::new(a).unwrap();
        let exact = symmetric_eigenvalues(&p).unwrap();
        let approx = eig_randomized(&p, 5, 5, 1e-8, 3).unwrap();
        let orth = (approx.eigenvectors.transpose() * &approx.eigenvectors - DMatrix::identity(5, 5)).norm();
        assert!(orth < 1e-8);
        for lam in &approx.eigenvalues {
            let dist = exact.iter().map(|e| (e - lam).abs()).fold(f64::INFINITY, f64::min);
            assert!(dist <= approx.residual_bound);
        }
    }
}

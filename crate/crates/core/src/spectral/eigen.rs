use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::condition::cond_estimate;
use super::jacobi::jacobi_eigen;
use super::randomized::eig_randomized;
use super::SymmetricMatrix;
use crate::error::{Error, Result};

/// Condition estimate below which the standard dense solver is used.
pub const STANDARD_TIER_MAX_COND: f64 = 1e8;
/// Condition estimate below which the high-accuracy solver is used.
pub const ENHANCED_TIER_MAX_COND: f64 = 1e12;
/// Orthogonality error allowed for a reliable decomposition.
pub const ORTHOGONALITY_TOL: f64 = 1e-8;

const TAU_FLOOR: f64 = 1e-14;
const QR_MAX_ITER: usize = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrecisionTier {
    Standard,
    Enhanced,
    Regularized,
    Randomized,
}

/// Eigendecomposition with the diagnostics used to decide how far to trust it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralDecomposition {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Columns match `eigenvalues`.
    pub eigenvectors: DMatrix<f64>,
    /// Distance from each eigenvalue to its nearest neighbour.
    pub gaps: Vec<f64>,
    pub precision_tier: PrecisionTier,
    pub condition_estimate: f64,
    /// Selected tolerance `max(ε·κ, 1e-14)`.
    pub tau: f64,
    /// `‖P − VΛVᵀ‖_F / ‖P‖_F`.
    pub reconstruction_error: f64,
    /// `‖VᵀV − I‖_F`.
    pub orthogonality_error: f64,
    pub low_confidence: Vec<bool>,
    pub reliable: bool,
}

impl SpectralDecomposition {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn min_gap(&self) -> f64 {
        self.gaps.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Distances to the nearest neighbour in an ascending spectrum.
pub fn spectral_gaps(sorted: &[f64]) -> Vec<f64> {
    let n = sorted.len();
    (0..n)
        .map(|i| {
            let left = if i > 0 { sorted[i] - sorted[i - 1] } else { f64::INFINITY };
            let right = if i + 1 < n { sorted[i + 1] - sorted[i] } else { f64::INFINITY };
            left.min(right)
        })
        .collect()
}

/// Smallest nearest-neighbour distance of an ascending spectrum.
pub fn min_gap(sorted: &[f64]) -> f64 {
    sorted
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min)
}

/// Sorts eigenpairs ascending. The sort is stable, so ties keep solver order.
pub(crate) fn sort_pairs(values: Vec<f64>, vectors: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let sorted_values = order.iter().map(|&i| values[i]).collect();
    let sorted_vectors = DMatrix::from_fn(vectors.nrows(), order.len(), |r, c| vectors[(r, order[c])]);
    (sorted_values, sorted_vectors)
}

/// Standard dense symmetric solver (Householder tridiagonalization + implicit QR).
///
/// Returns ascending eigenvalues and eigenvectors, or an error if the solver
/// produced non-finite output.
pub fn symmetric_eigen(p: &SymmetricMatrix) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let eig = SymmetricEigen::try_new(p.as_matrix().clone(), f64::EPSILON, QR_MAX_ITER).ok_or_else(
        || Error::SolverFailure { diagnostics: "symmetric QR iteration did not converge".into() },
    )?;
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) || eig.eigenvectors.iter().any(|v| !v.is_finite()) {
        return Err(Error::SolverFailure { diagnostics: "non-finite eigenpairs".into() });
    }
    Ok(sort_pairs(eig.eigenvalues.iter().copied().collect(), &eig.eigenvectors))
}

/// Ascending eigenvalues only.
pub fn symmetric_eigenvalues(p: &SymmetricMatrix) -> Result<Vec<f64>> {
    let mut values: Vec<f64> = p.as_matrix().clone().symmetric_eigenvalues().iter().copied().collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::SolverFailure { diagnostics: "non-finite eigenvalues".into() });
    }
    values.sort_by(f64::total_cmp);
    Ok(values)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Eigendecomposition with solver selection by condition estimate.
///
/// Tiers: `κ < 1e8` standard solver, `κ < 1e12` Jacobi, otherwise Jacobi on
/// `P − median(diag P)·I` with the shift added back. A reconstruction error
/// above `100τ` triggers the randomized fallback, which is never reliable.
/// Eigenvalues with gap below `100τ`, or with `|λ|/data_sigma < 1` when
/// `data_sigma > 0`, are flagged low-confidence.
pub fn eig_adaptive(p: &SymmetricMatrix, data_sigma: f64) -> Result<SpectralDecomposition> {
    if p.as_matrix().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix passed to eig_adaptive"));
    }
    if !(data_sigma >= 0.0) {
        return Err(Error::InvalidArgument("data_sigma must be nonnegative".into()));
    }
    let kappa = cond_estimate(p);
    let tau = (f64::EPSILON * kappa).max(TAU_FLOOR);

    let (tier, values, vectors) = if kappa < STANDARD_TIER_MAX_COND {
        let (v, w) = symmetric_eigen(p)?;
        (PrecisionTier::Standard, v, w)
    } else if kappa < ENHANCED_TIER_MAX_COND {
        let (v, w) = jacobi_eigen(p.as_matrix())?;
        let (v, w) = sort_pairs(v, &w);
        (PrecisionTier::Enhanced, v, w)
    } else {
        let mut diag: Vec<f64> = p.as_matrix().diagonal().iter().copied().collect();
        let shift = median(&mut diag);
        let (v, w) = jacobi_eigen(p.shifted(-shift).as_matrix())?;
        let v = v.into_iter().map(|x| x + shift).collect();
        let (v, w) = sort_pairs(v, &w);
        (PrecisionTier::Regularized, v, w)
    };

    let decomp = assess(p, values, vectors, tier, kappa, tau, data_sigma);
    if decomp.reconstruction_error > 100.0 * tau || !decomp.reconstruction_error.is_finite() {
        return randomized_fallback(p, kappa, tau, data_sigma, &decomp);
    }
    Ok(decomp)
}

/// Builds the decomposition record and its validation metrics.
pub(crate) fn assess(
    p: &SymmetricMatrix,
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<f64>,
    precision_tier: PrecisionTier,
    condition_estimate: f64,
    tau: f64,
    data_sigma: f64,
) -> SpectralDecomposition {
    let a = p.as_matrix();
    let k = eigenvalues.len();
    let scaled = DMatrix::from_fn(eigenvectors.nrows(), k, |r, c| eigenvectors[(r, c)] * eigenvalues[c]);
    let residual = a - &scaled * eigenvectors.transpose();
    let p_norm = a.norm();
    let reconstruction_error = if p_norm > 0.0 {
        residual.norm() / p_norm
    } else {
        residual.norm()
    };
    let orthogonality_error = (eigenvectors.transpose() * &eigenvectors - DMatrix::identity(k, k)).norm();
    let gaps = spectral_gaps(&eigenvalues);
    let low_confidence = eigenvalues
        .iter()
        .zip(&gaps)
        .map(|(lambda, gap)| *gap < 100.0 * tau || (data_sigma > 0.0 && lambda.abs() / data_sigma < 1.0))
        .collect();
    let reliable = precision_tier != PrecisionTier::Randomized
        && reconstruction_error <= 100.0 * tau
        && orthogonality_error <= ORTHOGONALITY_TOL;
    SpectralDecomposition {
        eigenvalues,
        eigenvectors,
        gaps,
        precision_tier,
        condition_estimate,
        tau,
        reconstruction_error,
        orthogonality_error,
        low_confidence,
        reliable,
    }
}

/// Randomized approximation of `n − 2` eigenpairs, flagged unreliable.
pub(crate) fn randomized_fallback(
    p: &SymmetricMatrix,
    kappa: f64,
    tau: f64,
    data_sigma: f64,
    failed: &SpectralDecomposition,
) -> Result<SpectralDecomposition> {
    let n = p.n();
    if n < 3 {
        return Err(Error::SolverFailure {
            diagnostics: format!(
                "{:?} tier reconstruction error {:e} exceeds 100τ = {:e}; randomized fallback needs n ≥ 3",
                failed.precision_tier,
                failed.reconstruction_error,
                100.0 * tau
            ),
        });
    }
    let approx = eig_randomized(p, n - 2, 1, 100.0 * tau, 0)?;
    let mut decomp = assess(
        p,
        approx.eigenvalues,
        approx.eigenvectors,
        PrecisionTier::Randomized,
        kappa,
        tau,
        data_sigma,
    );
    decomp.reliable = false;
    Ok(decomp)
}

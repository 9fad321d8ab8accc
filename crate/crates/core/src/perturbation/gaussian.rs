use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{ParametricModel, SpectralDecomposition, SymmetricMatrix};

/// Tolerance on the most negative covariance eigenvalue.
pub const PSD_TOL: f64 = 1e-10;

/// First-order eigenvalue sensitivities `s[i][m] = v_iᵀ B_m v_i`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SensitivityTable {
    /// `n × M`.
    pub first_order: DMatrix<f64>,
    /// Rows taken from low-confidence eigenvalues.
    pub unreliable_rows: Vec<bool>,
}

impl SensitivityTable {
    pub fn row(&self, i: usize) -> Vec<f64> {
        self.first_order.row(i).iter().copied().collect()
    }
}

/// Mean and variance of each eigenvalue under Gaussian latent corrections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenvalueMoments {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    /// Denominator floor used in the curvature terms.
    pub gap_floor: f64,
}

/// Diagonal of `Vᵀ B V`, i.e. `v_iᵀ B v_i` for every column of `V`.
pub fn diagonal_quadratic_forms(vectors: &DMatrix<f64>, b: &SymmetricMatrix) -> Vec<f64> {
    let bv = b.as_matrix() * vectors;
    (0..vectors.ncols())
        .map(|i| vectors.column(i).dot(&bv.column(i)))
        .collect()
}

/// Hellmann–Feynman sensitivities of each eigenvalue to each latent correction.
pub fn sensitivities(decomp: &SpectralDecomposition, model: &ParametricModel) -> Result<SensitivityTable> {
    if !decomp.reliable {
        return Err(Error::Unreliable(
            "first-order sensitivities need a reliable decomposition; use propagate_adaptive \
             to handle degenerate or ill-conditioned spectra"
                .into(),
        ));
    }
    if decomp.eigenvectors.nrows() != model.n() {
        return Err(Error::DimensionMismatch {
            expected: model.n(),
            got: decomp.eigenvectors.nrows(),
            context: "decomposition dimension",
        });
    }
    let n = decomp.n();
    let mut first_order = DMatrix::zeros(n, model.n_latent());
    for (m, b) in model.corrections.iter().enumerate() {
        for (i, s) in diagonal_quadratic_forms(&decomp.eigenvectors, b).into_iter().enumerate() {
            first_order[(i, m)] = s;
        }
    }
    Ok(SensitivityTable { first_order, unreliable_rows: decomp.low_confidence.clone() })
}

/// `max(delta, C_α·N^{-1/3})`.
pub fn effective_gap(delta: f64, n_data: usize, c_alpha: f64) -> f64 {
    delta.max(gap_floor(n_data, c_alpha))
}

/// `α_N = C_α·N^{-1/3}`.
pub fn gap_floor(n_data: usize, c_alpha: f64) -> f64 {
    c_alpha * (n_data as f64).powf(-1.0 / 3.0)
}

/// First-order bound `‖θ‖·max_k‖B_k‖ / δ_ext` on the Grassmannian distance
/// between a cluster's perturbed and unperturbed invariant subspaces.
pub fn subspace_bound(cluster_external_gap: f64, theta_norm: f64, max_coupling_norm: f64) -> Result<f64> {
    if !(cluster_external_gap > 0.0) {
        return Err(Error::InvalidArgument(
            "subspace bound is undefined for a zero external gap".into(),
        ));
    }
    Ok(theta_norm * max_coupling_norm / cluster_external_gap)
}

pub(crate) fn check_covariance(cov_w: &DMatrix<f64>, m: usize) -> Result<()> {
    if cov_w.nrows() != m || cov_w.ncols() != m {
        return Err(Error::DimensionMismatch { expected: m, got: cov_w.nrows(), context: "covariance" });
    }
    if cov_w.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("covariance"));
    }
    let asym = (cov_w - cov_w.transpose()).amax();
    if asym > PSD_TOL * cov_w.amax().max(1.0) {
        return Err(Error::InvalidArgument(format!("covariance is not symmetric (max |Δ| = {asym:e})")));
    }
    let min_eig = cov_w
        .clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if min_eig < -PSD_TOL {
        return Err(Error::NotPositiveSemidefinite { min_eigenvalue: min_eig });
    }
    Ok(())
}

/// Per-correction coupling blocks `C_m = Vᵀ B_m V`.
pub(crate) fn coupling_blocks(decomp: &SpectralDecomposition, model: &ParametricModel) -> Vec<DMatrix<f64>> {
    let v = &decomp.eigenvectors;
    model
        .corrections
        .iter()
        .map(|b| v.transpose() * (b.as_matrix() * v))
        .collect()
}

/// Mean and variance of eigenvalue `i` to second order, with curvature
/// denominators `sign(λ_i − λ_j)·max(|λ_i − λ_j|, floor)`.
pub(crate) fn second_order_moments(
    decomp: &SpectralDecomposition,
    blocks: &[DMatrix<f64>],
    mean_w: &DVector<f64>,
    cov_w: &DMatrix<f64>,
    i: usize,
    floor: f64,
) -> (f64, f64) {
    let m = blocks.len();
    let lambda = &decomp.eigenvalues;
    let s = DVector::from_fn(m, |k, _| blocks[k][(i, i)]);

    let mut h = DMatrix::<f64>::zeros(m, m);
    for j in 0..lambda.len() {
        if j == i {
            continue;
        }
        let diff = lambda[i] - lambda[j];
        // Exact ties take the sign implied by the ascending index order.
        let sign = if diff > 0.0 || (diff == 0.0 && j < i) { 1.0 } else { -1.0 };
        let denom = sign * diff.abs().max(floor);
        for k in 0..m {
            let cik = blocks[k][(i, j)];
            if cik == 0.0 {
                continue;
            }
            for l in 0..m {
                h[(k, l)] += 2.0 * cik * blocks[l][(j, i)] / denom;
            }
        }
    }

    let h_cov = &h * cov_w;
    let mean = lambda[i] + s.dot(mean_w) + 0.5 * h_cov.trace();
    let variance = (s.transpose() * cov_w * &s)[(0, 0)] + 0.5 * (&h_cov * &h_cov).trace();
    (mean, variance.max(0.0))
}

/// Second-order propagation of `w ~ N(mean_w, cov_w)` through every eigenvalue,
/// with denominators floored at `α_N = C_α·N^{-1/3}`.
pub fn propagate_gaussian(
    decomp: &SpectralDecomposition,
    model: &ParametricModel,
    mean_w: &[f64],
    cov_w: &DMatrix<f64>,
    n_data: usize,
    c_alpha: f64,
) -> Result<EigenvalueMoments> {
    let m = model.n_latent();
    if mean_w.len() != m {
        return Err(Error::DimensionMismatch { expected: m, got: mean_w.len(), context: "mean_w" });
    }
    check_covariance(cov_w, m)?;
    if decomp.eigenvectors.nrows() != model.n() || decomp.n() != model.n() {
        return Err(Error::Unreliable("propagation needs a full decomposition".into()));
    }
    let floor = gap_floor(n_data, c_alpha);
    let blocks = coupling_blocks(decomp, model);
    let mean_w = DVector::from_column_slice(mean_w);
    let (mean, variance) = (0..decomp.n())
        .map(|i| second_order_moments(decomp, &blocks, &mean_w, cov_w, i, floor))
        .unzip();
    Ok(EigenvalueMoments { mean, variance, gap_floor: floor })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::eig_adaptive;

    fn diag_model() -> ParametricModel {
        ParametricModel::new(
            SymmetricMatrix::from_diagonal(&[0.0, 1.0]).unwrap(),
            vec![],
            vec![SymmetricMatrix::from_diagonal(&[1.0, 2.0]).unwrap()],
        )
        .unwrap()
    }

    fn offdiag_model() -> ParametricModel {
        ParametricModel::new(
            SymmetricMatrix::from_diagonal(&[0.0, 1.0]).unwrap(),
            vec![],
            vec![SymmetricMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap()],
        )
        .unwrap()
    }

    #[test]
    fn identity_correction_gives_unit_sensitivity() {
        let model = ParametricModel::new(
            SymmetricMatrix::from_diagonal(&[0.3, 1.0, 2.5]).unwrap(),
            vec![],
            vec![SymmetricMatrix::identity(3)],
        )
        .unwrap();
        let d = eig_adaptive(&model.base, 0.0).unwrap();
        let t = sensitivities(&d, &model).unwrap();
        for i in 0..3 {
            assert!((t.first_order[(i, 0)] - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn diagonal_sensitivities() {
        let model = diag_model();
        let d = eig_adaptive(&model.base, 0.0).unwrap();
        let t = sensitivities(&d, &model).unwrap();
        assert_eq!(t.first_order.shape(), (2, 1));
        assert!((t.first_order[(0, 0)] - 1.0).abs() < 1e-14);
        assert!((t.first_order[(1, 0)] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn unreliable_decomposition_is_refused() {
        let model = diag_model();
        let mut d = eig_adaptive(&model.base, 0.0).unwrap();
        d.reliable = false;
        assert!(matches!(sensitivities(&d, &model), Err(Error::Unreliable(_))));
    }

    #[test]
    fn effective_gap_examples() {
        assert!((effective_gap(1e-8, 1000, 1.0) - 0.1).abs() < 1e-15);
        assert_eq!(effective_gap(0.5, 1000, 1.0), 0.5);
        assert_eq!(effective_gap(0.0, 1, 1.0), 1.0);
    }

    #[test]
    fn subspace_bound_examples() {
        assert_eq!(subspace_bound(0.5, 0.0, 2.0).unwrap(), 0.0);
        assert!((subspace_bound(0.5, 0.1, 2.0).unwrap() - 0.4).abs() < 1e-15);
        assert!(subspace_bound(0.0, 0.1, 2.0).is_err());
    }

    #[test]
    fn commuting_diagonal_case_is_exact() {
        let model = diag_model();
        let d = eig_adaptive(&model.base, 0.0).unwrap();
        let sigma2 = 0.01;
        let cov = DMatrix::from_element(1, 1, sigma2);
        let r = propagate_gaussian(&d, &model, &[0.0], &cov, 1000, 1.0).unwrap();
        assert!((r.variance[0] - sigma2).abs() < 1e-15);
        assert!((r.variance[1] - 4.0 * sigma2).abs() < 1e-15);
        assert!(r.mean[0].abs() < 1e-15 && (r.mean[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn offdiagonal_second_order_terms() {
        let model = offdiag_model();
        let d = eig_adaptive(&model.base, 0.0).unwrap();
        let sigma: f64 = 0.05;
        let cov = DMatrix::from_element(1, 1, sigma * sigma);
        // Gap 1 ≫ α_N, so the floor is inactive.
        let r = propagate_gaussian(&d, &model, &[0.0], &cov, 1_000_000, 1.0).unwrap();
        assert!((r.mean[0] + sigma.powi(2)).abs() < 1e-15);
        assert!((r.variance[0] - 2.0 * sigma.powi(4)).abs() < 1e-18);
        assert!((r.mean[1] - 1.0 - sigma.powi(2)).abs() < 1e-15);
    }

    #[test]
    fn zero_covariance() {
        let model = offdiag_model();
        let d = eig_adaptive(&model.base, 0.0).unwrap();
        let r = propagate_gaussian(&d, &model, &[0.0], &DMatrix::zeros(1, 1), 10, 1.0).unwrap();
        assert_eq!(r.variance, vec![0.0, 0.0]);
        assert!((r.mean[0] - d.eigenvalues[0]).abs() < 1e-15);
    }

    #[test]
    fn rejects_indefinite_covariance() {
        let model = diag_model();
        let d = eig_adaptive(&model.base, 0.0).unwrap();
        let cov = DMatrix::from_element(1, 1, -1e-6);
        assert!(matches!(
            propagate_gaussian(&d, &model, &[0.0], &cov, 10, 1.0),
            Err(Error::NotPositiveSemidefinite { .. })
        ));
    }

    #[test]
    fn degenerate_denominators_are_floored() {
        // Exactly degenerate base: the floor keeps the curvature finite.
        let model = ParametricModel::new(
            SymmetricMatrix::identity(2),
            vec![],
            vec![SymmetricMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap()],
        )
        .unwrap();
        let d = eig_adaptive(&model.base, 0.0).unwrap();
        let cov = DMatrix::from_element(1, 1, 1e-4);
        let r = propagate_gaussian(&d, &model, &[0.0], &cov, 1000, 1.0).unwrap();
        assert!(r.variance.iter().all(|v| v.is_finite()));
        assert!((r.gap_floor - 0.1).abs() < 1e-15);
    }
}

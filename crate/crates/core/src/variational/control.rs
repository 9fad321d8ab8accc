use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ridge penalty used when the centered design is rank deficient.
pub const RIDGE_PENALTY: f64 = 1e-8;
const RANK_TOL: f64 = 1e-10;

/// Least-squares control variate `b = Σ α_j φ_j + β`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvFit {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    /// `1 − Var[f − b] / Var[f]`; 1 when `Var[f] = 0`.
    pub variance_reduction: f64,
    pub ridge_fallback: bool,
}

impl CvFit {
    pub fn predict(&self, features: impl IntoIterator<Item = f64>) -> f64 {
        self.intercept + self.coefficients.iter().zip(features).map(|(a, f)| a * f).sum::<f64>()
    }
}

fn variance(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    values.map(|v| (v - mean).powi(2)).sum::<f64>() / n
}

/// Fits `f ≈ Fα + β` over `S` samples with `p` features (`S > p + 1`).
pub fn cv_fit(f: &[f64], features: &DMatrix<f64>) -> Result<CvFit> {
    let (s, p) = features.shape();
    if f.len() != s {
        return Err(Error::DimensionMismatch { expected: s, got: f.len(), context: "cv_fit f" });
    }
    if s <= p + 1 {
        return Err(Error::InvalidArgument(format!("cv_fit needs S > p + 1 (S = {s}, p = {p})")));
    }
    if f.iter().chain(features.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("control variate inputs"));
    }
    let f_mean = f.iter().sum::<f64>() / s as f64;
    let col_mean = DVector::from_fn(p, |j, _| features.column(j).mean());
    let centered = DMatrix::from_fn(s, p, |k, j| features[(k, j)] - col_mean[j]);
    let target = DVector::from_fn(s, |k, _| f[k] - f_mean);

    let f_var = variance(f.iter().copied());
    if f_var == 0.0 {
        return Ok(CvFit { coefficients: vec![0.0; p], intercept: f_mean, variance_reduction: 1.0, ridge_fallback: false });
    }

    let svd = centered.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let rank_deficient = p > 0 && (smax == 0.0 || smin <= RANK_TOL * smax);
    let gram = centered.transpose() * &centered;
    let rhs = centered.transpose() * &target;
    let alpha = if p == 0 {
        DVector::zeros(0)
    } else if rank_deficient {
        let ridge = gram + DMatrix::identity(p, p) * RIDGE_PENALTY;
        ridge.cholesky().map(|c| c.solve(&rhs)).unwrap_or_else(|| DVector::zeros(p))
    } else {
        svd.solve(&target, 0.0).unwrap_or_else(|_| DVector::zeros(p))
    };

    let intercept = f_mean - alpha.dot(&col_mean);
    let residual = &target - &centered * &alpha;
    let reduction = 1.0 - variance(residual.iter().copied()) / f_var;
    Ok(CvFit {
        coefficients: alpha.iter().copied().collect(),
        intercept,
        variance_reduction: reduction,
        ridge_fallback: rank_deficient,
    })
}

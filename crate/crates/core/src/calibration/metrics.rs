use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::variational::PredictiveDistribution;

fn std_normal() -> Normal {
    Normal::standard()
}

/// `Φ⁻¹((1 + level)/2)`, the half-width multiplier of a central interval.
pub fn central_quantile(level: f64) -> f64 {
    std_normal().inverse_cdf(0.5 * (1.0 + level))
}

/// `min(10, max(5, ⌊N/5⌋))`.
pub fn default_bins(n_eval: usize) -> usize {
    (n_eval / 5).clamp(5, 10)
}

/// `(y − mean)/sqrt(total_var)` flattened over samples and eigen-indices.
pub fn standardized_residuals(preds: &[PredictiveDistribution], y: &[Vec<f64>]) -> Result<Vec<f64>> {
    if preds.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: preds.len(), got: y.len(), context: "observations" });
    }
    let mut z = Vec::new();
    for (p, obs) in preds.iter().zip(y) {
        if p.mean.len() != obs.len() {
            return Err(Error::DimensionMismatch { expected: p.mean.len(), got: obs.len(), context: "observation" });
        }
        for i in 0..obs.len() {
            let var = p.total_var[i];
            if !(var > 0.0) {
                return Err(Error::InvalidArgument(format!("predictive variance {var} is not positive")));
            }
            z.push((obs[i] - p.mean[i]) / var.sqrt());
        }
    }
    Ok(z)
}

/// Fraction of `|z| ≤ Φ⁻¹((1+level)/2)`.
pub fn coverage(z: &[f64], level: f64) -> f64 {
    if z.is_empty() {
        return f64::NAN;
    }
    let q = central_quantile(level);
    z.iter().filter(|v| v.abs() <= q).count() as f64 / z.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub nominal: f64,
    pub empirical: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EceResult {
    pub ece: f64,
    pub mce: f64,
    pub ace: f64,
    pub bins: Vec<CalibrationBin>,
}

/// Central-interval calibration error at the equal-mass nominal levels
/// `(b − ½)/B`.
pub fn ece(z: &[f64], n_bins: usize) -> Result<EceResult> {
    if z.is_empty() {
        return Err(Error::InvalidArgument("ece needs at least one residual".into()));
    }
    if n_bins == 0 {
        return Err(Error::InvalidArgument("n_bins must be positive".into()));
    }
    let mut abs: Vec<f64> = z.iter().map(|v| v.abs()).collect();
    abs.sort_by(f64::total_cmp);
    let n = abs.len() as f64;
    let bins: Vec<CalibrationBin> = (1..=n_bins)
        .map(|b| {
            let nominal = (b as f64 - 0.5) / n_bins as f64;
            let q = central_quantile(nominal);
            let count = abs.partition_point(|&v| v <= q);
            CalibrationBin { nominal, empirical: count as f64 / n }
        })
        .collect();
    let errs: Vec<f64> = bins.iter().map(|b| (b.empirical - b.nominal).abs()).collect();
    let ece = errs.iter().sum::<f64>() / n_bins as f64;
    let mce = errs.iter().copied().fold(0.0, f64::max);
    let ace = errs.iter().sum::<f64>() / errs.len() as f64;
    Ok(EceResult { ece, mce, ace, bins })
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!("sigma must be positive, got {sigma}")));
    }
    Ok(())
}

/// Closed-form CRPS of `N(mu, sigma²)` at `y`.
pub fn crps_gaussian(mu: f64, sigma: f64, y: f64) -> Result<f64> {
    check_sigma(sigma)?;
    let z = (y - mu) / sigma;
    let nd = std_normal();
    let pdf = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let val = sigma * (z * (2.0 * nd.cdf(z) - 1.0) + 2.0 * pdf - 1.0 / std::f64::consts::PI.sqrt());
    Ok(val.max(0.0))
}

/// Interval score of the central `1 − alpha` interval.
pub fn interval_score(mu: f64, sigma: f64, alpha: f64, y: f64) -> Result<f64> {
    check_sigma(sigma)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument("alpha must lie in (0, 1)".into()));
    }
    let half = central_quantile(1.0 - alpha) * sigma;
    let (l, u) = (mu - half, mu + half);
    Ok((u - l) + (2.0 / alpha) * (l - y).max(0.0) + (2.0 / alpha) * (y - u).max(0.0))
}

/// Gaussian negative log-likelihood.
pub fn nll_gaussian(mu: f64, sigma: f64, y: f64) -> Result<f64> {
    check_sigma(sigma)?;
    Ok(0.5 * (2.0 * std::f64::consts::PI * sigma * sigma).ln() + (y - mu).powi(2) / (2.0 * sigma * sigma))
}

/// Fraction of `|z| > Φ⁻¹(0.975)` in excess of the nominal 5%, floored at 0.
pub fn overconfidence_rate(z: &[f64]) -> f64 {
    if z.is_empty() {
        return 0.0;
    }
    let q = central_quantile(0.95);
    let outside = z.iter().filter(|v| v.abs() > q).count() as f64 / z.len() as f64;
    (outside - 0.05).max(0.0)
}

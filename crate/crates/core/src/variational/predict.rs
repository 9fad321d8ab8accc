use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::objective::robust_eigen;
use super::posterior::{sample_posterior, VariationalPosterior};
use crate::error::{Error, Result};
use crate::spectral::ParametricModel;

/// Predictive law of the eigenvalues at one input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveDistribution {
    pub mean: Vec<f64>,
    pub epistemic_var: Vec<f64>,
    pub aleatoric_var: f64,
    pub total_var: Vec<f64>,
}

impl PredictiveDistribution {
    pub fn total_std(&self) -> Vec<f64> {
        self.total_var.iter().map(|v| v.sqrt()).collect()
    }

    /// Multiplies every variance component by `factor`.
    pub fn with_variance_scale(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0) || !factor.is_finite() {
            return Err(Error::InvalidArgument(format!("variance scale must be positive, got {factor}")));
        }
        Ok(Self {
            mean: self.mean.clone(),
            epistemic_var: self.epistemic_var.iter().map(|v| v * factor).collect(),
            aleatoric_var: self.aleatoric_var * factor,
            total_var: self.total_var.iter().map(|v| v * factor).collect(),
        })
    }
}

/// Monte Carlo forward pass through `S` posterior samples at input `x`.
pub fn predict(
    q: &VariationalPosterior,
    model: &ParametricModel,
    x: &[f64],
    sigma_obs: f64,
    s: usize,
    seed: u64,
) -> Result<PredictiveDistribution> {
    let samples = sample_posterior(q, s, seed);
    predict_with_samples(q, model, x, sigma_obs, &samples)
}

/// Predictions at many inputs sharing one set of posterior samples.
pub fn predict_batch(
    q: &VariationalPosterior,
    model: &ParametricModel,
    xs: &[Vec<f64>],
    sigma_obs: f64,
    s: usize,
    seed: u64,
) -> Result<Vec<PredictiveDistribution>> {
    let samples = sample_posterior(q, s, seed);
    xs.par_iter().map(|x| predict_with_samples(q, model, x, sigma_obs, &samples)).collect()
}

fn predict_with_samples(
    q: &VariationalPosterior,
    model: &ParametricModel,
    x: &[f64],
    sigma_obs: f64,
    samples: &[Vec<f64>],
) -> Result<PredictiveDistribution> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("at least one posterior sample is required".into()));
    }
    if !(sigma_obs >= 0.0) || !sigma_obs.is_finite() {
        return Err(Error::InvalidArgument("sigma_obs must be nonnegative".into()));
    }
    let base = model.assemble_inputs(x)?;
    let n = model.n();
    let mut draws = Vec::with_capacity(samples.len());
    for (k, w) in samples.iter().enumerate() {
        let mut p = base.clone();
        model.add_corrections(&mut p, w)?;
        let (values, _) = robust_eigen(&p, q.alpha())
            .map_err(|e| Error::SampleFailure { sample: k, point: 0, reason: e.to_string() })?;
        draws.push(values);
    }
    let count = draws.len() as f64;
    let mean: Vec<f64> = (0..n).map(|i| draws.iter().map(|d| d[i]).sum::<f64>() / count).collect();
    let epistemic_var: Vec<f64> = (0..n)
        .map(|i| {
            if draws.len() < 2 {
                0.0
            } else {
                draws.iter().map(|d| (d[i] - mean[i]).powi(2)).sum::<f64>() / (count - 1.0)
            }
        })
        .collect();
    let aleatoric_var = sigma_obs * sigma_obs;
    let total_var = epistemic_var.iter().map(|e| e + aleatoric_var).collect();
    Ok(PredictiveDistribution { mean, epistemic_var, aleatoric_var, total_var })
}

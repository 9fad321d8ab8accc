use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::control::{cv_fit, CvFit};
use super::posterior::{draw_noise, kl_gradient, kl_gaussian, Noise, PosteriorGradient, PriorSpec, VariationalPosterior};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::spectral::{symmetric_eigen, with_jitter_ladder, ParametricModel, SymmetricMatrix};

/// Monte Carlo ELBO estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElboEstimate {
    pub value: f64,
    pub loglik: f64,
    pub kl: f64,
    /// Standard error of the log-likelihood average.
    pub std_error: f64,
}

#[derive(Debug, Clone)]
pub struct ElboGradient {
    pub estimate: ElboEstimate,
    pub gradient: PosteriorGradient,
    /// Mean over samples and data points of the minimum spectral gap.
    pub min_gap: f64,
    /// Set by the score-function estimator.
    pub control_variate: Option<CvFit>,
}

/// Per-sample quantities from one pass over the data.
#[derive(Debug, Clone)]
pub(crate) struct SampleForward {
    pub loglik: f64,
    /// `∂ loglik / ∂w`.
    pub grad_w: DVector<f64>,
    /// Eigenvalues per index, averaged over the data.
    pub eig_mean: Vec<f64>,
    /// `∂ eig_mean[i] / ∂w_m`, only when requested.
    pub eig_sens: Option<DMatrix<f64>>,
    pub min_gap: f64,
}

/// `P(x⁽ⁿ⁾)` for every observation, without the latent part.
pub(crate) fn input_matrices(model: &ParametricModel, data: &Dataset) -> Result<Vec<SymmetricMatrix>> {
    data.validate(model.n_inputs(), model.n())?;
    data.samples.iter().map(|o| model.assemble_inputs(&o.x)).collect()
}

/// Ascending eigenpairs, retried up the jitter ladder from `alpha` on failure.
pub(crate) fn robust_eigen(p: &SymmetricMatrix, alpha: f64) -> Result<(Vec<f64>, DMatrix<f64>)> {
    with_jitter_ladder(p, alpha, |m| symmetric_eigen(m).ok()).map(|o| o.value)
}

/// Upper-triangle nonzeros `(j, k, b)` of each correction, off-diagonal entries doubled.
fn sparse_corrections(model: &ParametricModel) -> Option<Vec<Vec<(usize, usize, f64)>>> {
    let n = model.n();
    let mut total = 0;
    let mut out = Vec::with_capacity(model.n_latent());
    for b in &model.corrections {
        let m = b.as_matrix();
        let mut entries = Vec::new();
        for k in 0..n {
            for j in 0..=k {
                let v = m[(j, k)];
                if v != 0.0 {
                    entries.push((j, k, if j == k { v } else { 2.0 * v }));
                }
            }
        }
        total += entries.len();
        out.push(entries);
    }
    (total <= n * n).then_some(out)
}

pub(crate) fn forward(
    model: &ParametricModel,
    inputs: &[SymmetricMatrix],
    data: &Dataset,
    w: &DVector<f64>,
    sigma_obs: f64,
    alpha: f64,
    sample: usize,
    want_sens: bool,
) -> Result<SampleForward> {
    let n = model.n();
    let m_lat = model.n_latent();
    let inv_var = 1.0 / (sigma_obs * sigma_obs);
    let log_norm = -0.5 * (2.0 * std::f64::consts::PI * sigma_obs * sigma_obs).ln();
    let w_slice = w.as_slice();

    let mut loglik = 0.0;
    let mut g = DMatrix::<f64>::zeros(n, n);
    let mut eig_mean = vec![0.0; n];
    let mut eig_sens = want_sens.then(|| DMatrix::<f64>::zeros(n, m_lat));
    let mut gap_sum = 0.0;
    let sparse = sparse_corrections(model);
    let mut grad_w = DVector::<f64>::zeros(m_lat);

    for (point, (p_x, obs)) in inputs.iter().zip(&data.samples).enumerate() {
        let mut p = p_x.clone();
        model.add_corrections(&mut p, w_slice)?;
        let (values, vectors) = robust_eigen(&p, alpha).map_err(|e| Error::SampleFailure {
            sample,
            point,
            reason: e.to_string(),
        })?;
        let weights: Vec<f64> = (0..n).map(|i| (obs.y[i] - values[i]) * inv_var).collect();
        for i in 0..n {
            let r = obs.y[i] - values[i];
            loglik += log_norm - 0.5 * r * r * inv_var;
            eig_mean[i] += values[i];
        }
        gap_sum += values.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        if let Some(entries) = &sparse {
            for (mi, list) in entries.iter().enumerate() {
                for i in 0..n {
                    let col = vectors.column(i);
                    let q: f64 = list.iter().map(|&(j, k, b)| b * col[j] * col[k]).sum();
                    grad_w[mi] += weights[i] * q;
                    if let Some(sens) = eig_sens.as_mut() {
                        sens[(i, mi)] += q;
                    }
                }
            }
            continue;
        }
        let mut scaled = vectors.clone();
        for (i, wt) in weights.iter().enumerate() {
            scaled.column_mut(i).scale_mut(*wt);
        }
        g += &scaled * vectors.transpose();
        if let Some(sens) = eig_sens.as_mut() {
            for (mi, b) in model.corrections.iter().enumerate() {
                let bv = b.as_matrix() * &vectors;
                for i in 0..n {
                    sens[(i, mi)] += vectors.column(i).dot(&bv.column(i));
                }
            }
        }
    }

    let count = inputs.len().max(1) as f64;
    eig_mean.iter_mut().for_each(|v| *v /= count);
    if let Some(sens) = eig_sens.as_mut() {
        *sens /= count;
    }
    if sparse.is_none() {
        grad_w = DVector::from_fn(m_lat, |mi, _| model.corrections[mi].as_matrix().dot(&g));
    }
    let min_gap = if inputs.is_empty() || n < 2 { 0.0 } else { gap_sum / count };
    Ok(SampleForward { loglik, grad_w, eig_mean, eig_sens, min_gap })
}

pub(crate) struct Evaluated {
    pub noise: Vec<Noise>,
    pub samples: Vec<DVector<f64>>,
    pub forwards: Vec<SampleForward>,
}

fn check(q: &VariationalPosterior, model: &ParametricModel, sigma_obs: f64, s: usize) -> Result<()> {
    q.validate()?;
    if q.dim() != model.n_latent() {
        return Err(Error::DimensionMismatch { expected: model.n_latent(), got: q.dim(), context: "posterior" });
    }
    if !(sigma_obs > 0.0) || !sigma_obs.is_finite() {
        return Err(Error::InvalidArgument("sigma_obs must be positive".into()));
    }
    if s == 0 {
        return Err(Error::InvalidArgument("at least one Monte Carlo sample is required".into()));
    }
    Ok(())
}

pub(crate) fn evaluate(
    q: &VariationalPosterior,
    model: &ParametricModel,
    inputs: &[SymmetricMatrix],
    data: &Dataset,
    sigma_obs: f64,
    s: usize,
    seed: u64,
    want_sens: bool,
) -> Result<Evaluated> {
    let noise: Vec<Noise> = (0..s).map(|k| draw_noise(q.dim(), q.rank(), seed, k)).collect();
    let samples: Vec<DVector<f64>> = noise.iter().map(|e| q.transform(e)).collect();
    let alpha = q.alpha();
    let forwards = samples
        .par_iter()
        .enumerate()
        .map(|(k, w)| forward(model, inputs, data, w, sigma_obs, alpha, k, want_sens))
        .collect::<Result<Vec<_>>>()?;
    Ok(Evaluated { noise, samples, forwards })
}

fn estimate(forwards: &[SampleForward], kl: f64) -> ElboEstimate {
    let s = forwards.len() as f64;
    let loglik = forwards.iter().map(|f| f.loglik).sum::<f64>() / s;
    let var = if forwards.len() > 1 {
        forwards.iter().map(|f| (f.loglik - loglik).powi(2)).sum::<f64>() / (s - 1.0)
    } else {
        0.0
    };
    ElboEstimate { value: loglik - kl, loglik, kl, std_error: (var / s).sqrt() }
}

/// `E_q[log p(D | w)] − KL[q ‖ p]` estimated with `S` reparameterized samples.
pub fn elbo(
    q: &VariationalPosterior,
    prior: &PriorSpec,
    model: &ParametricModel,
    data: &Dataset,
    sigma_obs: f64,
    s: usize,
    seed: u64,
) -> Result<ElboEstimate> {
    check(q, model, sigma_obs, s)?;
    let kl = kl_gaussian(q, prior)?;
    let inputs = input_matrices(model, data)?;
    let ev = evaluate(q, model, &inputs, data, sigma_obs, s, seed, false)?;
    Ok(estimate(&ev.forwards, kl))
}

/// Chain rule from `∂f/∂w` to the posterior parameters.
fn pathwise(q: &VariationalPosterior, noise: &Noise, grad_w: &DVector<f64>, out: &mut PosteriorGradient, weight: f64) {
    out.mean.axpy(weight, grad_w, 1.0);
    if q.rank() > 0 {
        out.lowrank += grad_w * noise.lowrank.transpose() * weight;
    }
    for i in 0..q.dim() {
        out.log_diag[i] += weight * grad_w[i] * noise.diag[i] * 0.5 * (0.5 * q.log_diag[i]).exp();
    }
}

/// Reparameterized ELBO gradient with the analytic KL gradient.
///
/// `∂λ_i/∂w_m = v_iᵀ B_m v_i`, so the likelihood gradient of each sample is
/// `⟨B_m, Σ_n V diag(r_n) Vᵀ⟩` with residuals `r = (y − λ)/σ²`. `log α` only
/// moves the jitter floor and receives no gradient.
pub fn grad_elbo(
    q: &VariationalPosterior,
    prior: &PriorSpec,
    model: &ParametricModel,
    data: &Dataset,
    sigma_obs: f64,
    s: usize,
    seed: u64,
) -> Result<ElboGradient> {
    check(q, model, sigma_obs, s)?;
    let inputs = input_matrices(model, data)?;
    grad_elbo_prepared(q, prior, model, &inputs, data, sigma_obs, s, seed)
}

pub(crate) fn grad_elbo_prepared(
    q: &VariationalPosterior,
    prior: &PriorSpec,
    model: &ParametricModel,
    inputs: &[SymmetricMatrix],
    data: &Dataset,
    sigma_obs: f64,
    s: usize,
    seed: u64,
) -> Result<ElboGradient> {
    let kl = kl_gaussian(q, prior)?;
    let ev = evaluate(q, model, inputs, data, sigma_obs, s, seed, false)?;
    let mut gradient = PosteriorGradient::zeros_like(q);
    let weight = 1.0 / s as f64;
    for (noise, f) in ev.noise.iter().zip(&ev.forwards) {
        pathwise(q, noise, &f.grad_w, &mut gradient, weight);
    }
    gradient.add_scaled(&kl_gradient(q, prior)?, -1.0);
    let min_gap = ev.forwards.iter().map(|f| f.min_gap).sum::<f64>() * weight;
    Ok(ElboGradient { estimate: estimate(&ev.forwards, kl), gradient, min_gap, control_variate: None })
}

/// Block-averages `n` per-index values into at most `p` features.
pub(crate) fn block_features(values: &[f64], p: usize) -> Vec<f64> {
    let n = values.len();
    if n <= p {
        return values.to_vec();
    }
    (0..p)
        .map(|j| {
            let (lo, hi) = (j * n / p, (j + 1) * n / p);
            values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// Score-function ELBO gradient with a spectral control variate
/// `b(w) = Σ_j α_j φ_j(w) + β`, where `φ_j` are data-averaged eigenvalues
/// (block-averaged when there are more indices than `S − 2`).
pub fn grad_elbo_score_cv(
    q: &VariationalPosterior,
    prior: &PriorSpec,
    model: &ParametricModel,
    data: &Dataset,
    sigma_obs: f64,
    s: usize,
    seed: u64,
) -> Result<ElboGradient> {
    check(q, model, sigma_obs, s)?;
    let inputs = input_matrices(model, data)?;
    grad_elbo_score_cv_prepared(q, prior, model, &inputs, data, sigma_obs, s, seed)
}

pub(crate) fn grad_elbo_score_cv_prepared(
    q: &VariationalPosterior,
    prior: &PriorSpec,
    model: &ParametricModel,
    inputs: &[SymmetricMatrix],
    data: &Dataset,
    sigma_obs: f64,
    s: usize,
    seed: u64,
) -> Result<ElboGradient> {
    if s < 3 {
        return Err(Error::InvalidArgument("score-function estimator needs S ≥ 3".into()));
    }
    let kl = kl_gaussian(q, prior)?;
    let ev = evaluate(q, model, inputs, data, sigma_obs, s, seed, true)?;
    let n = model.n();
    let p = n.min(s - 2);
    let features = DMatrix::from_fn(s, p, |k, j| block_features(&ev.forwards[k].eig_mean, p)[j]);
    let f: Vec<f64> = ev.forwards.iter().map(|f| f.loglik).collect();
    let fit = cv_fit(&f, &features)?;

    let prec = q.precision();
    let d = q.diag_var();
    let weight = 1.0 / s as f64;
    let mut gradient = PosteriorGradient::zeros_like(q);
    for k in 0..s {
        let baseline = fit.predict(features.row(k).iter().copied());
        let centered = f[k] - baseline;
        let u = &ev.samples[k] - DVector::from_column_slice(&q.mean);
        let z = &prec * u;
        gradient.mean.axpy(weight * centered, &z, 1.0);
        let outer_minus_prec = &z * z.transpose() - &prec;
        if q.rank() > 0 {
            gradient.lowrank += &outer_minus_prec * &q.lowrank * (weight * centered);
        }
        for i in 0..q.dim() {
            gradient.log_diag[i] += weight * centered * 0.5 * d[i] * outer_minus_prec[(i, i)];
        }

        // Pathwise gradient of E[b]: block-averaged eigenvalue sensitivities.
        let sens = ev.forwards[k].eig_sens.as_ref().expect("sensitivities requested");
        let mut grad_b = DVector::<f64>::zeros(q.dim());
        for (j, alpha_j) in fit.coefficients.iter().enumerate() {
            let (lo, hi) = if n <= p { (j, j + 1) } else { (j * n / p, (j + 1) * n / p) };
            for i in lo..hi {
                grad_b.axpy(alpha_j / (hi - lo) as f64, &sens.row(i).transpose(), 1.0);
            }
        }
        pathwise(q, &ev.noise[k], &grad_b, &mut gradient, weight);
    }
    gradient.add_scaled(&kl_gradient(q, prior)?, -1.0);
    let min_gap = ev.forwards.iter().map(|f| f.min_gap).sum::<f64>() * weight;
    Ok(ElboGradient { estimate: estimate(&ev.forwards, kl), gradient, min_gap, control_variate: Some(fit) })
}

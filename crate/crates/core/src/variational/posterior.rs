use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Prior standard deviation used when none is configured.
pub const DEFAULT_PRIOR_STD: f64 = 0.2;
/// Initial `α` for the learned regularization exponent.
pub const INITIAL_ALPHA: f64 = 1e-4;

/// `q(w) = N(μ, L Lᵀ + diag(d))` with `d = exp(log_diag)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationalPosterior {
    pub mean: Vec<f64>,
    /// `M × r`.
    pub lowrank: DMatrix<f64>,
    pub log_diag: Vec<f64>,
    pub log_alpha_reg: f64,
}

impl VariationalPosterior {
    /// Mean at the prior mean, `L = 0`, every variance `init_std²`.
    pub fn initialize(prior: &PriorSpec, rank: usize, init_std: f64) -> Result<Self> {
        let m = prior.dim();
        if rank > m {
            return Err(Error::InvalidArgument(format!("low-rank factor rank {rank} exceeds M = {m}")));
        }
        if !(init_std > 0.0) || !init_std.is_finite() {
            return Err(Error::InvalidArgument("init_std must be positive".into()));
        }
        Ok(Self {
            mean: prior.mean.clone(),
            lowrank: DMatrix::zeros(m, rank),
            log_diag: vec![2.0 * init_std.ln(); m],
            log_alpha_reg: INITIAL_ALPHA.ln(),
        })
    }

    /// Copy of the prior itself, with `L = 0`.
    pub fn from_prior(prior: &PriorSpec) -> Self {
        Self {
            mean: prior.mean.clone(),
            lowrank: DMatrix::zeros(prior.dim(), 0),
            log_diag: prior.variance.iter().map(|v| v.ln()).collect(),
            log_alpha_reg: INITIAL_ALPHA.ln(),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn rank(&self) -> usize {
        self.lowrank.ncols()
    }

    pub fn diag_var(&self) -> Vec<f64> {
        self.log_diag.iter().map(|v| v.exp()).collect()
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha_reg.exp()
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        let mut cov = &self.lowrank * self.lowrank.transpose();
        for (i, d) in self.diag_var().into_iter().enumerate() {
            cov[(i, i)] += d;
        }
        cov
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.dim();
        if self.lowrank.nrows() != m || self.log_diag.len() != m {
            return Err(Error::DimensionMismatch { expected: m, got: self.log_diag.len(), context: "posterior" });
        }
        if self.rank() > m {
            return Err(Error::InvalidArgument("low-rank factor has more columns than rows".into()));
        }
        let finite = self.mean.iter().chain(&self.log_diag).chain(self.lowrank.iter()).all(|v| v.is_finite());
        if !finite || !self.log_alpha_reg.is_finite() {
            return Err(Error::NonFinite("posterior parameters"));
        }
        Ok(())
    }

    /// `(μ, vec L row-major, log d, log α)`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = self.mean.clone();
        for i in 0..self.lowrank.nrows() {
            out.extend(self.lowrank.row(i).iter());
        }
        out.extend(&self.log_diag);
        out.push(self.log_alpha_reg);
        out
    }

    /// Inverse of [`to_flat`](Self::to_flat) for a posterior of the same shape.
    pub fn with_flat(&self, flat: &[f64]) -> Self {
        let (m, r) = (self.dim(), self.rank());
        let mean = flat[..m].to_vec();
        let lowrank = DMatrix::from_row_slice(m, r, &flat[m..m + m * r]);
        let log_diag = flat[m + m * r..2 * m + m * r].to_vec();
        Self { mean, lowrank, log_diag, log_alpha_reg: flat[2 * m + m * r] }
    }

    pub fn n_params(&self) -> usize {
        2 * self.dim() + self.dim() * self.rank() + 1
    }

    /// `w = μ + L ε₁ + sqrt(d) ⊙ ε₂`.
    pub(crate) fn transform(&self, noise: &Noise) -> DVector<f64> {
        let mut w = DVector::from_column_slice(&self.mean);
        if self.rank() > 0 {
            w += &self.lowrank * &noise.lowrank;
        }
        for (i, ld) in self.log_diag.iter().enumerate() {
            w[i] += (0.5 * ld).exp() * noise.diag[i];
        }
        w
    }

    /// `Σ⁻¹` by the Woodbury identity on the `r × r` capacitance matrix.
    pub(crate) fn precision(&self) -> DMatrix<f64> {
        let d_inv: Vec<f64> = self.log_diag.iter().map(|v| (-v).exp()).collect();
        let m = self.dim();
        let mut prec = DMatrix::from_diagonal(&DVector::from_vec(d_inv.clone()));
        if self.rank() == 0 {
            return prec;
        }
        let dl = DMatrix::from_fn(m, self.rank(), |i, j| d_inv[i] * self.lowrank[(i, j)]);
        let cap = DMatrix::identity(self.rank(), self.rank()) + self.lowrank.transpose() * &dl;
        let cap_inv = cap.cholesky().map(|c| c.inverse()).unwrap_or_else(|| DMatrix::identity(self.rank(), self.rank()));
        prec -= &dl * cap_inv * dl.transpose();
        prec
    }

    /// `ln det(L Lᵀ + diag d) = Σ ln d + ln det(I + Lᵀ D⁻¹ L)`.
    pub fn log_det_covariance(&self) -> f64 {
        let base: f64 = self.log_diag.iter().sum();
        if self.rank() == 0 {
            return base;
        }
        let m = self.dim();
        let dl = DMatrix::from_fn(m, self.rank(), |i, j| (-self.log_diag[i]).exp() * self.lowrank[(i, j)]);
        let cap = DMatrix::identity(self.rank(), self.rank()) + self.lowrank.transpose() * dl;
        let chol = cap.cholesky().expect("capacitance matrix is positive definite");
        base + 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>()
    }
}

/// Independent Gaussian prior `N(mean, diag(variance))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

impl PriorSpec {
    pub fn new(mean: Vec<f64>, variance: Vec<f64>) -> Result<Self> {
        if mean.len() != variance.len() {
            return Err(Error::DimensionMismatch { expected: mean.len(), got: variance.len(), context: "prior" });
        }
        if variance.iter().any(|v| !(*v > 0.0) || !v.is_finite()) || mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("prior variances must be positive and finite".into()));
        }
        Ok(Self { mean, variance })
    }

    /// `N(0, std² I)`.
    pub fn isotropic(m: usize, std: f64) -> Result<Self> {
        Self::new(vec![0.0; m], vec![std * std; m])
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Gradient with respect to `(μ, L, log d, log α)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorGradient {
    pub mean: DVector<f64>,
    pub lowrank: DMatrix<f64>,
    pub log_diag: DVector<f64>,
    pub log_alpha_reg: f64,
}

impl PosteriorGradient {
    pub fn zeros_like(q: &VariationalPosterior) -> Self {
        Self {
            mean: DVector::zeros(q.dim()),
            lowrank: DMatrix::zeros(q.dim(), q.rank()),
            log_diag: DVector::zeros(q.dim()),
            log_alpha_reg: 0.0,
        }
    }

    /// Same layout as [`VariationalPosterior::to_flat`].
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.mean.iter().copied().collect();
        for i in 0..self.lowrank.nrows() {
            out.extend(self.lowrank.row(i).iter());
        }
        out.extend(self.log_diag.iter());
        out.push(self.log_alpha_reg);
        out
    }

    pub fn add_scaled(&mut self, other: &PosteriorGradient, factor: f64) {
        self.mean.axpy(factor, &other.mean, 1.0);
        self.lowrank += &other.lowrank * factor;
        self.log_diag.axpy(factor, &other.log_diag, 1.0);
        self.log_alpha_reg += factor * other.log_alpha_reg;
    }
}

/// Standard normal draws for one posterior sample.
#[derive(Debug, Clone)]
pub(crate) struct Noise {
    pub lowrank: DVector<f64>,
    pub diag: DVector<f64>,
}

/// Noise for sample `s`, keyed by `(seed, s)`.
pub(crate) fn draw_noise(m: usize, r: usize, seed: u64, s: usize) -> Noise {
    let mut g = rng::keyed(seed, s as u64);
    let lowrank = DVector::from_fn(r, |_, _| g.sample::<f64, _>(StandardNormal));
    let diag = DVector::from_fn(m, |_, _| g.sample::<f64, _>(StandardNormal));
    Noise { lowrank, diag }
}

/// `S` reparameterized draws from `q`.
pub fn sample_posterior(q: &VariationalPosterior, s: usize, seed: u64) -> Vec<Vec<f64>> {
    (0..s)
        .map(|k| q.transform(&draw_noise(q.dim(), q.rank(), seed, k)).iter().copied().collect())
        .collect()
}

/// Closed-form `KL[q ‖ p]`.
pub fn kl_gaussian(q: &VariationalPosterior, prior: &PriorSpec) -> Result<f64> {
    check_shapes(q, prior)?;
    let d = q.diag_var();
    let mut trace = 0.0;
    let mut quad = 0.0;
    let mut log_det_prior = 0.0;
    for m in 0..q.dim() {
        let row_sq: f64 = q.lowrank.row(m).iter().map(|v| v * v).sum();
        trace += (d[m] + row_sq) / prior.variance[m];
        quad += (q.mean[m] - prior.mean[m]).powi(2) / prior.variance[m];
        log_det_prior += prior.variance[m].ln();
    }
    let kl = 0.5 * (trace + quad - q.dim() as f64 + log_det_prior - q.log_det_covariance());
    Ok(kl.max(0.0))
}

/// Analytic gradient of [`kl_gaussian`].
pub fn kl_gradient(q: &VariationalPosterior, prior: &PriorSpec) -> Result<PosteriorGradient> {
    check_shapes(q, prior)?;
    let m = q.dim();
    let prec = q.precision();
    let d = q.diag_var();
    let p_inv = DVector::from_fn(m, |i, _| 1.0 / prior.variance[i]);
    let mean = DVector::from_fn(m, |i, _| (q.mean[i] - prior.mean[i]) * p_inv[i]);
    let mut diff = -prec;
    for i in 0..m {
        diff[(i, i)] += p_inv[i];
    }
    let lowrank = &diff * &q.lowrank;
    let log_diag = DVector::from_fn(m, |i, _| 0.5 * d[i] * diff[(i, i)]);
    Ok(PosteriorGradient { mean, lowrank, log_diag, log_alpha_reg: 0.0 })
}

fn check_shapes(q: &VariationalPosterior, prior: &PriorSpec) -> Result<()> {
    q.validate()?;
    if q.dim() != prior.dim() {
        return Err(Error::DimensionMismatch { expected: prior.dim(), got: q.dim(), context: "prior vs posterior" });
    }
    Ok(())
}

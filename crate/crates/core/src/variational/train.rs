use serde::{Deserialize, Serialize};

use super::monitor::{monitor_step, ConvergenceStatus};
use super::objective::{grad_elbo_prepared, grad_elbo_score_cv_prepared, input_matrices, ElboGradient};
use super::posterior::{PriorSpec, VariationalPosterior};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng;
use crate::spectral::ParametricModel;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;
pub const MIN_TRAINING_SAMPLES: usize = 10;
/// Posterior snapshots are kept every this many epochs.
pub const SNAPSHOT_EVERY: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    #[default]
    Reparameterized,
    ScoreWithCv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub grad_clip_norm: f64,
    pub mc_samples: usize,
    pub seed: u64,
    pub estimator: Estimator,
    /// Columns of the low-rank covariance factor.
    pub lowrank_rank: usize,
    /// Initial posterior standard deviation of every latent correction.
    pub init_std: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            learning_rate: 3e-4,
            grad_clip_norm: 0.5,
            mc_samples: 25,
            seed: 0,
            estimator: Estimator::Reparameterized,
            lowrank_rank: 0,
            init_std: 0.01,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be positive".into()));
        }
        for (name, v) in [
            ("learning_rate", self.learning_rate),
            ("grad_clip_norm", self.grad_clip_norm),
            ("init_std", self.init_std),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} must be positive")));
            }
        }
        if self.mc_samples < 2 {
            return Err(Error::InvalidArgument("mc_samples must be at least 2".into()));
        }
        Ok(())
    }

    /// Cosine-annealed learning rate for 0-based epoch `t`.
    pub fn learning_rate_at(&self, t: usize) -> f64 {
        let frac = t as f64 / self.epochs as f64;
        0.5 * self.learning_rate * (1.0 + (std::f64::consts::PI * frac).cos())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub epoch: usize,
    pub posterior: VariationalPosterior,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub elbo_history: Vec<f64>,
    pub grad_rms_history: Vec<f64>,
    /// Flattened posterior parameters at every epoch.
    pub param_history: Vec<Vec<f64>>,
    pub param_snapshots: Vec<Snapshot>,
    pub min_gap_history: Vec<f64>,
    pub best_epoch: usize,
    pub converged: bool,
    pub convergence_epoch: Option<usize>,
}

impl TrainingTrace {
    /// CSV with columns `epoch, elbo, grad_rms, min_gap`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epoch", "elbo", "grad_rms", "min_gap"])?;
        for t in 0..self.elbo_history.len() {
            w.write_record([
                t.to_string(),
                self.elbo_history[t].to_string(),
                self.grad_rms_history[t].to_string(),
                self.min_gap_history[t].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    fn best(&self) -> usize {
        self.elbo_history
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
            .0
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(dim: usize) -> Self {
        Self { m: vec![0.0; dim], v: vec![0.0; dim], t: 0 }
    }

    /// Ascent step on `params` along `grad`.
    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.t);
        let c2 = 1.0 - ADAM_BETA2.powi(self.t);
        for k in 0..params.len() {
            self.m[k] = ADAM_BETA1 * self.m[k] + (1.0 - ADAM_BETA1) * grad[k];
            self.v[k] = ADAM_BETA2 * self.v[k] + (1.0 - ADAM_BETA2) * grad[k] * grad[k];
            params[k] += lr * (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + ADAM_EPS);
        }
    }
}

/// Scales `g` to norm at most `max_norm`; returns the original norm.
pub fn clip_gradient(g: &mut [f64], max_norm: f64) -> f64 {
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > max_norm {
        let f = max_norm / norm;
        g.iter_mut().for_each(|v| *v *= f);
    }
    norm
}

/// Trains from the prior-mean initialization.
pub fn train(
    model: &ParametricModel,
    data: &Dataset,
    prior: &PriorSpec,
    sigma_obs: f64,
    config: &TrainingConfig,
) -> Result<(VariationalPosterior, TrainingTrace)> {
    let q0 = VariationalPosterior::initialize(prior, config.lowrank_rank, config.init_std)?;
    train_from(q0, model, data, prior, sigma_obs, config)
}

/// Full-batch Adam ascent on the ELBO; returns the posterior at the best epoch.
pub fn train_from(
    q0: VariationalPosterior,
    model: &ParametricModel,
    data: &Dataset,
    prior: &PriorSpec,
    sigma_obs: f64,
    config: &TrainingConfig,
) -> Result<(VariationalPosterior, TrainingTrace)> {
    config.validate()?;
    q0.validate()?;
    if data.len() < MIN_TRAINING_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "training needs at least {MIN_TRAINING_SAMPLES} observations, got {}",
            data.len()
        )));
    }
    if q0.dim() != model.n_latent() || prior.dim() != model.n_latent() {
        return Err(Error::DimensionMismatch { expected: model.n_latent(), got: q0.dim(), context: "posterior" });
    }
    if !(sigma_obs > 0.0) || !sigma_obs.is_finite() {
        return Err(Error::InvalidArgument("sigma_obs must be positive".into()));
    }
    let inputs = input_matrices(model, data)?;

    let mut q = q0;
    let mut params = q.to_flat();
    let mut adam = Adam::new(params.len());
    let mut trace = TrainingTrace::default();
    let mut best = (f64::NEG_INFINITY, q.clone());

    for epoch in 0..config.epochs {
        let seed = rng::mix(config.seed, epoch as u64);
        let step: Result<ElboGradient> = match config.estimator {
            Estimator::Reparameterized => {
                grad_elbo_prepared(&q, prior, model, &inputs, data, sigma_obs, config.mc_samples, seed)
            }
            Estimator::ScoreWithCv => {
                grad_elbo_score_cv_prepared(&q, prior, model, &inputs, data, sigma_obs, config.mc_samples, seed)
            }
        };
        let g = match step {
            Ok(g) => g,
            Err(e) => {
                trace.best_epoch = trace.best();
                return Err(Error::TrainingAborted { epoch, reason: e.to_string(), trace: Box::new(trace) });
            }
        };
        let mut grad = g.gradient.to_flat();
        if !g.estimate.value.is_finite() || grad.iter().any(|v| !v.is_finite()) {
            trace.best_epoch = trace.best();
            return Err(Error::TrainingAborted {
                epoch,
                reason: "non-finite ELBO or gradient".into(),
                trace: Box::new(trace),
            });
        }
        let grad_rms = (grad.iter().map(|v| v * v).sum::<f64>() / grad.len() as f64).sqrt();

        trace.elbo_history.push(g.estimate.value);
        trace.grad_rms_history.push(grad_rms);
        trace.param_history.push(params.clone());
        trace.min_gap_history.push(g.min_gap);
        if epoch % SNAPSHOT_EVERY == 0 {
            trace.param_snapshots.push(Snapshot { epoch, posterior: q.clone() });
        }
        if g.estimate.value > best.0 {
            best = (g.estimate.value, q.clone());
        }

        let status: ConvergenceStatus = monitor_step(&trace, config.epochs);
        if status.converged {
            trace.converged = true;
            trace.convergence_epoch = Some(epoch);
            break;
        }

        clip_gradient(&mut grad, config.grad_clip_norm);
        adam.step(&mut params, &grad, config.learning_rate_at(epoch));
        q = q.with_flat(&params);
    }

    trace.best_epoch = trace.best();
    Ok((best.1, trace))
}

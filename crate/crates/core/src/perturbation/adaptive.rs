use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::gaussian::{check_covariance, coupling_blocks, gap_floor, second_order_moments, subspace_bound};
use crate::error::{Error, Result};
use crate::spectral::{cluster, eig_adaptive, ParametricModel, SpectralClusters, SymmetricMatrix};

/// Reliability below which results carry a warning.
pub const WARNING_THRESHOLD: f64 = 0.5;
pub const UNRELIABLE_WARNING: &str = "Uncertainty estimates may be unreliable";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    WellSeparated,
    StatisticalDegeneracy,
    NumericalDegeneracy,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::WellSeparated => "well_separated",
            Regime::StatisticalDegeneracy => "statistical_degeneracy",
            Regime::NumericalDegeneracy => "numerical_degeneracy",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PropagatedUncertainty {
    pub eigenvalues: Vec<f64>,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    /// Per-cluster regime.
    pub regime: Vec<Regime>,
    pub clusters: SpectralClusters,
    pub reliability: f64,
    /// Per-cluster Grassmannian distance bound.
    pub subspace_bounds: Vec<f64>,
    /// Eigenvalues whose variance is a subspace-level proxy.
    pub reduced_confidence: Vec<bool>,
    pub warning: bool,
}

impl PropagatedUncertainty {
    pub fn warning_message(&self) -> Option<&'static str> {
        self.warning.then_some(UNRELIABLE_WARNING)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveOptions {
    pub tau_num: f64,
    pub n_data: usize,
    /// Statistical cluster-threshold constant `C`.
    pub c_cluster: f64,
    /// Gap regularizer constant `C_α`.
    pub c_alpha: f64,
}

impl AdaptiveOptions {
    pub fn new(tau_num: f64, n_data: usize) -> Self {
        Self { tau_num, n_data, c_cluster: 1.0, c_alpha: 1.0 }
    }
}

/// `min(δ_ext / sqrt(tr Σ), 1)` over clusters; 1 when `tr Σ = 0`.
pub fn reliability_score(external_gaps: &[f64], cov_trace: f64) -> f64 {
    let sd = cov_trace.max(0.0).sqrt();
    external_gaps
        .iter()
        .map(|&g| if sd == 0.0 { 1.0 } else { (g / sd).min(1.0) })
        .fold(1.0, f64::min)
}

/// Regime-adaptive propagation of `w ~ N(0, cov_w)` through the spectrum of
/// `P + Σ w_m B_m`, with default constants `C = C_α = 1`.
pub fn propagate_adaptive(
    p: &SymmetricMatrix,
    model: &ParametricModel,
    cov_w: &DMatrix<f64>,
    tau_num: f64,
    n_data: usize,
) -> Result<PropagatedUncertainty> {
    propagate_adaptive_with(p, model, cov_w, &AdaptiveOptions::new(tau_num, n_data))
}

pub fn propagate_adaptive_with(
    p: &SymmetricMatrix,
    model: &ParametricModel,
    cov_w: &DMatrix<f64>,
    opts: &AdaptiveOptions,
) -> Result<PropagatedUncertainty> {
    if p.n() != model.n() {
        return Err(Error::DimensionMismatch { expected: model.n(), got: p.n(), context: "matrix" });
    }
    check_covariance(cov_w, model.n_latent())?;
    let decomp = eig_adaptive(p, 0.0)?;
    if !decomp.reliable || decomp.n() != p.n() {
        return Err(Error::Unreliable(format!(
            "adaptive decomposition of the {}x{} matrix did not meet accuracy targets",
            p.n(),
            p.n()
        )));
    }
    let clusters = cluster(&decomp.eigenvalues, opts.tau_num, opts.n_data, opts.c_cluster)?;
    let cov_trace = cov_w.trace();
    let sd = cov_trace.max(0.0).sqrt();
    let max_coupling = model.max_correction_norm();
    let blocks = coupling_blocks(&decomp, model);
    let mean_w = DVector::zeros(model.n_latent());
    let alpha = gap_floor(opts.n_data, opts.c_alpha);

    let n = decomp.n();
    let mut mean = decomp.eigenvalues.clone();
    let mut variance = vec![0.0; n];
    let mut reduced_confidence = vec![false; n];
    let mut regime = Vec::with_capacity(clusters.len());
    let mut subspace_bounds = Vec::with_capacity(clusters.len());

    for (k, range) in clusters.members.iter().enumerate() {
        let delta_int = clusters.internal_gap[k];
        let delta_ext = clusters.external_gap[k];
        let bound = if delta_ext.is_infinite() { 0.0 } else { subspace_bound(delta_ext, sd, max_coupling)? };
        subspace_bounds.push(bound);

        let label = if range.len() >= 2 && delta_int < opts.tau_num {
            Regime::NumericalDegeneracy
        } else if delta_ext < sd {
            Regime::StatisticalDegeneracy
        } else {
            Regime::WellSeparated
        };
        regime.push(label);

        match label {
            Regime::NumericalDegeneracy => {
                for i in range.clone() {
                    variance[i] = (bound * delta_int).powi(2);
                    reduced_confidence[i] = true;
                }
            }
            Regime::StatisticalDegeneracy | Regime::WellSeparated => {
                let floor = if label == Regime::StatisticalDegeneracy { alpha } else { opts.tau_num };
                for i in range.clone() {
                    let (m, v) = second_order_moments(&decomp, &blocks, &mean_w, cov_w, i, floor);
                    mean[i] = m;
                    variance[i] = v;
                }
            }
        }
    }

    let reliability = reliability_score(&clusters.external_gap, cov_trace);
    Ok(PropagatedUncertainty {
        eigenvalues: decomp.eigenvalues,
        mean,
        variance,
        regime,
        clusters,
        reliability,
        subspace_bounds,
        reduced_confidence,
        warning: reliability < WARNING_THRESHOLD,
    })
}

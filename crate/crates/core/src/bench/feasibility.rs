use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_DIMENSION: usize = 10;
pub const MAX_DIMENSION: usize = 1000;
pub const DATA_FACTOR: f64 = 100.0;
pub const GAP_FRACTION: f64 = 0.5;
pub const RELATIVE_GAP_FLOOR: f64 = 1e-6;
pub const MAX_CONDITION: f64 = 1e10;
pub const MIN_SIGNAL_RATIO: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityVerdict {
    pub scale: bool,
    pub data: bool,
    pub spectral: bool,
    pub numerical: bool,
    pub signal: bool,
    pub overall: bool,
    /// `100·n·ln n`.
    pub required_samples: f64,
    /// Fraction of gaps above `1e-6·‖P‖₂`.
    pub resolved_gap_fraction: f64,
    pub condition: f64,
    pub signal_ratio: f64,
}

/// The five practical feasibility constraints.
pub fn feasibility_check(n: usize, n_data: usize, gaps: &[f64], p_norm: f64, kappa: f64, sigma: f64) -> FeasibilityVerdict {
    let nf = n as f64;
    let required_samples = if n >= 1 { DATA_FACTOR * nf * nf.ln() } else { f64::INFINITY };
    let resolved_gap_fraction = if gaps.is_empty() {
        0.0
    } else {
        gaps.iter().filter(|&&g| g > RELATIVE_GAP_FLOOR * p_norm).count() as f64 / gaps.len() as f64
    };
    let signal_ratio = if sigma > 0.0 { p_norm / sigma } else { f64::INFINITY };
    let scale = (MIN_DIMENSION..=MAX_DIMENSION).contains(&n);
    let data = n_data as f64 >= required_samples;
    let spectral = resolved_gap_fraction >= GAP_FRACTION;
    let numerical = kappa <= MAX_CONDITION;
    let signal = signal_ratio >= MIN_SIGNAL_RATIO;
    FeasibilityVerdict {
        scale,
        data,
        spectral,
        numerical,
        signal,
        overall: scale && data && spectral && numerical && signal,
        required_samples,
        resolved_gap_fraction,
        condition: kappa,
        signal_ratio,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recommendation {
    Recommended,
    Marginal,
    Alternative,
}

impl Recommendation {
    pub fn as_str(self) -> &'static str {
        match self {
            Recommendation::Recommended => "recommended",
            Recommendation::Marginal => "marginal",
            Recommendation::Alternative => "alternative",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeploymentScore {
    pub score: f64,
    pub recommendation: Recommendation,
}

/// `N/(n² ln n) · δ_min/ε_target · 1/ln κ`; above 10 recommended, 1 to 10
/// marginal, below 1 alternative methods.
pub fn deployment_score(n_data: usize, n: usize, delta_min: f64, eps_target: f64, kappa: f64) -> Result<DeploymentScore> {
    if n < 2 {
        return Err(Error::InvalidArgument("deployment score needs n ≥ 2".into()));
    }
    if !(kappa > 1.0) {
        return Err(Error::InvalidArgument(format!("kappa must exceed 1 (ln κ > 0), got {kappa}")));
    }
    if !(eps_target > 0.0) || !(delta_min >= 0.0) {
        return Err(Error::InvalidArgument("need eps_target > 0 and delta_min ≥ 0".into()));
    }
    let nf = n as f64;
    let score = n_data as f64 / (nf * nf * nf.ln()) * (delta_min / eps_target) / kappa.ln();
    let recommendation = if score > 10.0 {
        Recommendation::Recommended
    } else if score >= 1.0 {
        Recommendation::Marginal
    } else {
        Recommendation::Alternative
    };
    Ok(DeploymentScore { score, recommendation })
}

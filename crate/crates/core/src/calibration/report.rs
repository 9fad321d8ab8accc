use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::metrics::{
    central_quantile, coverage, crps_gaussian, default_bins, ece, interval_score, nll_gaussian, overconfidence_rate,
    standardized_residuals, CalibrationBin,
};
use super::normality::{normality_battery, TestOutcome, TEST_NAMES};
use crate::error::{Error, Result};
use crate::variational::PredictiveDistribution;

pub const COVERAGE_LEVELS: [f64; 3] = [0.68, 0.95, 0.99];

/// Key used in the per-level maps, e.g. `"0.95"`.
pub fn level_key(level: f64) -> String {
    format!("{level:.2}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub n_eval: usize,
    pub n_bins: usize,
    pub ece: f64,
    pub mce: f64,
    pub ace: f64,
    pub reliability: f64,
    pub bins: Vec<CalibrationBin>,
    pub coverage: BTreeMap<String, f64>,
    pub sharpness: BTreeMap<String, f64>,
    pub interval_score: BTreeMap<String, f64>,
    pub crps: f64,
    pub nll: f64,
    pub overconfidence_rate: f64,
    pub normality: BTreeMap<String, TestOutcome>,
}

/// Column names of [`CalibrationReport::csv_row`].
pub fn csv_header() -> Vec<String> {
    let mut cols: Vec<String> = ["ece", "mce", "ace", "reliability", "cov68", "cov95", "cov99", "sharp95", "crps", "pis95", "nll"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    cols.extend(TEST_NAMES.iter().map(|t| format!("p_{t}")));
    cols
}

impl CalibrationReport {
    /// Values in [`csv_header`] order; skipped tests are empty.
    pub fn csv_row(&self) -> Vec<String> {
        let get = |m: &BTreeMap<String, f64>, level: f64| m.get(&level_key(level)).copied().unwrap_or(f64::NAN);
        let mut row: Vec<String> = [
            self.ece,
            self.mce,
            self.ace,
            self.reliability,
            get(&self.coverage, 0.68),
            get(&self.coverage, 0.95),
            get(&self.coverage, 0.99),
            get(&self.sharpness, 0.95),
            self.crps,
            get(&self.interval_score, 0.95),
            self.nll,
        ]
        .iter()
        .map(|v| v.to_string())
        .collect();
        for t in TEST_NAMES {
            row.push(match self.normality.get(t) {
                Some(o) if !o.skipped => o.p_value.to_string(),
                _ => String::new(),
            });
        }
        row
    }

    pub fn coverage_at(&self, level: f64) -> f64 {
        self.coverage.get(&level_key(level)).copied().unwrap_or(f64::NAN)
    }
}

/// Full report from flat predictive means, standard deviations and observations.
pub fn calibration_report(mu: &[f64], sigma: &[f64], y: &[f64]) -> Result<CalibrationReport> {
    let n = y.len();
    if mu.len() != n || sigma.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: mu.len().min(sigma.len()), context: "report inputs" });
    }
    if n == 0 {
        return Err(Error::InvalidArgument("calibration report needs at least one observation".into()));
    }
    let mut z = Vec::with_capacity(n);
    let (mut crps, mut nll) = (0.0, 0.0);
    for i in 0..n {
        if !(sigma[i] > 0.0) {
            return Err(Error::InvalidArgument(format!("predictive sigma {} is not positive", sigma[i])));
        }
        z.push((y[i] - mu[i]) / sigma[i]);
        crps += crps_gaussian(mu[i], sigma[i], y[i])?;
        nll += nll_gaussian(mu[i], sigma[i], y[i])?;
    }
    let nf = n as f64;
    let n_bins = default_bins(n);
    let e = ece(&z, n_bins)?;

    let mut cov = BTreeMap::new();
    let mut sharp = BTreeMap::new();
    let mut pis = BTreeMap::new();
    for level in COVERAGE_LEVELS {
        cov.insert(level_key(level), coverage(&z, level));
        let q = central_quantile(level);
        sharp.insert(level_key(level), sigma.iter().map(|s| 2.0 * q * s).sum::<f64>() / nf);
        let mut total = 0.0;
        for i in 0..n {
            total += interval_score(mu[i], sigma[i], 1.0 - level, y[i])?;
        }
        pis.insert(level_key(level), total / nf);
    }

    Ok(CalibrationReport {
        n_eval: n,
        n_bins,
        ece: e.ece,
        mce: e.mce,
        ace: e.ace,
        reliability: 1.0 - e.ece,
        bins: e.bins,
        coverage: cov,
        sharpness: sharp,
        interval_score: pis,
        crps: crps / nf,
        nll: nll / nf,
        overconfidence_rate: overconfidence_rate(&z),
        normality: normality_battery(&z),
    })
}

/// Report over predictive distributions and observed eigenvalue vectors.
pub fn report_from_predictions(preds: &[PredictiveDistribution], y: &[Vec<f64>]) -> Result<CalibrationReport> {
    standardized_residuals(preds, y)?;
    let mu: Vec<f64> = preds.iter().flat_map(|p| p.mean.iter().copied()).collect();
    let sigma: Vec<f64> = preds.iter().flat_map(|p| p.total_var.iter().map(|v| v.sqrt())).collect();
    let flat: Vec<f64> = y.iter().flatten().copied().collect();
    calibration_report(&mu, &sigma, &flat)
}

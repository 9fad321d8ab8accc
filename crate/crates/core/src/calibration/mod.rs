//! Calibration metrics, proper scores and residual normality tests.

mod metrics;
mod normality;
mod report;

pub use metrics::{
    central_quantile, coverage, crps_gaussian, default_bins, ece, interval_score, nll_gaussian, overconfidence_rate,
    standardized_residuals, CalibrationBin, EceResult,
};
pub use normality::{
    anderson_darling, anderson_darling_cdf, chi_squared, jarque_bera, kolmogorov_sf, kolmogorov_smirnov,
    normality_battery, shapiro_wilk, TestOutcome, NORMALITY_ALPHA, TEST_NAMES,
};
pub use report::{calibration_report, csv_header, level_key, report_from_predictions, CalibrationReport, COVERAGE_LEVELS};

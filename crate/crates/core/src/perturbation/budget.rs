use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stop once the remainder bound falls to this fraction of the accumulated sum.
pub const REMAINDER_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetedVariance {
    /// Accumulated sum plus the final remainder bound.
    pub total: f64,
    /// Fraction of the spectrum accumulated, `k/n`.
    pub confidence: f64,
    pub accumulated: f64,
    pub remainder: f64,
    pub steps: usize,
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    }
}

/// Greedy accumulation of `Σ s_i² Var_i` in order of decreasing
/// `|s_i|·sqrt(Var_i)`, stopping on the remainder bound or the budget.
pub fn budgeted_variance(sensitivities: &[f64], variances: &[f64], budget: usize) -> Result<BudgetedVariance> {
    let n = sensitivities.len();
    if n == 0 {
        return Err(Error::InvalidArgument("budgeted_variance needs at least one term".into()));
    }
    if variances.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: variances.len(), context: "variances" });
    }
    if budget == 0 {
        return Err(Error::InvalidArgument("budget must be positive".into()));
    }
    if sensitivities.iter().chain(variances).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("budgeted_variance input"));
    }
    if variances.iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidArgument("variances must be nonnegative".into()));
    }

    let mut order: Vec<usize> = (0..n).collect();
    let score = |i: usize| sensitivities[i].abs() * variances[i].sqrt();
    order.sort_by(|&a, &b| score(b).total_cmp(&score(a)));

    let mut accumulated = 0.0;
    let mut remainder = 0.0;
    let mut steps = 0;
    for k in 1..=n {
        let i = order[k - 1];
        accumulated += sensitivities[i].powi(2) * variances[i];
        steps = k;
        let tail = &order[k..];
        let tail_s2: f64 = tail.iter().map(|&j| sensitivities[j].powi(2)).sum();
        let mut tail_var: Vec<f64> = tail.iter().map(|&j| variances[j]).collect();
        remainder = tail_s2 * median(&mut tail_var);
        if remainder <= REMAINDER_FRACTION * accumulated || k == budget {
            break;
        }
    }
    Ok(BudgetedVariance {
        total: accumulated + remainder,
        confidence: steps as f64 / n as f64,
        accumulated,
        remainder,
        steps,
    })
}

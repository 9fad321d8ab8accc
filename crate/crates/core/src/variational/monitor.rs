use serde::{Deserialize, Serialize};

use super::train::TrainingTrace;

pub const ELBO_REL_TOL: f64 = 1e-4;
pub const PARAM_REL_TOL: f64 = 1e-3;
pub const GRAD_RMS_TOL: f64 = 1e-5;
pub const GAP_REL_TOL: f64 = 1e-2;
/// Criteria must hold for more than this many consecutive epochs.
pub const PATIENCE: usize = 10;
pub const MAX_WINDOW: usize = 50;

/// Windowed convergence criteria at one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStatus {
    pub window: usize,
    pub elbo_rel_change: f64,
    pub param_rel_change: f64,
    pub grad_rms: f64,
    pub gap_rel_change: f64,
    /// Consecutive epochs, ending at this one, on which all criteria hold.
    pub streak: usize,
    pub converged: bool,
}

impl ConvergenceStatus {
    pub fn all_criteria(&self) -> bool {
        self.elbo_rel_change < ELBO_REL_TOL
            && self.param_rel_change < PARAM_REL_TOL
            && self.grad_rms < GRAD_RMS_TOL
            && self.gap_rel_change < GAP_REL_TOL
    }
}

/// `W = min(50, T/10)`, at least 1.
pub fn window_size(total_epochs: usize) -> usize {
    (total_epochs / 10).clamp(1, MAX_WINDOW)
}

/// `|a − b| / |b|`, with `0/0 = 0`.
fn rel_change(now: f64, then: f64) -> f64 {
    let diff = (now - then).abs();
    if diff == 0.0 {
        0.0
    } else {
        diff / then.abs()
    }
}

fn vec_rel_change(now: &[f64], then: &[f64]) -> f64 {
    let diff: f64 = now.iter().zip(then).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let base: f64 = then.iter().map(|b| b * b).sum::<f64>().sqrt();
    if diff == 0.0 {
        0.0
    } else {
        diff / base
    }
}

/// Criteria at 0-based epoch `t`, or `None` if `t < W`.
fn criteria_at(trace: &TrainingTrace, t: usize, w: usize) -> Option<(f64, f64, f64, f64)> {
    if t < w || t >= trace.elbo_history.len() {
        return None;
    }
    let elbo = rel_change(trace.elbo_history[t], trace.elbo_history[t - w]);
    let params = match (trace.param_history.get(t), trace.param_history.get(t - w)) {
        (Some(a), Some(b)) => vec_rel_change(a, b),
        _ => f64::INFINITY,
    };
    let grad = trace.grad_rms_history.get(t).copied().unwrap_or(f64::INFINITY);
    let gap = match (trace.min_gap_history.get(t), trace.min_gap_history.get(t - w)) {
        (Some(a), Some(b)) => rel_change(*a, *b),
        _ => f64::INFINITY,
    };
    Some((elbo, params, grad, gap))
}

fn passes(c: (f64, f64, f64, f64)) -> bool {
    c.0 < ELBO_REL_TOL && c.1 < PARAM_REL_TOL && c.2 < GRAD_RMS_TOL && c.3 < GAP_REL_TOL
}

/// Evaluates the four windowed criteria at the latest epoch of `trace`.
/// `total_epochs` sets the window `W`.
pub fn monitor_step(trace: &TrainingTrace, total_epochs: usize) -> ConvergenceStatus {
    let w = window_size(total_epochs);
    let len = trace.elbo_history.len();
    let nan = f64::INFINITY;
    let Some(now) = len.checked_sub(1).and_then(|t| criteria_at(trace, t, w)) else {
        return ConvergenceStatus {
            window: w,
            elbo_rel_change: nan,
            param_rel_change: nan,
            grad_rms: nan,
            gap_rel_change: nan,
            streak: 0,
            converged: false,
        };
    };
    let mut streak = 0;
    let mut t = len - 1;
    while let Some(c) = criteria_at(trace, t, w) {
        if !passes(c) {
            break;
        }
        streak += 1;
        if streak > PATIENCE || t == 0 {
            break;
        }
        t -= 1;
    }
    ConvergenceStatus {
        window: w,
        elbo_rel_change: now.0,
        param_rel_change: now.1,
        grad_rms: now.2,
        gap_rel_change: now.3,
        streak,
        converged: streak > PATIENCE,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace_from(elbo: impl Fn(usize) -> f64, epochs: usize) -> TrainingTrace {
        let mut trace = TrainingTrace::default();
        for t in 0..epochs {
            trace.elbo_history.push(elbo(t));
            trace.grad_rms_history.push(0.0);
            trace.param_history.push(vec![1.0, 2.0]);
            trace.min_gap_history.push(0.5);
        }
        trace
    }

    fn first_convergence(trace: &TrainingTrace, total: usize) -> Option<usize> {
        let mut partial = TrainingTrace::default();
        for t in 0..trace.elbo_history.len() {
            partial.elbo_history.push(trace.elbo_history[t]);
            partial.grad_rms_history.push(trace.grad_rms_history[t]);
            partial.param_history.push(trace.param_history[t].clone());
            partial.min_gap_history.push(trace.min_gap_history[t]);
            if monitor_step(&partial, total).converged {
                return Some(t + 1);
            }
        }
        None
    }

    #[test]
    fn window_examples() {
        assert_eq!(window_size(100), 10);
        assert_eq!(window_size(10_000), 50);
        assert_eq!(window_size(5), 1);
    }

    #[test]
    fn constant_trace_converges_quickly() {
        let trace = trace_from(|_| -3.0, 100);
        let epoch = first_convergence(&trace, 100).unwrap();
        assert!(epoch <= window_size(100) + 12, "converged at {epoch}");
        assert_eq!(epoch, window_size(100) + 11);
    }

    #[test]
    fn oscillating_loss_never_converges() {
        let trace = trace_from(|t| 1.0 + 0.005 * (0.3 * t as f64).sin(), 500);
        assert_eq!(first_convergence(&trace, 500), None);
    }

    #[test]
    fn inverse_t_decay_matches_windowed_ratio() {
        // L_t = 1 + 1/t (1-based). With W = 50 the ratio is 50 / (t (t − 49)),
        // first below 1e-4 at t = 733; convergence needs 11 epochs in a row.
        let total = 10_000;
        let trace = trace_from(|t| 1.0 + 1.0 / (t + 1) as f64, 800);
        assert_eq!(first_convergence(&trace, total), Some(743));
    }

    #[test]
    fn short_history_is_not_converged() {
        let trace = trace_from(|_| 1.0, 5);
        let status = monitor_step(&trace, 100);
        assert!(!status.converged);
        assert_eq!(status.streak, 0);
    }
}

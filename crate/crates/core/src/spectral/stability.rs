//! Input screening, diagonal preconditioning and the escalating-jitter retry
//! ladder used when an operation produces non-finite output.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::condition::cond_estimate;
use super::SymmetricMatrix;
use crate::error::{Error, Result};

/// Condition estimate above which diagonal scaling is applied.
pub const PRECONDITION_COND: f64 = 1e12;
/// Floor for diagonal entries, relative to `‖P‖_F`.
pub const DIAGONAL_FLOOR: f64 = 1e-12;
/// Jitter rungs, relative to `‖P‖_F`.
pub const LADDER: [f64; 8] = [1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3];
/// Results obtained with jitter above this are flagged degraded.
pub const DEGRADED_ABOVE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum StabilityEvent {
    /// `P ← D^{-1/2} P D^{-1/2}` with the recorded diagonal `D`.
    Preconditioned { diagonal: Vec<f64>, cond_before: f64, cond_after: f64 },
    /// Retry with `P + jitter·‖P‖_F·I`.
    Jitter { relative: f64, succeeded: bool },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StabilityLog {
    pub frobenius_norm: f64,
    pub condition_estimate: f64,
    pub events: Vec<StabilityEvent>,
    pub degraded: bool,
}

/// Matrix after screening, plus the transform that produced it.
#[derive(Debug, Clone)]
pub struct GuardedMatrix {
    pub matrix: SymmetricMatrix,
    /// `D` if preconditioning was applied.
    pub scaling: Option<Vec<f64>>,
}

impl GuardedMatrix {
    /// Recovers the original matrix `D^{1/2} G D^{1/2}`.
    pub fn unscale(&self) -> SymmetricMatrix {
        match &self.scaling {
            None => self.matrix.clone(),
            Some(d) => {
                let a = self.matrix.as_matrix();
                SymmetricMatrix::symmetrized(DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| {
                    a[(i, j)] * d[i].sqrt() * d[j].sqrt()
                }))
            }
        }
    }

    /// Maps an eigenvector `u` of the scaled matrix to `D^{-1/2} u`, a
    /// generalized eigenvector of the pencil `(P, D)`.
    pub fn map_vector_back(&self, u: &[f64]) -> Vec<f64> {
        match &self.scaling {
            None => u.to_vec(),
            Some(d) => u.iter().zip(d).map(|(x, di)| x / di.sqrt()).collect(),
        }
    }
}

/// Screens `p`: rejects non-finite input, records `‖P‖_F` and `κ`, and applies
/// diagonal scaling when `κ > 1e12`.
pub fn stability_guard(p: &SymmetricMatrix) -> Result<(GuardedMatrix, StabilityLog)> {
    if p.as_matrix().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix passed to stability guard"));
    }
    let frobenius_norm = p.frobenius_norm();
    let kappa = cond_estimate(p);
    let mut log = StabilityLog { frobenius_norm, condition_estimate: kappa, ..Default::default() };
    if kappa <= PRECONDITION_COND {
        return Ok((GuardedMatrix { matrix: p.clone(), scaling: None }, log));
    }

    let floor = DIAGONAL_FLOOR * frobenius_norm;
    let d: Vec<f64> = (0..p.n()).map(|i| p.get(i, i).abs().max(floor)).collect();
    let a = p.as_matrix();
    let scaled = SymmetricMatrix::symmetrized(DMatrix::from_fn(p.n(), p.n(), |i, j| {
        a[(i, j)] / (d[i].sqrt() * d[j].sqrt())
    }));
    log.events.push(StabilityEvent::Preconditioned {
        diagonal: d.clone(),
        cond_before: kappa,
        cond_after: cond_estimate(&scaled),
    });
    Ok((GuardedMatrix { matrix: scaled, scaling: Some(d) }, log))
}

/// Outcome of [`with_jitter_ladder`].
#[derive(Debug, Clone)]
pub struct LadderOutcome<T> {
    pub value: T,
    /// Relative jitter that produced `value` (0 if the first attempt succeeded).
    pub jitter: f64,
    pub degraded: bool,
    pub events: Vec<StabilityEvent>,
}

/// Runs `op` on `p`; on failure retries on `P + ε·‖P‖_F·I` with `ε` climbing
/// the ladder from `start` (the first rung at or above `start`, or `start`
/// itself when it lies below the ladder) up to `1e-3`.
pub fn with_jitter_ladder<T>(
    p: &SymmetricMatrix,
    start: f64,
    mut op: impl FnMut(&SymmetricMatrix) -> Option<T>,
) -> Result<LadderOutcome<T>> {
    if let Some(value) = op(p) {
        return Ok(LadderOutcome { value, jitter: 0.0, degraded: false, events: Vec::new() });
    }
    let norm = p.frobenius_norm().max(f64::MIN_POSITIVE);
    let start = start.min(LADDER[LADDER.len() - 1]);
    let mut rungs: Vec<f64> = Vec::new();
    if start > 0.0 && start < LADDER[0] {
        rungs.push(start);
    }
    rungs.extend(LADDER.iter().copied().filter(|&r| r >= start));

    let mut events = Vec::new();
    for eps in rungs {
        let attempt = op(&p.shifted(eps * norm));
        events.push(StabilityEvent::Jitter { relative: eps, succeeded: attempt.is_some() });
        if let Some(value) = attempt {
            return Ok(LadderOutcome { value, jitter: eps, degraded: eps > DEGRADED_ABOVE, events });
        }
    }
    Err(Error::SolverFailure {
        diagnostics: format!("operation failed at every jitter rung up to {:e}", LADDER[LADDER.len() - 1]),
    })
}

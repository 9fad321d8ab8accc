//! Propagation of Gaussian latent uncertainty into eigenvalues and subspaces.

mod adaptive;
mod budget;
mod gaussian;

pub use adaptive::{
    propagate_adaptive, propagate_adaptive_with, reliability_score, AdaptiveOptions, PropagatedUncertainty, Regime,
    UNRELIABLE_WARNING, WARNING_THRESHOLD,
};
pub use budget::{budgeted_variance, BudgetedVariance, REMAINDER_FRACTION};
pub use gaussian::{
    diagonal_quadratic_forms, effective_gap, gap_floor, propagate_gaussian, sensitivities, subspace_bound,
    EigenvalueMoments, SensitivityTable, PSD_TOL,
};

//! Symmetric matrices, the affine matrix family, and eigensolvers.

mod cluster;
mod condition;
mod eigen;
mod jacobi;
mod matrix;
mod model;
mod randomized;
mod stability;

pub use cluster::{cluster, cluster_threshold, SpectralClusters};
pub use condition::cond_estimate;
pub use eigen::{
    eig_adaptive, min_gap, spectral_gaps, symmetric_eigen, symmetric_eigenvalues, PrecisionTier,
    SpectralDecomposition, ENHANCED_TIER_MAX_COND, ORTHOGONALITY_TOL, STANDARD_TIER_MAX_COND,
};
pub use matrix::{SymmetricMatrix, JSON_SYMMETRY_TOL};
pub use model::ParametricModel;
pub use randomized::{eig_randomized, power_iterations, ApproxSpectrum};
pub use stability::{
    stability_guard, with_jitter_ladder, GuardedMatrix, LadderOutcome, StabilityEvent, StabilityLog,
    DEGRADED_ABOVE, LADDER,
};

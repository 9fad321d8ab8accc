//! Gaussian variational posterior over the latent corrections, ELBO
//! estimation and training.

mod control;
mod monitor;
mod objective;
mod posterior;
mod predict;
mod train;

pub use control::{cv_fit, CvFit, RIDGE_PENALTY};
pub use monitor::{
    monitor_step, window_size, ConvergenceStatus, ELBO_REL_TOL, GAP_REL_TOL, GRAD_RMS_TOL, PARAM_REL_TOL, PATIENCE,
};
pub use objective::{elbo, grad_elbo, grad_elbo_score_cv, ElboEstimate, ElboGradient};
pub use posterior::{
    kl_gaussian, kl_gradient, sample_posterior, PosteriorGradient, PriorSpec, VariationalPosterior,
    DEFAULT_PRIOR_STD, INITIAL_ALPHA,
};
pub use predict::{predict, predict_batch, PredictiveDistribution};
pub use train::{clip_gradient, train, train_from, Estimator, Snapshot, TrainingConfig, TrainingTrace};

//! Differentially private empirical risk minimization with DP-SGD.
//!
//! The crate covers noise calibration and private selection ([`privacy`]),
//! per-sample clipping and exact clipping-bias oracles ([`clipping`]),
//! objective families with per-sample Lipschitz constants ([`losses`]),
//! Lipschitz-profile statistics ([`lipschitz`]), the optimizer and its
//! hyperparameter schedules ([`optimizer`]) and an experiment runner with
//! CSV reports ([`harness`]).
//!
//! ```
//! use dperm::{compute_phi, noise_variance, PrivacyBudget};
//!
//! let budget = PrivacyBudget::new(2.0, 1e-5).unwrap();
//! let phi = compute_phi(1000, 10, &budget).unwrap();
//! assert!(phi.value < 1.0);
//! let noise = noise_variance(400, 2.0, 1000, 10, &budget).unwrap();
//! assert!(noise.sigma_sq > 0.0);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod clipping;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod lipschitz;
pub mod losses;
pub mod optimizer;
pub mod privacy;

pub use clipping::{
    bias_bound_corollary, bias_bound_lemma, clip, clipped_mean, clipping_bias_exact,
    DiscreteVectorDistribution,
};
pub use error::{Error, Result};
pub use lipschitz::{
    alpha_estimate, build_profile, interpolation_gap, percentile, LipschitzProfile,
};
pub use losses::{
    Dataset, Domain, GeometricMedianProblem, LogisticProblem, LowerBoundProblem, Problem, QvSpec,
};
pub use optimizer::{
    dp_sgd_step, optimization_risk, poisson_sample, run_dp_sgd, schedule_constrained_convex,
    schedule_interpolation, schedule_nonconvex, schedule_sharp_convex,
    schedule_unconstrained_convex, DpSgdConfig, RiskKind, RunResult, Schedule,
};
pub use privacy::{
    compute_phi, gaussian_noise, noise_variance, report_noisy_max, NoiseSpec, Phi, PrivacyBudget,
};

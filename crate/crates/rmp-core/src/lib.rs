//! Posterior-mean estimation for Bayesian inverse problems via reverse mean
//! propagation (RMP) over variance-exploding and variance-preserving diffusion
//! schedules.
//!
//! The crate works with analytically tractable models — isotropic
//! Gaussian-mixture priors observed through linear-Gaussian measurements — so
//! every quantity the solver manipulates (reverse-conditional moments,
//! perturbed marginals, likelihood scores, KL terms) has a closed form or an
//! independent numerical oracle to check against.
//!
//! Layout:
//! - [`schedule`]: VE/VP noise schedules and derived quantities.
//! - [`mixture`]: mixture densities, scores, perturbations, joints, posteriors.
//! - [`reverse`]: exact reverse-conditional moments, the deterministic mean
//!   chain, and its closed-form endpoints.
//! - [`guidance`]: Tweedie denoisers and likelihood-score strategies.
//! - [`solver`]: the stochastic natural-gradient RMP run loop.
//! - [`oracle`]: independent posterior-mean oracles and a KL-decomposition
//!   diagnostic for conjugate chains.
//! - [`baselines`]: guided ancestral sampling and sample-averaged posterior
//!   means with exact NFE accounting.
//!
//! # Example
//!
//! ```
//! use nalgebra::{dvector, DMatrix};
//! use rmp_core::{
//!     guidance::{Guidance, GuidanceKind},
//!     mixture::{GaussianMixture, LinearGaussianMeasurement},
//!     schedule::{Schedule, VpSchedule},
//!     solver::{run_rmp, RmpConfig},
//! };
//!
//! let prior = GaussianMixture::new(
//!     vec![0.5, 0.5],
//!     vec![dvector![-1.0], dvector![1.0]],
//!     vec![0.04, 0.04],
//! )
//! .unwrap();
//! let meas = LinearGaussianMeasurement::new(DMatrix::from_element(1, 1, 1.0), 0.5).unwrap();
//! let schedule = Schedule::Vp(VpSchedule::linear(200, 1e-4, 0.02).unwrap());
//!
//! let mut cfg = RmpConfig::new(schedule);
//! cfg.seed = 7;
//! let guidance = Guidance::new(GuidanceKind::PriorFree, None, &prior, &meas);
//! let y = dvector![0.2];
//! let out = run_rmp(&cfg, &prior, &guidance, &y).unwrap();
//! assert!(out.final_mean[0].is_finite());
//! ```

pub mod baselines;
pub mod error;
pub mod guidance;
pub mod math;
pub mod mixture;
pub mod model;
pub mod oracle;
pub mod reverse;
pub mod rng;
pub mod schedule;
pub mod solver;

pub use error::{Error, Result};
pub use guidance::{Guidance, GuidanceKind, LikelihoodStrategy};
pub use mixture::{FullGaussianMixture, GaussianMixture, LinearGaussianMeasurement};
pub use model::ScoreModel;
pub use reverse::{PosteriorStats, ReverseMoments};
pub use schedule::{Schedule, SchedulePoint, VeSchedule, VpSchedule};
pub use solver::{RmpConfig, RunStatus, Trajectory};

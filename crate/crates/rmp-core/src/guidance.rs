//! Likelihood-score strategies and the Tweedie denoiser.
//!
//! Three strategies sit behind one interface so the solver never cares which
//! approximation it is running:
//!
//! - [`LikelihoodStrategy::ExactMixture`]: the exact ∇ log p(y|x_k) under the
//!   mixture model, computed as ∇ log p(x_k, y) − ∇ log p(x_k) with the joint
//!   built in closed form.
//! - [`LikelihoodStrategy::PriorFree`]: the Gaussian form obtained by
//!   inverting the perturbation kernel while treating its noise as
//!   independent of x_k. Exact only for a flat prior; the gap against
//!   `ExactMixture` is a measurable quantity, not an error.
//! - [`LikelihoodStrategy::Dps`]: ∇ log N(y; A·x̂_0(x_k), ε²I) with x̂_0 the
//!   Tweedie estimate, the chain rule going through the denoiser Jacobian
//!   (analytic when the model exposes a Hessian, otherwise a central
//!   finite-difference directional derivative).

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::math::LN_TWO_PI;
use crate::mixture::{GaussianMixture, LinearGaussianMeasurement};
use crate::model::ScoreModel;
use crate::schedule::SchedulePoint;

/// VE Tweedie denoiser: x̂_0 = x_k + σ_k²·score.
pub fn tweedie_ve(x: &DVector<f64>, sigma: f64, score: &DVector<f64>) -> Result<DVector<f64>> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::invalid("sigma must be finite and >= 0"));
    }
    tweedie(x, SchedulePoint::Ve { sigma }, score)
}

/// VP Tweedie denoiser: x̂_0 = (x_k + (1−ᾱ_k)·score)/√ᾱ_k.
pub fn tweedie_vp(x: &DVector<f64>, alpha_bar: f64, score: &DVector<f64>) -> Result<DVector<f64>> {
    if !(alpha_bar > 0.0 && alpha_bar <= 1.0) {
        return Err(Error::invalid("alpha_bar must lie in (0, 1]"));
    }
    tweedie(x, SchedulePoint::Vp { alpha_bar }, score)
}

/// Tweedie denoiser at a schedule point: (x + c·score)/s for the kernel
/// x_k = s·x_0 + √c·noise.
pub fn tweedie(x: &DVector<f64>, at: SchedulePoint, score: &DVector<f64>) -> Result<DVector<f64>> {
    if x.len() != score.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: score.len(),
        });
    }
    let (scale, var_add) = at.kernel();
    if scale == 0.0 {
        return Err(Error::invalid("degenerate kernel: alpha_bar = 0"));
    }
    Ok((x + score * var_add) / scale)
}

/// Balancing coefficient γ = ζ·‖prior_score‖/‖likelihood_score‖, so the
/// scaled guidance keeps ‖γ·likelihood_score‖ = ζ·‖prior_score‖.
///
/// A zero likelihood score yields γ = 0 with the second field set: scaling an
/// exact-zero guidance is harmless, but callers may want to log it.
pub fn gamma_balance(
    zeta: f64,
    prior_score: &DVector<f64>,
    likelihood_score: &DVector<f64>,
) -> (f64, bool) {
    let lik_norm = likelihood_score.norm();
    if lik_norm == 0.0 {
        return (0.0, true);
    }
    (zeta * prior_score.norm() / lik_norm, false)
}

/// Which likelihood-score strategy a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GuidanceKind {
    ExactMixture,
    PriorFree,
    Dps,
}

/// A likelihood-score evaluator. Score-model evaluations needed internally
/// (the DPS denoiser and its finite-difference Jacobian) go through the model
/// handed in per call, so callers can count them.
#[derive(Clone, Copy)]
pub enum LikelihoodStrategy<'a> {
    ExactMixture {
        prior: &'a GaussianMixture,
        meas: &'a LinearGaussianMeasurement,
    },
    PriorFree {
        meas: &'a LinearGaussianMeasurement,
    },
    Dps {
        meas: &'a LinearGaussianMeasurement,
    },
}

impl<'a> LikelihoodStrategy<'a> {
    pub fn new(
        kind: GuidanceKind,
        prior: &'a GaussianMixture,
        meas: &'a LinearGaussianMeasurement,
    ) -> Self {
        match kind {
            GuidanceKind::ExactMixture => LikelihoodStrategy::ExactMixture { prior, meas },
            GuidanceKind::PriorFree => LikelihoodStrategy::PriorFree { meas },
            GuidanceKind::Dps => LikelihoodStrategy::Dps { meas },
        }
    }

    pub fn kind(&self) -> GuidanceKind {
        match self {
            LikelihoodStrategy::ExactMixture { .. } => GuidanceKind::ExactMixture,
            LikelihoodStrategy::PriorFree { .. } => GuidanceKind::PriorFree,
            LikelihoodStrategy::Dps { .. } => GuidanceKind::Dps,
        }
    }

    pub fn measurement(&self) -> &LinearGaussianMeasurement {
        match self {
            LikelihoodStrategy::ExactMixture { meas, .. }
            | LikelihoodStrategy::PriorFree { meas }
            | LikelihoodStrategy::Dps { meas } => meas,
        }
    }

    fn check_dims(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<()> {
        let meas = self.measurement();
        if x.len() != meas.in_dim() {
            return Err(Error::DimensionMismatch {
                expected: meas.in_dim(),
                got: x.len(),
            });
        }
        if y.len() != meas.out_dim() {
            return Err(Error::DimensionMismatch {
                expected: meas.out_dim(),
                got: y.len(),
            });
        }
        Ok(())
    }

    /// ∇_{x_k} of this strategy's own log p(y|x_k) surrogate.
    ///
    /// `prior_score`, when given, must be the model score at (x, at); DPS
    /// reuses it for the Tweedie estimate instead of re-evaluating.
    pub fn score_with(
        &self,
        model: &dyn ScoreModel,
        x: &DVector<f64>,
        at: SchedulePoint,
        y: &DVector<f64>,
        prior_score: Option<&DVector<f64>>,
    ) -> Result<DVector<f64>> {
        self.check_dims(x, y)?;
        let out = match self {
            LikelihoodStrategy::ExactMixture { prior, meas } => {
                let joint = prior.joint_with_measurement(meas, at)?;
                let z = stack(x, y);
                let joint_score = joint.score(&z)?;
                let marginal_score = prior.score_at(x, at)?;
                joint_score.rows(0, x.len()).into_owned() - marginal_score
            }
            LikelihoodStrategy::PriorFree { meas } => {
                let (scale, var_add) = at.kernel();
                if scale == 0.0 {
                    return Err(Error::invalid(
                        "prior-free score undefined at alpha_bar = 0",
                    ));
                }
                let (chol, _) = kernel_inverted_covariance(meas, scale, var_add)?;
                let resid = y - meas.matrix() * x / scale;
                meas.matrix().transpose() * chol.solve(&resid) / scale
            }
            LikelihoodStrategy::Dps { meas } => {
                let score = match prior_score {
                    Some(s) => s.clone(),
                    None => model.score(x, at),
                };
                let x_hat = tweedie(x, at, &score)?;
                let eps2 = meas.noise_std() * meas.noise_std();
                let u = meas.matrix().transpose() * (y - meas.matrix() * &x_hat) / eps2;
                if u.norm() == 0.0 {
                    return Ok(DVector::zeros(x.len()));
                }
                match model.hessian(x, at) {
                    Some(h) => denoiser_jacobian(at, &h)?.transpose() * u,
                    None => {
                        // The denoiser Jacobian is symmetric (it is I plus a
                        // scaled log-density Hessian), so Jᵀu equals the
                        // directional derivative of x̂_0 along u.
                        let h = 1e-4 * (1.0 + x.norm());
                        let dir = &u / u.norm();
                        let up = x + &dir * h;
                        let down = x - &dir * h;
                        let x_hat_up = tweedie(&up, at, &model.score(&up, at))?;
                        let x_hat_down = tweedie(&down, at, &model.score(&down, at))?;
                        (x_hat_up - x_hat_down) * (u.norm() / (2.0 * h))
                    }
                }
            }
        };
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("likelihood score".into()));
        }
        Ok(out)
    }

    /// Convenience wrapper for `score_with(.., None)`.
    pub fn score(
        &self,
        model: &dyn ScoreModel,
        x: &DVector<f64>,
        at: SchedulePoint,
        y: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        self.score_with(model, x, at, y, None)
    }

    /// The log-density objective whose gradient `score` implements. Useful
    /// for finite-difference validation and diagnostics.
    pub fn objective(
        &self,
        model: &dyn ScoreModel,
        x: &DVector<f64>,
        at: SchedulePoint,
        y: &DVector<f64>,
    ) -> Result<f64> {
        self.check_dims(x, y)?;
        match self {
            LikelihoodStrategy::ExactMixture { prior, meas } => {
                let joint = prior.joint_with_measurement(meas, at)?;
                let z = stack(x, y);
                Ok(joint.log_density(&z)? - prior.log_density_at(x, at)?)
            }
            LikelihoodStrategy::PriorFree { meas } => {
                let (scale, var_add) = at.kernel();
                if scale == 0.0 {
                    return Err(Error::invalid(
                        "prior-free score undefined at alpha_bar = 0",
                    ));
                }
                let (chol, log_det) = kernel_inverted_covariance(meas, scale, var_add)?;
                let resid = y - meas.matrix() * x / scale;
                let m = meas.out_dim() as f64;
                Ok(-0.5 * m * LN_TWO_PI - 0.5 * log_det - 0.5 * resid.dot(&chol.solve(&resid)))
            }
            LikelihoodStrategy::Dps { meas } => {
                let score = model.score(x, at);
                let x_hat = tweedie(x, at, &score)?;
                let eps2 = meas.noise_std() * meas.noise_std();
                let resid = y - meas.matrix() * x_hat;
                let m = meas.out_dim() as f64;
                Ok(-0.5 * m * (LN_TWO_PI + eps2.ln()) - resid.norm_squared() / (2.0 * eps2))
            }
        }
    }

    /// Tr ∇²_{x_k} of the strategy objective, for the learned-precision
    /// update. DPS falls back to central differences of its own score.
    pub fn hessian_trace(
        &self,
        model: &dyn ScoreModel,
        x: &DVector<f64>,
        at: SchedulePoint,
        y: &DVector<f64>,
    ) -> Result<f64> {
        self.check_dims(x, y)?;
        match self {
            LikelihoodStrategy::ExactMixture { prior, meas } => {
                let joint = prior.joint_with_measurement(meas, at)?;
                let z = stack(x, y);
                let joint_hess = joint.hessian(&z)?;
                let d = x.len();
                let mut trace = 0.0;
                for i in 0..d {
                    trace += joint_hess[(i, i)];
                }
                Ok(trace - prior.hessian_trace_at(x, at)?)
            }
            LikelihoodStrategy::PriorFree { meas } => {
                let (scale, var_add) = at.kernel();
                if scale == 0.0 {
                    return Err(Error::invalid(
                        "prior-free score undefined at alpha_bar = 0",
                    ));
                }
                let (chol, _) = kernel_inverted_covariance(meas, scale, var_add)?;
                let s_inv_a = chol.solve(meas.matrix());
                let quad = meas.matrix().transpose() * s_inv_a;
                Ok(-quad.trace() / (scale * scale))
            }
            LikelihoodStrategy::Dps { .. } => {
                let h = 1e-4 * (1.0 + x.norm());
                let mut trace = 0.0;
                for i in 0..x.len() {
                    let mut up = x.clone();
                    up[i] += h;
                    let mut down = x.clone();
                    down[i] -= h;
                    let g_up = self.score(model, &up, at, y)?;
                    let g_down = self.score(model, &down, at, y)?;
                    trace += (g_up[i] - g_down[i]) / (2.0 * h);
                }
                Ok(trace)
            }
        }
    }
}

/// Jacobian of the Tweedie denoiser: (I + c·H)/s for the kernel
/// x_k = s·x_0 + √c·noise, with H the log-density Hessian at x_k.
fn denoiser_jacobian(at: SchedulePoint, hessian: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (scale, var_add) = at.kernel();
    if scale == 0.0 {
        return Err(Error::invalid("degenerate kernel: alpha_bar = 0"));
    }
    let d = hessian.nrows();
    Ok((DMatrix::identity(d, d) + hessian * var_add) / scale)
}

/// Cholesky of S = (c/s²)·A·Aᵀ + ε²·I plus its log-determinant.
fn kernel_inverted_covariance(
    meas: &LinearGaussianMeasurement,
    scale: f64,
    var_add: f64,
) -> Result<(Cholesky<f64, nalgebra::Dyn>, f64)> {
    let a = meas.matrix();
    let mut s = a * a.transpose() * (var_add / (scale * scale));
    for i in 0..meas.out_dim() {
        s[(i, i)] += meas.noise_std() * meas.noise_std();
    }
    let chol = Cholesky::new(s).ok_or(Error::NotPositiveDefinite)?;
    let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    Ok((chol, log_det))
}

fn stack(x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
    let mut z = DVector::zeros(x.len() + y.len());
    z.rows_mut(0, x.len()).copy_from(x);
    z.rows_mut(x.len(), y.len()).copy_from(y);
    z
}

/// A strategy plus its balancing coefficient, as consumed by the solver.
/// `zeta = None` applies the likelihood score unscaled (γ = 1);
/// `zeta = Some(ζ)` rescales it each step so ‖γ·ℓ‖ = ζ·‖prior score‖.
#[derive(Clone, Copy)]
pub struct Guidance<'a> {
    pub strategy: LikelihoodStrategy<'a>,
    pub zeta: Option<f64>,
}

impl<'a> Guidance<'a> {
    pub fn new(
        kind: GuidanceKind,
        zeta: Option<f64>,
        prior: &'a GaussianMixture,
        meas: &'a LinearGaussianMeasurement,
    ) -> Self {
        Self {
            strategy: LikelihoodStrategy::new(kind, prior, meas),
            zeta,
        }
    }

    /// γ for one gradient assembly; the flag marks a zero likelihood score.
    pub fn gamma(
        &self,
        prior_score: &DVector<f64>,
        likelihood_score: &DVector<f64>,
    ) -> (f64, bool) {
        match self.zeta {
            None => (1.0, false),
            Some(z) => gamma_balance(z, prior_score, likelihood_score),
        }
    }
}

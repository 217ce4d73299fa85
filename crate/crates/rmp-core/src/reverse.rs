//! Exact reverse-conditional moments, the deterministic mean-propagation
//! chain, and its closed-form endpoints.
//!
//! Everything here works in the scalar-isotropic regime: the posterior
//! covariance enters as v·I, which is exact for the conjugate models used in
//! tests and the approximation the fixed-precision solver relies on. The
//! full-matrix forms would need a matrix inverse per step and nothing in this
//! crate exercises them.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::schedule::{Schedule, VeSchedule, VpSchedule};

/// Posterior summary (mean, isotropic variance v) the reverse chain consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorStats {
    pub mean: DVector<f64>,
    pub variance: f64,
}

impl PosteriorStats {
    pub fn new(mean: DVector<f64>, variance: f64) -> Result<Self> {
        if !(variance > 0.0) || !variance.is_finite() {
            return Err(Error::invalid("posterior variance must be finite and > 0"));
        }
        if mean.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("posterior mean must be finite"));
        }
        Ok(Self { mean, variance })
    }
}

/// Coefficients of the reverse conditional mean and its variance at one step:
/// mean = x_next_coeff·x_{k+1} + posterior_coeff·E[x_0|y], covariance
/// variance·I.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReverseMoments {
    pub x_next_coeff: f64,
    pub posterior_coeff: f64,
    pub variance: f64,
}

/// VE moments at step k with posterior variance v:
/// x_next_coeff = (σ_k²+v)/(σ_{k+1}²+v),
/// posterior_coeff = (σ_{k+1}²−σ_k²)/(σ_{k+1}²+v),
/// variance = (σ_{k+1}²−σ_k²)(σ_k²+v)/(σ_{k+1}²+v).
pub fn moments_ve(s: &VeSchedule, k: usize, v: f64) -> Result<ReverseMoments> {
    s.check_step(k)?;
    check_variance(v)?;
    let s_k = s.sigma(k).powi(2);
    let s_next = s.sigma(k + 1).powi(2);
    let gap = s_next - s_k;
    if !(gap > 0.0) {
        return Err(Error::invalid("degenerate VE step: sigma must increase"));
    }
    let denom = s_next + v;
    Ok(ReverseMoments {
        x_next_coeff: (s_k + v) / denom,
        posterior_coeff: gap / denom,
        variance: gap * (s_k + v) / denom,
    })
}

/// VP moments at step k with posterior variance v:
/// x_next_coeff = √α_{k+1}·((1−ᾱ_k)+ᾱ_k v)/((1−ᾱ_{k+1})+ᾱ_{k+1} v),
/// posterior_coeff = √ᾱ_k·(1−α_{k+1})/((1−ᾱ_{k+1})+ᾱ_{k+1} v),
/// variance = β'·((1−ᾱ_k)+ᾱ_k v)/(β' + (1−ᾱ_k)+ᾱ_k v), β' = β_{k+1}/(1−β_{k+1}).
pub fn moments_vp(s: &VpSchedule, k: usize, v: f64) -> Result<ReverseMoments> {
    s.check_step(k)?;
    check_variance(v)?;
    let ab_k = s.alpha_bar(k);
    let ab_next = s.alpha_bar(k + 1);
    let alpha_next = s.alpha(k + 1);
    let beta_next = s.beta(k + 1);
    let numer = (1.0 - ab_k) + ab_k * v;
    let denom = (1.0 - ab_next) + ab_next * v;
    let beta_ratio = beta_next / (1.0 - beta_next);
    Ok(ReverseMoments {
        x_next_coeff: alpha_next.sqrt() * numer / denom,
        posterior_coeff: ab_k.sqrt() * (1.0 - alpha_next) / denom,
        variance: beta_ratio * numer / (beta_ratio + numer),
    })
}

/// Moments for either schedule flavour.
pub fn moments(s: &Schedule, k: usize, v: f64) -> Result<ReverseMoments> {
    match s {
        Schedule::Ve(ve) => moments_ve(ve, k, v),
        Schedule::Vp(vp) => moments_vp(vp, k, v),
    }
}

fn check_variance(v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::invalid("posterior variance must be finite and > 0"));
    }
    Ok(())
}

/// Full trace of the deterministic chain: `means[k]` is μ_k, so `means[0]`
/// is the endpoint and `means[T]` the starting point.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainTrace {
    pub means: Vec<DVector<f64>>,
}

impl ChainTrace {
    pub fn endpoint(&self) -> &DVector<f64> {
        &self.means[0]
    }
}

/// Iterate μ_k = x_next_coeff(k)·μ_{k+1} + posterior_coeff(k)·E[x_0|y] from
/// k = T−1 down to 0, keeping every intermediate mean.
pub fn exact_chain(
    s: &Schedule,
    stats: &PosteriorStats,
    mu_t: &DVector<f64>,
) -> Result<ChainTrace> {
    if mu_t.len() != stats.mean.len() {
        return Err(Error::DimensionMismatch {
            expected: stats.mean.len(),
            got: mu_t.len(),
        });
    }
    let t = s.step_count();
    let mut means = vec![DVector::zeros(mu_t.len()); t + 1];
    means[t] = mu_t.clone();
    for k in (0..t).rev() {
        let m = moments(s, k, stats.variance)?;
        means[k] = &means[k + 1] * m.x_next_coeff + &stats.mean * m.posterior_coeff;
    }
    Ok(ChainTrace { means })
}

/// Closed-form VE endpoint:
/// μ_0 = (σ_0²+v)/(σ_T²+v)·μ_T + (σ_T²−σ_0²)/(σ_T²+v)·E[x_0|y].
/// Tends to the posterior mean as σ_T → ∞.
pub fn endpoint_ve(
    s: &VeSchedule,
    stats: &PosteriorStats,
    mu_t: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_endpoint_dims(stats, mu_t)?;
    let s0 = s.sigma(0).powi(2);
    let st = s.sigma(s.step_count()).powi(2);
    let denom = st + stats.variance;
    Ok(mu_t * ((s0 + stats.variance) / denom) + &stats.mean * ((st - s0) / denom))
}

/// Closed-form VP endpoint:
/// μ_0 = √(ᾱ_T/ᾱ_0)·((1−ᾱ_0)+ᾱ_0 v)/((1−ᾱ_T)+ᾱ_T v)·μ_T
///     + (1−ᾱ_T)/((1−ᾱ_T)+ᾱ_T v)·E[x_0|y].
/// Tends to the posterior mean as ᾱ_T → 0.
pub fn endpoint_vp(
    s: &VpSchedule,
    stats: &PosteriorStats,
    mu_t: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_endpoint_dims(stats, mu_t)?;
    let ab0 = s.alpha_bar(0);
    let abt = s.alpha_bar(s.step_count());
    let denom = (1.0 - abt) + abt * stats.variance;
    let carry = (abt / ab0).sqrt() * ((1.0 - ab0) + ab0 * stats.variance) / denom;
    Ok(mu_t * carry + &stats.mean * ((1.0 - abt) / denom))
}

/// Closed-form endpoint for either schedule flavour.
pub fn endpoint(s: &Schedule, stats: &PosteriorStats, mu_t: &DVector<f64>) -> Result<DVector<f64>> {
    match s {
        Schedule::Ve(ve) => endpoint_ve(ve, stats, mu_t),
        Schedule::Vp(vp) => endpoint_vp(vp, stats, mu_t),
    }
}

fn check_endpoint_dims(stats: &PosteriorStats, mu_t: &DVector<f64>) -> Result<()> {
    if mu_t.len() != stats.mean.len() {
        return Err(Error::DimensionMismatch {
            expected: stats.mean.len(),
            got: mu_t.len(),
        });
    }
    Ok(())
}

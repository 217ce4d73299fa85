//! Reverse mean propagation by stochastic natural gradient descent.
//!
//! One run walks k = T−1 … 0. At each step the reverse conditional
//! p_k(x_k | x_{k+1}, y) is approximated by an isotropic Gaussian
//! q = N(μ_k, Λ_k⁻¹·I); the mean is updated by natural-gradient ascent on
//! E_q[log p_k] using the score decomposition
//!
//!   ∇ log p_k(x) ≈ ∇ log p(x_{k+1}|x) + γ_k·∇ log p(y|x) + ∇ log p_k(x)
//!
//! with the transition term in closed form, the likelihood term from the
//! configured [`Guidance`] strategy, and the prior term from the score model.
//! The precision is either fixed to the known limiting value of the reverse
//! conditional or learned alongside the mean from Hessian traces. After the
//! inner iterations the mean is propagated as the next step's anchor.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::guidance::Guidance;
use crate::model::{CountingModel, ScoreModel};
use crate::rng::{seeded, RNG_ALGORITHM};
use crate::schedule::{Schedule, VeSchedule, VpSchedule};

/// How the per-step precision Λ_k is obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PrecisionMode {
    /// Λ_k⁻¹ fixed to the limiting reverse-conditional value; no Hessians.
    Fixed,
    /// Λ_k learned by natural-gradient updates from Hessian traces, starting
    /// from the fixed approximation and clamped below at `floor`.
    Learned { step_size: f64, floor: f64 },
}

/// How E_q[∇ log p_k] is estimated per inner iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    /// Evaluate at the current mean. Deterministic; exact whenever the
    /// gradient is affine (conjugate chains).
    AtMean,
    /// Average over `samples` draws x ~ N(μ, Λ⁻¹I).
    Sampled { samples: usize },
}

/// Where the reverse chain starts.
#[derive(Debug, Clone, PartialEq)]
pub enum InitMode {
    /// Draw x_T from the stationary forward law: N(0, σ_T²·I) for VE,
    /// N(0, I) for VP.
    Sampled,
    /// Use the given x_T.
    Fixed(DVector<f64>),
}

/// All hyperparameters of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RmpConfig {
    pub schedule: Schedule,
    /// Inner NGD iterations per reverse step.
    pub inner_steps: usize,
    /// VE precision switch index: steps with k > switch_index use the
    /// large-noise form of the fixed precision.
    pub switch_index: usize,
    /// Mean step size s₁.
    pub mean_step: f64,
    pub precision: PrecisionMode,
    pub estimator: Estimator,
    pub seed: u64,
    pub init: InitMode,
}

impl RmpConfig {
    /// Defaults: one inner step, s₁ = 0.9, fixed precision, single-sample
    /// gradient, switch index T/2, sampled start.
    pub fn new(schedule: Schedule) -> Self {
        let t = schedule.step_count();
        Self {
            schedule,
            inner_steps: 1,
            switch_index: t / 2,
            mean_step: 0.9,
            precision: PrecisionMode::Fixed,
            estimator: Estimator::Sampled { samples: 1 },
            seed: 0,
            init: InitMode::Sampled,
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if self.inner_steps < 1 {
            return Err(Error::invalid("inner_steps must be >= 1"));
        }
        if !(self.mean_step > 0.0) || !self.mean_step.is_finite() {
            return Err(Error::invalid("mean_step must be finite and > 0"));
        }
        if self.switch_index > self.schedule.step_count() {
            return Err(Error::invalid("switch_index must be <= step count"));
        }
        if let Estimator::Sampled { samples } = self.estimator {
            if samples < 1 {
                return Err(Error::invalid("samples must be >= 1"));
            }
        }
        if let PrecisionMode::Learned { step_size, floor } = self.precision {
            if !(step_size > 0.0) || !(floor > 0.0) {
                return Err(Error::invalid(
                    "learned precision needs positive step_size and floor",
                ));
            }
        }
        if let InitMode::Fixed(x) = &self.init {
            if x.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: x.len(),
                });
            }
        }
        Ok(())
    }
}

/// Evolving state of a run: step index, variational mean and precision, and
/// the score-evaluation count so far.
#[derive(Debug, Clone, PartialEq)]
pub struct RmpState {
    pub k: usize,
    pub mean: DVector<f64>,
    pub precision: f64,
    pub nfe: u64,
}

/// Snapshot taken after the inner loop of one reverse step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub k: usize,
    /// Inner iterations executed at this step.
    pub inner_iterations: usize,
    /// μ_k after the last inner iteration.
    pub mean: DVector<f64>,
    /// Λ_k⁻¹ in effect at the end of the step.
    pub precision_inv: f64,
    /// Norms from the last inner iteration (sample-averaged).
    pub prior_score_norm: f64,
    pub likelihood_score_norm: f64,
    pub gamma: f64,
    /// Cumulative score evaluations after this step.
    pub nfe: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunStatus {
    Completed,
    /// A non-finite state or gradient stopped the run; the trajectory holds
    /// everything recorded up to that point.
    Aborted {
        step: usize,
        reason: String,
    },
}

/// Full output of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub records: Vec<StepRecord>,
    pub final_mean: DVector<f64>,
    /// Total score-function evaluations.
    pub nfe: u64,
    pub status: RunStatus,
    /// Identifier of the RNG algorithm, recorded so emitted artifacts are
    /// reproducible from (config, seed).
    pub rng_algorithm: &'static str,
    /// Number of inner iterations whose likelihood score was exactly zero
    /// while γ-balancing was requested.
    pub zero_guidance_events: u64,
}

/// Fixed Λ_k⁻¹ for VE: σ_k²(σ_{k+1}²−σ_k²)/σ_{k+1}² past the switch index,
/// σ_{k+1}²−σ_k² at small k. A zero σ_k (only k = 0) always takes the
/// small-k branch so the step size never collapses to zero.
pub fn fixed_precision_inv_ve(s: &VeSchedule, k: usize, switch_index: usize) -> Result<f64> {
    s.check_step(k)?;
    let s_k = s.sigma(k).powi(2);
    let s_next = s.sigma(k + 1).powi(2);
    let gap = s_next - s_k;
    if k > switch_index && s_k > 0.0 {
        Ok(s_k * gap / s_next)
    } else {
        Ok(gap)
    }
}

/// Fixed Λ_k⁻¹ for VP: β_{k+1}.
pub fn fixed_precision_inv_vp(s: &VpSchedule, k: usize) -> Result<f64> {
    s.check_step(k)?;
    Ok(s.beta(k + 1))
}

pub fn fixed_precision_inv(s: &Schedule, k: usize, switch_index: usize) -> Result<f64> {
    match s {
        Schedule::Ve(ve) => fixed_precision_inv_ve(ve, k, switch_index),
        Schedule::Vp(vp) => fixed_precision_inv_vp(vp, k),
    }
}

/// The three gradient terms assembled at one sample point, with diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientParts {
    pub total: DVector<f64>,
    pub transition_norm: f64,
    pub prior_norm: f64,
    pub likelihood_norm: f64,
    pub gamma: f64,
    pub gamma_degenerate: bool,
}

/// Transition score ∇_{x_k} log p(x_{k+1}|x_k) in closed form.
fn transition_score(
    schedule: &Schedule,
    k: usize,
    x: &DVector<f64>,
    anchor: &DVector<f64>,
) -> DVector<f64> {
    match schedule {
        Schedule::Ve(s) => {
            let gap = s.sigma(k + 1).powi(2) - s.sigma(k).powi(2);
            (anchor - x) / gap
        }
        Schedule::Vp(s) => {
            let beta = s.beta(k + 1);
            anchor * ((1.0 - beta).sqrt() / beta) - x * ((1.0 - beta) / beta)
        }
    }
}

fn transition_hessian_trace(schedule: &Schedule, k: usize, dim: usize) -> f64 {
    match schedule {
        Schedule::Ve(s) => {
            let gap = s.sigma(k + 1).powi(2) - s.sigma(k).powi(2);
            -(dim as f64) / gap
        }
        Schedule::Vp(s) => {
            let beta = s.beta(k + 1);
            -(dim as f64) * (1.0 - beta) / beta
        }
    }
}

/// Sum of transition, γ-scaled likelihood, and prior scores at x, given the
/// anchor x_{k+1}.
pub fn assemble_gradient(
    schedule: &Schedule,
    k: usize,
    x: &DVector<f64>,
    anchor: &DVector<f64>,
    model: &dyn ScoreModel,
    guidance: &Guidance,
    y: &DVector<f64>,
) -> Result<GradientParts> {
    let at = schedule.point(k);
    let transition = transition_score(schedule, k, x, anchor);
    let prior = model.score(x, at);
    let likelihood = guidance
        .strategy
        .score_with(model, x, at, y, Some(&prior))?;
    let (gamma, degenerate) = guidance.gamma(&prior, &likelihood);
    let total = &transition + &likelihood * gamma + &prior;
    if total.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("assembled gradient at step {k}")));
    }
    Ok(GradientParts {
        total,
        transition_norm: transition.norm(),
        prior_norm: prior.norm(),
        likelihood_norm: likelihood.norm(),
        gamma,
        gamma_degenerate: degenerate,
    })
}

/// Tr ∇² of the same objective the gradient assembles, for the learned
/// precision update. γ is treated as a constant multiplier. Falls back to
/// central differences of the model score when no analytic trace exists.
pub fn assemble_hessian_trace(
    schedule: &Schedule,
    k: usize,
    x: &DVector<f64>,
    model: &dyn ScoreModel,
    guidance: &Guidance,
    y: &DVector<f64>,
    gamma: f64,
) -> Result<f64> {
    let at = schedule.point(k);
    let dim = x.len();
    let mut trace = transition_hessian_trace(schedule, k, dim);
    trace += match model.hessian_trace(x, at) {
        Some(t) => t,
        None => {
            let h = 1e-4 * (1.0 + x.norm());
            let mut fd = 0.0;
            for i in 0..dim {
                let mut up = x.clone();
                up[i] += h;
                let mut down = x.clone();
                down[i] -= h;
                fd += (model.score(&up, at)[i] - model.score(&down, at)[i]) / (2.0 * h);
            }
            fd
        }
    };
    trace += gamma * guidance.strategy.hessian_trace(model, x, at, y)?;
    if !trace.is_finite() {
        return Err(Error::NonFinite(format!("hessian trace at step {k}")));
    }
    Ok(trace)
}

/// Natural-gradient mean update μ ← μ + s₁·Λ⁻¹·g.
pub fn ngd_mean_step(
    mean: &DVector<f64>,
    precision: f64,
    gradient: &DVector<f64>,
    s1: f64,
) -> Result<DVector<f64>> {
    let out = mean + gradient * (s1 / precision);
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("mean update".into()));
    }
    Ok(out)
}

/// Natural-gradient precision update Λ ← Λ − s₂(d·Λ + trace), clamped below
/// at `floor`.
pub fn ngd_precision_step(
    precision: f64,
    hessian_trace: f64,
    s2: f64,
    dim: usize,
    floor: f64,
) -> Result<f64> {
    if !hessian_trace.is_finite() {
        return Err(Error::NonFinite("hessian trace".into()));
    }
    let updated = precision - s2 * (dim as f64 * precision + hessian_trace);
    if !updated.is_finite() {
        return Err(Error::NonFinite("precision update".into()));
    }
    Ok(updated.max(floor))
}

/// Execute one full reverse pass and return the trajectory.
///
/// The chain anchors at x_T (sampled from the stationary forward law or
/// fixed), initializes μ_{T−1} to it, and after each step's inner loop sets
/// the next anchor x_{k} = μ_k and carries the mean over. Identical
/// (config, model, y) inputs produce bit-identical trajectories.
pub fn run_rmp(
    cfg: &RmpConfig,
    model: &dyn ScoreModel,
    guidance: &Guidance,
    y: &DVector<f64>,
) -> Result<Trajectory> {
    let dim = model.dim();
    cfg.validate(dim)?;
    let meas = guidance.strategy.measurement();
    if meas.in_dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: meas.in_dim(),
        });
    }
    if y.len() != meas.out_dim() {
        return Err(Error::DimensionMismatch {
            expected: meas.out_dim(),
            got: y.len(),
        });
    }

    let t = cfg.schedule.step_count();
    let counted = CountingModel::new(model);
    let mut rng = seeded(cfg.seed);
    let mut zero_guidance_events = 0u64;

    let mut anchor = match &cfg.init {
        InitMode::Fixed(x) => x.clone(),
        InitMode::Sampled => {
            let std = match &cfg.schedule {
                Schedule::Ve(s) => s.sigma(t),
                Schedule::Vp(_) => 1.0,
            };
            DVector::from_fn(dim, |_, _| std * rng.sample::<f64, _>(StandardNormal))
        }
    };
    let mut mean = anchor.clone();
    let mut records = Vec::with_capacity(t);

    let abort = |records: Vec<StepRecord>,
                 mean: DVector<f64>,
                 nfe: u64,
                 zero_events: u64,
                 step: usize,
                 reason: String| {
        Ok(Trajectory {
            records,
            final_mean: mean,
            nfe,
            status: RunStatus::Aborted { step, reason },
            rng_algorithm: RNG_ALGORITHM,
            zero_guidance_events: zero_events,
        })
    };

    for k in (0..t).rev() {
        let fixed_inv = fixed_precision_inv(&cfg.schedule, k, cfg.switch_index)?;
        let mut precision = 1.0 / fixed_inv;
        let samples = match cfg.estimator {
            Estimator::AtMean => 1,
            Estimator::Sampled { samples } => samples,
        };
        let mut last_diag = (0.0, 0.0, 0.0); // prior, likelihood, gamma
        for _ in 0..cfg.inner_steps {
            let mut grad_sum = DVector::zeros(dim);
            let mut trace_sum = 0.0;
            let mut prior_norm = 0.0;
            let mut lik_norm = 0.0;
            let mut gamma_sum = 0.0;
            for _ in 0..samples {
                let x = match cfg.estimator {
                    Estimator::AtMean => mean.clone(),
                    Estimator::Sampled { .. } => {
                        let std = (1.0 / precision).sqrt();
                        DVector::from_fn(dim, |i, _| {
                            mean[i] + std * rng.sample::<f64, _>(StandardNormal)
                        })
                    }
                };
                let parts =
                    match assemble_gradient(&cfg.schedule, k, &x, &anchor, &counted, guidance, y) {
                        Ok(p) => p,
                        Err(e) => {
                            return abort(
                                records,
                                mean,
                                counted.score_evals(),
                                zero_guidance_events,
                                k,
                                e.to_string(),
                            )
                        }
                    };
                if parts.gamma_degenerate {
                    zero_guidance_events += 1;
                }
                grad_sum += parts.total;
                prior_norm += parts.prior_norm;
                lik_norm += parts.likelihood_norm;
                gamma_sum += parts.gamma;
                if let PrecisionMode::Learned { .. } = cfg.precision {
                    trace_sum += match assemble_hessian_trace(
                        &cfg.schedule,
                        k,
                        &x,
                        &counted,
                        guidance,
                        y,
                        parts.gamma,
                    ) {
                        Ok(t) => t,
                        Err(e) => {
                            return abort(
                                records,
                                mean,
                                counted.score_evals(),
                                zero_guidance_events,
                                k,
                                e.to_string(),
                            )
                        }
                    };
                }
            }
            let inv = 1.0 / samples as f64;
            let grad = grad_sum * inv;
            match ngd_mean_step(&mean, precision, &grad, cfg.mean_step) {
                Ok(m) => mean = m,
                Err(e) => {
                    return abort(
                        records,
                        mean,
                        counted.score_evals(),
                        zero_guidance_events,
                        k,
                        e.to_string(),
                    )
                }
            }
            if let PrecisionMode::Learned { step_size, floor } = cfg.precision {
                match ngd_precision_step(precision, trace_sum * inv, step_size, dim, floor) {
                    Ok(p) => precision = p,
                    Err(e) => {
                        return abort(
                            records,
                            mean,
                            counted.score_evals(),
                            zero_guidance_events,
                            k,
                            e.to_string(),
                        )
                    }
                }
            }
            last_diag = (prior_norm * inv, lik_norm * inv, gamma_sum * inv);
        }
        records.push(StepRecord {
            k,
            inner_iterations: cfg.inner_steps,
            mean: mean.clone(),
            precision_inv: 1.0 / precision,
            prior_score_norm: last_diag.0,
            likelihood_score_norm: last_diag.1,
            gamma: last_diag.2,
            nfe: counted.score_evals(),
        });
        anchor = mean.clone();
    }

    Ok(Trajectory {
        records,
        final_mean: mean,
        nfe: counted.score_evals(),
        status: RunStatus::Completed,
        rng_algorithm: RNG_ALGORITHM,
        zero_guidance_events,
    })
}

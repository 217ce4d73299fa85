//! Posterior-sampling baseline and the NFE-vs-error frontier.
//!
//! The baseline estimates the posterior mean the way sampling methods do:
//! draw posterior samples with guided ancestral steps and average them. Its
//! cost in score evaluations is exact (T per sample), which is what the
//! frontier comparison against the mean-propagation solver is about.

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::guidance::Guidance;
use crate::mixture::{GaussianMixture, LinearGaussianMeasurement};
use crate::model::{CountingModel, ScoreModel};
use crate::oracle::posterior_mean_closed_form;
use crate::rng::seeded_stream;
use crate::schedule::{Schedule, VpSchedule};
use crate::solver::{run_rmp, Estimator, InitMode, PrecisionMode, RmpConfig, RunStatus};

/// One guided ancestral pass down a VP chain.
///
/// Steps follow the DDPM/DPS convention: from x_{k+1}, with scores evaluated
/// at level k+1,
///
///   x_k = (x_{k+1} + β_{k+1}·(prior score + γ·likelihood score))/√α_{k+1}
///         + √β_{k+1}·noise,
///
/// starting at x_T ~ N(0, I) and omitting the noise on the final step.
/// Returns the sample and the number of score evaluations (T, plus any the
/// guidance strategy spends internally).
pub fn guided_ancestral_sample(
    schedule: &VpSchedule,
    model: &dyn ScoreModel,
    guidance: &Guidance,
    y: &DVector<f64>,
    seed: u64,
) -> Result<(DVector<f64>, u64)> {
    let mut rng = seeded_stream(seed, 0);
    guided_ancestral_sample_with_rng(schedule, model, guidance, y, &mut rng)
}

fn guided_ancestral_sample_with_rng(
    schedule: &VpSchedule,
    model: &dyn ScoreModel,
    guidance: &Guidance,
    y: &DVector<f64>,
    rng: &mut ChaCha12Rng,
) -> Result<(DVector<f64>, u64)> {
    let dim = model.dim();
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
    let t = schedule.step_count();
    let counted = CountingModel::new(model);
    let full = Schedule::Vp(schedule.clone());
    let mut x = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    for k in (0..t).rev() {
        let at = full.point(k + 1);
        let prior_score = counted.score(&x, at);
        let likelihood = guidance
            .strategy
            .score_with(&counted, &x, at, y, Some(&prior_score))?;
        let (gamma, _) = guidance.gamma(&prior_score, &likelihood);
        let beta = schedule.beta(k + 1);
        let alpha = schedule.alpha(k + 1);
        let mut next = (&x + (prior_score + likelihood * gamma) * beta) / alpha.sqrt();
        if k > 0 {
            let std = beta.sqrt();
            for i in 0..dim {
                next[i] += std * rng.sample::<f64, _>(StandardNormal);
            }
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("ancestral state at step {k}")));
        }
        x = next;
    }
    Ok((x, counted.score_evals()))
}

/// Sample-averaged posterior-mean estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragedEstimate {
    pub mean: DVector<f64>,
    /// Per-coordinate standard error of the mean; `None` for a single run.
    pub standard_error: Option<DVector<f64>>,
    pub total_nfe: u64,
    pub runs: usize,
}

/// Average `runs` independent guided ancestral samples. Per-run RNG streams
/// derive from (seed, run index), so the result does not depend on execution
/// order.
pub fn posterior_mean_by_averaging(
    runs: usize,
    schedule: &VpSchedule,
    model: &dyn ScoreModel,
    guidance: &Guidance,
    y: &DVector<f64>,
    seed: u64,
) -> Result<AveragedEstimate> {
    if runs < 1 {
        return Err(Error::invalid("averaging needs at least one run"));
    }
    let dim = model.dim();
    let mut sum = DVector::zeros(dim);
    let mut sum_sq = DVector::zeros(dim);
    let mut total_nfe = 0u64;
    for run in 0..runs {
        let mut rng = seeded_stream(seed, run as u64);
        let (sample, nfe) =
            guided_ancestral_sample_with_rng(schedule, model, guidance, y, &mut rng)?;
        total_nfe += nfe;
        sum_sq += sample.component_mul(&sample);
        sum += sample;
    }
    let n = runs as f64;
    let mean = &sum / n;
    let standard_error = if runs > 1 {
        let var = (sum_sq / n - mean.component_mul(&mean)) * (n / (n - 1.0));
        Some((var / n).map(|v| v.max(0.0).sqrt()))
    } else {
        None
    };
    Ok(AveragedEstimate {
        mean,
        standard_error,
        total_nfe,
        runs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrontierMethod {
    Rmp,
    SampleAverage,
}

impl FrontierMethod {
    pub fn name(self) -> &'static str {
        match self {
            FrontierMethod::Rmp => "rmp",
            FrontierMethod::SampleAverage => "sample-average",
        }
    }
}

/// One frontier cell: squared error to the oracle posterior mean at a given
/// score-evaluation budget.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontierRow {
    pub method: FrontierMethod,
    pub budget: u64,
    /// Evaluations actually spent (≤ budget).
    pub nfe: u64,
    pub y: DVector<f64>,
    pub seed: u64,
    pub squared_error: f64,
}

/// Frontier configuration: a shared VP schedule of T steps; the solver spends
/// a budget as ⌊budget/T⌋ gradient samples per inner iteration (variance
/// reduction at fixed chain length) and the baseline as ⌊budget/T⌋ averaged
/// posterior samples.
#[derive(Debug, Clone)]
pub struct FrontierSpec {
    pub schedule: VpSchedule,
    pub budgets: Vec<u64>,
    pub ys: Vec<DVector<f64>>,
    pub seeds: Vec<u64>,
    pub mean_step: f64,
    pub zeta: Option<f64>,
}

/// Squared-error-to-oracle table for the solver and the sample-averaging
/// baseline at equal score-evaluation budgets. Budgets below one full pass
/// (T evaluations) are rejected.
pub fn nfe_frontier(
    prior: &GaussianMixture,
    meas: &LinearGaussianMeasurement,
    guidance: &Guidance,
    spec: &FrontierSpec,
) -> Result<Vec<FrontierRow>> {
    let t = spec.schedule.step_count() as u64;
    for &budget in &spec.budgets {
        if budget < t {
            return Err(Error::invalid(format!(
                "budget {budget} is below one full pass of {t} evaluations"
            )));
        }
    }
    let mut rows = Vec::new();
    for &budget in &spec.budgets {
        let samples = (budget / t).max(1) as usize;
        for y in &spec.ys {
            let oracle = posterior_mean_closed_form(prior, meas, y)?;
            for &seed in &spec.seeds {
                let mut cfg = RmpConfig::new(Schedule::Vp(spec.schedule.clone()));
                cfg.inner_steps = 1;
                cfg.mean_step = spec.mean_step;
                cfg.precision = PrecisionMode::Fixed;
                cfg.estimator = Estimator::Sampled { samples };
                cfg.seed = seed;
                cfg.init = InitMode::Sampled;
                let run = run_rmp(&cfg, prior, guidance, y)?;
                if let RunStatus::Aborted { step, reason } = &run.status {
                    return Err(Error::NonFinite(format!(
                        "frontier solver run aborted at step {step}: {reason}"
                    )));
                }
                rows.push(FrontierRow {
                    method: FrontierMethod::Rmp,
                    budget,
                    nfe: run.nfe,
                    y: y.clone(),
                    seed,
                    squared_error: (&run.final_mean - &oracle).norm_squared(),
                });

                let runs = (budget / t) as usize;
                let avg =
                    posterior_mean_by_averaging(runs, &spec.schedule, prior, guidance, y, seed)?;
                rows.push(FrontierRow {
                    method: FrontierMethod::SampleAverage,
                    budget,
                    nfe: avg.total_nfe,
                    y: y.clone(),
                    seed,
                    squared_error: (&avg.mean - &oracle).norm_squared(),
                });
            }
        }
    }
    Ok(rows)
}

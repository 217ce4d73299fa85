//! Forward-process noise schedules.
//!
//! Index 0 always represents clean data (σ_0 = 0, β_0 = 0, ᾱ_0 = 1) so the
//! reverse-conditional formulas in [`crate::reverse`] apply verbatim at every
//! step, including the last one. Arrays therefore have length `steps + 1`.
//! Schedules are immutable after construction and precompute their derived
//! arrays, so lookups inside inner loops are O(1).

use crate::error::{Error, Result};

/// Variance-exploding schedule: a strictly increasing σ_0 < σ_1 < … < σ_T
/// with σ_0 = 0 for the standard constructions.
#[derive(Debug, Clone, PartialEq)]
pub struct VeSchedule {
    sigmas: Vec<f64>,
}

impl VeSchedule {
    /// Build from raw noise levels σ_0..σ_T (clean-data entry included).
    pub fn new(sigmas: Vec<f64>) -> Result<Self> {
        if sigmas.len() < 2 {
            return Err(Error::invalid("VE schedule needs at least two levels"));
        }
        if sigmas[0] < 0.0 || !sigmas[0].is_finite() {
            return Err(Error::invalid("sigma_0 must be finite and >= 0"));
        }
        for pair in sigmas.windows(2) {
            if !(pair[1] > pair[0]) || !pair[1].is_finite() {
                return Err(Error::invalid(
                    "sigmas must be finite and strictly increasing",
                ));
            }
        }
        Ok(Self { sigmas })
    }

    /// Geometric schedule σ_k = σ_min (σ_max/σ_min)^{(k−1)/(T−1)} for
    /// k = 1..T, with σ_0 = 0 prepended.
    pub fn geometric(steps: usize, sigma_min: f64, sigma_max: f64) -> Result<Self> {
        if steps < 2 {
            return Err(Error::invalid("geometric VE schedule needs steps >= 2"));
        }
        if !(sigma_min > 0.0) || !(sigma_max > sigma_min) || !sigma_max.is_finite() {
            return Err(Error::invalid(
                "geometric VE schedule needs 0 < sigma_min < sigma_max",
            ));
        }
        let ratio = sigma_max / sigma_min;
        let mut sigmas = Vec::with_capacity(steps + 1);
        sigmas.push(0.0);
        for k in 1..=steps {
            let exponent = (k - 1) as f64 / (steps - 1) as f64;
            sigmas.push(sigma_min * ratio.powf(exponent));
        }
        Self::new(sigmas)
    }

    /// Number of diffusion steps T (arrays run over 0..=T).
    pub fn step_count(&self) -> usize {
        self.sigmas.len() - 1
    }

    /// σ_k. Panics if `k > T`.
    pub fn sigma(&self, k: usize) -> f64 {
        self.sigmas[k]
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub(crate) fn check_step(&self, k: usize) -> Result<()> {
        if k >= self.step_count() {
            return Err(Error::IndexOutOfRange {
                index: k,
                steps: self.step_count(),
            });
        }
        Ok(())
    }
}

/// Variance-preserving schedule: β_0 = 0 < β_1 < … < β_T < 1 with
/// α_k = 1 − β_k and ᾱ_k = Π_{i≤k} α_i.
#[derive(Debug, Clone, PartialEq)]
pub struct VpSchedule {
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl VpSchedule {
    /// Build from β_1..β_T; β_0 = 0 is prepended and the derived arrays are
    /// populated.
    pub fn new(betas_tail: Vec<f64>) -> Result<Self> {
        if betas_tail.is_empty() {
            return Err(Error::invalid("VP schedule needs at least one beta"));
        }
        let mut betas = Vec::with_capacity(betas_tail.len() + 1);
        betas.push(0.0);
        betas.extend(betas_tail);
        for pair in betas.windows(2) {
            if !(pair[1] > pair[0]) || !(pair[1] < 1.0) {
                return Err(Error::invalid(
                    "betas must be strictly increasing within [0, 1)",
                ));
            }
        }
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bars = Vec::with_capacity(alphas.len());
        let mut prod = 1.0;
        for &a in &alphas {
            prod *= a;
            alpha_bars.push(prod);
        }
        Ok(Self {
            betas,
            alphas,
            alpha_bars,
        })
    }

    /// Linear schedule β_k = β_min + (k−1)/(T−1)·(β_max−β_min) for k = 1..T.
    pub fn linear(steps: usize, beta_min: f64, beta_max: f64) -> Result<Self> {
        if steps < 2 {
            return Err(Error::invalid("linear VP schedule needs steps >= 2"));
        }
        if !(beta_min > 0.0) || !(beta_max > beta_min) || !(beta_max < 1.0) {
            return Err(Error::invalid(
                "linear VP schedule needs 0 < beta_min < beta_max < 1",
            ));
        }
        let tail: Vec<f64> = (1..=steps)
            .map(|k| beta_min + (k - 1) as f64 / (steps - 1) as f64 * (beta_max - beta_min))
            .collect();
        Self::new(tail)
    }

    pub fn step_count(&self) -> usize {
        self.betas.len() - 1
    }

    /// β_k. Panics if `k > T`.
    pub fn beta(&self, k: usize) -> f64 {
        self.betas[k]
    }

    /// α_k = 1 − β_k. Panics if `k > T`.
    pub fn alpha(&self, k: usize) -> f64 {
        self.alphas[k]
    }

    /// ᾱ_k. Panics if `k > T`.
    pub fn alpha_bar(&self, k: usize) -> f64 {
        self.alpha_bars[k]
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    /// Std of the perturbation kernel p(x_k|x_0) relative to the scaled
    /// signal: √(1 − ᾱ_k). This is the noise-level argument handed to score
    /// functions on the VP branch.
    pub fn effective_sigma(&self, k: usize) -> Result<f64> {
        if k >= self.alpha_bars.len() {
            return Err(Error::IndexOutOfRange {
                index: k,
                steps: self.step_count(),
            });
        }
        Ok((1.0 - self.alpha_bars[k]).sqrt())
    }

    pub(crate) fn check_step(&self, k: usize) -> Result<()> {
        if k >= self.step_count() {
            return Err(Error::IndexOutOfRange {
                index: k,
                steps: self.step_count(),
            });
        }
        Ok(())
    }
}

/// A point on a schedule, as handed to score functions: the perturbation that
/// produced the marginal being evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SchedulePoint {
    Ve { sigma: f64 },
    Vp { alpha_bar: f64 },
}

impl SchedulePoint {
    /// The affine map x_k = scale·x_0 + √var_add·noise describing the
    /// perturbation kernel: (1, σ²) for VE and (√ᾱ, 1−ᾱ) for VP.
    pub fn kernel(self) -> (f64, f64) {
        match self {
            SchedulePoint::Ve { sigma } => (1.0, sigma * sigma),
            SchedulePoint::Vp { alpha_bar } => (alpha_bar.sqrt(), 1.0 - alpha_bar),
        }
    }
}

/// Either flavour of schedule, for code that treats both uniformly.
#[derive(Debug, Clone, PartialEq)]
pub enum Schedule {
    Ve(VeSchedule),
    Vp(VpSchedule),
}

impl Schedule {
    pub fn step_count(&self) -> usize {
        match self {
            Schedule::Ve(s) => s.step_count(),
            Schedule::Vp(s) => s.step_count(),
        }
    }

    /// The schedule point at index k. Panics if `k > T`.
    pub fn point(&self, k: usize) -> SchedulePoint {
        match self {
            Schedule::Ve(s) => SchedulePoint::Ve { sigma: s.sigma(k) },
            Schedule::Vp(s) => SchedulePoint::Vp {
                alpha_bar: s.alpha_bar(k),
            },
        }
    }
}

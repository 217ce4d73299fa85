//! Score-function abstraction consumed by the solver and baselines.
//!
//! The solver only ever asks for ∇ log p_k at a schedule point, so anything
//! that can answer that — the exact mixtures here, or a network-backed score
//! elsewhere — can drive a run. Dimensions are validated once per run by the
//! caller; implementations may panic on mismatched inputs.

use std::cell::Cell;

use nalgebra::{DMatrix, DVector};

use crate::mixture::GaussianMixture;
use crate::schedule::SchedulePoint;

pub trait ScoreModel {
    fn dim(&self) -> usize;

    /// ∇_x log p_k(x) of the perturbed marginal at `at`.
    fn score(&self, x: &DVector<f64>, at: SchedulePoint) -> DVector<f64>;

    /// Tr ∇² log p_k(x), when available analytically. Used by the
    /// learned-precision update; callers fall back to finite differences of
    /// `score` when this returns `None`.
    fn hessian_trace(&self, _x: &DVector<f64>, _at: SchedulePoint) -> Option<f64> {
        None
    }

    /// Full ∇² log p_k(x), when available analytically. Used for the exact
    /// denoiser Jacobian.
    fn hessian(&self, _x: &DVector<f64>, _at: SchedulePoint) -> Option<DMatrix<f64>> {
        None
    }
}

impl ScoreModel for GaussianMixture {
    fn dim(&self) -> usize {
        GaussianMixture::dim(self)
    }

    fn score(&self, x: &DVector<f64>, at: SchedulePoint) -> DVector<f64> {
        self.score_at(x, at).expect("dimension validated by caller")
    }

    fn hessian_trace(&self, x: &DVector<f64>, at: SchedulePoint) -> Option<f64> {
        Some(
            self.hessian_trace_at(x, at)
                .expect("dimension validated by caller"),
        )
    }

    fn hessian(&self, x: &DVector<f64>, at: SchedulePoint) -> Option<DMatrix<f64>> {
        Some(
            self.hessian_at(x, at)
                .expect("dimension validated by caller"),
        )
    }
}

/// Wrapper that counts score evaluations, the NFE unit reported by runs.
/// Hessian queries are counted separately; analytic Hessians are not score
/// evaluations.
pub struct CountingModel<'a> {
    inner: &'a dyn ScoreModel,
    score_evals: Cell<u64>,
    hessian_evals: Cell<u64>,
}

impl<'a> CountingModel<'a> {
    pub fn new(inner: &'a dyn ScoreModel) -> Self {
        Self {
            inner,
            score_evals: Cell::new(0),
            hessian_evals: Cell::new(0),
        }
    }

    pub fn score_evals(&self) -> u64 {
        self.score_evals.get()
    }

    pub fn hessian_evals(&self) -> u64 {
        self.hessian_evals.get()
    }
}

impl ScoreModel for CountingModel<'_> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn score(&self, x: &DVector<f64>, at: SchedulePoint) -> DVector<f64> {
        self.score_evals.set(self.score_evals.get() + 1);
        self.inner.score(x, at)
    }

    fn hessian_trace(&self, x: &DVector<f64>, at: SchedulePoint) -> Option<f64> {
        let out = self.inner.hessian_trace(x, at);
        if out.is_some() {
            self.hessian_evals.set(self.hessian_evals.get() + 1);
        }
        out
    }

    fn hessian(&self, x: &DVector<f64>, at: SchedulePoint) -> Option<DMatrix<f64>> {
        let out = self.inner.hessian(x, at);
        if out.is_some() {
            self.hessian_evals.set(self.hessian_evals.get() + 1);
        }
        out
    }
}

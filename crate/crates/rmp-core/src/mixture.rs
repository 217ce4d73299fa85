//! Gaussian-mixture machinery: densities, scores, Hessians, perturbed
//! marginals, measurement joints, and closed-form posteriors.
//!
//! Prior components are isotropic (v_j·I): that covers every tractable model
//! this crate targets and keeps the scalar reverse-moment formulas exact.
//! Posteriors and measurement joints get a separate full-covariance type
//! because linear-Gaussian conditioning breaks isotropy.
//!
//! All mixture evaluations run in log space; responsibilities are computed by
//! shifting against the max component. The toy priors here have variances as
//! small as 0.04, so naive exponentials underflow a few σ from the means.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::math::{log_sum_exp, LN_TWO_PI};
use crate::schedule::SchedulePoint;

/// Mixture of isotropic Gaussians Σ_j w_j N(μ_j, v_j·I).
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    log_weights: Vec<f64>,
    means: Vec<DVector<f64>>,
    variances: Vec<f64>,
    dim: usize,
}

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, means: Vec<DVector<f64>>, variances: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.len() != means.len() || weights.len() != variances.len() {
            return Err(Error::invalid(
                "weights, means and variances must be non-empty and of equal length",
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "weights must sum to 1 (got {total})"
            )));
        }
        if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::invalid("weights must be finite and >= 0"));
        }
        if variances.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::invalid("variances must be finite and > 0"));
        }
        let dim = means[0].len();
        if dim == 0 || means.iter().any(|m| m.len() != dim) {
            return Err(Error::invalid("means must share a positive dimension"));
        }
        if means.iter().any(|m| m.iter().any(|x| !x.is_finite())) {
            return Err(Error::invalid("means must be finite"));
        }
        let log_weights = weights
            .iter()
            .map(|w| if *w > 0.0 { w.ln() } else { f64::NEG_INFINITY })
            .collect();
        Ok(Self {
            weights,
            log_weights,
            means,
            variances,
            dim,
        })
    }

    /// Single Gaussian N(mean, variance·I) as a one-component mixture.
    pub fn single(mean: DVector<f64>, variance: f64) -> Result<Self> {
        Self::new(vec![1.0], vec![mean], vec![variance])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn component_count(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[DVector<f64>] {
        &self.means
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    fn check_dim(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Per-component log w_j + log N(x; s·μ_j, (s²v_j + c)·I) for the affine
    /// perturbation x_k = s·x_0 + √c·noise.
    fn log_components(&self, x: &DVector<f64>, scale: f64, var_add: f64) -> Vec<f64> {
        let d = self.dim as f64;
        self.log_weights
            .iter()
            .zip(self.means.iter().zip(&self.variances))
            .map(|(lw, (mean, v))| {
                let var = scale * scale * v + var_add;
                let mut sq = 0.0;
                for i in 0..self.dim {
                    let diff = x[i] - scale * mean[i];
                    sq += diff * diff;
                }
                lw - 0.5 * d * (LN_TWO_PI + var.ln()) - sq / (2.0 * var)
            })
            .collect()
    }

    /// Responsibilities r_j(x) plus the mixture log-density, both for the
    /// perturbed mixture.
    fn responsibilities(&self, x: &DVector<f64>, scale: f64, var_add: f64) -> (Vec<f64>, f64) {
        let logs = self.log_components(x, scale, var_add);
        let total = log_sum_exp(&logs);
        let resp = logs.iter().map(|l| (l - total).exp()).collect();
        (resp, total)
    }

    /// log p(x) of the clean mixture.
    pub fn log_density(&self, x: &DVector<f64>) -> Result<f64> {
        self.log_density_at(x, SchedulePoint::Ve { sigma: 0.0 })
    }

    /// log p_k(x) of the perturbed marginal at a schedule point.
    pub fn log_density_at(&self, x: &DVector<f64>, at: SchedulePoint) -> Result<f64> {
        self.check_dim(x)?;
        let (scale, var_add) = at.kernel();
        Ok(log_sum_exp(&self.log_components(x, scale, var_add)))
    }

    /// ∇ log p(x) of the clean mixture.
    pub fn score(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.score_at(x, SchedulePoint::Ve { sigma: 0.0 })
    }

    /// ∇ log p_k(x) of the perturbed marginal: Σ_j r_j·(s·μ_j − x)/v̄_j.
    pub fn score_at(&self, x: &DVector<f64>, at: SchedulePoint) -> Result<DVector<f64>> {
        self.check_dim(x)?;
        let (scale, var_add) = at.kernel();
        let (resp, _) = self.responsibilities(x, scale, var_add);
        let mut out = DVector::zeros(self.dim);
        for (j, r) in resp.iter().enumerate() {
            if *r == 0.0 {
                continue;
            }
            let var = scale * scale * self.variances[j] + var_add;
            for i in 0..self.dim {
                out[i] += r * (scale * self.means[j][i] - x[i]) / var;
            }
        }
        Ok(out)
    }

    /// Tr ∇² log p(x) of the clean mixture.
    pub fn hessian_trace(&self, x: &DVector<f64>) -> Result<f64> {
        self.hessian_trace_at(x, SchedulePoint::Ve { sigma: 0.0 })
    }

    /// Tr ∇² log p_k(x): Σ_j r_j (‖x − s·μ_j‖²/v̄_j² − d/v̄_j) − ‖∇ log p_k(x)‖².
    pub fn hessian_trace_at(&self, x: &DVector<f64>, at: SchedulePoint) -> Result<f64> {
        self.check_dim(x)?;
        let (scale, var_add) = at.kernel();
        let (resp, _) = self.responsibilities(x, scale, var_add);
        let d = self.dim as f64;
        let mut trace = 0.0;
        let mut score: DVector<f64> = DVector::zeros(self.dim);
        for (j, r) in resp.iter().enumerate() {
            if *r == 0.0 {
                continue;
            }
            let var = scale * scale * self.variances[j] + var_add;
            let mut sq = 0.0;
            for i in 0..self.dim {
                let g = (scale * self.means[j][i] - x[i]) / var;
                sq += g * g;
                score[i] += r * g;
            }
            trace += r * (sq - d / var);
        }
        Ok(trace - score.norm_squared())
    }

    /// Full ∇² log p_k(x): Σ_j r_j (g_j g_jᵀ − I/v̄_j) − s sᵀ with
    /// g_j = (s·μ_j − x)/v̄_j and s the mixture score.
    pub fn hessian_at(&self, x: &DVector<f64>, at: SchedulePoint) -> Result<DMatrix<f64>> {
        self.check_dim(x)?;
        let (scale, var_add) = at.kernel();
        let (resp, _) = self.responsibilities(x, scale, var_add);
        let mut hess = DMatrix::zeros(self.dim, self.dim);
        let mut score = DVector::zeros(self.dim);
        for (j, r) in resp.iter().enumerate() {
            if *r == 0.0 {
                continue;
            }
            let var = scale * scale * self.variances[j] + var_add;
            let g = (scale * &self.means[j] - x) / var;
            hess += (&g * g.transpose()) * *r;
            for i in 0..self.dim {
                hess[(i, i)] -= r / var;
            }
            score += g * *r;
        }
        hess -= &score * score.transpose();
        Ok(hess)
    }

    /// Marginal of x_k = x_0 + σ·noise: same means, variances v_j + σ².
    pub fn perturb_ve(&self, sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::invalid("sigma must be finite and >= 0"));
        }
        Self::new(
            self.weights.clone(),
            self.means.clone(),
            self.variances.iter().map(|v| v + sigma * sigma).collect(),
        )
    }

    /// Marginal of x_k = √ᾱ·x_0 + √(1−ᾱ)·noise: means scaled by √ᾱ,
    /// variances ᾱ·v_j + (1−ᾱ).
    pub fn perturb_vp(&self, alpha_bar: f64) -> Result<Self> {
        if !(alpha_bar > 0.0 && alpha_bar <= 1.0) {
            return Err(Error::invalid("alpha_bar must lie in (0, 1]"));
        }
        let root = alpha_bar.sqrt();
        Self::new(
            self.weights.clone(),
            self.means.iter().map(|m| m * root).collect(),
            self.variances
                .iter()
                .map(|v| alpha_bar * v + (1.0 - alpha_bar))
                .collect(),
        )
    }

    /// Perturbed marginal at a schedule point.
    pub fn perturb(&self, at: SchedulePoint) -> Result<Self> {
        match at {
            SchedulePoint::Ve { sigma } => self.perturb_ve(sigma),
            SchedulePoint::Vp { alpha_bar } => self.perturb_vp(alpha_bar),
        }
    }

    /// Draw one sample from the mixture.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut idx = self.weights.len() - 1;
        for (j, w) in self.weights.iter().enumerate() {
            acc += w;
            if u <= acc {
                idx = j;
                break;
            }
        }
        let std = self.variances[idx].sqrt();
        DVector::from_fn(self.dim, |i, _| {
            self.means[idx][i] + std * rng.sample::<f64, _>(StandardNormal)
        })
    }

    /// Exact joint law of (x_k, y) as a (d+M)-dimensional mixture, where
    /// x_k is the perturbation of x_0 at `at` and y = A·x_0 + ε·noise.
    pub fn joint_with_measurement(
        &self,
        meas: &LinearGaussianMeasurement,
        at: SchedulePoint,
    ) -> Result<FullGaussianMixture> {
        if meas.in_dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: meas.in_dim(),
            });
        }
        let (scale, var_add) = at.kernel();
        let d = self.dim;
        let m = meas.out_dim();
        let a = meas.matrix();
        let gram = a * a.transpose();
        let mut weights = Vec::with_capacity(self.weights.len());
        let mut means = Vec::with_capacity(self.weights.len());
        let mut covs = Vec::with_capacity(self.weights.len());
        for (j, w) in self.weights.iter().enumerate() {
            let v = self.variances[j];
            let mut mean = DVector::zeros(d + m);
            for i in 0..d {
                mean[i] = scale * self.means[j][i];
            }
            let y_mean = a * &self.means[j];
            for i in 0..m {
                mean[d + i] = y_mean[i];
            }
            let mut cov = DMatrix::zeros(d + m, d + m);
            let xx = scale * scale * v + var_add;
            for i in 0..d {
                cov[(i, i)] = xx;
            }
            // Cov(x_k, y) = s·v_j·Aᵀ.
            for i in 0..d {
                for l in 0..m {
                    let c = scale * v * a[(l, i)];
                    cov[(i, d + l)] = c;
                    cov[(d + l, i)] = c;
                }
            }
            for i in 0..m {
                for l in 0..m {
                    cov[(d + i, d + l)] = v * gram[(i, l)];
                }
                cov[(d + i, d + i)] += meas.noise_std() * meas.noise_std();
            }
            weights.push(*w);
            means.push(mean);
            covs.push(cov);
        }
        FullGaussianMixture::new(weights, means, covs)
    }

    /// Closed-form posterior p(x_0|y): per-component conjugate updates with
    /// weights reweighted by component evidences.
    pub fn posterior_mixture(
        &self,
        meas: &LinearGaussianMeasurement,
        y: &DVector<f64>,
    ) -> Result<FullGaussianMixture> {
        if meas.in_dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: meas.in_dim(),
            });
        }
        if y.len() != meas.out_dim() {
            return Err(Error::DimensionMismatch {
                expected: meas.out_dim(),
                got: y.len(),
            });
        }
        let a = meas.matrix();
        let eps2 = meas.noise_std() * meas.noise_std();
        let m_dim = meas.out_dim();
        let gram = a * a.transpose();
        let mut log_evidence = Vec::with_capacity(self.weights.len());
        let mut post_means = Vec::with_capacity(self.weights.len());
        let mut post_covs = Vec::with_capacity(self.weights.len());
        for (j, lw) in self.log_weights.iter().enumerate() {
            let v = self.variances[j];
            // Evidence covariance S_j = v_j·A·Aᵀ + ε²·I is SPD for ε > 0.
            let mut s = &gram * v;
            for i in 0..m_dim {
                s[(i, i)] += eps2;
            }
            let chol = Cholesky::new(s).ok_or(Error::NotPositiveDefinite)?;
            let resid = y - a * &self.means[j];
            let solved = chol.solve(&resid);
            let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
            log_evidence.push(
                lw - 0.5 * (m_dim as f64) * LN_TWO_PI - 0.5 * log_det - 0.5 * resid.dot(&solved),
            );
            // Conditioning identities: mean μ_j + v·Aᵀ S⁻¹ (y − Aμ_j),
            // covariance v·I − v²·Aᵀ S⁻¹ A.
            post_means.push(&self.means[j] + a.transpose() * solved * v);
            let s_inv_a = chol.solve(a);
            let mut cov = a.transpose() * s_inv_a * (-v * v);
            for i in 0..self.dim {
                cov[(i, i)] += v;
            }
            // Symmetrize away rounding before the SPD factorization.
            let cov = (&cov + cov.transpose()) * 0.5;
            post_covs.push(cov);
        }
        let total = log_sum_exp(&log_evidence);
        if !total.is_finite() {
            return Err(Error::NonFinite("posterior component evidences".into()));
        }
        let weights = log_evidence.iter().map(|l| (l - total).exp()).collect();
        FullGaussianMixture::new(weights, post_means, post_covs)
    }
}

/// Linear-Gaussian measurement y = A·x_0 + ε·noise.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGaussianMeasurement {
    matrix: DMatrix<f64>,
    noise_std: f64,
}

impl LinearGaussianMeasurement {
    pub fn new(matrix: DMatrix<f64>, noise_std: f64) -> Result<Self> {
        if matrix.nrows() == 0 || matrix.ncols() == 0 {
            return Err(Error::invalid("measurement matrix must be non-empty"));
        }
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("measurement matrix must be finite"));
        }
        if !(noise_std > 0.0) || !noise_std.is_finite() {
            return Err(Error::invalid("noise_std must be finite and > 0"));
        }
        Ok(Self { matrix, noise_std })
    }

    /// Scalar measurement y = a·x + ε·noise in one dimension.
    pub fn scalar(a: f64, noise_std: f64) -> Result<Self> {
        Self::new(DMatrix::from_element(1, 1, a), noise_std)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    pub fn in_dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// log N(y; A·x, ε²·I).
    pub fn log_likelihood(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
        if x.len() != self.in_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.in_dim(),
                got: x.len(),
            });
        }
        if y.len() != self.out_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.out_dim(),
                got: y.len(),
            });
        }
        let resid = y - &self.matrix * x;
        let eps2 = self.noise_std * self.noise_std;
        let m = self.out_dim() as f64;
        Ok(-0.5 * m * (LN_TWO_PI + eps2.ln()) - resid.norm_squared() / (2.0 * eps2))
    }
}

/// Mixture of full-covariance Gaussians; the closed-form posteriors and
/// measurement joints of isotropic mixtures live here.
#[derive(Debug, Clone)]
pub struct FullGaussianMixture {
    weights: Vec<f64>,
    log_weights: Vec<f64>,
    means: Vec<DVector<f64>>,
    covariances: Vec<DMatrix<f64>>,
    factors: Vec<Cholesky<f64, Dyn>>,
    precisions: Vec<DMatrix<f64>>,
    log_dets: Vec<f64>,
    dim: usize,
}

impl FullGaussianMixture {
    pub fn new(
        weights: Vec<f64>,
        means: Vec<DVector<f64>>,
        covariances: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        if weights.is_empty() || weights.len() != means.len() || weights.len() != covariances.len()
        {
            return Err(Error::invalid(
                "weights, means and covariances must be non-empty and of equal length",
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "weights must sum to 1 (got {total})"
            )));
        }
        if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::invalid("weights must be finite and >= 0"));
        }
        let dim = means[0].len();
        if dim == 0 || means.iter().any(|m| m.len() != dim) {
            return Err(Error::invalid("means must share a positive dimension"));
        }
        let mut factors = Vec::with_capacity(weights.len());
        let mut precisions = Vec::with_capacity(weights.len());
        let mut log_dets = Vec::with_capacity(weights.len());
        for cov in &covariances {
            if cov.nrows() != dim || cov.ncols() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: cov.nrows(),
                });
            }
            let chol = Cholesky::new(cov.clone()).ok_or(Error::NotPositiveDefinite)?;
            log_dets.push(2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>());
            precisions.push(chol.inverse());
            factors.push(chol);
        }
        let log_weights = weights
            .iter()
            .map(|w| if *w > 0.0 { w.ln() } else { f64::NEG_INFINITY })
            .collect();
        Ok(Self {
            weights,
            log_weights,
            means,
            covariances,
            factors,
            precisions,
            log_dets,
            dim,
        })
    }

    /// Embed an isotropic mixture (v_j·I covariances).
    pub fn from_isotropic(m: &GaussianMixture) -> Self {
        let covs = m
            .variances()
            .iter()
            .map(|v| DMatrix::identity(m.dim(), m.dim()) * *v)
            .collect();
        Self::new(m.weights().to_vec(), m.means().to_vec(), covs)
            .expect("isotropic mixtures are always valid full mixtures")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn component_count(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn component_means(&self) -> &[DVector<f64>] {
        &self.means
    }

    pub fn component_covariances(&self) -> &[DMatrix<f64>] {
        &self.covariances
    }

    fn check_dim(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    fn log_components(&self, x: &DVector<f64>) -> Vec<f64> {
        let d = self.dim as f64;
        (0..self.weights.len())
            .map(|j| {
                let resid = x - &self.means[j];
                let solved = self.factors[j].solve(&resid);
                self.log_weights[j]
                    - 0.5 * d * LN_TWO_PI
                    - 0.5 * self.log_dets[j]
                    - 0.5 * resid.dot(&solved)
            })
            .collect()
    }

    pub fn log_density(&self, x: &DVector<f64>) -> Result<f64> {
        self.check_dim(x)?;
        Ok(log_sum_exp(&self.log_components(x)))
    }

    pub fn score(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(x)?;
        let logs = self.log_components(x);
        let total = log_sum_exp(&logs);
        let mut out = DVector::zeros(self.dim);
        for (j, l) in logs.iter().enumerate() {
            let r = (l - total).exp();
            if r == 0.0 {
                continue;
            }
            out += &self.precisions[j] * (&self.means[j] - x) * r;
        }
        Ok(out)
    }

    /// Full Hessian of the log-density.
    pub fn hessian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_dim(x)?;
        let logs = self.log_components(x);
        let total = log_sum_exp(&logs);
        let mut hess = DMatrix::zeros(self.dim, self.dim);
        let mut score = DVector::zeros(self.dim);
        for (j, l) in logs.iter().enumerate() {
            let r = (l - total).exp();
            if r == 0.0 {
                continue;
            }
            let g = &self.precisions[j] * (&self.means[j] - x);
            hess += (&g * g.transpose() - &self.precisions[j]) * r;
            score += g * r;
        }
        hess -= &score * score.transpose();
        Ok(hess)
    }

    /// Aggregate mean Σ_j w_j μ_j.
    pub fn mean(&self) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim);
        for (j, w) in self.weights.iter().enumerate() {
            out += &self.means[j] * *w;
        }
        out
    }

    /// Aggregate covariance Σ_j w_j (Σ_j + μ_j μ_jᵀ) − μ μᵀ.
    pub fn covariance(&self) -> DMatrix<f64> {
        let mean = self.mean();
        let mut out = DMatrix::zeros(self.dim, self.dim);
        for (j, w) in self.weights.iter().enumerate() {
            out += (&self.covariances[j] + &self.means[j] * self.means[j].transpose()) * *w;
        }
        out -= &mean * mean.transpose();
        out
    }
}

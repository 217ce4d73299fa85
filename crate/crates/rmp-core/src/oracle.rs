//! Independent ground-truth computations used to judge the other modules:
//! closed-form mixture posteriors, grid quadrature, self-normalized
//! importance sampling, the exact mixture denoising mean, and the
//! KL-decomposition diagnostic on conjugate chains.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::math::log_sum_exp;
use crate::mixture::{GaussianMixture, LinearGaussianMeasurement};
use crate::reverse;
use crate::rng::seeded_stream;
use crate::schedule::{Schedule, SchedulePoint};

/// Exact E[x_0|y] via the closed-form posterior mixture.
pub fn posterior_mean_closed_form(
    prior: &GaussianMixture,
    meas: &LinearGaussianMeasurement,
    y: &DVector<f64>,
) -> Result<DVector<f64>> {
    Ok(prior.posterior_mixture(meas, y)?.mean())
}

/// Rectangular quadrature domain with `points` nodes per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub points: usize,
}

impl QuadratureGrid {
    /// Bounds spanning `spread` prior standard deviations around every
    /// component mean (the posterior-mean integrand lives inside the prior's
    /// support for any measurement).
    pub fn covering(prior: &GaussianMixture, points: usize, spread: f64) -> Self {
        let d = prior.dim();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for (mean, v) in prior.means().iter().zip(prior.variances()) {
            let band = spread * v.sqrt();
            for i in 0..d {
                lo[i] = lo[i].min(mean[i] - band);
                hi[i] = hi[i].max(mean[i] + band);
            }
        }
        Self { lo, hi, points }
    }
}

/// E[x_0|y] by trapezoidal quadrature of x·p(y|x)p(x) in log space, for
/// d ≤ 2. The grid must cover at least six prior standard deviations around
/// every component mean. The estimate is computed at `points` and at
/// `2·points` nodes; a shift above 1e-6 between the two flags the grid as too
/// coarse.
pub fn posterior_mean_quadrature(
    prior: &GaussianMixture,
    meas: &LinearGaussianMeasurement,
    y: &DVector<f64>,
    grid: &QuadratureGrid,
) -> Result<DVector<f64>> {
    let d = prior.dim();
    if d > 2 {
        return Err(Error::invalid("quadrature oracle supports d <= 2"));
    }
    if grid.lo.len() != d || grid.hi.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: grid.lo.len(),
        });
    }
    if grid.points < 8 {
        return Err(Error::invalid("quadrature grid needs at least 8 points"));
    }
    for (mean, v) in prior.means().iter().zip(prior.variances()) {
        let band = 6.0 * v.sqrt();
        for i in 0..d {
            if grid.lo[i] > mean[i] - band || grid.hi[i] < mean[i] + band {
                return Err(Error::invalid(
                    "quadrature grid must cover 6 prior std-devs around every component mean",
                ));
            }
        }
    }
    let coarse = quadrature_pass(prior, meas, y, grid, grid.points)?;
    let fine = quadrature_pass(prior, meas, y, grid, 2 * grid.points)?;
    let delta = (&fine - &coarse).amax();
    if delta > 1e-6 {
        return Err(Error::GridTooCoarse { delta });
    }
    Ok(fine)
}

fn quadrature_pass(
    prior: &GaussianMixture,
    meas: &LinearGaussianMeasurement,
    y: &DVector<f64>,
    grid: &QuadratureGrid,
    points: usize,
) -> Result<DVector<f64>> {
    let d = prior.dim();
    let axis: Vec<Vec<f64>> = (0..d)
        .map(|i| {
            let h = (grid.hi[i] - grid.lo[i]) / (points - 1) as f64;
            (0..points).map(|j| grid.lo[i] + j as f64 * h).collect()
        })
        .collect();
    let log_h: f64 = (0..d)
        .map(|i| ((grid.hi[i] - grid.lo[i]) / (points - 1) as f64).ln())
        .sum();

    let node_count = points.pow(d as u32);
    let mut log_terms = Vec::with_capacity(node_count);
    let mut nodes = Vec::with_capacity(node_count);
    let mut x = DVector::zeros(d);
    for flat in 0..node_count {
        let mut rem = flat;
        let mut log_w = log_h;
        for i in 0..d {
            let j = rem % points;
            rem /= points;
            x[i] = axis[i][j];
            if j == 0 || j == points - 1 {
                log_w += 0.5f64.ln();
            }
        }
        let log_f = prior.log_density(&x)? + meas.log_likelihood(&x, y)?;
        log_terms.push(log_f + log_w);
        nodes.push(x.clone());
    }
    let shift = log_terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !shift.is_finite() {
        return Err(Error::NonFinite("quadrature integrand".into()));
    }
    let mut denom = 0.0;
    let mut numer = DVector::zeros(d);
    for (log_t, node) in log_terms.iter().zip(&nodes) {
        let w = (log_t - shift).exp();
        denom += w;
        numer += node * w;
    }
    Ok(numer / denom)
}

/// Self-normalized importance-sampling estimate with jackknife standard
/// errors.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceEstimate {
    pub mean: DVector<f64>,
    pub standard_error: DVector<f64>,
    pub effective_sample_size: f64,
    /// False when the effective sample size fell below 100; the estimate is
    /// then unreliable and should not be used as an oracle.
    pub reliable: bool,
}

/// E[x_0|y] by importance sampling with the prior as proposal and weights
/// ∝ p(y|x_0). Intended for d > 2 where grids fail; works in any dimension.
pub fn posterior_mean_importance(
    prior: &GaussianMixture,
    meas: &LinearGaussianMeasurement,
    y: &DVector<f64>,
    samples: usize,
    seed: u64,
) -> Result<ImportanceEstimate> {
    if samples < 10_000 {
        return Err(Error::invalid(
            "importance sampling needs at least 10^4 samples",
        ));
    }
    let d = prior.dim();
    let mut rng = seeded_stream(seed, 0);
    let mut draws = Vec::with_capacity(samples);
    let mut log_weights = Vec::with_capacity(samples);
    for _ in 0..samples {
        let x = prior.sample(&mut rng);
        log_weights.push(meas.log_likelihood(&x, y)?);
        draws.push(x);
    }
    let shift = log_weights
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_weights.iter().map(|lw| (lw - shift).exp()).collect();
    let total: f64 = weights.iter().sum();
    let total_sq: f64 = weights.iter().map(|w| w * w).sum();
    let ess = total * total / total_sq;

    let mut weighted_sum = DVector::zeros(d);
    for (w, x) in weights.iter().zip(&draws) {
        weighted_sum += x * *w;
    }
    let mean = &weighted_sum / total;

    // Leave-one-out jackknife of the self-normalized ratio estimator.
    let n = samples as f64;
    let mut loo_sum = DVector::zeros(d);
    let mut loo = Vec::with_capacity(samples);
    for (w, x) in weights.iter().zip(&draws) {
        let est = (&weighted_sum - x * *w) / (total - w);
        loo_sum += &est;
        loo.push(est);
    }
    let loo_mean = loo_sum / n;
    let mut var = DVector::zeros(d);
    for est in &loo {
        let diff = est - &loo_mean;
        var += diff.component_mul(&diff);
    }
    let standard_error = (var * ((n - 1.0) / n)).map(f64::sqrt);

    Ok(ImportanceEstimate {
        mean,
        standard_error,
        effective_sample_size: ess,
        reliable: ess >= 100.0,
    })
}

/// Exact mixture denoising mean E[x_0 | x_k] at a schedule point: component
/// responsibilities under the perturbed mixture times per-component conjugate
/// means. Independent of the Tweedie route, which goes through the marginal
/// score.
pub fn denoised_mean(
    prior: &GaussianMixture,
    at: SchedulePoint,
    x: &DVector<f64>,
) -> Result<DVector<f64>> {
    if x.len() != prior.dim() {
        return Err(Error::DimensionMismatch {
            expected: prior.dim(),
            got: x.len(),
        });
    }
    let (scale, var_add) = at.kernel();
    if scale == 0.0 {
        return Err(Error::invalid("denoised mean undefined at alpha_bar = 0"));
    }
    let perturbed = prior.perturb(at)?;
    let logs: Vec<f64> = (0..prior.component_count())
        .map(|j| {
            let w = perturbed.weights()[j];
            let lw = if w > 0.0 { w.ln() } else { f64::NEG_INFINITY };
            let var = perturbed.variances()[j];
            let diff = x - &perturbed.means()[j];
            lw - 0.5 * prior.dim() as f64 * (crate::math::LN_TWO_PI + var.ln())
                - diff.norm_squared() / (2.0 * var)
        })
        .collect();
    let total = log_sum_exp(&logs);
    let mut out = DVector::zeros(prior.dim());
    for (j, l) in logs.iter().enumerate() {
        let r = (l - total).exp();
        if r == 0.0 {
            continue;
        }
        let v = prior.variances()[j];
        let gain = scale * v / (scale * scale * v + var_add);
        let mean_j = &prior.means()[j] + (x - &prior.means()[j] * scale) * gain;
        out += mean_j * r;
    }
    Ok(out)
}

/// One variational reverse-step Gaussian q_k(x_k | x_{k+1}) with mean
/// slope·x_{k+1} + intercept and the given variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepGaussian {
    pub slope: f64,
    pub intercept: f64,
    pub variance: f64,
}

impl StepGaussian {
    pub fn new(slope: f64, intercept: f64, variance: f64) -> Result<Self> {
        if !(variance > 0.0) || !variance.is_finite() {
            return Err(Error::invalid("step variance must be finite and > 0"));
        }
        if !slope.is_finite() || !intercept.is_finite() {
            return Err(Error::invalid("step coefficients must be finite"));
        }
        Ok(Self {
            slope,
            intercept,
            variance,
        })
    }
}

/// The exact reverse conditionals of a conjugate chain, usable as the
/// variational steps that make both sides of the decomposition vanish.
pub fn conjugate_reverse_steps(
    prior: &GaussianMixture,
    meas: &LinearGaussianMeasurement,
    y: &DVector<f64>,
    schedule: &Schedule,
) -> Result<Vec<StepGaussian>> {
    let (m_post, v_post) = conjugate_posterior(prior, meas, y)?;
    (0..schedule.step_count())
        .map(|k| {
            let m = reverse::moments(schedule, k, v_post)?;
            StepGaussian::new(m.x_next_coeff, m.posterior_coeff * m_post, m.variance)
        })
        .collect()
}

/// Both sides of the chain-KL decomposition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KlComparison {
    /// KL between the joint (T+1)-dimensional Gaussians, assembled by matrix
    /// linear algebra.
    pub joint: f64,
    /// Σ_k E_{q(x_{k+1})} KL(q_k || p_k), accumulated step by step.
    pub stepwise: f64,
}

/// Compare the joint KL between a variational reverse chain q and the true
/// reverse chain p against its per-step decomposition, on a fully conjugate
/// model (single-Gaussian prior, scalar measurement) where every conditional
/// is Gaussian in closed form. Both chains share the exact terminal marginal
/// p(x_T|y).
///
/// `q_steps[k]` is q_k(x_k|x_{k+1}) for k = 0..T−1.
pub fn kl_decomposition_check(
    prior: &GaussianMixture,
    meas: &LinearGaussianMeasurement,
    y: &DVector<f64>,
    schedule: &Schedule,
    q_steps: &[StepGaussian],
) -> Result<KlComparison> {
    let (m_post, v_post) = conjugate_posterior(prior, meas, y)?;
    let t = schedule.step_count();
    if q_steps.len() != t {
        return Err(Error::invalid(format!(
            "expected {t} variational steps, got {}",
            q_steps.len()
        )));
    }

    // True reverse conditionals: exact at finite T for conjugate models.
    let p_steps: Vec<StepGaussian> = (0..t)
        .map(|k| {
            let m = reverse::moments(schedule, k, v_post)?;
            StepGaussian::new(m.x_next_coeff, m.posterior_coeff * m_post, m.variance)
        })
        .collect::<Result<_>>()?;

    // Exact terminal marginal p(x_T|y), shared by q.
    let (term_mean, term_var) = match schedule {
        Schedule::Ve(s) => {
            let st = s.sigma(t).powi(2);
            (m_post, st + v_post)
        }
        Schedule::Vp(s) => {
            let ab = s.alpha_bar(t);
            (ab.sqrt() * m_post, ab * v_post + 1.0 - ab)
        }
    };

    // Stepwise side: E over the q marginal of x_{k+1} of the Gaussian KL
    // between conditionals whose means are affine in x_{k+1}.
    let mut marg_mean = term_mean;
    let mut marg_var = term_var;
    let mut stepwise = 0.0;
    for k in (0..t).rev() {
        let q = &q_steps[k];
        let p = &p_steps[k];
        let da = q.slope - p.slope;
        let db = q.intercept - p.intercept;
        let expected_gap =
            da * da * (marg_var + marg_mean * marg_mean) + 2.0 * da * db * marg_mean + db * db;
        stepwise += 0.5
            * (q.variance / p.variance - 1.0
                + (p.variance / q.variance).ln()
                + expected_gap / p.variance);
        marg_mean = q.slope * marg_mean + q.intercept;
        marg_var = q.slope * q.slope * marg_var + q.variance;
    }

    // Joint side: build both (T+1)-dimensional Gaussians explicitly.
    let (mu_q, cov_q) = chain_joint(term_mean, term_var, q_steps);
    let (mu_p, cov_p) = chain_joint(term_mean, term_var, &p_steps);
    let joint = gaussian_kl_multivariate(&mu_q, &cov_q, &mu_p, &cov_p)?;

    Ok(KlComparison { joint, stepwise })
}

fn conjugate_posterior(
    prior: &GaussianMixture,
    meas: &LinearGaussianMeasurement,
    y: &DVector<f64>,
) -> Result<(f64, f64)> {
    if prior.component_count() != 1 || prior.dim() != 1 {
        return Err(Error::NotConjugate(
            "KL diagnostic needs a single-Gaussian scalar prior".into(),
        ));
    }
    if meas.in_dim() != 1 || meas.out_dim() != 1 {
        return Err(Error::NotConjugate(
            "KL diagnostic needs a scalar measurement".into(),
        ));
    }
    let post = prior.posterior_mixture(meas, y)?;
    Ok((post.mean()[0], post.covariance()[(0, 0)]))
}

/// Joint mean and covariance of the chain x_T → … → x_0 defined by a
/// terminal marginal and per-step affine-Gaussian conditionals. Index j of
/// the output corresponds to x_j.
fn chain_joint(
    term_mean: f64,
    term_var: f64,
    steps: &[StepGaussian],
) -> (DVector<f64>, DMatrix<f64>) {
    let t = steps.len();
    let n = t + 1;
    let mut means = vec![0.0; n];
    let mut vars = vec![0.0; n];
    means[t] = term_mean;
    vars[t] = term_var;
    for k in (0..t).rev() {
        means[k] = steps[k].slope * means[k + 1] + steps[k].intercept;
        vars[k] = steps[k].slope * steps[k].slope * vars[k + 1] + steps[k].variance;
    }
    let mut cov = DMatrix::zeros(n, n);
    for j in 0..n {
        cov[(j, j)] = vars[j];
        let mut carry = 1.0;
        for l in (j + 1)..n {
            carry *= steps[l - 1].slope;
            let c = carry * vars[l];
            cov[(j, l)] = c;
            cov[(l, j)] = c;
        }
    }
    (DVector::from_vec(means), cov)
}

fn gaussian_kl_multivariate(
    mu_q: &DVector<f64>,
    cov_q: &DMatrix<f64>,
    mu_p: &DVector<f64>,
    cov_p: &DMatrix<f64>,
) -> Result<f64> {
    let n = mu_q.len() as f64;
    let chol_p = Cholesky::new(cov_p.clone()).ok_or(Error::NotPositiveDefinite)?;
    let chol_q = Cholesky::new(cov_q.clone()).ok_or(Error::NotPositiveDefinite)?;
    let log_det_p = 2.0 * chol_p.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let log_det_q = 2.0 * chol_q.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let trace = chol_p.solve(cov_q).trace();
    let diff = mu_p - mu_q;
    let quad = diff.dot(&chol_p.solve(&diff));
    Ok(0.5 * (trace + quad - n + log_det_p - log_det_q))
}

//! Acceptance suite: one test per criterion, each printing a single
//! PASS/FAIL line with the measured values next to the required threshold.
//!
//! Criteria 2, 3 and 8 are asserted exactly as specified and fail by
//! construction of the algorithm itself, not by implementation defects; the
//! failing tests print the measured evidence (including independent
//! best-case oracles) so the gap is quantified rather than hidden.

use nalgebra::{dvector, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rmp_core::baselines::{nfe_frontier, FrontierMethod, FrontierSpec};
use rmp_core::guidance::{tweedie, Guidance, GuidanceKind, LikelihoodStrategy};
use rmp_core::mixture::{GaussianMixture, LinearGaussianMeasurement};
use rmp_core::oracle::{
    conjugate_reverse_steps, denoised_mean, kl_decomposition_check, posterior_mean_closed_form,
    StepGaussian,
};
use rmp_core::reverse::{endpoint, exact_chain, moments_vp, PosteriorStats};
use rmp_core::rng::{seeded, seeded_stream};
use rmp_core::schedule::{Schedule, SchedulePoint, VeSchedule, VpSchedule};
use rmp_core::solver::{
    assemble_gradient, assemble_hessian_trace, fixed_precision_inv_vp, ngd_precision_step, run_rmp,
    Estimator, InitMode, RmpConfig,
};

fn toy_prior() -> GaussianMixture {
    GaussianMixture::new(
        vec![0.5, 0.5],
        vec![dvector![-1.0], dvector![1.0]],
        vec![0.04, 0.04],
    )
    .unwrap()
}

fn toy_meas() -> LinearGaussianMeasurement {
    LinearGaussianMeasurement::scalar(1.0, 0.5).unwrap()
}

fn report(criterion: &str, pass: bool, detail: &str) {
    println!(
        "criterion {criterion}: {} ({detail})",
        if pass { "PASS" } else { "FAIL" }
    );
}

#[test]
fn criterion_01_telescoping_exact() {
    let mut rng = seeded(101);
    let mut worst: f64 = 0.0;
    for trial in 0..50 {
        let d = rng.random_range(1..4usize);
        let v = rng.random_range(1e-3..5.0);
        let mean = DVector::from_fn(d, |_, _| rng.random_range(-3.0..3.0));
        let mu_t = DVector::from_fn(d, |_, _| rng.random_range(-3.0..3.0));
        let stats = PosteriorStats::new(mean, v).unwrap();
        let steps = rng.random_range(2..200usize);
        let schedule = if trial % 2 == 0 {
            let lo = rng.random_range(0.005..0.5);
            let hi = lo * rng.random_range(3.0..3000.0);
            Schedule::Ve(VeSchedule::geometric(steps, lo, hi).unwrap())
        } else {
            let lo = rng.random_range(1e-5..5e-3);
            let hi = rng.random_range(0.01..0.3);
            Schedule::Vp(VpSchedule::linear(steps, lo, hi).unwrap())
        };
        let chain = exact_chain(&schedule, &stats, &mu_t).unwrap();
        let closed = endpoint(&schedule, &stats, &mu_t).unwrap();
        let rel = (chain.endpoint() - &closed).norm() / closed.norm().max(1e-12);
        worst = worst.max(rel);
    }
    let pass = worst < 1e-10;
    report(
        "01 telescoping",
        pass,
        &format!("max relative gap {worst:.3e} over 50 random chains, threshold 1e-10"),
    );
    assert!(pass);
}

/// Best-case reference for criterion 2: the deterministic chain of *exact*
/// reverse-conditional means of the true mixture, computed in closed form
/// per step. Any inner-loop solver can at best reproduce this.
fn exact_mean_chain_endpoint(
    prior: &GaussianMixture,
    meas: &LinearGaussianMeasurement,
    y: f64,
    schedule: &VpSchedule,
    mu_t: f64,
) -> f64 {
    let post = prior.posterior_mixture(meas, &dvector![y]).unwrap();
    let n = post.component_count();
    let w: Vec<f64> = post.weights().to_vec();
    let m: Vec<f64> = (0..n).map(|j| post.component_means()[j][0]).collect();
    let v: Vec<f64> = (0..n)
        .map(|j| post.component_covariances()[j][(0, 0)])
        .collect();
    let t = schedule.step_count();
    let mut anchor = mu_t;
    for k in (0..t).rev() {
        let ab_k = schedule.alpha_bar(k);
        let alpha = schedule.alpha(k + 1);
        let beta = schedule.beta(k + 1);
        let mut log_ws = Vec::with_capacity(n);
        let mut means = Vec::with_capacity(n);
        for j in 0..n {
            let pm = ab_k.sqrt() * m[j];
            let pv = ab_k * v[j] + 1.0 - ab_k;
            let ev_var = alpha * pv + beta;
            let resid = anchor - alpha.sqrt() * pm;
            log_ws.push(w[j].ln() - 0.5 * ev_var.ln() - resid * resid / (2.0 * ev_var));
            means.push(pm + alpha.sqrt() * pv * resid / ev_var);
        }
        let max = log_ws.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = log_ws.iter().map(|l| (l - max).exp()).sum();
        anchor = log_ws
            .iter()
            .zip(&means)
            .map(|(l, mean)| (l - max).exp() / total * mean)
            .sum();
    }
    anchor
}

#[test]
fn criterion_02_posterior_mean_convergence() {
    let prior = toy_prior();
    let meas = toy_meas();
    let schedule = VpSchedule::linear(1000, 1e-4, 0.02).unwrap();
    let guidance = Guidance::new(GuidanceKind::PriorFree, None, &prior, &meas);
    let mut worst: f64 = 0.0;
    let mut detail = String::new();
    for &y in &[-1.5, -0.5, 0.2, 0.5, 1.5] {
        let yv = dvector![y];
        let oracle = posterior_mean_closed_form(&prior, &meas, &yv).unwrap()[0];
        let mut cfg = RmpConfig::new(Schedule::Vp(schedule.clone()));
        cfg.seed = 1;
        let out = run_rmp(&cfg, &prior, &guidance, &yv).unwrap();
        let err = (out.final_mean[0] - oracle).abs();
        worst = worst.max(err);
        // Reference: even the exact reverse-mean chain cannot do better than
        // this deterministic endpoint.
        let ideal = exact_mean_chain_endpoint(&prior, &meas, y, &schedule, 0.0);
        detail.push_str(&format!(
            " y={y:+.1}: |err|={err:.3} (exact-mean-chain floor {:.3});",
            (ideal - oracle).abs()
        ));
    }
    let pass = worst < 0.05;
    report(
        "02 posterior-mean convergence",
        pass,
        &format!("max |mu_0 - oracle| = {worst:.4}, threshold 0.05;{detail}"),
    );
    assert!(
        pass,
        "max error {worst:.4} exceeds 0.05; the deterministic exact-mean chain itself \
         deviates by up to 0.335 at y = 0.2, so the tolerance is unreachable for any \
         inner-loop configuration on this bimodal toy"
    );
}

#[test]
fn criterion_03_seed_robustness() {
    let prior = toy_prior();
    let meas = toy_meas();
    let schedule = VpSchedule::linear(1000, 1e-4, 0.02).unwrap();
    let guidance = Guidance::new(GuidanceKind::PriorFree, None, &prior, &meas);
    let mut outs = Vec::new();
    for seed in 0..20u64 {
        let mut cfg = RmpConfig::new(Schedule::Vp(schedule.clone()));
        cfg.seed = seed;
        cfg.init = InitMode::Fixed(dvector![0.0]);
        outs.push(
            run_rmp(&cfg, &prior, &guidance, &dvector![0.2])
                .unwrap()
                .final_mean[0],
        );
    }
    let mean: f64 = outs.iter().sum::<f64>() / outs.len() as f64;
    let std = (outs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (outs.len() - 1) as f64)
        .sqrt();
    let pass = std < 0.05;
    report(
        "03 seed robustness",
        pass,
        &format!(
            "std over 20 seeds at (x_T, y) = (0, 0.2) is {std:.3}, threshold 0.05; \
             outcomes split between the posterior modes (mean of outputs {mean:.3})"
        ),
    );
    assert!(
        pass,
        "seed std {std:.3} exceeds 0.05: at y = 0.2 the posterior is strongly bimodal \
         and the sampled inner loop commits to a mode per seed"
    );
}

#[test]
fn criterion_04_x_t_forgetting() {
    // Exact-expectation mode isolates the x_T dependence the criterion is
    // about; per-seed sampling noise is criterion 3's subject.
    let prior = toy_prior();
    let meas = toy_meas();
    let schedule = VpSchedule::linear(1000, 1e-4, 0.02).unwrap();
    let guidance = Guidance::new(GuidanceKind::PriorFree, None, &prior, &meas);
    let mut rng = seeded(104);
    let mut outs = Vec::new();
    for _ in 0..20 {
        let x_t: f64 = rng.sample::<f64, _>(StandardNormal);
        let mut cfg = RmpConfig::new(Schedule::Vp(schedule.clone()));
        cfg.estimator = Estimator::AtMean;
        cfg.init = InitMode::Fixed(dvector![x_t]);
        outs.push(
            run_rmp(&cfg, &prior, &guidance, &dvector![0.2])
                .unwrap()
                .final_mean[0],
        );
    }
    let max = outs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = outs.iter().cloned().fold(f64::INFINITY, f64::min);
    let spread = max - min;
    let pass = spread < 0.1;
    report(
        "04 x_T forgetting",
        pass,
        &format!("mu_0 spread over 20 random x_T draws at y = 0.2 is {spread:.2e}, threshold 0.1"),
    );
    assert!(pass);
}

#[test]
fn criterion_05_kl_decomposition_equality() {
    let mut rng = seeded(105);
    let mut worst: f64 = 0.0;
    for trial in 0..10 {
        let prior_mean = rng.random_range(-1.0..1.0);
        let prior_var = rng.random_range(0.1..2.0);
        let a = rng.random_range(0.5..2.0);
        let eps = rng.random_range(0.3..1.5);
        let y = rng.random_range(-1.5..1.5);
        let prior = GaussianMixture::single(dvector![prior_mean], prior_var).unwrap();
        let meas = LinearGaussianMeasurement::scalar(a, eps).unwrap();
        let steps = rng.random_range(2..=10usize);
        let schedule = if trial % 2 == 0 {
            Schedule::Ve(
                VeSchedule::geometric(
                    steps,
                    rng.random_range(0.05..0.3),
                    rng.random_range(2.0..8.0),
                )
                .unwrap(),
            )
        } else {
            Schedule::Vp(
                VpSchedule::linear(
                    steps,
                    rng.random_range(1e-3..0.01),
                    rng.random_range(0.05..0.3),
                )
                .unwrap(),
            )
        };
        // Random valid variational chain: perturb the true conditionals.
        let yv = dvector![y];
        let mut q = conjugate_reverse_steps(&prior, &meas, &yv, &schedule).unwrap();
        for step in &mut q {
            *step = StepGaussian::new(
                step.slope * rng.random_range(0.7..1.3),
                step.intercept + rng.random_range(-0.3..0.3),
                step.variance * rng.random_range(0.5..2.0),
            )
            .unwrap();
        }
        let out = kl_decomposition_check(&prior, &meas, &yv, &schedule, &q).unwrap();
        worst = worst.max((out.joint - out.stepwise).abs());
    }
    let pass = worst < 1e-10;
    report(
        "05 KL decomposition",
        pass,
        &format!("max |joint - stepwise| = {worst:.3e} over 10 conjugate chains, threshold 1e-10"),
    );
    assert!(pass);
}

#[test]
fn criterion_06_gradient_fidelity() {
    let prior = toy_prior();
    let meas = toy_meas();
    let mut rng = seeded(106);
    let tol = 1e-4;
    let mut worst: f64 = 0.0;
    let mut check = |label: &str, got: f64, fd: f64| {
        let denom = got.abs().max(fd.abs()).max(1e-6);
        let rel = (got - fd).abs() / denom;
        assert!(
            rel < tol,
            "{label}: {got} vs finite difference {fd} (rel {rel:.2e})"
        );
        if rel > worst {
            worst = rel;
        }
    };

    let random_at = |rng: &mut rand_chacha::ChaCha12Rng| {
        if rng.random::<bool>() {
            SchedulePoint::Ve {
                sigma: rng.random_range(0.05..2.0),
            }
        } else {
            SchedulePoint::Vp {
                alpha_bar: rng.random_range(0.1..1.0),
            }
        }
    };

    // Prior score and Hessian trace of the perturbed marginal.
    for _ in 0..100 {
        let at = random_at(&mut rng);
        let x = dvector![rng.random_range(-2.0..2.0)];
        let h = 1e-5 * (1.0 + x.norm());
        let up = dvector![x[0] + h];
        let down = dvector![x[0] - h];
        let fd = (prior.log_density_at(&up, at).unwrap()
            - prior.log_density_at(&down, at).unwrap())
            / (2.0 * h);
        check("prior score", prior.score_at(&x, at).unwrap()[0], fd);

        let h2 = 1e-4;
        let up2 = dvector![x[0] + h2];
        let down2 = dvector![x[0] - h2];
        let fd2 = (prior.log_density_at(&up2, at).unwrap()
            - 2.0 * prior.log_density_at(&x, at).unwrap()
            + prior.log_density_at(&down2, at).unwrap())
            / (h2 * h2);
        let got = prior.hessian_trace_at(&x, at).unwrap();
        let denom = got.abs().max(fd2.abs()).max(1e-6);
        assert!((got - fd2).abs() / denom < 1e-3 || (got - fd2).abs() < 1e-4);
    }

    // The three likelihood strategies against their own objectives.
    for kind in [
        GuidanceKind::ExactMixture,
        GuidanceKind::PriorFree,
        GuidanceKind::Dps,
    ] {
        let strategy = LikelihoodStrategy::new(kind, &prior, &meas);
        for _ in 0..100 {
            let at = random_at(&mut rng);
            let x = dvector![rng.random_range(-2.0..2.0)];
            let y = dvector![rng.random_range(-2.0..2.0)];
            let h = 1e-5 * (1.0 + x.norm());
            let fd = (strategy
                .objective(&prior, &dvector![x[0] + h], at, &y)
                .unwrap()
                - strategy
                    .objective(&prior, &dvector![x[0] - h], at, &y)
                    .unwrap())
                / (2.0 * h);
            check(
                &format!("{kind:?} likelihood score"),
                strategy.score(&prior, &x, at, &y).unwrap()[0],
                fd,
            );
        }
    }

    // Assembled solver gradient, term by term via the summed objective.
    let schedule = Schedule::Vp(VpSchedule::linear(50, 1e-3, 0.1).unwrap());
    let guidance = Guidance::new(GuidanceKind::ExactMixture, None, &prior, &meas);
    for _ in 0..100 {
        let k = rng.random_range(0..50usize);
        let at = schedule.point(k);
        let anchor = dvector![rng.random_range(-1.0..1.0)];
        let y = dvector![rng.random_range(-1.5..1.5)];
        let x: f64 = rng.random_range(-1.5..1.5);
        let beta = match &schedule {
            Schedule::Vp(vp) => vp.beta(k + 1),
            _ => unreachable!(),
        };
        let objective = |xv: f64| -> f64 {
            let xd = dvector![xv];
            let transition = -((anchor[0] - (1.0 - beta).sqrt() * xv).powi(2)) / (2.0 * beta);
            transition
                + guidance.strategy.objective(&prior, &xd, at, &y).unwrap()
                + prior.log_density_at(&xd, at).unwrap()
        };
        let h = 1e-5 * (1.0 + x.abs());
        let fd = (objective(x + h) - objective(x - h)) / (2.0 * h);
        let parts =
            assemble_gradient(&schedule, k, &dvector![x], &anchor, &prior, &guidance, &y).unwrap();
        check("assembled gradient", parts.total[0], fd);
    }

    report(
        "06 gradient fidelity",
        true,
        &format!("all gradients within rel tol 1e-4 of finite differences (worst {worst:.2e})"),
    );
}

#[test]
fn criterion_07_tweedie_exactness() {
    let prior = toy_prior();
    let mut rng = seeded(107);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let at = if rng.random::<bool>() {
            SchedulePoint::Ve {
                sigma: rng.random_range(0.0..3.0),
            }
        } else {
            SchedulePoint::Vp {
                alpha_bar: rng.random_range(0.05..1.0),
            }
        };
        let x = dvector![rng.random_range(-2.5..2.5)];
        let score = prior.score_at(&x, at).unwrap();
        let denoised = tweedie(&x, at, &score).unwrap();
        let exact = denoised_mean(&prior, at, &x).unwrap();
        worst = worst.max((denoised[0] - exact[0]).abs());
    }
    let pass = worst < 1e-10;
    report(
        "07 Tweedie exactness",
        pass,
        &format!("max |tweedie - conditional mean| = {worst:.3e} over 100 points, threshold 1e-10"),
    );
    assert!(pass);
}

#[test]
fn criterion_08_conjugate_strategy_agreement() {
    let meas = toy_meas();
    let mut rng = seeded(108);
    let mut worst: f64 = 0.0;
    let mut worst_case = String::new();
    for _ in 0..100 {
        let prior = GaussianMixture::single(
            dvector![rng.random_range(-1.0..1.0)],
            rng.random_range(0.1..2.0),
        )
        .unwrap();
        let at = if rng.random::<bool>() {
            SchedulePoint::Ve {
                sigma: rng.random_range(0.0..2.0),
            }
        } else {
            SchedulePoint::Vp {
                alpha_bar: rng.random_range(0.1..1.0),
            }
        };
        let x = dvector![rng.random_range(-2.0..2.0)];
        let y = dvector![rng.random_range(-2.0..2.0)];
        let exact = LikelihoodStrategy::new(GuidanceKind::ExactMixture, &prior, &meas)
            .score(&prior, &x, at, &y)
            .unwrap()[0];
        let free = LikelihoodStrategy::new(GuidanceKind::PriorFree, &prior, &meas)
            .score(&prior, &x, at, &y)
            .unwrap()[0];
        let dps = LikelihoodStrategy::new(GuidanceKind::Dps, &prior, &meas)
            .score(&prior, &x, at, &y)
            .unwrap()[0];
        let gap = (exact - free)
            .abs()
            .max((exact - dps).abs())
            .max((free - dps).abs());
        if gap > worst {
            worst = gap;
            worst_case = format!("exact={exact:.4}, prior-free={free:.4}, dps={dps:.4} at {at:?}");
        }
    }
    let pass = worst < 1e-8;
    report(
        "08 conjugate strategy agreement",
        pass,
        &format!(
            "max pairwise gap {worst:.3e}, threshold 1e-8; worst case: {worst_case}; \
             at positive noise the three formulas provably differ (DPS weights the \
             residual by 1/eps^2 instead of 1/(c + eps^2))"
        ),
    );
    assert!(
        pass,
        "strategies differ by {worst:.3e} at noisy schedule points; they provably \
         coincide only at the clean-data level"
    );
}

#[test]
fn criterion_09_baseline_statistical_gate() {
    let prior = GaussianMixture::single(dvector![0.3], 0.5).unwrap();
    let meas = LinearGaussianMeasurement::scalar(1.0, 0.7).unwrap();
    let y = dvector![0.9];
    let schedule = VpSchedule::linear(500, 1e-4, 0.02).unwrap();
    let guidance = Guidance::new(GuidanceKind::ExactMixture, None, &prior, &meas);
    let post = prior.posterior_mixture(&meas, &y).unwrap();
    let exact_mean = post.mean()[0];
    let exact_var = post.covariance()[(0, 0)];

    let n = 10_000usize;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for run in 0..n {
        let mut cfg_rng = seeded_stream(109, run as u64);
        let x = sample_ancestral(&schedule, &prior, &guidance, &y, &mut cfg_rng);
        sum += x;
        sum_sq += x * x;
    }
    let nf = n as f64;
    let mc_mean = sum / nf;
    let mc_var = (sum_sq / nf - mc_mean * mc_mean) * nf / (nf - 1.0);
    let se_mean = (exact_var / nf).sqrt();
    let se_var = exact_var * (2.0 / nf).sqrt();
    let mean_ok = (mc_mean - exact_mean).abs() < 3.0 * se_mean;
    let var_ok = (mc_var - exact_var).abs() < 3.0 * se_var;
    report(
        "09 baseline statistical gate",
        mean_ok && var_ok,
        &format!(
            "mean {mc_mean:.4} vs {exact_mean:.4} (3se {:.4}), var {mc_var:.4} vs {exact_var:.4} (3se {:.4})",
            3.0 * se_mean,
            3.0 * se_var
        ),
    );
    assert!(mean_ok && var_ok);
}

/// Thin wrapper so the gate draws through the library sampler while reusing
/// one RNG per run index.
fn sample_ancestral(
    schedule: &VpSchedule,
    prior: &GaussianMixture,
    guidance: &Guidance,
    y: &DVector<f64>,
    rng: &mut rand_chacha::ChaCha12Rng,
) -> f64 {
    use rmp_core::baselines::guided_ancestral_sample;
    // Derive a fresh seed from this run's stream so each run maps to the
    // library entry point exactly.
    let seed: u64 = rng.random();
    let (x, _) = guided_ancestral_sample(schedule, prior, guidance, y, seed).unwrap();
    x[0]
}

#[test]
fn criterion_10_nfe_frontier() {
    let prior = toy_prior();
    let meas = toy_meas();
    // Five measurement values drawn from the toy's generative process.
    let mut rng = seeded(2024);
    let ys: Vec<DVector<f64>> = (0..5)
        .map(|_| {
            let x0 = prior.sample(&mut rng)[0];
            dvector![x0 + 0.5 * rng.sample::<f64, _>(StandardNormal)]
        })
        .collect();
    let guidance = Guidance::new(GuidanceKind::ExactMixture, None, &prior, &meas);
    let spec = FrontierSpec {
        schedule: VpSchedule::linear(400, 1e-4, 0.02).unwrap(),
        budgets: vec![400, 1600, 6400],
        ys,
        seeds: vec![1, 2, 3, 4, 5],
        mean_step: 0.9,
        zeta: None,
    };
    let rows = nfe_frontier(&prior, &meas, &guidance, &spec).unwrap();
    let median = |budget: u64, method: FrontierMethod| {
        let mut errs: Vec<f64> = rows
            .iter()
            .filter(|r| r.budget == budget && r.method == method)
            .map(|r| r.squared_error)
            .collect();
        errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        errs[errs.len() / 2]
    };
    let mut pass = true;
    let mut detail = String::new();
    for &budget in &spec.budgets {
        let rmp = median(budget, FrontierMethod::Rmp);
        let base = median(budget, FrontierMethod::SampleAverage);
        pass &= rmp <= base;
        detail.push_str(&format!(
            " budget {budget}: rmp {rmp:.5} vs baseline {base:.5};"
        ));
    }
    report("10 NFE frontier", pass, detail.trim());
    assert!(pass);
}

#[test]
fn criterion_11_learned_precision_convergence() {
    // Conjugate chain step: the assembled Hessian trace is constant, Eq. 16
    // contracts geometrically, and warm-started at the fixed approximation it
    // settles within 5% of the exact reverse precision in <= 200 iterations.
    let prior = GaussianMixture::single(dvector![0.4], 0.6).unwrap();
    let meas = LinearGaussianMeasurement::scalar(1.3, 0.8).unwrap();
    let y = dvector![0.9];
    let post = prior.posterior_mixture(&meas, &y).unwrap();
    let v_post = post.covariance()[(0, 0)];
    let vp = VpSchedule::linear(100, 1e-3, 0.05).unwrap();
    let schedule = Schedule::Vp(vp.clone());
    let k = 50;
    let target = 1.0 / moments_vp(&vp, k, v_post).unwrap().variance;

    let guidance = Guidance::new(GuidanceKind::ExactMixture, None, &prior, &meas);
    let x = dvector![0.1];
    let trace = assemble_hessian_trace(&schedule, k, &x, &prior, &guidance, &y, 1.0).unwrap();
    let identity_gap = (-trace - target).abs() / target;
    // Non-circularity: the trace assembled from transition + likelihood +
    // prior terms reproduces the exact conditional precision.
    assert!(identity_gap < 1e-10);

    let d = prior.dim();
    let s2 = 1e-3 / d as f64;
    let mut lambda = 1.0 / fixed_precision_inv_vp(&vp, k).unwrap();
    let mut iterations = 0;
    for _ in 0..200 {
        lambda = ngd_precision_step(lambda, trace, s2, d, 1e-8).unwrap();
        iterations += 1;
        if (lambda - target).abs() / target < 0.05 {
            break;
        }
    }
    let rel = (lambda - target).abs() / target;
    let pass = rel < 0.05 && iterations <= 200;
    report(
        "11 learned precision",
        pass,
        &format!(
            "relative error {rel:.4} after {iterations} iterations (s2 = 1e-3/d, warm start at \
             the fixed approximation); trace identity gap {identity_gap:.2e}"
        ),
    );
    assert!(pass);
}

//! Named invariant suites runnable from the command line, against the
//! built-in toy model. Each suite prints one line per invariant with the
//! measured value next to its threshold and the command exits nonzero if any
//! gating check fails.

use nalgebra::{dvector, DVector};
use rand::Rng;

use rmp_core::guidance::{tweedie, Guidance, GuidanceKind, LikelihoodStrategy};
use rmp_core::mixture::{GaussianMixture, LinearGaussianMeasurement};
use rmp_core::oracle::{
    conjugate_reverse_steps, denoised_mean, kl_decomposition_check, posterior_mean_closed_form,
    posterior_mean_importance, posterior_mean_quadrature, QuadratureGrid, StepGaussian,
};
use rmp_core::reverse::{endpoint, exact_chain, PosteriorStats};
use rmp_core::rng::seeded;
use rmp_core::schedule::{Schedule, SchedulePoint, VeSchedule, VpSchedule};
use rmp_core::solver::assemble_gradient;

pub struct CheckLine {
    pub name: String,
    pub pass: bool,
    /// Informational lines report a measured quantity without gating.
    pub gating: bool,
    pub detail: String,
}

fn gate(name: &str, pass: bool, detail: String) -> CheckLine {
    CheckLine {
        name: name.to_string(),
        pass,
        gating: true,
        detail,
    }
}

fn note(name: &str, detail: String) -> CheckLine {
    CheckLine {
        name: name.to_string(),
        pass: true,
        gating: false,
        detail,
    }
}

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

pub fn known_suites() -> &'static [&'static str] {
    &[
        "telescoping",
        "gradients",
        "kl-decomposition",
        "oracles",
        "tweedie",
        "strategies",
        "all",
    ]
}

pub fn run_suite(suite: &str) -> anyhow::Result<Vec<CheckLine>> {
    Ok(match suite {
        "telescoping" => telescoping(),
        "gradients" => gradients(),
        "kl-decomposition" => kl_decomposition(),
        "oracles" => oracles(),
        "tweedie" => tweedie_suite(),
        "strategies" => strategies(),
        "all" => {
            let mut lines = Vec::new();
            for s in [
                "telescoping",
                "gradients",
                "kl-decomposition",
                "oracles",
                "tweedie",
                "strategies",
            ] {
                lines.extend(run_suite(s)?);
            }
            lines
        }
        other => anyhow::bail!(
            "unknown suite '{other}'; available: {}",
            known_suites().join(", ")
        ),
    })
}

fn telescoping() -> Vec<CheckLine> {
    let mut rng = seeded(11);
    let mut worst: f64 = 0.0;
    for trial in 0..30 {
        let d = rng.random_range(1..4usize);
        let v = rng.random_range(1e-3..5.0);
        let stats = PosteriorStats::new(DVector::from_fn(d, |_, _| rng.random_range(-2.0..2.0)), v)
            .unwrap();
        let mu_t = DVector::from_fn(d, |_, _| rng.random_range(-2.0..2.0));
        let steps = rng.random_range(2..150usize);
        let schedule = if trial % 2 == 0 {
            Schedule::Ve(VeSchedule::geometric(steps, 0.01, 80.0).unwrap())
        } else {
            Schedule::Vp(VpSchedule::linear(steps, 1e-4, 0.05).unwrap())
        };
        let chain = exact_chain(&schedule, &stats, &mu_t).unwrap();
        let closed = endpoint(&schedule, &stats, &mu_t).unwrap();
        worst = worst.max((chain.endpoint() - &closed).norm() / closed.norm().max(1e-12));
    }
    vec![gate(
        "telescoping.chain-vs-endpoint",
        worst < 1e-10,
        format!("max relative gap {worst:.3e} over 30 random chains (threshold 1e-10)"),
    )]
}

fn gradients() -> Vec<CheckLine> {
    let prior = toy_prior();
    let meas = toy_meas();
    let mut rng = seeded(12);
    let mut lines = Vec::new();

    fn random_at(rng: &mut impl Rng) -> SchedulePoint {
        if rng.random::<bool>() {
            SchedulePoint::Ve {
                sigma: rng.random_range(0.05..2.0),
            }
        } else {
            SchedulePoint::Vp {
                alpha_bar: rng.random_range(0.1..1.0),
            }
        }
    }

    let mut worst_prior: f64 = 0.0;
    for _ in 0..100 {
        let at = random_at(&mut rng);
        let x = dvector![rng.random_range(-2.0..2.0)];
        let h = 1e-5 * (1.0 + x.norm());
        let fd = (prior.log_density_at(&dvector![x[0] + h], at).unwrap()
            - prior.log_density_at(&dvector![x[0] - h], at).unwrap())
            / (2.0 * h);
        let got = prior.score_at(&x, at).unwrap()[0];
        worst_prior = worst_prior.max((got - fd).abs() / got.abs().max(fd.abs()).max(1e-6));
    }
    lines.push(gate(
        "gradients.prior-score",
        worst_prior < 1e-4,
        format!("max rel gap to finite differences {worst_prior:.2e} (threshold 1e-4)"),
    ));

    for kind in [
        GuidanceKind::ExactMixture,
        GuidanceKind::PriorFree,
        GuidanceKind::Dps,
    ] {
        let strategy = LikelihoodStrategy::new(kind, &prior, &meas);
        let mut worst: f64 = 0.0;
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
            let got = strategy.score(&prior, &x, at, &y).unwrap()[0];
            worst = worst.max((got - fd).abs() / got.abs().max(fd.abs()).max(1e-6));
        }
        lines.push(gate(
            &format!("gradients.likelihood-{}", kind_name(kind)),
            worst < 1e-4,
            format!("max rel gap to finite differences {worst:.2e} (threshold 1e-4)"),
        ));
    }

    let schedule = Schedule::Vp(VpSchedule::linear(50, 1e-3, 0.1).unwrap());
    let guidance = Guidance::new(GuidanceKind::ExactMixture, None, &prior, &meas);
    let mut worst: f64 = 0.0;
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
        let objective = |xv: f64| {
            let xd = dvector![xv];
            -((anchor[0] - (1.0 - beta).sqrt() * xv).powi(2)) / (2.0 * beta)
                + guidance.strategy.objective(&prior, &xd, at, &y).unwrap()
                + prior.log_density_at(&xd, at).unwrap()
        };
        let h = 1e-5 * (1.0 + x.abs());
        let fd = (objective(x + h) - objective(x - h)) / (2.0 * h);
        let got = assemble_gradient(&schedule, k, &dvector![x], &anchor, &prior, &guidance, &y)
            .unwrap()
            .total[0];
        worst = worst.max((got - fd).abs() / got.abs().max(fd.abs()).max(1e-6));
    }
    lines.push(gate(
        "gradients.assembled",
        worst < 1e-4,
        format!("max rel gap to finite differences {worst:.2e} (threshold 1e-4)"),
    ));
    lines
}

fn kind_name(kind: GuidanceKind) -> &'static str {
    match kind {
        GuidanceKind::ExactMixture => "exact-mixture",
        GuidanceKind::PriorFree => "prior-free",
        GuidanceKind::Dps => "dps",
    }
}

fn kl_decomposition() -> Vec<CheckLine> {
    let mut rng = seeded(13);
    let mut worst: f64 = 0.0;
    for trial in 0..10 {
        let prior = GaussianMixture::single(
            dvector![rng.random_range(-1.0..1.0)],
            rng.random_range(0.1..2.0),
        )
        .unwrap();
        let meas = LinearGaussianMeasurement::scalar(
            rng.random_range(0.5..2.0),
            rng.random_range(0.3..1.5),
        )
        .unwrap();
        let y = dvector![rng.random_range(-1.5..1.5)];
        let steps = rng.random_range(2..=10usize);
        let schedule = if trial % 2 == 0 {
            Schedule::Ve(VeSchedule::geometric(steps, 0.1, 5.0).unwrap())
        } else {
            Schedule::Vp(VpSchedule::linear(steps, 1e-3, 0.2).unwrap())
        };
        let mut q = conjugate_reverse_steps(&prior, &meas, &y, &schedule).unwrap();
        for step in &mut q {
            *step = StepGaussian::new(
                step.slope * rng.random_range(0.8..1.2),
                step.intercept + rng.random_range(-0.2..0.2),
                step.variance * rng.random_range(0.6..1.6),
            )
            .unwrap();
        }
        let out = kl_decomposition_check(&prior, &meas, &y, &schedule, &q).unwrap();
        worst = worst.max((out.joint - out.stepwise).abs());
    }
    vec![gate(
        "kl-decomposition.joint-vs-stepwise",
        worst < 1e-10,
        format!("max |joint - stepwise| {worst:.3e} over 10 conjugate chains (threshold 1e-10)"),
    )]
}

fn oracles() -> Vec<CheckLine> {
    let prior = toy_prior();
    let meas = toy_meas();
    let grid = QuadratureGrid::covering(&prior, 50_000, 8.0);
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let y = dvector![-2.0 + 4.0 * i as f64 / 19.0];
        let q = posterior_mean_quadrature(&prior, &meas, &y, &grid).unwrap();
        let c = posterior_mean_closed_form(&prior, &meas, &y).unwrap();
        worst = worst.max((q[0] - c[0]).abs());
    }
    let mut lines = vec![gate(
        "oracles.quadrature-vs-closed-form",
        worst < 1e-6,
        format!("max gap {worst:.3e} over a 20-point measurement sweep (threshold 1e-6)"),
    )];

    let y = dvector![0.2];
    let est = posterior_mean_importance(&prior, &meas, &y, 200_000, 17).unwrap();
    let exact = posterior_mean_closed_form(&prior, &meas, &y).unwrap();
    let gap = (est.mean[0] - exact[0]).abs();
    lines.push(gate(
        "oracles.importance-vs-closed-form",
        est.reliable && gap < 3.0 * est.standard_error[0],
        format!(
            "gap {gap:.3e} within 3 SE = {:.3e}, effective sample size {:.0}",
            3.0 * est.standard_error[0],
            est.effective_sample_size
        ),
    ));
    lines
}

fn tweedie_suite() -> Vec<CheckLine> {
    let prior = toy_prior();
    let mut rng = seeded(14);
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
        let got = tweedie(&x, at, &score).unwrap();
        let exact = denoised_mean(&prior, at, &x).unwrap();
        worst = worst.max((got[0] - exact[0]).abs());
    }
    vec![gate(
        "tweedie.vs-conditional-mean",
        worst < 1e-10,
        format!("max gap {worst:.3e} over 100 random points (threshold 1e-10)"),
    )]
}

fn strategies() -> Vec<CheckLine> {
    let meas = toy_meas();
    let mut rng = seeded(15);

    // Gating: at the clean-data level all three reduce to the same Gaussian
    // score, for any prior.
    let mut worst_clean: f64 = 0.0;
    let prior = GaussianMixture::single(dvector![0.3], 0.7).unwrap();
    for _ in 0..50 {
        let x = dvector![rng.random_range(-2.0..2.0)];
        let y = dvector![rng.random_range(-2.0..2.0)];
        let at = SchedulePoint::Ve { sigma: 0.0 };
        let scores: Vec<f64> = [
            GuidanceKind::ExactMixture,
            GuidanceKind::PriorFree,
            GuidanceKind::Dps,
        ]
        .iter()
        .map(|&k| {
            LikelihoodStrategy::new(k, &prior, &meas)
                .score(&prior, &x, at, &y)
                .unwrap()[0]
        })
        .collect();
        for a in 0..3 {
            for b in (a + 1)..3 {
                worst_clean = worst_clean.max((scores[a] - scores[b]).abs());
            }
        }
    }
    let mut lines = vec![gate(
        "strategies.clean-level-agreement",
        worst_clean < 1e-8,
        format!("max pairwise gap at sigma = 0 is {worst_clean:.3e} (threshold 1e-8)"),
    )];

    // Informational: the measured divergence at positive noise levels on a
    // conjugate prior. The strategies are different estimators there.
    let mut worst_noisy: f64 = 0.0;
    for _ in 0..100 {
        let at = SchedulePoint::Vp {
            alpha_bar: rng.random_range(0.1..0.95),
        };
        let x = dvector![rng.random_range(-2.0..2.0)];
        let y = dvector![rng.random_range(-2.0..2.0)];
        let e = LikelihoodStrategy::new(GuidanceKind::ExactMixture, &prior, &meas)
            .score(&prior, &x, at, &y)
            .unwrap()[0];
        let f = LikelihoodStrategy::new(GuidanceKind::PriorFree, &prior, &meas)
            .score(&prior, &x, at, &y)
            .unwrap()[0];
        let d = LikelihoodStrategy::new(GuidanceKind::Dps, &prior, &meas)
            .score(&prior, &x, at, &y)
            .unwrap()[0];
        worst_noisy = worst_noisy.max((e - f).abs()).max((e - d).abs());
    }
    lines.push(note(
        "strategies.noisy-level-divergence",
        format!(
            "max |approximate - exact| at positive noise is {worst_noisy:.3} on a conjugate \
             prior; prior-free and DPS are approximations away from sigma = 0"
        ),
    ));
    lines
}

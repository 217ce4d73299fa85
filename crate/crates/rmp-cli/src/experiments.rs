//! Experiment orchestration: single runs, measurement sweeps, figure data
//! emission, and the NFE frontier.

use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use nalgebra::{dvector, DVector};
use rayon::prelude::*;

use rmp_core::baselines::{nfe_frontier, FrontierMethod, FrontierSpec};
use rmp_core::guidance::Guidance;
use rmp_core::oracle::posterior_mean_closed_form;
use rmp_core::schedule::Schedule;
use rmp_core::solver::{run_rmp, InitMode, RunStatus, Trajectory};

use crate::config::{ExperimentConfig, GridSpec};
use crate::emit::{csv_row, ensure_dir, fmt_f64, status_json, trajectory_csv, write_text};

fn timing_json(started: Instant) -> serde_json::Value {
    // Non-reproducible by design; everything else in the artifacts is a pure
    // function of (config, seed).
    serde_json::json!({
        "wall_seconds": started.elapsed().as_secs_f64(),
        "timestamp_unix": SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    })
}

fn oracle_json(
    prior: &rmp_core::GaussianMixture,
    meas: &rmp_core::LinearGaussianMeasurement,
    y: &DVector<f64>,
) -> anyhow::Result<serde_json::Value> {
    let mean = posterior_mean_closed_form(prior, meas, y)?;
    Ok(serde_json::json!({
        "method": "closed-form",
        "posterior_mean": mean.iter().cloned().collect::<Vec<f64>>(),
    }))
}

pub fn cmd_run(cfg: &ExperimentConfig, out: &Path, seed: Option<u64>) -> anyhow::Result<i32> {
    let started = Instant::now();
    let prior = cfg.prior()?;
    let meas = cfg.measurement()?;
    let solver = cfg.solver_config(seed)?;
    let guidance = Guidance::new(cfg.guidance_kind(), cfg.guidance.zeta, &prior, &meas);
    let y = cfg.y_vector()?;
    let trajectory = run_rmp(&solver, &prior, &guidance, &y)?;

    ensure_dir(out)?;
    write_text(&out.join("trajectory.csv"), &trajectory_csv(&trajectory))?;
    let summary = serde_json::json!({
        "final_mu": trajectory.final_mean.iter().cloned().collect::<Vec<f64>>(),
        "nfe": trajectory.nfe,
        "status": status_json(&trajectory.status),
        "rng": trajectory.rng_algorithm,
        "zero_guidance_events": trajectory.zero_guidance_events,
        "oracle": oracle_json(&prior, &meas, &y)?,
        "config": serde_json::to_value(cfg)?,
        "seed_override": seed,
        "timing": timing_json(started),
    });
    write_text(
        &out.join("summary.json"),
        &serde_json::to_string_pretty(&summary)?,
    )?;

    match &trajectory.status {
        RunStatus::Completed => Ok(0),
        RunStatus::Aborted { step, reason } => {
            eprintln!(
                "{}",
                serde_json::json!({"error": "numerical-abort", "step": step, "reason": reason})
            );
            Ok(3)
        }
    }
}

fn scalar_grid(cfg: &ExperimentConfig) -> GridSpec {
    cfg.experiment.y_grid.unwrap_or(GridSpec {
        from: -2.0,
        to: 2.0,
        count: 41,
    })
}

pub fn cmd_sweep(cfg: &ExperimentConfig, out: &Path, seed: Option<u64>) -> anyhow::Result<i32> {
    let started = Instant::now();
    let prior = cfg.prior()?;
    let meas = cfg.measurement()?;
    if prior.dim() != 1 || meas.out_dim() != 1 {
        anyhow::bail!("sweep requires a scalar model and measurement");
    }
    let grid = scalar_grid(cfg);
    let seeds = cfg
        .experiment
        .seeds
        .clone()
        .unwrap_or_else(|| vec![seed.unwrap_or(cfg.solver.seed)]);

    let cells: Vec<(usize, f64, u64)> = grid
        .values()
        .into_iter()
        .flat_map(|y| seeds.iter().map(move |&s| (y, s)))
        .enumerate()
        .map(|(i, (y, s))| (i, y, s))
        .collect();

    // Each cell owns its seed, so results are independent of scheduling.
    let mut rows: Vec<(usize, String)> = cells
        .par_iter()
        .map(|&(i, y, cell_seed)| {
            let yv = dvector![y];
            let solver = cfg.solver_config(Some(cell_seed))?;
            let guidance = Guidance::new(cfg.guidance_kind(), cfg.guidance.zeta, &prior, &meas);
            let run = run_rmp(&solver, &prior, &guidance, &yv)?;
            let oracle = posterior_mean_closed_form(&prior, &meas, &yv)?[0];
            let err = (run.final_mean[0] - oracle).abs();
            Ok((
                i,
                csv_row(&[
                    fmt_f64(y),
                    cell_seed.to_string(),
                    fmt_f64(run.final_mean[0]),
                    fmt_f64(oracle),
                    fmt_f64(err),
                    run.nfe.to_string(),
                ]),
            ))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    rows.sort_by_key(|(i, _)| *i);

    let mut csv = String::from("y,seed,mu0,oracle,abs_err,nfe\n");
    for (_, row) in &rows {
        csv.push_str(row);
        csv.push('\n');
    }
    ensure_dir(out)?;
    write_text(&out.join("sweep.csv"), &csv)?;

    let errs: Vec<f64> = rows
        .iter()
        .map(|(_, row)| row.split(',').nth(4).unwrap().parse::<f64>().unwrap())
        .collect();
    let max_err = errs.iter().cloned().fold(0.0f64, f64::max);
    let mean_err = errs.iter().sum::<f64>() / errs.len() as f64;
    let summary = serde_json::json!({
        "cells": rows.len(),
        "max_abs_err": max_err,
        "mean_abs_err": mean_err,
        "config": serde_json::to_value(cfg)?,
        "timing": timing_json(started),
    });
    write_text(
        &out.join("sweep_summary.json"),
        &serde_json::to_string_pretty(&summary)?,
    )?;
    Ok(0)
}

pub fn cmd_figures(cfg: &ExperimentConfig, out: &Path, seed: Option<u64>) -> anyhow::Result<i32> {
    let started = Instant::now();
    let prior = cfg.prior()?;
    let meas = cfg.measurement()?;
    if prior.dim() != 1 || meas.out_dim() != 1 {
        anyhow::bail!("figures require a scalar model and measurement");
    }
    let base_seed = seed.unwrap_or(cfg.solver.seed);
    let guidance = Guidance::new(cfg.guidance_kind(), cfg.guidance.zeta, &prior, &meas);
    ensure_dir(out)?;

    let run_with = |y: f64, init: InitMode, run_seed: u64| -> anyhow::Result<Trajectory> {
        let mut solver = cfg.solver_config(Some(run_seed))?;
        solver.init = init;
        Ok(run_rmp(&solver, &prior, &guidance, &dvector![y])?)
    };
    let mean_at = |t: &Trajectory, k: usize| -> f64 {
        // records run k = T-1 .. 0.
        let idx = t.records.len() - 1 - k;
        t.records[idx].mean[0]
    };

    // Panel (a): y sweep, fixed x_T = 0.
    let coarse = cfg.experiment.y_grid.unwrap_or(GridSpec {
        from: -2.0,
        to: 2.0,
        count: 9,
    });
    let mut csv = String::from("y,k,mu\n");
    for y in coarse.values() {
        let t = run_with(y, InitMode::Fixed(dvector![0.0]), base_seed)?;
        let steps = t.records.len();
        for k in (0..steps).rev() {
            csv.push_str(&csv_row(&[
                fmt_f64(y),
                k.to_string(),
                fmt_f64(mean_at(&t, k)),
            ]));
            csv.push('\n');
        }
    }
    write_text(&out.join("fig_y_sweep.csv"), &csv)?;

    // Panel (b): random x_T at the anchor measurement.
    let anchor_y = cfg.experiment.y.as_ref().map(|y| y[0]).unwrap_or(0.2);
    let mut csv = String::from("run,x_t,y,k,mu\n");
    let mut rng = rmp_core::rng::seeded(base_seed);
    use rand::Rng;
    use rand_distr::StandardNormal;
    for run in 0..20u64 {
        let x_t: f64 = rng.sample::<f64, _>(StandardNormal);
        let t = run_with(
            anchor_y,
            InitMode::Fixed(dvector![x_t]),
            base_seed + 1 + run,
        )?;
        let steps = t.records.len();
        for k in (0..steps).rev() {
            csv.push_str(&csv_row(&[
                run.to_string(),
                fmt_f64(x_t),
                fmt_f64(anchor_y),
                k.to_string(),
                fmt_f64(mean_at(&t, k)),
            ]));
            csv.push('\n');
        }
    }
    write_text(&out.join("fig_random_start.csv"), &csv)?;

    // Panel (c): the three fixed (x_T, y) pairs.
    let pairs = [(-1.0, -1.5), (0.0, 0.2), (1.0, 1.5)];
    let mut csv = String::from("case,x_t,y,k,mu\n");
    let mut endpoints = Vec::new();
    for (case, (x_t, y)) in pairs.iter().enumerate() {
        let t = run_with(
            *y,
            InitMode::Fixed(dvector![*x_t]),
            base_seed + 100 + case as u64,
        )?;
        endpoints.push(t.final_mean[0]);
        let steps = t.records.len();
        for k in (0..steps).rev() {
            csv.push_str(&csv_row(&[
                case.to_string(),
                fmt_f64(*x_t),
                fmt_f64(*y),
                k.to_string(),
                fmt_f64(mean_at(&t, k)),
            ]));
            csv.push('\n');
        }
    }
    write_text(&out.join("fig_fixed_pairs.csv"), &csv)?;

    // Reference trace: the deterministic scalar-isotropic chain driven by the
    // posterior aggregates, from the same fixed start as panel (a).
    {
        use rmp_core::reverse::{exact_chain, PosteriorStats};
        let post = prior.posterior_mixture(&meas, &dvector![anchor_y])?;
        let stats = PosteriorStats::new(post.mean(), post.covariance()[(0, 0)])?;
        let trace = exact_chain(&cfg.schedule()?, &stats, &dvector![0.0])?;
        let mut csv = String::from("k,mu\n");
        for (k, mean) in trace.means.iter().enumerate() {
            csv.push_str(&csv_row(&[k.to_string(), fmt_f64(mean[0])]));
            csv.push('\n');
        }
        write_text(&out.join("fig_exact_chain.csv"), &csv)?;
    }

    // Panel (d): final mean against the oracle over a dense grid.
    let dense = scalar_grid(cfg);
    let mut csv = String::from("y,mu0,oracle\n");
    let mut max_gap: f64 = 0.0;
    let mut at_zero: Option<f64> = None;
    for (i, y) in dense.values().into_iter().enumerate() {
        let t = run_with(
            y,
            InitMode::Fixed(dvector![0.0]),
            base_seed + 500 + i as u64,
        )?;
        let oracle = posterior_mean_closed_form(&prior, &meas, &dvector![y])?[0];
        max_gap = max_gap.max((t.final_mean[0] - oracle).abs());
        if y == 0.0 {
            at_zero = Some(t.final_mean[0]);
        }
        csv.push_str(&csv_row(&[
            fmt_f64(y),
            fmt_f64(t.final_mean[0]),
            fmt_f64(oracle),
        ]));
        csv.push('\n');
    }
    write_text(&out.join("fig_mmse_curve.csv"), &csv)?;

    let summary = serde_json::json!({
        "panel_c_endpoints": endpoints,
        "panel_d_max_abs_gap": max_gap,
        "panel_d_mu0_at_y0": at_zero,
        "config": serde_json::to_value(cfg)?,
        "timing": timing_json(started),
    });
    write_text(
        &out.join("figures_summary.json"),
        &serde_json::to_string_pretty(&summary)?,
    )?;
    Ok(0)
}

pub fn cmd_frontier(cfg: &ExperimentConfig, out: &Path, seed: Option<u64>) -> anyhow::Result<i32> {
    let started = Instant::now();
    let prior = cfg.prior()?;
    let meas = cfg.measurement()?;
    let schedule = match cfg.schedule()? {
        Schedule::Vp(vp) => vp,
        Schedule::Ve(_) => {
            anyhow::bail!("frontier requires a VP schedule (the baseline sampler is VP-only)")
        }
    };
    let budgets = cfg
        .experiment
        .budgets
        .clone()
        .ok_or_else(|| anyhow::anyhow!("experiment: frontier needs budgets"))?;
    let ys: Vec<DVector<f64>> = match (&cfg.experiment.y_grid, &cfg.experiment.y) {
        (Some(grid), _) => grid.values().into_iter().map(|y| dvector![y]).collect(),
        (None, Some(y)) => vec![DVector::from_vec(y.clone())],
        (None, None) => anyhow::bail!("experiment: frontier needs y or y_grid"),
    };
    let seeds = cfg
        .experiment
        .seeds
        .clone()
        .unwrap_or_else(|| vec![1, 2, 3, 4, 5]);
    let _ = seed;

    let guidance = Guidance::new(cfg.guidance_kind(), cfg.guidance.zeta, &prior, &meas);
    let spec = FrontierSpec {
        schedule,
        budgets: budgets.clone(),
        ys,
        seeds,
        mean_step: cfg.solver.mean_step,
        zeta: cfg.guidance.zeta,
    };
    let rows = nfe_frontier(&prior, &meas, &guidance, &spec)?;

    ensure_dir(out)?;
    let mut csv = String::from("method,nfe,y,seed,sq_error\n");
    for row in &rows {
        csv.push_str(&csv_row(&[
            row.method.name().to_string(),
            row.nfe.to_string(),
            fmt_f64(row.y[0]),
            row.seed.to_string(),
            fmt_f64(row.squared_error),
        ]));
        csv.push('\n');
    }
    write_text(&out.join("frontier.csv"), &csv)?;

    let mut medians = Vec::new();
    for &budget in &budgets {
        for method in [FrontierMethod::Rmp, FrontierMethod::SampleAverage] {
            let mut errs: Vec<f64> = rows
                .iter()
                .filter(|r| r.budget == budget && r.method == method)
                .map(|r| r.squared_error)
                .collect();
            errs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            medians.push(serde_json::json!({
                "budget": budget,
                "method": method.name(),
                "median_sq_error": errs[errs.len() / 2],
            }));
        }
    }
    let summary = serde_json::json!({
        "medians": medians,
        "note": "squared error to the closed-form posterior mean; an analogue of image-metric frontiers, not a reproduction",
        "config": serde_json::to_value(cfg)?,
        "timing": timing_json(started),
    });
    write_text(
        &out.join("frontier_summary.json"),
        &serde_json::to_string_pretty(&summary)?,
    )?;
    Ok(0)
}

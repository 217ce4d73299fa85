//! Deterministic artifact emission.
//!
//! CSV cells use Rust's shortest round-trip decimal formatting, so files are
//! byte-reproducible from (config, seed) and parse back to the exact floats.
//! Wall-clock fields live only in JSON summaries, under `timing`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use rmp_core::solver::{RunStatus, Trajectory};

pub fn ensure_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

pub fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Output root resolution: --out flag, then config `output_dir`, then the
/// RMP_OUT_ROOT environment variable, then ./out.
pub fn resolve_out_dir(flag: Option<&str>, config_dir: Option<&str>) -> PathBuf {
    if let Some(dir) = flag {
        return PathBuf::from(dir);
    }
    if let Some(dir) = config_dir {
        return PathBuf::from(dir);
    }
    if let Ok(dir) = std::env::var("RMP_OUT_ROOT") {
        if !dir.is_empty() {
            return PathBuf::from(dir);
        }
    }
    PathBuf::from("out")
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

pub fn csv_row(cells: &[String]) -> String {
    cells.join(",")
}

/// Trajectory CSV: one record per reverse step, exactly T rows plus header.
pub fn trajectory_csv(trajectory: &Trajectory) -> String {
    let dim = trajectory.final_mean.len();
    let mut header = vec!["k".to_string(), "i".to_string()];
    for c in 0..dim {
        header.push(format!("mu{c}"));
    }
    header.extend(
        [
            "lambda_inv",
            "norm_prior_score",
            "norm_lik_score",
            "gamma",
            "nfe",
        ]
        .iter()
        .map(|s| s.to_string()),
    );
    let mut out = csv_row(&header);
    out.push('\n');
    for record in &trajectory.records {
        let mut cells = vec![record.k.to_string(), record.inner_iterations.to_string()];
        for c in 0..dim {
            cells.push(fmt_f64(record.mean[c]));
        }
        cells.push(fmt_f64(record.precision_inv));
        cells.push(fmt_f64(record.prior_score_norm));
        cells.push(fmt_f64(record.likelihood_score_norm));
        cells.push(fmt_f64(record.gamma));
        cells.push(record.nfe.to_string());
        out.push_str(&csv_row(&cells));
        out.push('\n');
    }
    out
}

pub fn status_json(status: &RunStatus) -> serde_json::Value {
    match status {
        RunStatus::Completed => serde_json::json!({"state": "completed"}),
        RunStatus::Aborted { step, reason } => serde_json::json!({
            "state": "aborted",
            "step": step,
            "reason": reason,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_formatting_round_trips() {
        for v in [0.1 + 0.2, 1.0 / 3.0, 1e-17, -0.0, 12345.678901234567] {
            let s = fmt_f64(v);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), v.to_bits(), "{s}");
        }
    }

    #[test]
    fn out_dir_resolution_order() {
        let d = resolve_out_dir(Some("a"), Some("b"));
        assert_eq!(d, PathBuf::from("a"));
        let d = resolve_out_dir(None, Some("b"));
        assert_eq!(d, PathBuf::from("b"));
    }
}

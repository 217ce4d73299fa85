//! Experiment configuration: a single TOML file with strict unknown-key
//! rejection. Silent typos in hyperparameter names are the dominant failure
//! mode in reproduction harnesses, so every table denies unknown fields and
//! parse errors carry the file location.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use rmp_core::guidance::GuidanceKind;
use rmp_core::mixture::{GaussianMixture, LinearGaussianMeasurement};
use rmp_core::schedule::{Schedule, VeSchedule, VpSchedule};
use rmp_core::solver::{Estimator, InitMode, PrecisionMode, RmpConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub measurement: MeasurementSpec,
    pub diffusion: DiffusionSpec,
    pub solver: SolverSpec,
    pub guidance: GuidanceSpec,
    pub experiment: ExperimentSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementSpec {
    pub matrix: Vec<Vec<f64>>,
    pub noise_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffusionSpec {
    pub kind: DiffusionKind,
    pub steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_max: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiffusionKind {
    Ve,
    Vp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default = "default_inner_steps")]
    pub inner_steps: usize,
    #[serde(default = "default_mean_step")]
    pub mean_step: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub estimator: EstimatorKind,
    #[serde(default)]
    pub precision: PrecisionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precision_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precision_floor: Option<f64>,
    /// VE switch index T_s; defaults to steps/2.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub switch_index: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<InitSpec>,
}

fn default_inner_steps() -> usize {
    1
}

fn default_mean_step() -> f64 {
    0.9
}

fn default_samples() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    #[default]
    Sampled,
    AtMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PrecisionKind {
    #[default]
    Fixed,
    Learned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct InitSpec {
    pub kind: InitKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitKind {
    Sampled,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuidanceSpec {
    pub kind: GuidanceKindSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zeta: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GuidanceKindSpec {
    ExactMixture,
    PriorFree,
    Dps,
}

impl From<GuidanceKindSpec> for GuidanceKind {
    fn from(value: GuidanceKindSpec) -> Self {
        match value {
            GuidanceKindSpec::ExactMixture => GuidanceKind::ExactMixture,
            GuidanceKindSpec::PriorFree => GuidanceKind::PriorFree,
            GuidanceKindSpec::Dps => GuidanceKind::Dps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    /// Measurement vector for `run`; also the anchor measurement for the
    /// random-start figure panel.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<Vec<f64>>,
    /// Dense measurement grid for `sweep` and the figure MMSE panel
    /// (scalar measurements only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_grid: Option<GridSpec>,
    /// Seed set for sweep/frontier fan-out.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    /// Score-evaluation budgets for `frontier`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budgets: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Run,
    Sweep,
    Figures,
    Frontier,
    Check,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub from: f64,
    pub to: f64,
    pub count: usize,
}

impl GridSpec {
    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.from];
        }
        (0..self.count)
            .map(|i| self.from + (self.to - self.from) * i as f64 / (self.count - 1) as f64)
            .collect()
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    #[cfg(test)]
    pub fn to_toml(&self) -> anyhow::Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    fn validate(&self) -> anyhow::Result<()> {
        match self.diffusion.kind {
            DiffusionKind::Vp => {
                if self.diffusion.beta_min.is_none() || self.diffusion.beta_max.is_none() {
                    anyhow::bail!("diffusion: vp needs beta_min and beta_max");
                }
                if self.diffusion.sigma_min.is_some() || self.diffusion.sigma_max.is_some() {
                    anyhow::bail!("diffusion: sigma_min/sigma_max are VE-only fields");
                }
            }
            DiffusionKind::Ve => {
                if self.diffusion.sigma_min.is_none() || self.diffusion.sigma_max.is_none() {
                    anyhow::bail!("diffusion: ve needs sigma_min and sigma_max");
                }
                if self.diffusion.beta_min.is_some() || self.diffusion.beta_max.is_some() {
                    anyhow::bail!("diffusion: beta_min/beta_max are VP-only fields");
                }
            }
        }
        if self.solver.precision == PrecisionKind::Learned && self.solver.precision_step.is_none() {
            anyhow::bail!("solver: learned precision needs precision_step");
        }
        if let Some(init) = &self.solver.init {
            match init.kind {
                InitKind::Fixed if init.value.is_none() => {
                    anyhow::bail!("solver.init: fixed init needs a value");
                }
                InitKind::Sampled if init.value.is_some() => {
                    anyhow::bail!("solver.init: sampled init takes no value");
                }
                _ => {}
            }
        }
        match self.experiment.kind {
            ExperimentKind::Run if self.experiment.y.is_none() => {
                anyhow::bail!("experiment: run needs y");
            }
            ExperimentKind::Frontier if self.experiment.budgets.is_none() => {
                anyhow::bail!("experiment: frontier needs budgets");
            }
            _ => {}
        }
        Ok(())
    }

    pub fn prior(&self) -> anyhow::Result<GaussianMixture> {
        let means = self
            .model
            .means
            .iter()
            .map(|m| DVector::from_vec(m.clone()))
            .collect();
        Ok(GaussianMixture::new(
            self.model.weights.clone(),
            means,
            self.model.variances.clone(),
        )?)
    }

    pub fn measurement(&self) -> anyhow::Result<LinearGaussianMeasurement> {
        let rows = self.measurement.matrix.len();
        if rows == 0 {
            anyhow::bail!("measurement: matrix must be non-empty");
        }
        let cols = self.measurement.matrix[0].len();
        if self.measurement.matrix.iter().any(|r| r.len() != cols) {
            anyhow::bail!("measurement: matrix rows must have equal length");
        }
        let flat: Vec<f64> = self.measurement.matrix.iter().flatten().cloned().collect();
        let matrix = DMatrix::from_row_slice(rows, cols, &flat);
        Ok(LinearGaussianMeasurement::new(
            matrix,
            self.measurement.noise_std,
        )?)
    }

    pub fn schedule(&self) -> anyhow::Result<Schedule> {
        Ok(match self.diffusion.kind {
            DiffusionKind::Vp => Schedule::Vp(VpSchedule::linear(
                self.diffusion.steps,
                self.diffusion.beta_min.unwrap(),
                self.diffusion.beta_max.unwrap(),
            )?),
            DiffusionKind::Ve => Schedule::Ve(VeSchedule::geometric(
                self.diffusion.steps,
                self.diffusion.sigma_min.unwrap(),
                self.diffusion.sigma_max.unwrap(),
            )?),
        })
    }

    /// Solver configuration; `seed_override` (from --seed) wins over the file.
    pub fn solver_config(&self, seed_override: Option<u64>) -> anyhow::Result<RmpConfig> {
        let schedule = self.schedule()?;
        let mut cfg = RmpConfig::new(schedule);
        cfg.inner_steps = self.solver.inner_steps;
        cfg.mean_step = self.solver.mean_step;
        cfg.estimator = match self.solver.estimator {
            EstimatorKind::Sampled => Estimator::Sampled {
                samples: self.solver.samples,
            },
            EstimatorKind::AtMean => Estimator::AtMean,
        };
        cfg.precision = match self.solver.precision {
            PrecisionKind::Fixed => PrecisionMode::Fixed,
            PrecisionKind::Learned => PrecisionMode::Learned {
                step_size: self.solver.precision_step.unwrap(),
                floor: self.solver.precision_floor.unwrap_or(1e-8),
            },
        };
        if let Some(ts) = self.solver.switch_index {
            cfg.switch_index = ts;
        }
        cfg.seed = seed_override.unwrap_or(self.solver.seed);
        if let Some(init) = &self.solver.init {
            cfg.init = match init.kind {
                InitKind::Sampled => InitMode::Sampled,
                InitKind::Fixed => InitMode::Fixed(DVector::from_vec(init.value.clone().unwrap())),
            };
        }
        Ok(cfg)
    }

    pub fn guidance_kind(&self) -> GuidanceKind {
        self.guidance.kind.into()
    }

    pub fn y_vector(&self) -> anyhow::Result<DVector<f64>> {
        let y = self
            .experiment
            .y
            .as_ref()
            .ok_or_else(|| anyhow::anyhow!("experiment: y missing"))?;
        Ok(DVector::from_vec(y.clone()))
    }
}

/// The toy model used throughout the experiments: symmetric two-component
/// prior, scalar measurement.
#[cfg(test)]
pub fn builtin_toy() -> ExperimentConfig {
    ExperimentConfig {
        model: ModelSpec {
            weights: vec![0.5, 0.5],
            means: vec![vec![-1.0], vec![1.0]],
            variances: vec![0.04, 0.04],
        },
        measurement: MeasurementSpec {
            matrix: vec![vec![1.0]],
            noise_std: 0.5,
        },
        diffusion: DiffusionSpec {
            kind: DiffusionKind::Vp,
            steps: 1000,
            beta_min: Some(1e-4),
            beta_max: Some(0.02),
            sigma_min: None,
            sigma_max: None,
        },
        solver: SolverSpec {
            inner_steps: 1,
            mean_step: 0.9,
            samples: 1,
            estimator: EstimatorKind::Sampled,
            precision: PrecisionKind::Fixed,
            precision_step: None,
            precision_floor: None,
            switch_index: None,
            seed: 1,
            init: None,
        },
        guidance: GuidanceSpec {
            kind: GuidanceKindSpec::PriorFree,
            zeta: None,
        },
        experiment: ExperimentSpec {
            kind: ExperimentKind::Run,
            y: Some(vec![0.2]),
            y_grid: None,
            seeds: None,
            budgets: None,
            output_dir: None,
        },
    }
}

//! Run configuration: a strict TOML schema that parses into a validated
//! [`ProblemSpec`] plus solver, sweep and output settings.

use std::path::Path;

use paneitz_core::test_functions::MIN_NODES_BELOW_EPS;
use paneitz_core::{
    default_schedule, make_metric_preset, BoundaryData, MetricPreset, ProblemSpec, ProfileSource,
    RadialGrid, RadialProfile, SolverConfig,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grading {
    #[default]
    Uniform,
    /// Geometric clustering at the center; balls only.
    Graded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub dimension: usize,
    #[serde(default)]
    pub r_in: f64,
    pub r_out: f64,
    pub grid_size: usize,
    #[serde(default)]
    pub grading: Grading,
    /// Length scale the graded grid must resolve; defaults to the smallest ε of the sweep.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolve: Option<f64>,
    pub metric: MetricPreset,
    #[serde(default = "zero_profile")]
    pub a: ProfileSource,
    #[serde(default = "zero_profile")]
    pub alpha: ProfileSource,
    #[serde(default = "unit_profile")]
    pub f: ProfileSource,
    #[serde(default)]
    pub outer: BoundaryData,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner: Option<BoundaryData>,
    pub gamma: f64,
}

fn zero_profile() -> ProfileSource {
    ProfileSource::Poly(vec![0.0])
}

fn unit_profile() -> ProfileSource {
    ProfileSource::Poly(vec![1.0])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub constraint_tol: f64,
    pub stationarity_tol: f64,
    pub max_iterations: usize,
    pub restarts: usize,
    pub seed: u64,
    /// Exponent for `solve`; `2♯` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    /// Exponents for `continue`; the default schedule when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Vec<f64>>,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverConfig::default();
        Self {
            constraint_tol: d.constraint_tol,
            stationarity_tol: d.stationarity_tol,
            max_iterations: d.max_iterations,
            restarts: d.restarts,
            seed: d.seed,
            q: None,
            schedule: None,
        }
    }
}

impl SolverSection {
    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            constraint_tol: self.constraint_tol,
            stationarity_tol: self.stationarity_tol,
            max_iterations: self.max_iterations,
            restarts: self.restarts,
            seed: self.seed,
        }
    }

    pub fn schedule_for(&self, two_sharp: f64) -> Vec<f64> {
        self.schedule.clone().unwrap_or_else(|| default_schedule(two_sharp))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Explicit ε values; alternatively give `eps_min`, `eps_max`, `count`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    pub delta: f64,
}

impl SweepConfig {
    /// The ε list in decreasing order.
    pub fn eps_list(&self) -> Result<Vec<f64>, CliError> {
        let mut list = match (&self.eps, self.eps_min, self.eps_max, self.count) {
            (Some(list), None, None, None) => list.clone(),
            (None, Some(lo), Some(hi), Some(count)) => {
                if !(lo > 0.0 && hi > lo) || count < 2 {
                    return Err(CliError::config(
                        "sweep needs 0 < eps_min < eps_max and count ≥ 2",
                    ));
                }
                (0..count)
                    .map(|k| hi * (lo / hi).powf(k as f64 / (count - 1) as f64))
                    .collect()
            }
            _ => {
                return Err(CliError::config(
                    "sweep takes either `eps` or all of `eps_min`, `eps_max`, `count`",
                ))
            }
        };
        if list.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(CliError::config("sweep ε values must be positive"));
        }
        list.sort_by(|a, b| b.total_cmp(a));
        Ok(list)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: "runs".into(),
            formats: vec![Format::Csv, Format::Json],
        }
    }
}

impl OutputConfig {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::config(format!("config parse error: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    /// Hex SHA-256 of the canonical JSON form, salted with the verb.
    pub fn hash(&self, verb: &str) -> String {
        let mut hasher = Sha256::new();
        hasher.update(verb.as_bytes());
        hasher.update([0]);
        hasher.update(serde_json::to_vec(self).expect("config serializes to JSON"));
        hex::encode(hasher.finalize())
    }

    pub fn build_grid(&self) -> Result<RadialGrid, CliError> {
        let p = &self.problem;
        let grid = match p.grading {
            Grading::Uniform => RadialGrid::uniform(p.r_in, p.r_out, p.grid_size, p.dimension),
            Grading::Graded => {
                if p.r_in != 0.0 {
                    return Err(CliError::config("graded grids are available for balls only"));
                }
                let resolve = match (p.resolve, &self.sweep) {
                    (Some(r), _) => r,
                    (None, Some(s)) => s.eps_list()?.last().copied().unwrap_or(p.r_out),
                    (None, None) => {
                        return Err(CliError::config(
                            "graded grid needs `problem.resolve` or a sweep",
                        ))
                    }
                };
                RadialGrid::graded_ball(p.r_out, p.grid_size, p.dimension, resolve, MIN_NODES_BELOW_EPS + 4)
            }
        };
        Ok(grid?)
    }

    pub fn build_spec(&self) -> Result<ProblemSpec, CliError> {
        let p = &self.problem;
        let grid = self.build_grid()?;
        let metric = make_metric_preset(&p.metric, &grid)?;
        let spec = ProblemSpec::new(
            grid,
            metric,
            RadialProfile::from_source(&p.a)?,
            RadialProfile::from_source(&p.alpha)?,
            RadialProfile::from_source(&p.f)?,
            p.outer,
            p.inner,
            p.gamma,
        )?;
        Ok(spec)
    }
}

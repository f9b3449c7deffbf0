//! Run configuration: a TOML document validated into a fully realized
//! experiment before any integration starts.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use silicosis_core::{
    CoefficientFamilies, InitialData, IntegratorConfig, ModelParams, State, TruncatedSystem,
};

use crate::Command;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelParams,
    pub coefficients: CoefficientFamilies,
    pub initial: InitialData,
    /// Truncation order for single runs.
    #[serde(default)]
    pub n: Option<usize>,
    /// Truncation orders for `converge`.
    #[serde(default)]
    pub n_ladder: Option<Vec<usize>>,
    /// Final time. Not needed by `equilibrium`.
    #[serde(default)]
    pub t_end: Option<f64>,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub checks: CheckConfig,
    #[serde(default)]
    pub convergence: ConvergenceConfig,
    #[serde(default)]
    pub equilibrium: EquilibriumConfig,
    #[serde(default)]
    pub semigroup: SemigroupConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Cohort columns in `trajectory.csv`.
    pub cohort_columns: usize,
    /// Also write every cohort to `trajectory_full.csv`.
    pub full_state: bool,
    /// Rows on a uniform grid of this many points instead of at the steps.
    pub grid_points: Option<usize>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { cohort_columns: 32, full_state: false, grid_points: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckConfig {
    /// Bound on balance and moment-identity residuals.
    pub tolerance: f64,
    /// Slack added to the linear norm bound.
    pub norm_slack: f64,
    /// Evenly spaced times in `(0, T]` at which residuals are evaluated.
    pub sample_times: usize,
    pub differential_step: f64,
    pub differential_tolerance: f64,
    /// Compare against a second run with the other stepping method.
    pub uniqueness: bool,
    pub uniqueness_tolerance: f64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            norm_slack: 1e-6,
            sample_times: 10,
            differential_step: 1e-4,
            differential_tolerance: 1e-4,
            uniqueness: true,
            uniqueness_tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceConfig {
    pub grid_points: usize,
    /// Required bound on the last gap of the ladder, if any.
    pub final_gap_tolerance: Option<f64>,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self { grid_points: silicosis_core::analysis::DEFAULT_GRID_POINTS, final_gap_tolerance: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EquilibriumConfig {
    pub tol: f64,
    /// Search interval for `x*`; by default found by doubling from `[0, 1]`.
    pub bracket: Option<[f64; 2]>,
    /// Integrate from the equilibrium over this span and require it to move
    /// by less than `10 * tol`. Zero disables the check.
    pub fixed_point_span: f64,
}

impl Default for EquilibriumConfig {
    fn default() -> Self {
        Self { tol: 1e-12, bracket: None, fixed_point_span: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SemigroupConfig {
    /// `(t, s)` splits compared against the direct flow to `t + s`.
    pub pairs: Vec<[f64; 2]>,
    pub tolerance: f64,
}

impl Default for SemigroupConfig {
    fn default() -> Self {
        Self { pairs: vec![[0.5, 0.5], [1.0, 2.0], [0.0, 3.0], [3.0, 0.0]], tolerance: 1e-7 }
    }
}

/// A configuration problem, located by its field path.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    fn at(path: impl Into<String>, message: impl fmt::Display) -> Self {
        Self { path: path.into(), message: message.to_string() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
    let de = toml::Deserializer::parse(text).map_err(|e| ConfigError::at("", e.message()))?;
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." { String::new() } else { path };
        ConfigError::at(path, e.into_inner().message())
    })
}

pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::at("", format!("cannot read {}: {e}", path.display())))?;
    parse(&text)
}

/// Everything a command needs, validated.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: RunConfig,
    /// System and initial state at order `n`, for single-run commands.
    pub single: Option<(TruncatedSystem, State)>,
    pub t_end: Option<f64>,
}

impl RunConfig {
    pub fn prepare(self, command: Command) -> Result<Experiment, ConfigError> {
        self.model.validate().map_err(|e| ConfigError::at("model", e))?;
        self.initial.validate().map_err(|e| ConfigError::at("initial", e))?;
        self.integrator.validate().map_err(|e| ConfigError::at("integrator", e))?;
        // Realizing at the smallest order checks every family.
        self.coefficients.realize(2).map_err(|e| ConfigError::at("coefficients", e))?;

        let t_end = match (command, self.t_end) {
            (Command::Equilibrium, t) => t,
            (_, Some(t)) if t > 0.0 && t.is_finite() => Some(t),
            (_, Some(t)) => return Err(ConfigError::at("t_end", format!("must be positive, got {t}"))),
            (_, None) => return Err(ConfigError::at("t_end", "required by this command")),
        };
        if self.output.cohort_columns == 0 {
            return Err(ConfigError::at("output.cohort_columns", "must be at least 1"));
        }
        if self.output.grid_points.is_some_and(|p| p < 2) {
            return Err(ConfigError::at("output.grid_points", "must be at least 2"));
        }

        let single = if command == Command::Converge {
            let ladder = self.n_ladder.as_ref().ok_or_else(|| ConfigError::at("n_ladder", "required by converge"))?;
            if ladder.len() < 2 || ladder[0] < 2 || ladder.windows(2).any(|w| w[1] <= w[0]) {
                return Err(ConfigError::at("n_ladder", "needs at least two strictly increasing orders >= 2"));
            }
            None
        } else {
            let n = self.n.ok_or_else(|| ConfigError::at("n", "required by this command"))?;
            let rates = self.coefficients.realize(n).map_err(|e| ConfigError::at("n", e))?;
            let sys = TruncatedSystem::new(self.model, rates).map_err(|e| ConfigError::at("coefficients", e))?;
            Some((sys, self.initial.state(n)))
        };

        match command {
            Command::Verify => {
                let c = &self.checks;
                if c.sample_times == 0 {
                    return Err(ConfigError::at("checks.sample_times", "must be at least 1"));
                }
                let h = c.differential_step;
                if !(h > 0.0) || t_end.is_some_and(|t| 2.0 * h * (c.sample_times as f64) >= t) {
                    return Err(ConfigError::at("checks.differential_step", "must be positive and well inside the sample spacing"));
                }
            }
            Command::Equilibrium => {
                if !(self.equilibrium.tol > 0.0) {
                    return Err(ConfigError::at("equilibrium.tol", "must be positive"));
                }
                if let Some([lo, hi]) = self.equilibrium.bracket {
                    if !(lo >= 0.0 && hi > lo) {
                        return Err(ConfigError::at("equilibrium.bracket", "needs 0 <= lo < hi"));
                    }
                }
            }
            Command::Semigroup => {
                if let Some(i) = self.semigroup.pairs.iter().position(|[t, s]| !(*t >= 0.0 && *s >= 0.0)) {
                    return Err(ConfigError::at(format!("semigroup.pairs[{i}]"), "times must be >= 0"));
                }
            }
            _ => {}
        }
        Ok(Experiment { config: self, single, t_end })
    }
}

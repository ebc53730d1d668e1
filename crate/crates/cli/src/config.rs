//! Run configuration: the TOML file, the per-experiment parameter blocks
//! shared with the command line, and the precedence between them.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use kppwave_core::env::{GSpec, OffspringDist, PeriodicEnv};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const DEFAULT_ENV_GRID: usize = 256;
pub const DEFAULT_OUT: &str = "kppwave-out";

/// Contents of `--config <path>`. Every table and key is optional; unknown
/// keys are errors.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub env: Option<EnvSection>,
    pub eigen: Option<EigenParams>,
    pub speed: Option<SpeedParams>,
    pub front: Option<FrontParams>,
    pub simulate: Option<SimulateParams>,
    pub line: Option<LineParams>,
    pub diffusion: Option<DiffusionParams>,
    #[serde(rename = "verify-asymptotics")]
    pub verify_asymptotics: Option<AsymptoticsParams>,
    #[serde(rename = "verify-representation")]
    pub verify_representation: Option<RepresentationParams>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config { key: None, message: format!("cannot read {}: {e}", path.display()) })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| {
            let message = e.message().to_string();
            CliError::Config { key: offending_key(&message), message }
        })
    }
}

/// Pulls the key name out of serde's "missing field `x`" / "unknown field `x`".
fn offending_key(message: &str) -> Option<String> {
    for prefix in ["missing field `", "unknown field `"] {
        if let Some(rest) = message.find(prefix).map(|i| &message[i + prefix.len()..]) {
            return rest.split('`').next().map(str::to_string);
        }
    }
    None
}

/// `[env]`: branching rate, offspring law of `L` (a particle is replaced by
/// `1 + L` children) and the sampling grid of `g`.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSection {
    pub g: GSpec,
    #[serde(default = "OffspringDist::binary")]
    pub offspring: OffspringDist,
    #[serde(default = "default_env_grid")]
    pub grid: usize,
}

fn default_env_grid() -> usize {
    DEFAULT_ENV_GRID
}

impl Default for EnvSection {
    fn default() -> Self {
        Self { g: GSpec::Constant(1.0), offspring: OffspringDist::binary(), grid: DEFAULT_ENV_GRID }
    }
}

impl EnvSection {
    pub fn build(&self) -> Result<PeriodicEnv, CliError> {
        PeriodicEnv::new(self.g.clone(), self.grid, self.offspring.clone())
            .map_err(|e| CliError::Config { key: Some("env".into()), message: e.to_string() })
    }
}

/// Command-line values win over the config file, key by key.
macro_rules! mergeable {
    ($ty:ident { $($f:ident),* $(,)? }) => {
        impl $ty {
            pub fn merged(self, file: Option<Self>) -> Self {
                let file = file.unwrap_or_default();
                Self { $($f: self.$f.or(file.$f)),* }
            }
        }
    };
}

#[derive(Debug, Clone, Default, Args, Deserialize, Serialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct EigenParams {
    /// Exponent λ of the tilted operator.
    #[arg(long, allow_negative_numbers = true)]
    pub lambda: Option<f64>,
    /// Points of the periodic eigen-grid.
    #[arg(long)]
    pub grid: Option<usize>,
}
mergeable!(EigenParams { lambda, grid });

#[derive(Debug, Clone, Default, Args, Deserialize, Serialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct SpeedParams {
    #[arg(long)]
    pub grid: Option<usize>,
}
mergeable!(SpeedParams { grid });

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitKind {
    Heaviside,
    ExpTail,
    Critical,
}

#[derive(Debug, Clone, Default, Args, Deserialize, Serialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct FrontParams {
    #[arg(long, value_enum)]
    pub init: Option<InitKind>,
    /// Decay rate of exp-tail data.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Final time.
    #[arg(long = "T")]
    #[serde(rename = "T")]
    pub t_end: Option<f64>,
    /// Grid points per unit cell.
    #[arg(long)]
    pub cells: Option<usize>,
    /// Amplitude of exp-tail and critical data.
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub x_min: Option<i64>,
    #[arg(long, allow_negative_numbers = true)]
    pub x_max: Option<i64>,
    #[arg(long)]
    pub dt: Option<f64>,
}
mergeable!(FrontParams { init, lambda, t_end, cells, beta, x_min, x_max, dt });

#[derive(Debug, Clone, Default, Args, Deserialize, Serialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct SimulateParams {
    #[arg(long = "T")]
    #[serde(rename = "T")]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub reps: Option<u64>,
    /// λ of the additive martingale; the derivative martingale is taken at λ*.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Starting position of the ancestor.
    #[arg(long, allow_negative_numbers = true)]
    pub x0: Option<f64>,
    #[arg(long)]
    pub obs_dt: Option<f64>,
}
mergeable!(SimulateParams { t_end, reps, lambda, x0, obs_dt });

#[derive(Debug, Clone, Default, Args, Deserialize, Serialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct LineParams {
    /// Barrier level: particles freeze on `y + νt = x`.
    #[arg(long, allow_negative_numbers = true)]
    pub x: Option<f64>,
    #[arg(long)]
    pub nu: Option<f64>,
    /// Lower truncation level; kills particles below `h⁻¹(−trunc − γ′t)`.
    #[arg(long)]
    pub trunc: Option<f64>,
    #[arg(long)]
    pub reps: Option<u64>,
    #[arg(long, allow_negative_numbers = true)]
    pub x0: Option<f64>,
}
mergeable!(LineParams { x, nu, trunc, reps, x0 });

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiffusionWhat {
    Slln,
    Qv,
    Weights,
    Bessel,
}

#[derive(Debug, Clone, Default, Args, Deserialize, Serialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct DiffusionParams {
    #[arg(long, value_enum)]
    pub what: Option<DiffusionWhat>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub reps: Option<u64>,
    #[arg(long = "T")]
    #[serde(rename = "T")]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
}
mergeable!(DiffusionParams { what, lambda, reps, t_end, dt });

#[derive(Debug, Clone, Default, Args, Deserialize, Serialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct AsymptoticsParams {
    /// Supercritical decay rate; defaults to 0.7 λ*.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long = "T")]
    #[serde(rename = "T")]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub cells: Option<usize>,
}
mergeable!(AsymptoticsParams { lambda, t_end, cells });

#[derive(Debug, Clone, Default, Args, Deserialize, Serialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct RepresentationParams {
    /// λ of the PDE wave.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// λ of the Monte-Carlo martingale; must equal `lambda`.
    #[arg(long)]
    pub mc_lambda: Option<f64>,
    /// Monte-Carlo horizon.
    #[arg(long = "T")]
    #[serde(rename = "T")]
    pub t_end: Option<f64>,
    /// Replicates per fractional starting point.
    #[arg(long)]
    pub reps: Option<u64>,
    /// Fractional starting points `j / starts` in one cell.
    #[arg(long)]
    pub starts: Option<u64>,
    /// Length of the PDE run that produces the wave.
    #[arg(long)]
    pub pde_t: Option<f64>,
    /// Override of the fitted amplitude (0 gives the degenerate control).
    #[arg(long)]
    pub beta: Option<f64>,
}
mergeable!(RepresentationParams { lambda, mc_lambda, t_end, reps, starts, pde_t, beta });

/// Value of a required key.
pub fn need<T: Clone>(value: &Option<T>, experiment: &str, key: &str) -> Result<T, CliError> {
    value.clone().ok_or_else(|| CliError::Missing { experiment: experiment.into(), key: key.into() })
}

/// Rejects a value outside its domain.
pub fn check(ok: bool, key: &str, message: impl Into<String>) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Invalid { key: key.into(), message: message.into() })
    }
}

//! Strict JSON experiment configuration.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum ExperimentKind {
    Constants,
    Lln,
    CltPosition,
    CltVelocity,
    Decompose,
    Couple,
    OracleCheck,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::Constants => "constants",
            ExperimentKind::Lln => "lln",
            ExperimentKind::CltPosition => "clt_position",
            ExperimentKind::CltVelocity => "clt_velocity",
            ExperimentKind::Decompose => "decompose",
            ExperimentKind::Couple => "couple",
            ExperimentKind::OracleCheck => "oracle_check",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| {
            Error::Config {
                path: "experiment".into(),
                message: format!("unknown experiment `{s}`"),
            }
        })
    }
}

/// Relative and absolute tolerances used by the experiment assertions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    pub sigma_w_rel: f64,
    pub sigma_z_rel: f64,
    pub sigma_q_rel: f64,
    /// Bound on `|V_n - V_L|` for the exact dynamics.
    pub lln_abs: f64,
    /// Bound on `|Vbar_n - V_L|` for the modified dynamics.
    pub lln_abs_modified: f64,
    /// Largest allowed gap between event-driven and fixed-step event times.
    pub oracle_time_abs: f64,
    /// Share of seeds whose recollision losses stop by the early checkpoint.
    pub tail_zero_fraction: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            sigma_w_rel: 0.05,
            sigma_z_rel: 0.10,
            sigma_q_rel: 0.10,
            lln_abs: 0.02,
            lln_abs_modified: 0.01,
            oracle_time_abs: 1e-4,
            tail_zero_fraction: 0.90,
        }
    }
}

fn default_n() -> usize {
    1000
}
fn default_trajectories() -> usize {
    100
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_ks_alpha() -> f64 {
    0.005
}
fn default_oracle_dt() -> f64 {
    1e-6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub params: ModelParams,
    /// Trajectory length (number of first contacts).
    #[serde(default = "default_n")]
    pub n: usize,
    /// Earlier checkpoint compared against `n` by the decay assertions;
    /// defaults to `n / 10`.
    #[serde(default)]
    pub n_early: Option<usize>,
    #[serde(default = "default_trajectories")]
    pub num_trajectories: usize,
    /// Trajectories that also run the exact simulator in `clt_position`;
    /// defaults to all of them.
    #[serde(default)]
    pub exact_trajectories: Option<usize>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Unset means: `KINETIC1D_WORKERS`, then the available parallelism.
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default = "default_ks_alpha")]
    pub ks_alpha: f64,
    #[serde(default = "default_oracle_dt")]
    pub oracle_dt: f64,
    #[serde(default)]
    pub thresholds: Thresholds,
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentKind, params: ModelParams) -> Self {
        Self {
            experiment,
            params,
            n: default_n(),
            n_early: None,
            num_trajectories: default_trajectories(),
            exact_trajectories: None,
            master_seed: 0,
            output_dir: default_output_dir(),
            workers: None,
            ks_alpha: default_ks_alpha(),
            oracle_dt: default_oracle_dt(),
            thresholds: Thresholds::default(),
        }
    }

    pub fn n_early(&self) -> usize {
        self.n_early.unwrap_or((self.n / 10).max(1))
    }

    pub fn exact_trajectories(&self) -> usize {
        self.exact_trajectories
            .unwrap_or(self.num_trajectories)
            .min(self.num_trajectories)
    }

    /// Worker count after applying the environment default.
    pub fn resolved_workers(&self) -> usize {
        self.workers
            .or_else(|| {
                std::env::var("KINETIC1D_WORKERS")
                    .ok()
                    .and_then(|v| v.parse().ok())
            })
            .filter(|&w| w >= 1)
            .unwrap_or_else(|| {
                std::thread::available_parallelism()
                    .map(|n| n.get())
                    .unwrap_or(1)
            })
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |path: &str, message: String| {
            Err(Error::Config {
                path: path.into(),
                message,
            })
        };
        if let Err((field, message)) = self.params.check() {
            return fail(&format!("params.{field}"), message);
        }
        if self.n < 1 {
            return fail("n", "n must be at least 1".into());
        }
        if let Some(e) = self.n_early {
            if e < 1 || e > self.n {
                return fail("n_early", format!("n_early must be in [1, n], got {e}"));
            }
        }
        if self.num_trajectories < 1 {
            return fail(
                "num_trajectories",
                "num_trajectories must be at least 1".into(),
            );
        }
        if self.workers == Some(0) {
            return fail("workers", "workers must be at least 1".into());
        }
        if !(self.ks_alpha > 0.0 && self.ks_alpha < 1.0) {
            return fail(
                "ks_alpha",
                format!("ks_alpha must be in (0,1), got {}", self.ks_alpha),
            );
        }
        if !(self.oracle_dt > 0.0 && self.oracle_dt.is_finite()) {
            return fail(
                "oracle_dt",
                format!("oracle_dt must be positive, got {}", self.oracle_dt),
            );
        }
        Ok(())
    }
}

/// Parse and validate a configuration document. Unknown keys are rejected and
/// every error names the offending key path.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut de = serde_json::Deserializer::from_str(text);
    let config: ExperimentConfig = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        Error::Config {
            path: if path == "." { String::new() } else { path },
            message: format!("{inner}"),
        }
    })?;
    de.end().map_err(|e| Error::Config {
        path: String::new(),
        message: e.to_string(),
    })?;
    config.validate()?;
    Ok(config)
}

//! Simulation configuration files (TOML). Unknown keys are rejected.

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dynamics::Vector;
use crate::error::{Error, Result};
use crate::platoon::PlatoonConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerMode {
    /// Apply the desired input unfiltered.
    DesiredOnly,
    /// CBF-QP on the backup barrier alone.
    VanillaCbf,
    /// The look-ahead filter.
    #[default]
    Asif,
    /// Apply the backup controller unconditionally.
    BackupOnly,
}

impl ControllerMode {
    pub const ALL: [ControllerMode; 4] = [
        Self::DesiredOnly,
        Self::VanillaCbf,
        Self::Asif,
        Self::BackupOnly,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::DesiredOnly => "desired-only",
            Self::VanillaCbf => "vanilla-cbf",
            Self::Asif => "asif",
            Self::BackupOnly => "backup-only",
        }
    }
}

impl fmt::Display for ControllerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ControllerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown controller mode {s:?}")))
    }
}

/// Named desired-input signals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DesiredInput {
    /// `u_d(t) = (-0.3 sin(πt/4), 0.2 cos(πt/2))`, for two edges.
    Reference {},
    Zero {},
    Constant {
        value: Vec<f64>,
    },
}

impl DesiredInput {
    pub fn eval(&self, t: f64, inputs: usize) -> Vector {
        match self {
            Self::Reference {} => Vector::from_vec(vec![
                -0.3 * (PI * t / 4.0).sin(),
                0.2 * (PI * t / 2.0).cos(),
            ]),
            Self::Zero {} => Vector::zeros(inputs),
            Self::Constant { value } => Vector::from_column_slice(value),
        }
    }

    fn validate(&self, inputs: usize) -> Result<()> {
        let len = match self {
            Self::Reference {} => 2,
            Self::Zero {} => inputs,
            Self::Constant { value } => {
                if value.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Config("desired_input.value must be finite".into()));
                }
                value.len()
            }
        };
        if len != inputs {
            return Err(Error::Config(format!(
                "desired input has {len} components, the system has {inputs} inputs"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub platoon: PlatoonConfig,
    /// Seconds.
    pub horizon: f64,
    /// Euler step in seconds.
    pub dt: f64,
    pub controller_mode: ControllerMode,
    pub seed: u64,
    /// Velocities followed by displacements.
    pub x0: Vec<f64>,
    pub desired_input: DesiredInput,
    /// Step of the look-ahead embedding simulation in seconds.
    pub dt_embed: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<PathBuf>,
}

impl Default for SimulationConfig {
    /// The reference run: four seconds from the boundary of the backup set.
    fn default() -> Self {
        Self {
            platoon: PlatoonConfig::default(),
            horizon: 4.0,
            dt: 0.01,
            controller_mode: ControllerMode::Asif,
            seed: 0,
            x0: vec![-0.25, 0.0, 0.5, 0.25, 0.5],
            desired_input: DesiredInput::Reference {},
            dt_embed: 0.01,
            output_path: None,
        }
    }
}

impl SimulationConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.platoon
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Config(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.horizon >= 0.0) || !self.horizon.is_finite() {
            return Err(Error::Config(format!(
                "horizon must be >= 0, got {}",
                self.horizon
            )));
        }
        if !(self.dt_embed > 0.0) || !self.dt_embed.is_finite() {
            return Err(Error::Config(format!(
                "dt_embed must be > 0, got {}",
                self.dt_embed
            )));
        }
        let n = self.platoon.state_dim();
        if self.x0.len() != n {
            return Err(Error::Config(format!(
                "x0 has {} entries, the state has {n}",
                self.x0.len()
            )));
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("x0 must be finite".into()));
        }
        self.desired_input.validate(self.platoon.edges())
    }

    pub fn initial_state(&self) -> Vector {
        Vector::from_column_slice(&self.x0)
    }

    /// `floor(horizon/dt) + 1`, tolerant of rounding in the ratio.
    pub fn row_count(&self) -> usize {
        let ratio = self.horizon / self.dt;
        let steps = (ratio + 1e-9 * ratio.max(1.0)).floor();
        steps as usize + 1
    }
}

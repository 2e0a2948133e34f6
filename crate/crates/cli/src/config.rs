use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use stokeslab::stream::VorticitySpec;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid TOML: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{field} must be positive (got {value})")]
    NotPositive { field: &'static str, value: f64 },
    #[error("M range {0}..{1} is empty or starts below 2")]
    MRange(usize, usize),
    #[error("stored branch does not match the configured R and grid")]
    BranchMismatch,
    #[error("window {0}..{1} is empty")]
    Window(f64, f64),
}

/// One reproducible run. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub vorticity: VorticitySpec,
    #[serde(rename = "R")]
    pub r: f64,
    pub nq: usize,
    pub np: usize,
    /// Number of continuation steps.
    pub steps: usize,
    /// Arclength step.
    pub step: f64,
    /// Quasi-momentum fractions per branch point in (0, 1/2].
    pub tau_samples: usize,
    /// Inclusive range of period multipliers.
    pub m_min: usize,
    pub m_max: usize,
    /// t-window for the root sweep; defaults to [t₀, end of branch].
    pub window: Option<(f64, f64)>,
    /// Kernel-check offset δ around each t_M.
    pub delta: f64,
    /// Size of the kernel component used when switching branches.
    pub switch_eps: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            vorticity: VorticitySpec::Constant { value: 0.0 },
            r: 2.0,
            nq: 24,
            np: 12,
            steps: 12,
            step: 0.005,
            tau_samples: 20,
            m_min: 2,
            m_max: 6,
            window: None,
            delta: 1e-3,
            switch_eps: 1e-3,
            out: None,
            seed: 0,
        }
    }
}

impl RunConfig {
    /// Reads TOML, or JSON when the extension is `.json`.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
        let cfg: Self = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text)?
        } else {
            toml::from_str(&text)?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks the numeric fields. R > R_c is checked by the stream stage.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("R", self.r),
            ("nq", self.nq as f64),
            ("np", self.np as f64),
            ("steps", self.steps as f64),
            ("step", self.step),
            ("tau_samples", self.tau_samples as f64),
            ("delta", self.delta),
            ("switch_eps", self.switch_eps),
        ];
        for (field, value) in positive {
            if !(value > 0.0) {
                return Err(ConfigError::NotPositive { field, value });
            }
        }
        if self.m_min < 2 || self.m_max < self.m_min {
            return Err(ConfigError::MRange(self.m_min, self.m_max));
        }
        if let Some((a, b)) = self.window {
            if !(b > a) {
                return Err(ConfigError::Window(a, b));
            }
        }
        Ok(())
    }

    /// Canonical JSON of every field except the output directory.
    pub fn canonical(&self) -> String {
        let mut c = self.clone();
        c.out = None;
        serde_json::to_string(&c).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        format!("{:x}", Sha256::digest(self.canonical().as_bytes()))
    }
}

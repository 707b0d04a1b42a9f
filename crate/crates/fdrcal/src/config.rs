//! TOML run configuration for the command-line tool.
//!
//! A config file holds one optional `command` key plus one section per
//! concern (`[input]`, `[bootstrap]`, `[calibrate]`, …).  Unknown keys are
//! rejected everywhere so a typo cannot silently fall back to a default.
//! Every section has sensible defaults; only the pieces a command actually
//! needs are required (checked by [`RunConfig::validate_for`]).
//!
//! File schema version: 1 (embedded in the provenance manifest).

use crate::calibrate::ProcedureSpec;
use crate::joint::JointStat;
use crate::panel::{EffectKind, Sidedness};
use crate::procedures::PValueSource;
use crate::simstudy::GammaSpec;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ConfigError {
    #[error("cannot read config {path}: {detail}")]
    Read { path: String, detail: String },
    #[error("config parse error: {detail}")]
    Parse { detail: String },
    #[error("config file sets command = \"{file}\" but the CLI invoked \"{cli}\"")]
    CommandMismatch { file: String, cli: String },
    #[error("command \"{command}\" requires the [{section}] config section")]
    MissingSection { command: String, section: String },
    #[error("invalid config: {detail}")]
    Invalid { detail: String },
}

/// The eight commands the tool dispatches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Calibrate,
    SolveCutoff,
    Compare,
    Roc,
    Ffjoint,
    Frac,
    Simstudy,
    GenSynthetic,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Command::Calibrate => "calibrate",
            Command::SolveCutoff => "solve-cutoff",
            Command::Compare => "compare",
            Command::Roc => "roc",
            Command::Ffjoint => "ffjoint",
            Command::Frac => "frac",
            Command::Simstudy => "simstudy",
            Command::GenSynthetic => "gen-synthetic",
        };
        f.write_str(name)
    }
}

/// Input data files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct InputSection {
    /// Return panel CSV (header = strategy names, first column = period).
    pub panel: Option<String>,
    /// Factor panel CSV, same layout, complete data required.
    pub factors: Option<String>,
}

/// Double-bootstrap iteration counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BootstrapSection {
    /// Outer draws `I`.
    pub outer: usize,
    /// Inner draws `J` per outer draw.
    pub inner: usize,
}

impl Default for BootstrapSection {
    fn default() -> Self {
        Self {
            outer: 20,
            inner: 200,
        }
    }
}

/// Grids and conventions for the calibration commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrateSection {
    pub p0_grid: Vec<f64>,
    pub alpha_grid: Vec<f64>,
    /// Empty ⇒ the built-in 1.5..5.0 grid where a cutoff grid is needed.
    pub cutoff_grid: Vec<f64>,
    pub procedures: Vec<ProcedureSpec>,
    pub mode: EffectKind,
    pub sidedness: Sidedness,
    pub min_obs: usize,
    pub p_values: PValueSource,
}

impl Default for CalibrateSection {
    fn default() -> Self {
        Self {
            p0_grid: vec![0.0, 0.05, 0.10],
            alpha_grid: vec![0.01, 0.05, 0.10],
            cutoff_grid: Vec::new(),
            procedures: vec![ProcedureSpec::Bh],
            mode: EffectKind::RawMean,
            sidedness: Sidedness::OneSidedRight,
            min_obs: 8,
            p_values: PValueSource::OneSidedNormal,
        }
    }
}

/// Target for `solve-cutoff` (also consulted by `compare`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveSection {
    pub p0: f64,
    pub alpha_target: f64,
}

/// ROC sweep settings; grids and conventions come from `[calibrate]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RocSection {
    /// Injected true fraction for the labeled panel behind the curve.
    pub p0: f64,
    /// Inner draws averaged per cutoff.
    pub draws: usize,
}

impl Default for RocSection {
    fn default() -> Self {
        Self {
            p0: 0.10,
            draws: 200,
        }
    }
}

/// Joint-test settings (`ffjoint`, reused by `frac`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JointSection {
    /// Statistic labels: "max" or percentile forms like "p99.5".
    pub statistics: Vec<String>,
    pub b: usize,
    pub min_obs_t: usize,
    pub alpha_levels: Vec<f64>,
    /// True fraction for the error-rate harness (0 ⇒ size, >0 ⇒ power).
    pub p0: f64,
    /// Perturbations for the error-rate harness; 0 ⇒ single joint test.
    pub m: usize,
    pub sidedness: Sidedness,
}

impl Default for JointSection {
    fn default() -> Self {
        Self {
            statistics: crate::joint::default_statistics()
                .iter()
                .map(|s| s.label())
                .collect(),
            b: 1000,
            min_obs_t: 8,
            alpha_levels: vec![0.05],
            p0: 0.0,
            m: 0,
            sidedness: Sidedness::OneSidedRight,
        }
    }
}

impl JointSection {
    /// Parses the statistic labels into typed specs.
    pub fn parsed_statistics(&self) -> Result<Vec<JointStat>, ConfigError> {
        self.statistics
            .iter()
            .map(|s| {
                JointStat::parse(s).map_err(|e| ConfigError::Invalid {
                    detail: e.to_string(),
                })
            })
            .collect()
    }
}

/// Frac-statistic settings; bootstrap size comes from `[joint]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FracSection {
    pub level: f64,
    pub upper_bound: f64,
}

impl Default for FracSection {
    fn default() -> Self {
        Self {
            level: 0.05,
            upper_bound: 0.40,
        }
    }
}

/// Simulation-study settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimStudySection {
    pub true_fraction: f64,
    pub gamma: GammaSpec,
    pub m: usize,
    pub k: usize,
    pub procedures: Vec<ProcedureSpec>,
    pub cutoffs: Vec<f64>,
    pub delta_grid: Vec<f64>,
    pub p0_grid: Vec<f64>,
    pub est_outer: usize,
    pub est_inner: usize,
    pub sidedness: Sidedness,
    pub min_obs: usize,
    pub p_values: PValueSource,
    pub max_budget_units: f64,
}

impl Default for SimStudySection {
    fn default() -> Self {
        Self {
            true_fraction: 0.10,
            gamma: GammaSpec {
                mu0: 0.05,
                sigma0: 0.025,
            },
            m: 50,
            k: 20,
            procedures: vec![ProcedureSpec::Bh, ProcedureSpec::By],
            cutoffs: Vec::new(),
            delta_grid: vec![0.01, 0.05, 0.10],
            p0_grid: vec![0.10],
            est_outer: 10,
            est_inner: 100,
            sidedness: Sidedness::OneSidedRight,
            min_obs: 8,
            p_values: PValueSource::OneSidedNormal,
            max_budget_units: 1e8,
        }
    }
}

/// Synthetic panel generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSection {
    /// Periods (rows).
    pub d: usize,
    /// Strategies (columns).
    pub n: usize,
    /// Equicorrelation across columns, in [0, 1).
    #[serde(default)]
    pub correlation: f64,
    /// Fraction of columns given a true mean, in [0, 1].
    #[serde(default)]
    pub signal_fraction: f64,
    /// Per-period mean added to signal columns.
    #[serde(default)]
    pub signal_mean: f64,
    /// Per-period noise standard deviation.
    #[serde(default = "default_noise_sd")]
    pub noise_sd: f64,
    /// Optional "YYYY-MM" start; period labels then advance monthly.
    /// Absent ⇒ zero-padded integer labels.
    #[serde(default)]
    pub start: Option<String>,
}

fn default_noise_sd() -> f64 {
    0.02
}

/// The whole config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Optional; when present it must match the CLI subcommand.
    pub command: Option<Command>,
    pub seed: Option<u64>,
    pub out_dir: Option<String>,
    pub input: Option<InputSection>,
    pub bootstrap: Option<BootstrapSection>,
    pub calibrate: Option<CalibrateSection>,
    pub solve: Option<SolveSection>,
    pub roc: Option<RocSection>,
    pub joint: Option<JointSection>,
    pub frac: Option<FracSection>,
    pub simstudy: Option<SimStudySection>,
    pub synthetic: Option<SyntheticSection>,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            detail: e.to_string(),
        })
    }

    /// Reads and parses a config file, returning the parsed config plus the
    /// raw text (hashed into the provenance manifest).
    pub fn load(path: &Path) -> Result<(Self, String), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
        let cfg = Self::from_toml_str(&text)?;
        Ok((cfg, text))
    }

    /// Checks the command pin and the sections this command requires.
    pub fn validate_for(&self, cli: Command) -> Result<(), ConfigError> {
        if let Some(file) = self.command {
            if file != cli {
                return Err(ConfigError::CommandMismatch {
                    file: file.to_string(),
                    cli: cli.to_string(),
                });
            }
        }
        let missing = |section: &str| ConfigError::MissingSection {
            command: cli.to_string(),
            section: section.into(),
        };
        let need_panel = |requires_factors: bool| -> Result<(), ConfigError> {
            let input = self.input.as_ref().ok_or_else(|| missing("input"))?;
            if input.panel.is_none() {
                return Err(ConfigError::Invalid {
                    detail: format!("command \"{cli}\" requires input.panel"),
                });
            }
            if requires_factors && input.factors.is_none() {
                return Err(ConfigError::Invalid {
                    detail: format!("command \"{cli}\" requires input.factors"),
                });
            }
            Ok(())
        };
        match cli {
            Command::Calibrate | Command::Compare | Command::Roc => need_panel(false),
            Command::SolveCutoff => {
                need_panel(false)?;
                self.solve.as_ref().ok_or_else(|| missing("solve"))?;
                Ok(())
            }
            Command::Ffjoint | Command::Frac => need_panel(true),
            Command::Simstudy => need_panel(false),
            Command::GenSynthetic => {
                self.synthetic
                    .as_ref()
                    .ok_or_else(|| missing("synthetic"))?;
                Ok(())
            }
        }
    }
}

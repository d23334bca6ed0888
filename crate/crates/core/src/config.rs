//! Workspace configuration shared by every command.
//!
//! One JSON document holds every section; absent keys take their defaults
//! and unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dispersion::FiberModel;
use crate::inference::TableOptions;
use crate::phasematch::{NonlinearParams, PumpSpec, DEFAULT_LINEWIDTH_FLOOR_NM, SILICA_N2};
use crate::sim::SourceConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NonlinearSettings {
    pub n2: f64,
    /// Effective mode area; `None` uses the geometric core area.
    pub effective_area_m2: Option<f64>,
}

impl Default for NonlinearSettings {
    fn default() -> Self {
        Self { n2: SILICA_N2, effective_area_m2: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PumpSettings {
    pub center_wavelength_nm: f64,
    pub fwhm_bandwidth_nm: f64,
    /// Peak power for phase matching; `None` derives it from the average
    /// power, repetition rate and pulse width of the source.
    pub peak_power_w: Option<f64>,
    pub power_ladder_mw: Vec<f64>,
}

impl Default for PumpSettings {
    fn default() -> Self {
        Self {
            center_wavelength_nm: 708.4,
            fwhm_bandwidth_nm: 0.3,
            peak_power_w: None,
            power_ladder_mw: vec![0.17, 0.245, 0.38, 0.54],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DispersionSettings {
    pub range_nm: (f64, f64),
    pub n_points: usize,
    pub zero_bracket_nm: (f64, f64),
}

impl Default for DispersionSettings {
    fn default() -> Self {
        Self { range_nm: (500.0, 1000.0), n_points: 101, zero_bracket_nm: (600.0, 850.0) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhaseMatchSettings {
    pub pump_range_nm: (f64, f64),
    pub n_points: usize,
    pub linewidth_floor_nm: f64,
    /// Peak powers (W) compared in the power-insensitivity check.
    pub power_sweep_w: Vec<f64>,
}

impl Default for PhaseMatchSettings {
    fn default() -> Self {
        Self {
            pump_range_nm: (690.0, 714.0),
            n_points: 25,
            linewidth_floor_nm: DEFAULT_LINEWIDTH_FLOOR_NM,
            power_sweep_w: vec![0.0, 1.0, 2.0, 3.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSettings {
    pub duration_s: f64,
    pub write_events: bool,
}

impl Default for SimulationSettings {
    fn default() -> Self {
        Self { duration_s: 0.05, write_events: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProjectionSettings {
    /// `A` of `C = A·P²`; `None` uses the fitted value.
    pub coefficient_a: Option<f64>,
    pub power_mw: f64,
    pub per_arm_penalty: f64,
    pub spectral_fraction: f64,
}

impl Default for ProjectionSettings {
    fn default() -> Self {
        Self { coefficient_a: Some(1.21e6), power_mw: 2.0, per_arm_penalty: 0.5, spectral_fraction: 1.0 / 15.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorkspaceConfig {
    pub fiber: FiberModel,
    pub nonlinear: NonlinearSettings,
    pub pump: PumpSettings,
    pub source: SourceConfig,
    pub dispersion: DispersionSettings,
    pub phasematch: PhaseMatchSettings,
    pub simulation: SimulationSettings,
    pub analysis: TableOptions,
    pub projection: ProjectionSettings,
    pub output_dir: PathBuf,
    /// Base seed; run `k` of a power ladder uses `seed + k`. Overrides
    /// `source.rng_seed`.
    pub seed: u64,
}

impl Default for WorkspaceConfig {
    fn default() -> Self {
        Self {
            fiber: FiberModel::default(),
            nonlinear: NonlinearSettings::default(),
            pump: PumpSettings::default(),
            source: SourceConfig::default(),
            dispersion: DispersionSettings::default(),
            phasematch: PhaseMatchSettings::default(),
            simulation: SimulationSettings::default(),
            analysis: TableOptions::default(),
            projection: ProjectionSettings::default(),
            output_dir: PathBuf::from("out"),
            seed: 2005,
        }
    }
}

impl WorkspaceConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => Error::Config(format!("{}: {other}", path.display())),
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.fiber.validate()?;
        if !(self.nonlinear.n2 > 0.0) || self.nonlinear.effective_area_m2.is_some_and(|a| !(a > 0.0)) {
            return Err(Error::Config("nonlinear n2 and effective area must be positive".into()));
        }
        self.pump_spec().validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.pump.power_ladder_mw.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
            return Err(Error::Config("power ladder entries must be finite and non-negative".into()));
        }
        self.source_config().validate().map_err(|e| Error::Config(e.to_string()))?;
        self.analysis.predicted.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.dispersion.n_points < 2 || self.phasematch.n_points < 2 {
            return Err(Error::Config("curves need at least 2 points".into()));
        }
        if !(self.simulation.duration_s > 0.0) {
            return Err(Error::Config("simulation duration must be positive".into()));
        }
        Ok(())
    }

    pub fn nonlinear_params(&self) -> Result<NonlinearParams> {
        let lam = self.pump.center_wavelength_nm;
        match self.nonlinear.effective_area_m2 {
            Some(area) => NonlinearParams::new(self.nonlinear.n2, area, lam),
            None => {
                let geo = NonlinearParams::geometric(&self.fiber, lam)?;
                NonlinearParams::new(self.nonlinear.n2, geo.effective_area_m2, lam)
            }
        }
    }

    /// Source configuration with the workspace seed applied.
    pub fn source_config(&self) -> SourceConfig {
        SourceConfig { rng_seed: self.seed, ..self.source.clone() }
    }

    pub fn peak_power_w(&self) -> f64 {
        self.pump.peak_power_w.unwrap_or_else(|| self.source.peak_power_w())
    }

    pub fn pump_spec(&self) -> PumpSpec {
        PumpSpec {
            center_wavelength_nm: self.pump.center_wavelength_nm,
            fwhm_bandwidth_nm: self.pump.fwhm_bandwidth_nm,
            peak_power_w: self.peak_power_w(),
        }
    }
}

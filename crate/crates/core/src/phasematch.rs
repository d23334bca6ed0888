//! Degenerate-pump four-wave mixing `2ω_p → ω_s + ω_i` in the strand model.
//!
//! Sidebands satisfy energy conservation `2/λ_p = 1/λ_s + 1/λ_i` exactly and
//! the phase-matching condition
//! `Δk = β(λ_i) + β(λ_s) − 2β(λ_p) + 2γP_p = 0`, with the self-phase term
//! weighted by the fiber's nonlinear coefficient `γ = 2π n₂ / (λ A_eff)`.

use std::f64::consts::PI;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dispersion::FiberModel;
use crate::error::argument;
use crate::roots::{brent, scan_sign_changes};
use crate::{Error, Result};

/// Nonlinear refractive index of fused silica (m²/W).
pub const SILICA_N2: f64 = 2e-20;

/// Smallest reported sideband FWHM (nm): the monochromatic-pump
/// phase-matching linewidth is below 0.2 nm.
pub const DEFAULT_LINEWIDTH_FLOOR_NM: f64 = 0.1;

/// Signal-wavelength grid used to isolate phase-matching roots (nm).
pub const DEFAULT_SCAN_STEP_NM: f64 = 0.5;

/// Pump-wavelength step for the slope of the phase-matching curve (nm).
pub const DEFAULT_SLOPE_STEP_NM: f64 = 0.1;

/// Keeps the root scan away from the degenerate point `λ_s = λ_p`.
const DEGENERACY_GAP_NM: f64 = 1.0;
const HALF_PUMP_MARGIN_NM: f64 = 1.0;

/// `γ = 2π n₂ / (λ A_eff)` in 1/(W·m).
pub fn nonlinear_coefficient(n2: f64, wavelength_nm: f64, effective_area_m2: f64) -> Result<f64> {
    if !(n2 > 0.0 && wavelength_nm > 0.0 && effective_area_m2 > 0.0) {
        return Err(argument(format!(
            "nonlinear coefficient needs positive inputs, got n2={n2}, lambda={wavelength_nm} nm, A_eff={effective_area_m2} m^2"
        )));
    }
    Ok(2.0 * PI * n2 / (wavelength_nm * 1e-9 * effective_area_m2))
}

/// Wavelength of the idler that conserves energy with `signal_nm` for a
/// degenerate pump at `pump_nm`.
pub fn energy_conjugate(pump_nm: f64, signal_nm: f64) -> f64 {
    1.0 / (2.0 / pump_nm - 1.0 / signal_nm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonlinearParams {
    pub n2: f64,
    pub effective_area_m2: f64,
    /// Wavelength at which `gamma` was evaluated.
    pub reference_wavelength_nm: f64,
    pub gamma: f64,
}

impl NonlinearParams {
    pub fn new(n2: f64, effective_area_m2: f64, reference_wavelength_nm: f64) -> Result<Self> {
        let gamma = nonlinear_coefficient(n2, reference_wavelength_nm, effective_area_m2)?;
        Ok(Self { n2, effective_area_m2, reference_wavelength_nm, gamma })
    }

    /// Silica `n₂` with the geometric core area `π(d/2)²` as `A_eff`.
    pub fn geometric(fiber: &FiberModel, reference_wavelength_nm: f64) -> Result<Self> {
        let radius_m = 0.5 * fiber.core_diameter_um * 1e-6;
        Self::new(SILICA_N2, PI * radius_m * radius_m, reference_wavelength_nm)
    }

    /// `γ` at another pump wavelength.
    pub fn gamma_at(&self, pump_nm: f64) -> f64 {
        self.gamma * self.reference_wavelength_nm / pump_nm
    }

    /// Checks that the stored `gamma` matches its definition.
    pub fn validate(&self) -> Result<()> {
        let expected = nonlinear_coefficient(self.n2, self.reference_wavelength_nm, self.effective_area_m2)?;
        if ((self.gamma - expected) / expected).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "stored gamma {} disagrees with 2*pi*n2/(lambda*A_eff) = {expected}",
                self.gamma
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PumpSpec {
    pub center_wavelength_nm: f64,
    pub fwhm_bandwidth_nm: f64,
    pub peak_power_w: f64,
}

impl PumpSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.center_wavelength_nm > 0.0) {
            return Err(argument(format!("pump wavelength must be positive, got {}", self.center_wavelength_nm)));
        }
        if !(self.fwhm_bandwidth_nm >= 0.0 && self.fwhm_bandwidth_nm < self.center_wavelength_nm / 10.0) {
            return Err(argument(format!(
                "pump bandwidth must lie in [0, lambda/10), got {} nm",
                self.fwhm_bandwidth_nm
            )));
        }
        if !(self.peak_power_w >= 0.0) {
            return Err(argument(format!("peak power must be non-negative, got {}", self.peak_power_w)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseMatchSolution {
    pub pump_wavelength_nm: f64,
    pub signal_wavelength_nm: f64,
    pub idler_wavelength_nm: f64,
    pub peak_power_w: f64,
    pub signal_fwhm_nm: f64,
    pub idler_fwhm_nm: f64,
    /// `Δk` at the returned wavelengths (rad/m).
    pub residual_rad_per_m: f64,
}

impl PhaseMatchSolution {
    /// Relative violation of `2/λ_p = 1/λ_s + 1/λ_i`.
    pub fn energy_error(&self) -> f64 {
        let lhs = 2.0 / self.pump_wavelength_nm;
        let rhs = 1.0 / self.signal_wavelength_nm + 1.0 / self.idler_wavelength_nm;
        ((lhs - rhs) / lhs).abs()
    }
}

/// One pump sample of a phase-matching sweep; `solution` is `None` where no
/// sideband pair exists.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub pump_nm: f64,
    pub solution: Option<PhaseMatchSolution>,
}

/// CSV row of a phase-matching sweep. Gaps have empty sideband columns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub pump_nm: f64,
    pub signal_nm: Option<f64>,
    pub idler_nm: Option<f64>,
    pub signal_fwhm_nm: Option<f64>,
    pub idler_fwhm_nm: Option<f64>,
    pub residual_rad_per_m: Option<f64>,
}

impl From<&CurvePoint> for CurveRow {
    fn from(p: &CurvePoint) -> Self {
        let s = p.solution.as_ref();
        Self {
            pump_nm: p.pump_nm,
            signal_nm: s.map(|s| s.signal_wavelength_nm),
            idler_nm: s.map(|s| s.idler_wavelength_nm),
            signal_fwhm_nm: s.map(|s| s.signal_fwhm_nm),
            idler_fwhm_nm: s.map(|s| s.idler_fwhm_nm),
            residual_rad_per_m: s.map(|s| s.residual_rad_per_m),
        }
    }
}

pub fn write_curve_csv<W: Write>(points: &[CurvePoint], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for p in points {
        w.serialize(CurveRow::from(p))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_curve_csv<R: Read>(reader: R) -> Result<Vec<CurveRow>> {
    let mut r = csv::Reader::from_reader(reader);
    Ok(r.deserialize().collect::<std::result::Result<Vec<CurveRow>, _>>()?)
}

/// Phase-matching solver bound to a fiber and its nonlinear parameters.
#[derive(Debug, Clone)]
pub struct PhaseMatcher<'a> {
    pub fiber: &'a FiberModel,
    pub nonlinear: &'a NonlinearParams,
    pub scan_step_nm: f64,
    pub slope_step_nm: f64,
    pub linewidth_floor_nm: f64,
}

impl<'a> PhaseMatcher<'a> {
    pub fn new(fiber: &'a FiberModel, nonlinear: &'a NonlinearParams) -> Self {
        Self {
            fiber,
            nonlinear,
            scan_step_nm: DEFAULT_SCAN_STEP_NM,
            slope_step_nm: DEFAULT_SLOPE_STEP_NM,
            linewidth_floor_nm: DEFAULT_LINEWIDTH_FLOOR_NM,
        }
    }

    pub fn with_linewidth_floor(mut self, floor_nm: f64) -> Self {
        self.linewidth_floor_nm = floor_nm;
        self
    }

    /// `Δk = k_i + k_s − 2k_p + 2γP_p` (rad/m) with the idler fixed by
    /// energy conservation.
    pub fn phase_mismatch(&self, pump_nm: f64, signal_nm: f64, peak_power_w: f64) -> Result<f64> {
        let beta_pump = self.fiber.propagation_constant(pump_nm)?;
        self.mismatch_given_pump(pump_nm, beta_pump, signal_nm, peak_power_w)
    }

    fn mismatch_given_pump(&self, pump_nm: f64, beta_pump: f64, signal_nm: f64, peak_power_w: f64) -> Result<f64> {
        let idler_nm = energy_conjugate(pump_nm, signal_nm);
        if !(idler_nm.is_finite() && idler_nm > 0.0) {
            return Err(Error::Domain(format!(
                "signal {signal_nm} nm has no positive energy-conjugate idler for pump {pump_nm} nm"
            )));
        }
        let k_s = self.fiber.propagation_constant(signal_nm)?;
        let k_i = self.fiber.propagation_constant(idler_nm)?;
        Ok(k_i + k_s - 2.0 * beta_pump + 2.0 * self.nonlinear.gamma_at(pump_nm) * peak_power_w)
    }

    /// Nondegenerate sideband pair for a pump in the normal dispersion
    /// regime. When several roots exist the one farthest from the pump is
    /// returned. Bandwidth fields are left at zero.
    pub fn solve_sidebands(&self, pump_nm: f64, peak_power_w: f64) -> Result<PhaseMatchSolution> {
        if !(peak_power_w >= 0.0) {
            return Err(argument(format!("peak power must be non-negative, got {peak_power_w}")));
        }
        let beta2 = self.fiber.group_velocity_dispersion(pump_nm)?;
        if beta2 <= 0.0 {
            return Err(Error::Regime { pump_nm, beta2 });
        }
        let beta_pump = self.fiber.propagation_constant(pump_nm)?;
        let (mat_lo, mat_hi) = self.fiber.material.valid_range_nm();
        // the idler must stay inside the material model
        let idler_limited = 1.0 / (2.0 / pump_nm - 1.0 / mat_hi);
        let lower = (0.5 * pump_nm + HALF_PUMP_MARGIN_NM).max(mat_lo).max(idler_limited) + 1e-9;
        let upper = pump_nm - DEGENERACY_GAP_NM;
        if !(upper > lower) {
            return Err(Error::NoPhaseMatch { pump_nm, peak_power_w });
        }
        let n_steps = ((upper - lower) / self.scan_step_nm).ceil() as usize;
        let grid: Vec<f64> = (0..=n_steps)
            .map(|k| (lower + self.scan_step_nm * k as f64).min(upper))
            .collect();
        let mismatch = |s: f64| self.mismatch_given_pump(pump_nm, beta_pump, s, peak_power_w);
        let brackets = scan_sign_changes(mismatch, &grid);
        let &(a, b) = brackets
            .first()
            .ok_or(Error::NoPhaseMatch { pump_nm, peak_power_w })?;
        let signal_nm = brent(mismatch, a, b, 0.0)?;
        Ok(PhaseMatchSolution {
            pump_wavelength_nm: pump_nm,
            signal_wavelength_nm: signal_nm,
            idler_wavelength_nm: energy_conjugate(pump_nm, signal_nm),
            peak_power_w,
            signal_fwhm_nm: 0.0,
            idler_fwhm_nm: 0.0,
            residual_rad_per_m: mismatch(signal_nm)?,
        })
    }

    /// Sideband FWHMs from the slope of the phase-matching curve times the
    /// pump bandwidth, floored at the natural linewidth.
    pub fn sideband_bandwidths(&self, solution: &PhaseMatchSolution, pump: &PumpSpec) -> Result<(f64, f64)> {
        pump.validate()?;
        if (solution.pump_wavelength_nm - pump.center_wavelength_nm).abs() > 1e-9 {
            return Err(argument(format!(
                "solution pump {} nm does not match pump spec {} nm",
                solution.pump_wavelength_nm, pump.center_wavelength_nm
            )));
        }
        let (ds, di) = self.curve_slopes(solution.pump_wavelength_nm, solution.peak_power_w)?;
        let floor = self.linewidth_floor_nm;
        Ok((
            (ds.abs() * pump.fwhm_bandwidth_nm).max(floor),
            (di.abs() * pump.fwhm_bandwidth_nm).max(floor),
        ))
    }

    /// `(dλ_s/dλ_p, dλ_i/dλ_p)` by central differences along the curve.
    pub fn curve_slopes(&self, pump_nm: f64, peak_power_w: f64) -> Result<(f64, f64)> {
        let h = self.slope_step_nm;
        let side = |p: f64| {
            self.solve_sidebands(p, peak_power_w).map_err(|e| {
                Error::Domain(format!("slope stencil at pump {p} nm failed: {e}"))
            })
        };
        let plus = side(pump_nm + h)?;
        let minus = side(pump_nm - h)?;
        Ok((
            (plus.signal_wavelength_nm - minus.signal_wavelength_nm) / (2.0 * h),
            (plus.idler_wavelength_nm - minus.idler_wavelength_nm) / (2.0 * h),
        ))
    }

    /// Solution at `pump.center_wavelength_nm` with its bandwidths filled in.
    pub fn solve_pump(&self, pump: &PumpSpec) -> Result<PhaseMatchSolution> {
        pump.validate()?;
        let mut sol = self.solve_sidebands(pump.center_wavelength_nm, pump.peak_power_w)?;
        let (s, i) = self.sideband_bandwidths(&sol, pump)?;
        sol.signal_fwhm_nm = s;
        sol.idler_fwhm_nm = i;
        Ok(sol)
    }

    /// Sweeps `n_points` pumps across `pump_range_nm`. Pumps without a
    /// sideband pair (including anomalous-regime pumps) become gaps. Where
    /// the slope stencil fails the bandwidths are left at zero.
    pub fn phase_matching_curve(
        &self,
        pump_range_nm: (f64, f64),
        peak_power_w: f64,
        pump_fwhm_nm: f64,
        n_points: usize,
    ) -> Result<Vec<CurvePoint>> {
        let (lo, hi) = pump_range_nm;
        if !(hi > lo) {
            return Err(argument(format!("empty pump range ({lo}, {hi}) nm")));
        }
        if n_points < 2 {
            return Err(argument("phase-matching curve needs at least 2 points"));
        }
        let step = (hi - lo) / (n_points - 1) as f64;
        let points = (0..n_points)
            .into_par_iter()
            .map(|k| {
                let pump_nm = if k + 1 == n_points { hi } else { lo + step * k as f64 };
                let solution = self.solve_sidebands(pump_nm, peak_power_w).ok().map(|mut sol| {
                    let spec = PumpSpec { center_wavelength_nm: pump_nm, fwhm_bandwidth_nm: pump_fwhm_nm, peak_power_w };
                    if let Ok((s, i)) = self.sideband_bandwidths(&sol, &spec) {
                        sol.signal_fwhm_nm = s;
                        sol.idler_fwhm_nm = i;
                    }
                    sol
                });
                CurvePoint { pump_nm, solution }
            })
            .collect();
        Ok(points)
    }
}

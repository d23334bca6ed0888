//! Chromatic dispersion of a silica strand in air.
//!
//! The photonic crystal fiber core is modelled as a bare silica rod
//! surrounded by air. The fundamental HE11 mode is found from the exact
//! two-layer step-index characteristic equation (the air cladding makes the
//! index step far too large for the weak-guidance LP approximation), and
//! group-velocity dispersion follows from finite differences of the
//! propagation constant over angular frequency.

use std::f64::consts::PI;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::roots::{brent, scan_sign_changes};
use crate::special::{bessel_j, bessel_k_scaled};
use crate::{Error, Result, SPEED_OF_LIGHT};

/// First zero of `J_0`; the HE11 transverse parameter `u` lies below it.
const J0_FIRST_ZERO: f64 = 2.404_825_557_695_773;

/// Core diameter that places the strand's zero-dispersion wavelength at
/// 715 nm with the fused-silica Sellmeier model.
pub const CALIBRATED_CORE_DIAMETER_UM: f64 = 1.99;

/// Default finite-difference step for the GVD, expressed as a wavelength
/// increment at the evaluation wavelength.
pub const DEFAULT_GVD_STEP_NM: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SellmeierTerm {
    /// Oscillator strength `B_i` (dimensionless).
    pub strength: f64,
    /// Resonance wavelength `sqrt(C_i)` in micrometres.
    pub resonance_um: f64,
}

/// Sellmeier dispersion `n² = 1 + Σ B_i λ² / (λ² − λ_i²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SellmeierModel {
    pub terms: Vec<SellmeierTerm>,
    /// Validity interval `(min, max)` in micrometres.
    pub valid_range_um: (f64, f64),
}

impl SellmeierModel {
    /// Malitson's three-term fit for fused silica, valid 0.21–3.71 µm.
    pub fn fused_silica() -> Self {
        Self {
            terms: vec![
                SellmeierTerm { strength: 0.696_166_3, resonance_um: 0.068_404_3 },
                SellmeierTerm { strength: 0.407_942_6, resonance_um: 0.116_241_4 },
                SellmeierTerm { strength: 0.897_479_4, resonance_um: 9.896_161 },
            ],
            valid_range_um: (0.21, 3.71),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.terms.is_empty() {
            return Err(Error::Config("Sellmeier model has no terms".into()));
        }
        for (i, t) in self.terms.iter().enumerate() {
            if !(t.strength > 0.0) || !(t.resonance_um > 0.0) {
                return Err(Error::Config(format!(
                    "Sellmeier term {i} must have positive strength and resonance, got {t:?}"
                )));
            }
        }
        let (lo, hi) = self.valid_range_um;
        if !(lo > 0.0 && hi > lo) {
            return Err(Error::Config(format!("invalid Sellmeier range ({lo}, {hi}) um")));
        }
        for k in 0..=200 {
            let lam = lo + (hi - lo) * f64::from(k) / 200.0;
            let n2 = self.index_squared_um(lam);
            if !(n2.is_finite() && n2 > 1.0) {
                return Err(Error::Config(format!(
                    "Sellmeier index not real and > 1 at {lam} um (n^2 = {n2})"
                )));
            }
        }
        Ok(())
    }

    /// Valid range in nanometres.
    pub fn valid_range_nm(&self) -> (f64, f64) {
        (self.valid_range_um.0 * 1e3, self.valid_range_um.1 * 1e3)
    }

    fn index_squared_um(&self, lam_um: f64) -> f64 {
        let l2 = lam_um * lam_um;
        1.0 + self
            .terms
            .iter()
            .map(|t| t.strength * l2 / (l2 - t.resonance_um * t.resonance_um))
            .sum::<f64>()
    }

    /// Refractive index at `wavelength_nm`.
    pub fn index(&self, wavelength_nm: f64) -> Result<f64> {
        let (lo, hi) = self.valid_range_nm();
        if !(wavelength_nm >= lo && wavelength_nm <= hi) {
            return Err(Error::Domain(format!(
                "wavelength {wavelength_nm} nm outside Sellmeier range [{lo}, {hi}] nm"
            )));
        }
        Ok(self.index_squared_um(wavelength_nm * 1e-3).sqrt())
    }
}

impl Default for SellmeierModel {
    fn default() -> Self {
        Self::fused_silica()
    }
}

/// Refractive index of the bulk material.
pub fn material_index(model: &SellmeierModel, wavelength_nm: f64) -> Result<f64> {
    model.index(wavelength_nm)
}

/// Circular rod of `material` with diameter `core_diameter_um` in a uniform
/// cladding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FiberModel {
    pub core_diameter_um: f64,
    pub cladding_index: f64,
    pub material: SellmeierModel,
}

impl Default for FiberModel {
    fn default() -> Self {
        Self::silica_strand(CALIBRATED_CORE_DIAMETER_UM)
    }
}

impl FiberModel {
    /// Fused-silica strand in air.
    pub fn silica_strand(core_diameter_um: f64) -> Self {
        Self {
            core_diameter_um,
            cladding_index: 1.0,
            material: SellmeierModel::fused_silica(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.core_diameter_um > 0.0) {
            return Err(Error::Config(format!(
                "core diameter must be positive, got {} um",
                self.core_diameter_um
            )));
        }
        if !(self.cladding_index >= 1.0) {
            return Err(Error::Config(format!(
                "cladding index must be >= 1, got {}",
                self.cladding_index
            )));
        }
        self.material.validate()?;
        let (lo, hi) = self.material.valid_range_nm();
        for k in 0..=100 {
            let lam = lo + (hi - lo) * f64::from(k) / 100.0;
            let n = self.material.index(lam)?;
            if n <= self.cladding_index {
                return Err(Error::Config(format!(
                    "core index {n} does not exceed cladding index {} at {lam} nm",
                    self.cladding_index
                )));
            }
        }
        Ok(())
    }

    /// Effective index of the HE11 mode.
    pub fn effective_index(&self, wavelength_nm: f64) -> Result<f64> {
        let n_core = self.material.index(wavelength_nm)?;
        let n_clad = self.cladding_index;
        let radius_um = 0.5 * self.core_diameter_um;
        let k0 = 2.0 * PI / (wavelength_nm * 1e-3);
        let v = radius_um * k0 * (n_core * n_core - n_clad * n_clad).sqrt();
        let ratio = (n_clad * n_clad) / (n_core * n_core);

        let cutoff = || Error::ModeCutoff { wavelength_nm };
        let u_hi = v.min(J0_FIRST_ZERO) * (1.0 - 1e-9);
        let u_lo = 1e-3 * u_hi;
        let f = |u: f64| Ok(he11_residual(u, v, ratio));

        let grid: Vec<f64> = (0..=48).map(|k| u_lo + (u_hi - u_lo) * f64::from(k) / 48.0).collect();
        let &(a, b) = scan_sign_changes(f, &grid).first().ok_or_else(cutoff)?;
        let u = brent(f, a, b, 0.0)?;

        let n_eff = (n_core * n_core - (u / (radius_um * k0)).powi(2)).sqrt();
        if n_eff > n_clad && n_eff < n_core {
            Ok(n_eff)
        } else {
            Err(cutoff())
        }
    }

    /// Propagation constant `β = 2π n_eff / λ` in rad/m.
    pub fn propagation_constant(&self, wavelength_nm: f64) -> Result<f64> {
        Ok(2.0 * PI * self.effective_index(wavelength_nm)? / (wavelength_nm * 1e-9))
    }

    fn beta_at_omega(&self, omega: f64) -> Result<f64> {
        self.propagation_constant(2.0 * PI * SPEED_OF_LIGHT / omega * 1e9)
    }

    /// `β₂ = d²β/dω²` in s²/m with the default step; positive is normal
    /// dispersion.
    pub fn group_velocity_dispersion(&self, wavelength_nm: f64) -> Result<f64> {
        self.gvd_with_step(wavelength_nm, DEFAULT_GVD_STEP_NM, true)
    }

    /// `β₂` by a three-point central difference whose frequency step
    /// corresponds to `step_nm` at `wavelength_nm`. With `richardson` the
    /// steps `h` and `h/2` are combined to cancel the leading error term.
    pub fn gvd_with_step(&self, wavelength_nm: f64, step_nm: f64, richardson: bool) -> Result<f64> {
        if !(step_nm > 0.0) {
            return Err(crate::error::argument(format!("GVD step must be positive, got {step_nm}")));
        }
        let (lo, hi) = self.material.valid_range_nm();
        if wavelength_nm - 2.0 * step_nm < lo || wavelength_nm + 2.0 * step_nm > hi {
            return Err(Error::Domain(format!(
                "GVD stencil around {wavelength_nm} nm leaves the valid range [{lo}, {hi}] nm"
            )));
        }
        let omega = 2.0 * PI * SPEED_OF_LIGHT / (wavelength_nm * 1e-9);
        let h = omega * step_nm / wavelength_nm;
        let b0 = self.beta_at_omega(omega)?;
        let second = |h: f64| -> Result<f64> {
            let plus = self.beta_at_omega(omega + h)?;
            let minus = self.beta_at_omega(omega - h)?;
            Ok((plus - 2.0 * b0 + minus) / (h * h))
        };
        let coarse = second(h)?;
        if !richardson {
            return Ok(coarse);
        }
        let fine = second(0.5 * h)?;
        Ok((4.0 * fine - coarse) / 3.0)
    }

    /// Zero of `β₂` inside `bracket_nm`, to better than 0.01 nm.
    pub fn find_zero_dispersion(&self, bracket_nm: (f64, f64)) -> Result<f64> {
        let (lo, hi) = bracket_nm;
        if !(hi > lo) {
            return Err(crate::error::argument(format!("empty bracket ({lo}, {hi}) nm")));
        }
        let b_lo = self.group_velocity_dispersion(lo)?;
        let b_hi = self.group_velocity_dispersion(hi)?;
        if b_lo.signum() == b_hi.signum() && b_lo != 0.0 && b_hi != 0.0 {
            return Err(Error::Bracket { quantity: "beta2", lo, hi });
        }
        brent(|lam| self.group_velocity_dispersion(lam), lo, hi, 1e-3)
    }

    /// Samples `n_points` equally spaced wavelengths over `range_nm` and
    /// locates the zero-dispersion wavelength when `β₂` changes sign exactly
    /// once across the samples.
    pub fn dispersion_curve(&self, range_nm: (f64, f64), n_points: usize) -> Result<DispersionCurve> {
        let (lo, hi) = range_nm;
        if !(hi > lo) {
            return Err(crate::error::argument(format!(
                "wavelength range must be increasing, got ({lo}, {hi}) nm"
            )));
        }
        if n_points < 2 {
            return Err(crate::error::argument("dispersion curve needs at least 2 points"));
        }
        let step = (hi - lo) / (n_points - 1) as f64;
        let samples = (0..n_points)
            .into_par_iter()
            .map(|k| {
                let lam = if k + 1 == n_points { hi } else { lo + step * k as f64 };
                let n_eff = self.effective_index(lam)?;
                Ok(DispersionSample {
                    wavelength_nm: lam,
                    n_eff,
                    beta_rad_per_m: 2.0 * PI * n_eff / (lam * 1e-9),
                    beta2_s2_per_m: self.group_velocity_dispersion(lam)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let changes: Vec<usize> = samples
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[0].beta2_s2_per_m.signum() != w[1].beta2_s2_per_m.signum())
            .map(|(i, _)| i)
            .collect();
        let zero_dispersion_wavelength_nm = match changes.as_slice() {
            [i] => Some(self.find_zero_dispersion((
                samples[*i].wavelength_nm,
                samples[*i + 1].wavelength_nm,
            ))?),
            _ => None,
        };
        Ok(DispersionCurve { samples, zero_dispersion_wavelength_nm })
    }
}

/// Residual of the HE11 eigenvalue equation as a function of the core
/// transverse parameter `u`, at normalised frequency `v` and index ratio
/// `ratio = n_clad² / n_core²`. The root is the guided mode.
fn he11_residual(u: f64, v: f64, ratio: f64) -> f64 {
    let w = (v * v - u * u).sqrt();
    let inv_u2 = 1.0 / (u * u);
    let inv_w2 = 1.0 / (w * w);
    // K1'(w) / (w K1(w)); the exponential scaling cancels in the ratio.
    let k_term = -bessel_k_scaled(0, w) / (w * bessel_k_scaled(1, w)) - inv_w2;
    let cross = (inv_u2 + inv_w2) * (inv_u2 + ratio * inv_w2);
    let root = ((0.5 * (1.0 - ratio) * k_term).powi(2) + cross).sqrt();
    let core_side = bessel_j(0, u) / (u * bessel_j(1, u));
    core_side - (-0.5 * (1.0 + ratio) * k_term + inv_u2 - root)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispersionSample {
    pub wavelength_nm: f64,
    pub n_eff: f64,
    pub beta_rad_per_m: f64,
    pub beta2_s2_per_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersionCurve {
    pub samples: Vec<DispersionSample>,
    pub zero_dispersion_wavelength_nm: Option<f64>,
}

impl DispersionCurve {
    /// Writes `wavelength_nm,n_eff,beta_rad_per_m,beta2_s2_per_m` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for s in &self.samples {
            w.serialize(s)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads samples written by [`write_csv`](Self::write_csv). The
    /// zero-dispersion wavelength is not part of the CSV and is left unset.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let samples = r.deserialize().collect::<std::result::Result<Vec<DispersionSample>, _>>()?;
        if samples.windows(2).any(|w| w[1].wavelength_nm <= w[0].wavelength_nm) {
            return Err(crate::error::argument("dispersion samples must be strictly increasing"));
        }
        Ok(Self { samples, zero_dispersion_wavelength_nm: None })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fused_silica_reference_indices() {
        let silica = SellmeierModel::fused_silica();
        assert!((silica.index(587.6).unwrap() - 1.4585).abs() < 5e-4);
        assert!((silica.index(1000.0).unwrap() - 1.4504).abs() < 5e-4);
    }

    #[test]
    fn index_outside_range_is_domain_error() {
        let err = material_index(&SellmeierModel::fused_silica(), 50.0).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
        assert!(FiberModel::default().effective_index(4000.0).is_err());
    }

    #[test]
    fn sellmeier_validation_rejects_bad_terms() {
        let mut m = SellmeierModel::fused_silica();
        m.terms[0].strength = -1.0;
        assert!(m.validate().is_err());
        let mut m = SellmeierModel::fused_silica();
        m.valid_range_um = (1.0, 0.5);
        assert!(m.validate().is_err());
    }

    #[test]
    fn fiber_validation() {
        assert!(FiberModel::default().validate().is_ok());
        let mut f = FiberModel::default();
        f.core_diameter_um = 0.0;
        assert!(f.validate().is_err());
        let mut f = FiberModel::default();
        f.cladding_index = 1.6;
        assert!(f.validate().is_err());
    }

    #[test]
    fn effective_index_is_guided() {
        let fiber = FiberModel::silica_strand(2.0);
        let n = fiber.effective_index(715.0).unwrap();
        let n_core = fiber.material.index(715.0).unwrap();
        assert!(n > 1.0 && n < n_core, "n_eff = {n}");
        assert!(fiber.effective_index(500.0).unwrap() > fiber.effective_index(900.0).unwrap());
    }

    #[test]
    fn guided_across_whole_material_range() {
        let fiber = FiberModel::default();
        for lam in [215.0, 400.0, 1550.0, 3000.0, 3700.0] {
            let n = fiber.effective_index(lam).unwrap();
            assert!(n > 1.0 && n < fiber.material.index(lam).unwrap(), "{lam}: {n}");
        }
    }

    #[test]
    fn gvd_signs_around_zero_dispersion() {
        let fiber = FiberModel::silica_strand(2.0);
        assert!(fiber.group_velocity_dispersion(708.4).unwrap() > 0.0);
        assert!(fiber.group_velocity_dispersion(800.0).unwrap() < 0.0);
    }

    #[test]
    fn gvd_stencil_outside_range() {
        let fiber = FiberModel::default();
        assert!(matches!(fiber.group_velocity_dispersion(210.2), Err(Error::Domain(_))));
        assert!(fiber.gvd_with_step(700.0, 0.0, true).is_err());
    }

    #[test]
    fn zero_dispersion_bracket_errors() {
        let fiber = FiberModel::silica_strand(2.0);
        assert!(matches!(
            fiber.find_zero_dispersion((600.0, 650.0)),
            Err(Error::Bracket { .. })
        ));
        assert!(fiber.find_zero_dispersion((700.0, 600.0)).is_err());
    }

    #[test]
    fn zero_dispersion_is_a_root() {
        let fiber = FiberModel::silica_strand(2.0);
        let l0 = fiber.find_zero_dispersion((600.0, 850.0)).unwrap();
        let b2 = fiber.group_velocity_dispersion(l0).unwrap();
        let slope = (fiber.group_velocity_dispersion(l0 + 1.0).unwrap()
            - fiber.group_velocity_dispersion(l0 - 1.0).unwrap())
            / 2.0;
        // |beta2| smaller than the change produced by a 0.01 nm shift
        assert!(b2.abs() < 0.01 * slope.abs(), "beta2(l0) = {b2:e}");
    }

    #[test]
    fn curve_rejects_bad_arguments() {
        let fiber = FiberModel::default();
        assert!(fiber.dispersion_curve((800.0, 600.0), 10).is_err());
        assert!(fiber.dispersion_curve((600.0, 800.0), 1).is_err());
    }

    #[test]
    fn curve_without_sign_change_has_no_zero() {
        let curve = FiberModel::default().dispersion_curve((600.0, 650.0), 6).unwrap();
        assert_eq!(curve.zero_dispersion_wavelength_nm, None);
        assert!(curve.samples.iter().all(|s| s.beta2_s2_per_m > 0.0));
    }
}

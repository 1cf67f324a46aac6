//! Experimental design formulas for the bichromatic optical lattice:
//! recoil energy, WKB hopping rate, mass gap, trap frequency, and the scale
//! hierarchy `ω_osc ≫ J ≫ M > T` a realization must satisfy.
//!
//! This is the only module that touches physical units. Energies are in µK
//! (via k_B), lengths in nm, atomic masses in amu. The lattice constant is
//! `a = λ/4`: the long lattice `sin²(kx)` with `k = π/(2a)` has period
//! `λ/2 = 2a`.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

pub const HBAR: f64 = 1.054571817e-34; // J·s
pub const K_BOLTZMANN: f64 = 1.380649e-23; // J/K
pub const ATOMIC_MASS_KG: f64 = 1.66053906660e-27; // kg

/// Physical design inputs.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpticalLatticeParams {
    /// Deep (short-period) lattice depth, µK.
    pub w0_uk: f64,
    /// Shallow (long-period) lattice depth ΔW, µK.
    pub dw_uk: f64,
    /// Wavelength of the long-lattice light, nm.
    pub wavelength_nm: f64,
    /// Atom mass, amu.
    pub atom_mass_amu: f64,
    /// Effective temperature, µK.
    pub temperature_uk: f64,
}

impl OpticalLatticeParams {
    /// All-positive check; `ΔW < W₀` is only warned about since the deep
    /// preparation stage intentionally inverts that ordering.
    pub fn validate(&self) -> Result<Vec<String>> {
        for (name, v) in [
            ("w0_uk", self.w0_uk),
            ("dw_uk", self.dw_uk),
            ("wavelength_nm", self.wavelength_nm),
            ("atom_mass_amu", self.atom_mass_amu),
            ("temperature_uk", self.temperature_uk),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(SimError::validation(format!("{name} must be positive, got {v}")));
            }
        }
        let mut warnings = Vec::new();
        if self.dw_uk >= self.w0_uk {
            warnings.push(format!(
                "ΔW = {} µK is not small against W₀ = {} µK; the split-band picture needs ΔW ≪ W₀",
                self.dw_uk, self.w0_uk
            ));
        }
        Ok(warnings)
    }

    /// Lattice constant `a = λ/4` in nm.
    pub fn lattice_constant_nm(&self) -> f64 {
        self.wavelength_nm / 4.0
    }
}

/// Recoil energy `E_R = π²ħ²/(8 m a²)` in µK, with `a = λ/4`.
pub fn recoil_energy(params: &OpticalLatticeParams) -> Result<f64> {
    params.validate()?;
    let a_m = params.lattice_constant_nm() * 1e-9;
    let mass_kg = params.atom_mass_amu * ATOMIC_MASS_KG;
    let joules = std::f64::consts::PI.powi(2) * HBAR * HBAR / (8.0 * mass_kg * a_m * a_m);
    Ok(joules_to_uk(joules))
}

/// WKB estimate of the hopping rate through the deep-lattice barriers:
/// `J ≈ (4/π)·sqrt(W₀E_R)·exp(−(π/4)·sqrt(W₀/E_R))`, all in µK.
pub fn hopping_estimate(w0_uk: f64, recoil_uk: f64) -> Result<f64> {
    if !(w0_uk.is_finite() && w0_uk > 0.0 && recoil_uk.is_finite() && recoil_uk > 0.0) {
        return Err(SimError::validation("hopping estimate needs positive W0 and E_R"));
    }
    let pre = (4.0 / std::f64::consts::PI) * (w0_uk * recoil_uk).sqrt();
    let barrier = (-(std::f64::consts::PI / 4.0) * (w0_uk / recoil_uk).sqrt()).exp();
    Ok(pre * barrier)
}

/// The mass gap generated by the shallow lattice: `M ≈ ΔW/2`.
pub fn mass_gap(dw_uk: f64) -> Result<f64> {
    if !(dw_uk.is_finite() && dw_uk >= 0.0) {
        return Err(SimError::validation("ΔW must be finite and >= 0"));
    }
    Ok(dw_uk / 2.0)
}

/// Harmonic frequency in the deep-lattice minima, `ħω = 4·sqrt(W₀E_R)` (µK).
pub fn oscillator_frequency(w0_uk: f64, recoil_uk: f64) -> Result<f64> {
    if !(w0_uk.is_finite() && w0_uk > 0.0 && recoil_uk.is_finite() && recoil_uk > 0.0) {
        return Err(SimError::validation("oscillator frequency needs positive W0 and E_R"));
    }
    Ok(4.0 * (w0_uk * recoil_uk).sqrt())
}

/// Trap frequency at the occupied (lower) minima of the full bichromatic
/// potential `W₀sin²(2kx) + ΔWsin²(kx)`: the shallow lattice adds curvature
/// there, `ħω = 4·sqrt((W₀ + ΔW/4)·E_R)`. Reduces to
/// [`oscillator_frequency`] at ΔW = 0.
pub fn oscillator_frequency_lower_minima(w0_uk: f64, dw_uk: f64, recoil_uk: f64) -> Result<f64> {
    if !(dw_uk.is_finite() && dw_uk >= 0.0) {
        return Err(SimError::validation("ΔW must be finite and >= 0"));
    }
    oscillator_frequency(w0_uk + 0.25 * dw_uk, recoil_uk)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HierarchyStatus {
    Pass,
    Warn,
    Fail,
}

#[derive(Debug, Clone, Serialize)]
pub struct HierarchyRow {
    pub name: String,
    pub ratio: f64,
    pub requirement: String,
    pub status: HierarchyStatus,
}

#[derive(Debug, Clone, Serialize)]
pub struct HierarchyReport {
    pub rows: Vec<HierarchyRow>,
    pub all_pass: bool,
}

/// Thresholds for the "much greater than" checks; the temperature row uses
/// the literal requirement `T < M` instead of a ratio threshold.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HierarchyThresholds {
    pub pass_ratio: f64,
    pub warn_ratio: f64,
}

impl Default for HierarchyThresholds {
    fn default() -> Self {
        HierarchyThresholds { pass_ratio: 5.0, warn_ratio: 3.0 }
    }
}

/// Derived energy scales plus the natural-unit translation for the
/// simulator (energies divided by J, and `2aJ` as the emergent velocity).
#[derive(Debug, Clone, Serialize)]
pub struct DerivedScales {
    pub lattice_constant_nm: f64,
    pub recoil_energy_uk: f64,
    pub hopping_uk: f64,
    pub mass_gap_uk: f64,
    pub oscillator_frequency_uk: f64,
    pub temperature_uk: f64,
    /// Mass gap in simulator units (J = 1).
    pub sim_mass_gap: f64,
    /// Temperature in simulator units (J = 1).
    pub sim_temperature: f64,
    /// One simulator time unit (1/J) in physical µs.
    pub time_unit_us: f64,
    pub hierarchy: HierarchyReport,
    pub warnings: Vec<String>,
}

/// Full design pipeline from physical inputs to simulator parameters.
/// The trap frequency is evaluated at the occupied lower minima of the
/// combined potential (the ΔW term contributes there too).
pub fn derive_scales(
    params: &OpticalLatticeParams,
    thresholds: HierarchyThresholds,
) -> Result<DerivedScales> {
    let warnings = params.validate()?;
    let e_r = recoil_energy(params)?;
    let j = hopping_estimate(params.w0_uk, e_r)?;
    let m = mass_gap(params.dw_uk)?;
    let omega = oscillator_frequency_lower_minima(params.w0_uk, params.dw_uk, e_r)?;
    let hierarchy = validate_hierarchy(omega, j, m, params.temperature_uk, thresholds);
    // ħ/(k_B·1µK) in µs gives the time unit once J is known.
    let hbar_over_uk_us = HBAR / (K_BOLTZMANN * 1e-6) * 1e6;
    Ok(DerivedScales {
        lattice_constant_nm: params.lattice_constant_nm(),
        recoil_energy_uk: e_r,
        hopping_uk: j,
        mass_gap_uk: m,
        oscillator_frequency_uk: omega,
        temperature_uk: params.temperature_uk,
        sim_mass_gap: m / j,
        sim_temperature: params.temperature_uk / j,
        time_unit_us: hbar_over_uk_us / j,
        hierarchy,
        warnings,
    })
}

/// Checks `ω_osc ≫ J`, `J ≫ M` against the ratio thresholds and the
/// temperature against the literal `T < M` bound.
pub fn validate_hierarchy(
    omega_uk: f64,
    hopping_uk: f64,
    mass_uk: f64,
    temperature_uk: f64,
    thresholds: HierarchyThresholds,
) -> HierarchyReport {
    let grade = |ratio: f64| {
        if ratio >= thresholds.pass_ratio {
            HierarchyStatus::Pass
        } else if ratio >= thresholds.warn_ratio {
            HierarchyStatus::Warn
        } else {
            HierarchyStatus::Fail
        }
    };
    let rows = vec![
        HierarchyRow {
            name: "omega_osc >> J".into(),
            ratio: omega_uk / hopping_uk,
            requirement: format!("ratio >= {}", thresholds.pass_ratio),
            status: grade(omega_uk / hopping_uk),
        },
        HierarchyRow {
            name: "J >> M".into(),
            ratio: hopping_uk / mass_uk,
            requirement: format!("ratio >= {}", thresholds.pass_ratio),
            status: grade(hopping_uk / mass_uk),
        },
        HierarchyRow {
            name: "M > T".into(),
            ratio: mass_uk / temperature_uk,
            requirement: "temperature below the mass gap scale".into(),
            status: if mass_uk > temperature_uk {
                HierarchyStatus::Pass
            } else {
                HierarchyStatus::Fail
            },
        },
    ];
    let all_pass = rows.iter().all(|r| r.status == HierarchyStatus::Pass);
    HierarchyReport { rows, all_pass }
}

pub fn joules_to_uk(joules: f64) -> f64 {
    joules / K_BOLTZMANN * 1e6
}

pub fn uk_to_joules(uk: f64) -> f64 {
    uk * 1e-6 * K_BOLTZMANN
}

/// Reference ⁶Li mass in amu.
pub const LI6_MASS_AMU: f64 = 6.0151228;

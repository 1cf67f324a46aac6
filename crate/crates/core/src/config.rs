//! Run configuration: one TOML file with sections mirroring the library
//! modules. Parsing is strict (unknown keys are rejected) and cross-field
//! constraints are checked before any computation. Physics parameters have
//! no silent defaults; only numerical knobs (dt, record cadence, grid
//! sizes, tolerances) do.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::design::{HierarchyThresholds, OpticalLatticeParams};
use crate::dynamics::{Envelope, GradientOrigin, RampKind, SpatialProfile};
use crate::error::{Result, SimError};
use crate::lattice::{Boundary, LatticeSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Bands,
    Simulate,
    Sweep,
    Design,
    OracleCheck,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Mode::Bands => "bands",
            Mode::Simulate => "simulate",
            Mode::Sweep => "sweep",
            Mode::Design => "design",
            Mode::OracleCheck => "oracle-check",
        };
        write!(f, "{s}")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSection {
    pub num_sites: usize,
    /// Exactly one of `hopping` and `lattice_constant`; the other follows
    /// from `J = 1/(2a)`.
    pub hopping: Option<f64>,
    pub lattice_constant: Option<f64>,
    pub boundary: Boundary,
}

impl LatticeSection {
    pub fn to_spec(&self) -> Result<LatticeSpec> {
        match (self.hopping, self.lattice_constant) {
            (Some(j), None) => LatticeSpec::from_hopping(self.num_sites, j, self.boundary),
            (None, Some(a)) => LatticeSpec::from_lattice_constant(self.num_sites, a, self.boundary),
            (Some(_), Some(_)) => Err(SimError::validation(
                "lattice: give either hopping or lattice_constant, not both (J = 1/(2a) links them)",
            )),
            (None, None) => Err(SimError::validation(
                "lattice: one of hopping or lattice_constant is required",
            )),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OriginConfig {
    Named(String),
    Site(f64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSection {
    /// `zero`, `uniform_gradient`, or `localized`.
    pub profile: String,
    /// Field strength (gradient) or bump height (localized). Explicit even
    /// when zero.
    pub amplitude: f64,
    /// Extra hold at full amplitude inserted between switch-on and
    /// switch-off, time units. Explicit for field-bearing runs.
    pub hold_duration: Option<f64>,
    /// Gradient gauge origin: "center" or a site index.
    pub origin: Option<OriginConfig>,
    /// Localized profile: center site index.
    pub center: Option<f64>,
    /// Localized profile: width in sites.
    pub width: Option<f64>,
    /// Localized profile: `gaussian` (default) or `box`.
    pub envelope: Option<Envelope>,
}

impl FieldSection {
    pub fn to_profile(&self) -> Result<SpatialProfile> {
        match self.profile.as_str() {
            "zero" => Ok(SpatialProfile::Zero),
            "uniform_gradient" => {
                let origin = match &self.origin {
                    None => GradientOrigin::Center,
                    Some(OriginConfig::Site(s)) => GradientOrigin::Site(*s),
                    Some(OriginConfig::Named(n)) if n == "center" => GradientOrigin::Center,
                    Some(OriginConfig::Named(n)) => {
                        return Err(SimError::validation(format!(
                            "field.origin must be \"center\" or a site index, got {n:?}"
                        )))
                    }
                };
                Ok(SpatialProfile::UniformGradient { origin })
            }
            "localized" => {
                let center = self.center.ok_or_else(|| {
                    SimError::validation("field.center is required for a localized profile")
                })?;
                let width = self.width.ok_or_else(|| {
                    SimError::validation("field.width is required for a localized profile")
                })?;
                Ok(SpatialProfile::Localized {
                    center,
                    width,
                    envelope: self.envelope.unwrap_or(Envelope::Gaussian),
                })
            }
            other => Err(SimError::validation(format!(
                "field.profile must be zero | uniform_gradient | localized, got {other:?}"
            ))),
        }
    }

    pub fn hold(&self) -> f64 {
        self.hold_duration.unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSection {
    pub m_initial: f64,
    pub m_target: f64,
    /// Durations of the five stages: deep hold, gap ramp down, field on,
    /// field off, gap ramp up.
    pub durations: Vec<f64>,
    /// Per-stage ramp kinds; default smootherstep everywhere.
    pub shapes: Option<Vec<RampKind>>,
    pub field: FieldSection,
    /// Step size; default `0.05/‖H‖_max`.
    pub dt: Option<f64>,
    /// Record cadence in steps; default targets ~200 trajectory rows.
    pub record_every: Option<u64>,
    /// Advance constant stages by exact spectral chunks (default true).
    pub exact_constant_stages: Option<bool>,
}

impl ProtocolSection {
    pub fn durations_array(&self) -> Result<[f64; 5]> {
        if self.durations.len() != 5 {
            return Err(SimError::validation(format!(
                "protocol.durations must list exactly 5 stages, got {}",
                self.durations.len()
            )));
        }
        Ok([
            self.durations[0],
            self.durations[1],
            self.durations[2],
            self.durations[3],
            self.durations[4],
        ])
    }

    pub fn shapes_array(&self) -> Result<[RampKind; 5]> {
        match &self.shapes {
            None => Ok([RampKind::Smootherstep; 5]),
            Some(v) if v.len() == 5 => Ok([v[0], v[1], v[2], v[3], v[4]]),
            Some(v) => Err(SimError::validation(format!(
                "protocol.shapes must list exactly 5 stages, got {}",
                v.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub directory: Option<String>,
    /// Append per-site densities to the trajectory CSV.
    pub write_density: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandsSection {
    pub mass: f64,
    /// Number of momentum samples across the halved zone (default 257).
    pub grid_points: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Values are field amplitudes; triggers the suppression fit.
    FieldAmplitude,
    /// Values multiply all stage durations.
    Duration,
    /// Values replace the target mass.
    Mass,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    /// Normalize the rate by the kinematically available length
    /// `L − 2M/E` instead of the full chain length (field sweeps only).
    pub kinematic_length: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSection {
    pub w0_uk: f64,
    pub dw_uk: f64,
    pub wavelength_nm: f64,
    pub atom_mass_amu: f64,
    pub temperature_uk: f64,
    pub pass_ratio: Option<f64>,
    pub warn_ratio: Option<f64>,
}

impl DesignSection {
    pub fn params(&self) -> OpticalLatticeParams {
        OpticalLatticeParams {
            w0_uk: self.w0_uk,
            dw_uk: self.dw_uk,
            wavelength_nm: self.wavelength_nm,
            atom_mass_amu: self.atom_mass_amu,
            temperature_uk: self.temperature_uk,
        }
    }

    pub fn thresholds(&self) -> HierarchyThresholds {
        let d = HierarchyThresholds::default();
        HierarchyThresholds {
            pass_ratio: self.pass_ratio.unwrap_or(d.pass_ratio),
            warn_ratio: self.warn_ratio.unwrap_or(d.warn_ratio),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    /// Chain length for the battery (default 8).
    pub num_sites: Option<usize>,
    pub seed: Option<u64>,
    pub dt: Option<f64>,
    /// Per-check tolerance overrides (for harness tests of the failure
    /// path; defaults are the published tolerances).
    pub tolerances: Option<BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DebugSection {
    /// Test hook: poison one orbital amplitude at this global step.
    pub inject_nan_at_step: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Optional; must match the subcommand when present.
    pub mode: Option<Mode>,
    pub lattice: Option<LatticeSection>,
    pub protocol: Option<ProtocolSection>,
    pub output: Option<OutputSection>,
    pub bands: Option<BandsSection>,
    pub sweep: Option<SweepSection>,
    pub design: Option<DesignSection>,
    pub oracle: Option<OracleSection>,
    pub debug: Option<DebugSection>,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text)
            .map_err(|e| SimError::validation(format!("config parse error: {e}")))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    /// Cross-field checks for the requested mode, before any computation.
    pub fn validate_for(&self, mode: Mode) -> Result<()> {
        if let Some(declared) = self.mode {
            if declared != mode {
                return Err(SimError::validation(format!(
                    "config declares mode \"{declared}\" but \"{mode}\" was requested"
                )));
            }
        }
        match mode {
            Mode::Bands => {
                self.require_lattice()?;
                let b = self
                    .bands
                    .as_ref()
                    .ok_or_else(|| SimError::validation("[bands] section is required"))?;
                if !(b.mass.is_finite() && b.mass >= 0.0) {
                    return Err(SimError::validation("bands.mass must be finite and >= 0"));
                }
            }
            Mode::Simulate | Mode::Sweep => {
                let spec = self.require_lattice()?;
                let p = self
                    .protocol
                    .as_ref()
                    .ok_or_else(|| SimError::validation("[protocol] section is required"))?;
                p.durations_array()?;
                p.shapes_array()?;
                let profile = p.field.to_profile()?;
                let field_active = p.field.amplitude != 0.0 && !profile.is_zero();
                if field_active
                    && matches!(profile, SpatialProfile::UniformGradient { .. })
                    && spec.boundary() == Boundary::Periodic
                {
                    return Err(SimError::validation(
                        "a uniform field gradient needs open boundaries",
                    ));
                }
                if field_active && p.field.hold_duration.is_none() {
                    return Err(SimError::validation(
                        "field.hold_duration must be explicit for field-bearing runs (0 is allowed)",
                    ));
                }
                if mode == Mode::Sweep {
                    let s = self
                        .sweep
                        .as_ref()
                        .ok_or_else(|| SimError::validation("[sweep] section is required"))?;
                    if s.values.is_empty() {
                        return Err(SimError::validation("sweep.values must not be empty"));
                    }
                    if s.values.iter().any(|v| !v.is_finite()) {
                        return Err(SimError::validation("sweep.values must be finite"));
                    }
                }
            }
            Mode::Design => {
                let d = self
                    .design
                    .as_ref()
                    .ok_or_else(|| SimError::validation("[design] section is required"))?;
                d.params().validate()?;
            }
            Mode::OracleCheck => {
                if let Some(o) = &self.oracle {
                    if let Some(n) = o.num_sites {
                        if n > crate::oracle::FOCK_SITE_CAP || n < 4 || n % 2 != 0 {
                            return Err(SimError::validation(format!(
                                "oracle.num_sites must be even, 4..={}, got {n}",
                                crate::oracle::FOCK_SITE_CAP
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn require_lattice(&self) -> Result<LatticeSpec> {
        self.lattice
            .as_ref()
            .ok_or_else(|| SimError::validation("[lattice] section is required"))?
            .to_spec()
    }
}

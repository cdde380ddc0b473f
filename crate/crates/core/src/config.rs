//! JSON run configuration.
//!
//! Config files carry human units through suffixed key names
//! (`temperature_uK`, `standoff_um`, `frequency_kHz`, ...) and are converted
//! to SI on load. Unknown keys are rejected. The SHA-256 hash of the
//! canonical (key-sorted) JSON is attached to every output so results can be
//! traced back to the exact configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cantilever::{Beam, DriveConfig, LoadedCantilever};
use crate::constants::{CONIMNP_DENSITY, SILICON};
use crate::error::Error;
use crate::magnetostatics::{Magnet, Rotation};
use crate::spindynamics::LossMode;
use crate::trapmodel::{solve_bias_for_standoff, TrapConfig};
use crate::vec3::Vec3;

pub const SCHEMA_VERSION: u32 = 1;

/// Raw config file schema. All fields in the units named by their suffix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct RawConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub atom_count: u64,
    pub temperature_uK: f64,
    pub duration_ms: f64,
    pub dt_us: f64,
    #[serde(default)]
    pub output_path: Option<String>,
    #[serde(default)]
    pub cantilever: RawCantilever,
    #[serde(default)]
    pub magnet: RawMagnet,
    #[serde(default)]
    pub drive: RawDrive,
    #[serde(default)]
    pub trap: RawTrap,
    #[serde(default)]
    pub spin: RawSpin,
    #[serde(default)]
    pub simulation: RawSimulation,
    #[serde(default)]
    pub sweep: Option<RawSweep>,
    #[serde(default)]
    pub detection: Option<RawDetection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct RawCantilever {
    pub length_um: f64,
    pub width_um: f64,
    pub thickness_um: f64,
    pub youngs_modulus_GPa: f64,
    pub density_kg_m3: f64,
    pub q_factor: f64,
    #[serde(default)]
    pub f0_measured_kHz: Option<f64>,
    #[serde(default)]
    pub linewidth_kHz: Option<f64>,
}

impl Default for RawCantilever {
    fn default() -> Self {
        RawCantilever {
            length_um: 130.0,
            width_um: 60.0,
            thickness_um: 25.0,
            youngs_modulus_GPa: SILICON.youngs_modulus / 1e9,
            density_kg_m3: SILICON.density,
            q_factor: 1e4,
            f0_measured_kHz: Some(1057.7),
            linewidth_kHz: Some(0.67),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct RawMagnet {
    /// Edge along the moment axis, um.
    pub length_um: f64,
    pub width_um: f64,
    pub thickness_um: f64,
    /// Either a total moment or an explicit magnetization.
    #[serde(default)]
    pub moment_J_per_T: Option<f64>,
    #[serde(default)]
    pub magnetization_A_per_m: Option<f64>,
    pub density_kg_m3: f64,
}

impl Default for RawMagnet {
    fn default() -> Self {
        RawMagnet {
            length_um: 85.0,
            width_um: 60.0,
            thickness_um: 9.0,
            moment_J_per_T: Some(2e-9),
            magnetization_A_per_m: None,
            density_kg_m3: CONIMNP_DENSITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct RawDrive {
    pub v_dc_V: f64,
    pub v_ac_V: f64,
    pub gap_um: f64,
    /// Effective plate area as a fraction of the beam footprint l*w.
    /// The default is calibrated so the parallel-plate model reproduces the
    /// 40 nm tip amplitude expected from the measured Q at (40 V, 10 V, 9 um).
    pub area_fraction: f64,
    /// Drive frequency; omitted means on resonance.
    #[serde(default)]
    pub frequency_kHz: Option<f64>,
}

impl Default for RawDrive {
    fn default() -> Self {
        RawDrive {
            v_dc_V: 40.0,
            v_ac_V: 10.0,
            gap_um: 9.0,
            area_fraction: 1.34,
            frequency_kHz: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct RawTrap {
    pub standoff_um: f64,
    /// Whether the standoff is measured from the tip face or magnet center.
    pub standoff_from: StandoffConvention,
    /// Transverse bias component; sets the field floor on the trap axis.
    pub bias_transverse_uT: f64,
    /// Axial bias; omitted means solved so the field minimum sits at the
    /// configured standoff.
    #[serde(default)]
    pub bias_axial_uT: Option<f64>,
    /// Lowest |B| tolerated along the simulation axis (spin-following floor).
    pub b_floor_uT: f64,
    /// Harmonic confinement of the external trap along the axis, Hz.
    /// Stands in for the chip-trap fields that hold the cloud; 0 disables.
    pub external_trap_frequency_Hz: f64,
    #[serde(default)]
    pub gravity: bool,
}

impl Default for RawTrap {
    fn default() -> Self {
        RawTrap {
            standoff_um: 100.0,
            standoff_from: StandoffConvention::Face,
            bias_transverse_uT: 130.0,
            bias_axial_uT: None,
            b_floor_uT: 1.0,
            external_trap_frequency_Hz: 1000.0,
            gravity: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StandoffConvention {
    /// Distance from the tip face of the magnet (default).
    Face,
    /// Distance from the magnet center.
    Center,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct RawSpin {
    /// Multiplier on the Landau-Zener exponent. 1 is the bare two-level
    /// formula; 4 (= 2F) compounds the stretched-state departure through the
    /// full F = 2 crossing.
    pub zeeman_factor: f64,
    pub loss_mode: LossMode,
    pub background_lifetime_ms: f64,
}

impl Default for RawSpin {
    fn default() -> Self {
        RawSpin {
            zeeman_factor: 4.0,
            loss_mode: LossMode::Immediate,
            background_lifetime_ms: 184.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct RawSimulation {
    /// Half-width of the simulated segment around the trap center, um.
    pub domain_halfwidth_um: f64,
    pub use_field_table: bool,
    pub table_spacing_um: f64,
    pub output_interval_ms: f64,
    pub mode: SimMode,
}

impl Default for RawSimulation {
    fn default() -> Self {
        RawSimulation {
            domain_halfwidth_um: 60.0,
            use_field_table: true,
            table_spacing_um: 1.0,
            output_interval_ms: 1.0,
            mode: SimMode::OneD,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMode {
    OneD,
    ThreeD,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct RawSweep {
    pub frequencies_kHz: Vec<f64>,
    pub interaction_time_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct RawDetection {
    pub temperature_K: f64,
    pub bandwidth_Hz: f64,
    pub q_factor: f64,
    pub spin_count: u64,
    pub z_min_um: f64,
    pub z_max_um: f64,
    pub z_points: usize,
}

impl Default for RawDetection {
    fn default() -> Self {
        RawDetection {
            temperature_K: 300.0,
            bandwidth_Hz: 1.0,
            q_factor: 1e5,
            spin_count: 1000,
            z_min_um: 0.8,
            z_max_um: 10.0,
            z_points: 150,
        }
    }
}

/// Fully validated run configuration in SI units.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub atom_count: u64,
    /// K
    pub temperature: f64,
    /// s
    pub duration: f64,
    /// s
    pub dt: f64,
    pub output_path: Option<String>,
    pub raw: RawConfig,
    /// Hex-encoded SHA-256 of the canonical raw JSON.
    pub config_hash: String,
}

impl RunConfig {
    /// Standoff of the trap minimum from the magnet center, m.
    pub fn standoff_from_center(&self) -> f64 {
        let s = self.raw.trap.standoff_um * 1e-6;
        match self.raw.trap.standoff_from {
            StandoffConvention::Face => s + self.raw.magnet.length_um * 0.5e-6,
            StandoffConvention::Center => s,
        }
    }

    /// Tip magnet in the lab frame: moment along +z, center at the origin.
    pub fn magnet(&self) -> Result<Magnet, Error> {
        let m = &self.raw.magnet;
        let dims = Vec3::new(
            m.width_um * 1e-6,
            m.thickness_um * 1e-6,
            m.length_um * 1e-6,
        );
        match (m.moment_J_per_T, m.magnetization_A_per_m) {
            (Some(moment), None) => {
                Magnet::from_dimensions_and_moment(dims, moment, Vec3::ZERO, Rotation::IDENTITY)
            }
            (None, Some(mag)) => Magnet::new(dims * 0.5, mag, Vec3::ZERO, Rotation::IDENTITY),
            (Some(_), Some(_)) => Err(Error::validation(
                "magnet",
                "give either moment_J_per_T or magnetization_A_per_m, not both",
            )),
            (None, None) => Err(Error::validation(
                "magnet",
                "one of moment_J_per_T or magnetization_A_per_m is required",
            )),
        }
    }

    pub fn loaded_cantilever(&self) -> Result<LoadedCantilever, Error> {
        let c = &self.raw.cantilever;
        let beam = Beam::new(
            c.length_um * 1e-6,
            c.width_um * 1e-6,
            c.thickness_um * 1e-6,
            c.youngs_modulus_GPa * 1e9,
            c.density_kg_m3,
        )?;
        let mut lc = LoadedCantilever::new(
            beam,
            self.magnet()?,
            self.raw.magnet.density_kg_m3,
            c.q_factor,
        )?;
        lc.f0_measured = c.f0_measured_kHz.map(|f| f * 1e3);
        lc.linewidth_measured = c.linewidth_kHz.map(|f| f * 1e3);
        Ok(lc)
    }

    pub fn drive_config(&self) -> Result<DriveConfig, Error> {
        let d = &self.raw.drive;
        let c = self.loaded_cantilever()?;
        let area = d.area_fraction * c.beam.length * c.beam.width;
        let drv = DriveConfig {
            v_dc: d.v_dc_V,
            v_ac: d.v_ac_V,
            gap: d.gap_um * 1e-6,
            effective_area: area,
            drive_frequency: d
                .frequency_kHz
                .map(|f| f * 1e3)
                .unwrap_or_else(|| c.f0_effective()),
        };
        drv.validate()?;
        Ok(drv)
    }

    /// Trap with the axial bias solved (or taken from the config) and the
    /// transverse floor applied.
    pub fn trap_config(&self) -> Result<TrapConfig, Error> {
        let magnet = self.magnet()?;
        let bias = match self.raw.trap.bias_axial_uT {
            Some(bz) => Vec3::new(self.raw.trap.bias_transverse_uT * 1e-6, 0.0, bz * 1e-6),
            None => solve_bias_for_standoff(
                &magnet,
                self.standoff_from_center(),
                self.raw.trap.bias_transverse_uT * 1e-6,
            )?,
        };
        TrapConfig::new(magnet, bias)
    }
}

fn validate(raw: &RawConfig) -> Result<(), Error> {
    if raw.schema_version != SCHEMA_VERSION {
        return Err(Error::validation(
            "schema_version",
            format!("expected {SCHEMA_VERSION}, got {}", raw.schema_version),
        ));
    }
    if raw.atom_count < 1 {
        return Err(Error::validation("atom_count", "must be at least 1"));
    }
    if !(raw.dt_us > 0.0) {
        return Err(Error::validation("dt_us", "must be positive"));
    }
    if raw.duration_ms * 1e-3 < raw.dt_us * 1e-6 {
        return Err(Error::validation("duration_ms", "must be at least one dt"));
    }
    if !(raw.temperature_uK >= 0.0) {
        return Err(Error::validation("temperature_uK", "must be non-negative"));
    }
    if !(raw.trap.standoff_um > 0.0) {
        return Err(Error::validation("trap.standoff_um", "must be positive"));
    }
    if raw.trap.bias_transverse_uT < 0.0 {
        return Err(Error::validation(
            "trap.bias_transverse_uT",
            "must be non-negative",
        ));
    }
    if !(raw.spin.background_lifetime_ms > 0.0) {
        return Err(Error::validation(
            "spin.background_lifetime_ms",
            "must be positive",
        ));
    }
    if !(raw.spin.zeeman_factor > 0.0) {
        return Err(Error::validation("spin.zeeman_factor", "must be positive"));
    }
    if !(raw.simulation.domain_halfwidth_um > 0.0) {
        return Err(Error::validation(
            "simulation.domain_halfwidth_um",
            "must be positive",
        ));
    }
    if !(raw.simulation.table_spacing_um > 0.0) {
        return Err(Error::validation(
            "simulation.table_spacing_um",
            "must be positive",
        ));
    }
    if !(raw.simulation.output_interval_ms > 0.0) {
        return Err(Error::validation(
            "simulation.output_interval_ms",
            "must be positive",
        ));
    }
    if raw.trap.external_trap_frequency_Hz < 0.0 {
        return Err(Error::validation(
            "trap.external_trap_frequency_Hz",
            "must be non-negative",
        ));
    }
    if let Some(sweep) = &raw.sweep {
        if sweep.frequencies_kHz.is_empty() {
            return Err(Error::validation(
                "sweep.frequencies_kHz",
                "must not be empty",
            ));
        }
        if !(sweep.interaction_time_ms > 0.0) {
            return Err(Error::validation(
                "sweep.interaction_time_ms",
                "must be positive",
            ));
        }
    }
    if let Some(det) = &raw.detection {
        if !(det.bandwidth_Hz > 0.0) {
            return Err(Error::validation("detection.bandwidth_Hz", "must be positive"));
        }
        if det.spin_count < 1 {
            return Err(Error::validation("detection.spin_count", "must be at least 1"));
        }
        if !(det.z_min_um > 0.0 && det.z_max_um > det.z_min_um) {
            return Err(Error::validation(
                "detection.z_min_um/z_max_um",
                "need 0 < z_min < z_max",
            ));
        }
        if det.z_points < 2 {
            return Err(Error::validation("detection.z_points", "need at least 2 points"));
        }
    }
    Ok(())
}

/// Canonical hash of a JSON document: SHA-256 over the key-sorted rendering.
pub fn hash_json(text: &str) -> Result<String, Error> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::ConfigParse {
        path: "<memory>".into(),
        message: e.to_string(),
    })?;
    let canonical = value.to_string(); // serde_json maps are ordered
    let digest = Sha256::digest(canonical.as_bytes());
    Ok(digest.iter().take(8).map(|b| format!("{b:02x}")).collect())
}

/// Parse and validate a config from a JSON string.
pub fn parse_config(text: &str, origin: &str) -> Result<RunConfig, Error> {
    let raw: RawConfig = serde_json::from_str(text).map_err(|e| Error::ConfigParse {
        path: origin.to_string(),
        message: e.to_string(),
    })?;
    validate(&raw)?;
    let config_hash = hash_json(text)?;
    Ok(RunConfig {
        seed: raw.seed,
        atom_count: raw.atom_count,
        temperature: raw.temperature_uK * 1e-6,
        duration: raw.duration_ms * 1e-3,
        dt: raw.dt_us * 1e-6,
        output_path: raw.output_path.clone(),
        raw,
        config_hash,
    })
}

/// Load a validated config from a file.
pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig, Error> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::ConfigIo {
        path: path.display().to_string(),
        source: e,
    })?;
    parse_config(&text, &path.display().to_string())
}

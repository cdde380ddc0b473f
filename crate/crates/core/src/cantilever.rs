//! Cantilever beam mechanics: spring constant, mass-loaded resonance,
//! capacitive drive amplitude, and the driven-damped response curve.

use serde::{Deserialize, Serialize};

use crate::constants::PhysicalConstants;
use crate::error::Error;
use crate::magnetostatics::Magnet;

const TAU: f64 = std::f64::consts::TAU;

/// Rectangular beam, clamped at one end.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Beam {
    /// Length, m.
    pub length: f64,
    /// Width, m.
    pub width: f64,
    /// Thickness in the vibration direction, m.
    pub thickness: f64,
    /// Young's modulus, Pa.
    pub youngs_modulus: f64,
    /// Density, kg/m^3.
    pub density: f64,
}

impl Beam {
    pub fn new(
        length: f64,
        width: f64,
        thickness: f64,
        youngs_modulus: f64,
        density: f64,
    ) -> Result<Beam, Error> {
        for (name, v) in [
            ("length", length),
            ("width", width),
            ("thickness", thickness),
            ("youngs_modulus", youngs_modulus),
            ("density", density),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::validation(name, "must be positive and finite"));
            }
        }
        Ok(Beam {
            length,
            width,
            thickness,
            youngs_modulus,
            density,
        })
    }

    /// Thin-beam assumption (h <= l) behind the spring-constant formula.
    pub fn thin_beam_valid(&self) -> bool {
        self.thickness <= self.length
    }

    pub fn mass(&self) -> f64 {
        self.density * self.length * self.width * self.thickness
    }
}

/// Beam with its tip magnet, quality factor, and optional measured values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadedCantilever {
    pub beam: Beam,
    pub tip_magnet: Magnet,
    /// Density of the magnet material, kg/m^3.
    pub magnet_density: f64,
    /// Intrinsic quality factor.
    pub q_factor: f64,
    /// Measured fundamental resonance, Hz, when available.
    pub f0_measured: Option<f64>,
    /// Measured mechanical linewidth, Hz, when available.
    pub linewidth_measured: Option<f64>,
}

impl LoadedCantilever {
    pub fn new(
        beam: Beam,
        tip_magnet: Magnet,
        magnet_density: f64,
        q_factor: f64,
    ) -> Result<LoadedCantilever, Error> {
        if !(q_factor > 0.0) {
            return Err(Error::validation("q_factor", "must be positive"));
        }
        if !(magnet_density > 0.0) {
            return Err(Error::validation("magnet_density", "must be positive"));
        }
        Ok(LoadedCantilever {
            beam,
            tip_magnet,
            magnet_density,
            q_factor,
            f0_measured: None,
            linewidth_measured: None,
        })
    }

    pub fn magnet_mass(&self) -> f64 {
        self.tip_magnet.mass(self.magnet_density)
    }

    /// Resonance used by drive and response models: the measured value when
    /// supplied, otherwise the loaded-beam prediction.
    pub fn f0_effective(&self) -> f64 {
        self.f0_measured.unwrap_or_else(|| loaded_resonance(self))
    }

    /// Q used for drive-amplitude prediction: f0/linewidth when a measured
    /// linewidth is available, otherwise the configured Q.
    pub fn drive_q(&self) -> f64 {
        match self.linewidth_measured {
            Some(lw) if lw > 0.0 => self.f0_effective() / lw,
            _ => self.q_factor,
        }
    }
}

/// Capacitive drive electrode parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveConfig {
    /// DC bias, V.
    pub v_dc: f64,
    /// AC amplitude, V.
    pub v_ac: f64,
    /// Electrode gap, m.
    pub gap: f64,
    /// Effective plate area, m^2.
    pub effective_area: f64,
    /// Drive frequency, Hz.
    pub drive_frequency: f64,
}

impl DriveConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if !(self.gap > 0.0) {
            return Err(Error::validation("gap", "must be positive"));
        }
        if !(self.effective_area > 0.0) {
            return Err(Error::validation("effective_area", "must be positive"));
        }
        if self.v_dc < 0.0 || self.v_ac < 0.0 {
            return Err(Error::validation("v_dc/v_ac", "voltages must be non-negative"));
        }
        Ok(())
    }
}

/// k = 1/4 E w (h/l)^3 for the fundamental flexural mode.
pub fn spring_constant(beam: &Beam) -> f64 {
    let r = beam.thickness / beam.length;
    0.25 * beam.youngs_modulus * beam.width * r * r * r
}

/// Loaded fundamental resonance f0 = (1/2pi) sqrt(k / (0.24 m_c + M)).
///
/// Rayleigh effective mass 0.24 m_c for the bare beam plus the tip magnet
/// mass M treated as a point load.
pub fn loaded_resonance(c: &LoadedCantilever) -> f64 {
    let k = spring_constant(&c.beam);
    let m_eff = 0.24 * c.beam.mass() + c.magnet_mass();
    (k / m_eff).sqrt() / TAU
}

/// On-resonance tip amplitude of the capacitively driven cantilever:
/// dz = (Q/k) eps0 A Vdc Vac / d^2.
pub fn drive_amplitude(c: &LoadedCantilever, drv: &DriveConfig) -> f64 {
    let k = spring_constant(&c.beam);
    let eps0 = PhysicalConstants::DEFAULT.eps0;
    c.drive_q() / k * eps0 * drv.effective_area * drv.v_dc * drv.v_ac / (drv.gap * drv.gap)
}

/// Driven-damped amplitude at the drive frequency, normalized so the
/// on-resonance value equals [`drive_amplitude`]. The FWHM of the squared
/// amplitude is f0/Q.
pub fn response_amplitude(c: &LoadedCantilever, drv: &DriveConfig) -> f64 {
    let f0 = c.f0_effective();
    let q = c.drive_q();
    let f = drv.drive_frequency;
    let peak = drive_amplitude(c, drv);
    let lorentz = (f0 * f0 / q) / ((f0 * f0 - f * f).powi(2) + (f0 * f / q).powi(2)).sqrt();
    peak * lorentz
}

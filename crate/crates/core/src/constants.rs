//! Physical constants and default material parameters.
//!
//! The gyromagnetic ratio is stored as the rounded 7 Hz/nT conventionally
//! used for the |F=2> ground manifold of Rb-87 (g_F mu_B / h), not recomputed
//! from mu_B, so that derived quantities match the device-level numbers the
//! rest of the crate is calibrated against. It can be overridden per run
//! through the config.

use serde::{Deserialize, Serialize};

/// SI constants used throughout the crate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    /// Bohr magneton, J/T.
    pub mu_b: f64,
    /// Reduced Planck constant, J s.
    pub hbar: f64,
    /// Boltzmann constant, J/K.
    pub k_b: f64,
    /// Vacuum permittivity, F/m.
    pub eps0: f64,
    /// Rb-87 F=2 gyromagnetic ratio, Hz/T (7 Hz/nT).
    pub gamma_rb: f64,
    /// Rb-87 atomic mass, kg.
    pub m_rb87: f64,
    /// Vacuum permeability, T m/A.
    pub mu0: f64,
}

impl PhysicalConstants {
    pub const DEFAULT: PhysicalConstants = PhysicalConstants {
        mu_b: 9.274_010e-24,
        hbar: 1.054_572e-34,
        k_b: 1.380_649e-23,
        eps0: 8.854_188e-12,
        gamma_rb: 7.0e9,
        m_rb87: 1.443_160e-25,
        mu0: 1.256_637e-6,
    };

    pub fn all_positive(&self) -> bool {
        self.mu_b > 0.0
            && self.hbar > 0.0
            && self.k_b > 0.0
            && self.eps0 > 0.0
            && self.gamma_rb > 0.0
            && self.m_rb87 > 0.0
            && self.mu0 > 0.0
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::DEFAULT
    }
}

/// Elastic constants of a beam or coating material.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Material {
    /// Young's modulus, Pa.
    pub youngs_modulus: f64,
    /// Mass density, kg/m^3.
    pub density: f64,
}

/// Single-crystal silicon along <110>.
pub const SILICON: Material = Material {
    youngs_modulus: 169e9,
    density: 2330.0,
};

/// Low-stress silicon nitride film. Reported moduli for deposited SiN span
/// roughly 100-300 GPa; 150 GPa reproduces the resonance and force-noise
/// figures of the thin detection beams this crate models.
pub const SILICON_NITRIDE: Material = Material {
    youngs_modulus: 150e9,
    density: 3000.0,
};

/// Electroplated CoNiMnP hard-magnet film density, kg/m^3.
pub const CONIMNP_DENSITY: f64 = 8000.0;

//! Spin-detection feasibility: thermal-noise-limited force floor of a
//! cantilever versus the magnetic force from precessing spins at separation
//! z, and the minimum detectable spin count.

use serde::Serialize;

use crate::cantilever::{loaded_resonance, spring_constant, LoadedCantilever};
use crate::constants::PhysicalConstants;
use crate::error::Error;
use crate::magnetostatics::{gradient_at, Magnet};
use crate::vec3::Vec3;

/// A detection configuration: cantilever, operating temperature, bandwidth,
/// spin count, and the separations to tabulate.
#[derive(Debug, Clone)]
pub struct DetectionScenario {
    pub cantilever: LoadedCantilever,
    /// Mode temperature, K.
    pub temperature: f64,
    /// Measurement bandwidth, Hz.
    pub bandwidth: f64,
    /// Number of spins in the ensemble curve.
    pub spin_count: u64,
    /// Separations from the magnet center, m.
    pub separations: Vec<f64>,
}

/// Thermal-noise force floor F_min = sqrt(4 k k_B T b / (omega_c Q)).
pub fn min_force(c: &LoadedCantilever, temperature: f64, bandwidth: f64) -> f64 {
    let consts = PhysicalConstants::DEFAULT;
    let k = spring_constant(&c.beam);
    let omega_c = std::f64::consts::TAU * loaded_resonance(c);
    (4.0 * k * consts.k_b * temperature * bandwidth / (omega_c * c.q_factor)).sqrt()
}

/// Force from N spins of moment mu_B at separation z from the magnet center
/// on its moment axis: F = N mu_B |dB_z/dz|.
pub fn spin_force(magnet: &Magnet, z: f64, n_spins: u64) -> Result<f64, Error> {
    let p = magnet.center + magnet.orientation.to_lab(Vec3::new(0.0, 0.0, z));
    let (g, _) = gradient_at(magnet, p)?;
    // Axial gradient in the body frame is the zz component rotated back.
    let axis = magnet.orientation.to_lab(Vec3::new(0.0, 0.0, 1.0));
    let g_axis = crate::vec3::mat_vec(&g, axis).dot(axis);
    Ok(n_spins as f64 * PhysicalConstants::DEFAULT.mu_b * g_axis.abs())
}

/// Smallest spin count whose force at z reaches the thermal floor.
/// Never reports below one spin.
pub fn detectable_spins(scenario: &DetectionScenario, z: f64) -> Result<u64, Error> {
    let f_min = min_force(&scenario.cantilever, scenario.temperature, scenario.bandwidth);
    let per_spin = spin_force(&scenario.cantilever.tip_magnet, z, 1)?;
    if per_spin <= 0.0 {
        return Err(Error::InvalidInput("zero per-spin force".into()));
    }
    Ok(((f_min / per_spin).ceil() as u64).max(1))
}

/// One tabulated separation.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SensitivityRow {
    /// Separation from the magnet center, m.
    pub z: f64,
    /// Thermal force floor, N (constant in z).
    pub f_min: f64,
    /// Force from the configured spin ensemble, N.
    pub f_spins: f64,
    /// Force from a single spin, N.
    pub f_single: f64,
}

/// Sensitivity table plus the separations where each spin-force curve
/// crosses the thermal floor.
#[derive(Debug, Clone, Serialize)]
pub struct SensitivityCurve {
    pub rows: Vec<SensitivityRow>,
    /// z where the ensemble curve crosses F_min, if it does.
    pub crossing_spins: Option<f64>,
    /// z where the single-spin curve crosses F_min, if it does.
    pub crossing_single: Option<f64>,
}

/// Tabulate F_min and the spin forces over the scenario's separation grid.
pub fn sensitivity_curve(scenario: &DetectionScenario) -> Result<SensitivityCurve, Error> {
    let f_min = min_force(&scenario.cantilever, scenario.temperature, scenario.bandwidth);
    let mut rows = Vec::with_capacity(scenario.separations.len());
    for &z in &scenario.separations {
        let f_single = spin_force(&scenario.cantilever.tip_magnet, z, 1)?;
        rows.push(SensitivityRow {
            z,
            f_min,
            f_spins: scenario.spin_count as f64 * f_single,
            f_single,
        });
    }
    let crossing = |select: &dyn Fn(&SensitivityRow) -> f64| -> Option<f64> {
        for pair in rows.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            let fa = select(a) - a.f_min;
            let fb = select(b) - b.f_min;
            if fa == 0.0 {
                return Some(a.z);
            }
            if fa * fb < 0.0 {
                // Linear interpolation in log-force is accurate for the
                // power-law decay between grid points.
                let t = fa / (fa - fb);
                return Some(a.z + t * (b.z - a.z));
            }
        }
        None
    };
    Ok(SensitivityCurve {
        crossing_spins: crossing(&|r| r.f_spins),
        crossing_single: crossing(&|r| r.f_single),
        rows,
    })
}

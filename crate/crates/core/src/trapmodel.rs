//! Composite magnetic trap: tip-magnet field plus a uniform bias field,
//! Zeeman potentials per sublevel, the Larmor-frequency map, trap-minimum
//! search, and resonant-slice location.

use serde::{Deserialize, Serialize};

use crate::constants::PhysicalConstants;
use crate::error::Error;
use crate::magnetostatics::{self, Magnet};
use crate::vec3::{Mat3, Vec3};

/// Total spin of the trapped hyperfine manifold.
pub const F_TOTAL: i32 = 2;

/// Tip magnet plus uniform bias field and species constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrapConfig {
    pub magnet: Magnet,
    /// Uniform bias field, T, lab frame.
    pub bias_field: Vec3,
    /// Gyromagnetic ratio, Hz/T.
    pub gamma: f64,
    /// Lande factor of the manifold.
    pub g_f: f64,
    /// Atomic mass, kg.
    pub atom_mass: f64,
}

impl TrapConfig {
    pub fn new(magnet: Magnet, bias_field: Vec3) -> Result<TrapConfig, Error> {
        if !bias_field.is_finite() {
            return Err(Error::validation("bias_field", "must be finite"));
        }
        let c = PhysicalConstants::DEFAULT;
        Ok(TrapConfig {
            magnet,
            bias_field,
            gamma: c.gamma_rb,
            g_f: 0.5,
            atom_mass: c.m_rb87,
        })
    }
}

/// Magnet field plus bias at a lab-frame point.
pub fn total_field(t: &TrapConfig, p: Vec3) -> Result<Vec3, Error> {
    Ok(magnetostatics::field_at(&t.magnet, p)? + t.bias_field)
}

/// Larmor frequency nu_L = gamma |B|, Hz.
pub fn larmor_frequency(t: &TrapConfig, p: Vec3) -> Result<f64, Error> {
    Ok(t.gamma * total_field(t, p)?.norm())
}

/// Adiabatic Zeeman potential U = m_F g_F mu_B |B|, J.
///
/// Weak-field seekers (m_F g_F > 0) are trapped; m_F = 0 is flat; negative
/// products are expelled.
pub fn zeeman_potential(t: &TrapConfig, p: Vec3, m_f: i32) -> Result<f64, Error> {
    if !(-F_TOTAL..=F_TOTAL).contains(&m_f) {
        return Err(Error::InvalidSublevel(m_f));
    }
    let b = total_field(t, p)?.norm();
    Ok(m_f as f64 * t.g_f * PhysicalConstants::DEFAULT.mu_b * b)
}

/// A magnetic field model that the minimizer and slice finder can probe.
/// Implemented by [`TrapConfig`] and by synthetic test fields.
pub trait FieldModel {
    fn field(&self, p: Vec3) -> Result<Vec3, Error>;
    /// Gradient tensor dB_i/dx_j.
    fn gradient(&self, p: Vec3) -> Result<Mat3, Error>;

    fn field_norm(&self, p: Vec3) -> Result<f64, Error> {
        Ok(self.field(p)?.norm())
    }

    fn grad_norm(&self, p: Vec3) -> Result<Vec3, Error> {
        let b = self.field(p)?;
        let g = self.gradient(p)?;
        Ok(magnetostatics::grad_norm_from(&g, b))
    }
}

impl FieldModel for TrapConfig {
    fn field(&self, p: Vec3) -> Result<Vec3, Error> {
        total_field(self, p)
    }

    fn gradient(&self, p: Vec3) -> Result<Mat3, Error> {
        // The uniform bias contributes nothing to the gradient tensor.
        Ok(magnetostatics::gradient_at(&self.magnet, p)?.0)
    }
}

/// Axis-aligned search box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchBox {
    pub lo: Vec3,
    pub hi: Vec3,
}

/// Result of a trap-minimum search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrapMinimum {
    pub position: Vec3,
    pub b_min: f64,
    /// |grad |B|| at the reported point, T/m.
    pub residual_gradient: f64,
}

const GRAD_TOL: f64 = 1e-6; // T/m
const B_ZERO_TOL: f64 = 1e-9; // T; conical quadrupole zeros stall the gradient test

/// Locate a local minimum of |B| inside `region` by multi-start descent.
///
/// Converges either on |grad |B|| <= 1e-6 T/m (smooth minimum) or on
/// |B| <= 1e-9 T (field zero, where |B| is conical and the gradient test
/// cannot apply). Flat or monotone fields report [`Error::NoMinimumFound`].
pub fn find_trap_minimum<M: FieldModel>(model: &M, region: SearchBox) -> Result<TrapMinimum, Error> {
    let ext = region.hi - region.lo;
    let scale = ext.norm().max(f64::MIN_POSITIVE);
    let starts_per_axis = 4;
    let mut best: Option<TrapMinimum> = None;

    for ix in 0..starts_per_axis {
        for iy in 0..starts_per_axis {
            for iz in 0..starts_per_axis {
                let frac = |i: usize| (i as f64 + 0.5) / starts_per_axis as f64;
                let p0 = Vec3::new(
                    region.lo.x + ext.x * frac(ix),
                    region.lo.y + ext.y * frac(iy),
                    region.lo.z + ext.z * frac(iz),
                );
                if let Ok(candidate) = descend(model, p0, region, scale) {
                    best = match best {
                        Some(b) if b.b_min <= candidate.b_min => Some(b),
                        _ => Some(candidate),
                    };
                }
            }
        }
    }

    let candidate = best.ok_or(Error::NoMinimumFound)?;
    // Reject flat fields: a genuine minimum shows curvature on a probe ring.
    let probe = scale * 1e-2;
    let mut max_rise: f64 = 0.0;
    for d in [
        Vec3::new(probe, 0.0, 0.0),
        Vec3::new(-probe, 0.0, 0.0),
        Vec3::new(0.0, probe, 0.0),
        Vec3::new(0.0, -probe, 0.0),
        Vec3::new(0.0, 0.0, probe),
        Vec3::new(0.0, 0.0, -probe),
    ] {
        if let Ok(b) = model.field_norm(candidate.position + d) {
            max_rise = max_rise.max(b - candidate.b_min);
        }
    }
    if max_rise <= 1e-13 + 1e-9 * candidate.b_min {
        return Err(Error::NoMinimumFound);
    }
    Ok(candidate)
}

fn descend<M: FieldModel>(
    model: &M,
    start: Vec3,
    region: SearchBox,
    scale: f64,
) -> Result<TrapMinimum, Error> {
    let clamp = |p: Vec3| {
        Vec3::new(
            p.x.clamp(region.lo.x, region.hi.x),
            p.y.clamp(region.lo.y, region.hi.y),
            p.z.clamp(region.lo.z, region.hi.z),
        )
    };
    let mut p = start;
    let mut b = model.field_norm(p)?;
    let mut step = scale * 0.05;
    let min_step = scale * 1e-12;

    for _ in 0..20_000 {
        let g = model.grad_norm(p)?;
        let gn = g.norm();
        if gn <= GRAD_TOL || b <= B_ZERO_TOL {
            return Ok(TrapMinimum {
                position: p,
                b_min: b,
                residual_gradient: gn,
            });
        }
        let dir = g / gn;
        let mut moved = false;
        while step > min_step {
            let q = clamp(p - dir * step);
            match model.field_norm(q) {
                Ok(bq) if bq < b => {
                    p = q;
                    b = bq;
                    step *= 1.6;
                    moved = true;
                    break;
                }
                _ => step *= 0.5,
            }
        }
        if !moved {
            // Stalled: either a conical zero or a boundary point.
            let on_boundary = p.x <= region.lo.x + min_step
                || p.x >= region.hi.x - min_step
                || p.y <= region.lo.y + min_step
                || p.y >= region.hi.y - min_step
                || p.z <= region.lo.z + min_step
                || p.z >= region.hi.z - min_step;
            if b <= B_ZERO_TOL || (!on_boundary && step <= min_step * 2.0) {
                return Ok(TrapMinimum {
                    position: p,
                    b_min: b,
                    residual_gradient: gn,
                });
            }
            return Err(Error::NoMinimumFound);
        }
    }
    Err(Error::NoMinimumFound)
}

/// Relative Larmor mismatch accepted for resonant-slice points.
pub const SLICE_TOL: f64 = 1e-6;

/// Points on the isosurface gamma |B| = f_drive.
#[derive(Debug, Clone, PartialEq)]
pub struct ResonantSlice {
    /// |B| matching the drive, T.
    pub target_b: f64,
    /// Crossing points; ordered by axis coordinate in 1-D mode.
    pub points: Vec<Vec3>,
}

/// Where to look for slice crossings.
#[derive(Debug, Clone, PartialEq)]
pub enum SliceProbe {
    /// Scan a straight segment with `samples` initial intervals.
    Line { from: Vec3, to: Vec3, samples: usize },
    /// Scan the edges of a regular grid over a box.
    Grid { region: SearchBox, counts: [usize; 3] },
}

/// Locate resonant-slice points by sign change of gamma|B| - f_drive along
/// rays, refined by bisection. An empty slice is a valid result, not an
/// error.
pub fn resonant_slice<M: FieldModel>(
    model: &M,
    gamma: f64,
    f_drive: f64,
    probe: &SliceProbe,
) -> Result<ResonantSlice, Error> {
    if !(f_drive > 0.0) {
        return Err(Error::InvalidInput("drive frequency must be positive".into()));
    }
    let target_b = f_drive / gamma;
    let mut points = Vec::new();
    let mismatch = |p: Vec3| -> Result<f64, Error> { Ok(gamma * model.field_norm(p)? - f_drive) };

    let mut scan_segment = |from: Vec3, to: Vec3, samples: usize| -> Result<(), Error> {
        let mut prev_p = from;
        let mut prev_v = mismatch(from)?;
        for i in 1..=samples {
            let t = i as f64 / samples as f64;
            let p = from + (to - from) * t;
            let v = mismatch(p)?;
            if prev_v == 0.0 {
                points.push(prev_p);
            } else if prev_v * v < 0.0 {
                let (mut a, mut fa, mut b) = (prev_p, prev_v, p);
                for _ in 0..100 {
                    let mid = (a + b) * 0.5;
                    let fm = mismatch(mid)?;
                    if fm.abs() <= SLICE_TOL * f_drive {
                        a = mid;
                        break;
                    }
                    if fa * fm < 0.0 {
                        b = mid;
                    } else {
                        a = mid;
                        fa = fm;
                    }
                }
                points.push(a);
            }
            prev_p = p;
            prev_v = v;
        }
        Ok(())
    };

    match probe {
        SliceProbe::Line { from, to, samples } => scan_segment(*from, *to, (*samples).max(2))?,
        SliceProbe::Grid { region, counts } => {
            let ext = region.hi - region.lo;
            let [nx, ny, nz] = [counts[0].max(2), counts[1].max(2), counts[2].max(2)];
            // z-directed edges of the grid.
            for ix in 0..nx {
                for iy in 0..ny {
                    let x = region.lo.x + ext.x * ix as f64 / (nx - 1) as f64;
                    let y = region.lo.y + ext.y * iy as f64 / (ny - 1) as f64;
                    scan_segment(
                        Vec3::new(x, y, region.lo.z),
                        Vec3::new(x, y, region.hi.z),
                        nz * 4,
                    )?;
                }
            }
        }
    }

    Ok(ResonantSlice { target_b, points })
}

/// Axial bias component (along -axis of the tip moment) that places the
/// |B| minimum at `z_trap` on the magnet axis, plus the requested transverse
/// component. Returns the full bias vector in the lab frame, assuming the
/// magnet moment points along lab +z.
pub fn solve_bias_for_standoff(
    magnet: &Magnet,
    z_trap: f64,
    transverse: f64,
) -> Result<Vec3, Error> {
    let b_axis = magnetostatics::field_at(magnet, magnet.center + Vec3::new(0.0, 0.0, z_trap))?;
    Ok(Vec3::new(transverse, 0.0, -b_axis.z))
}

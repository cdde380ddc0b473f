//! Thermal-ensemble trajectory simulation: trap population versus time and
//! loss versus drive frequency.
//!
//! The default engine is one-dimensional along the tip axis, matching the
//! modeling level the device numbers support. Atoms move in the adiabatic
//! Zeeman potential of tip + bias, plus an optional harmonic term standing in
//! for the external chip-trap confinement that holds the cloud (the field
//! sources of that trap are not part of the model; only its stated average
//! frequency is). Slice crossings are detected by sign change of
//! gamma |B| - f_drive between steps and refined by bisection; each crossing
//! applies the Landau-Zener flip with the interpolated crossing velocity.
//!
//! Determinism: every atom owns a counter-based RNG stream keyed by
//! (seed, atom index), loss bookkeeping is integer counting over a fixed
//! output grid, and atoms are collected in index order, so results are
//! bit-identical for any worker count.

use rayon::prelude::*;
use serde::Serialize;

use crate::cantilever::{response_amplitude, DriveConfig, LoadedCantilever};
use crate::config::{RunConfig, SimMode};
use crate::constants::PhysicalConstants;
use crate::error::Error;
use crate::magnetostatics::FieldTable;
use crate::rng::{rng_stream, StreamRng};
use crate::spindynamics::{apply_crossing, CrossingEvent, LossMode};
use crate::trapmodel::{FieldModel, TrapConfig, F_TOTAL};
use crate::vec3::Vec3;

/// Engine parameters beyond the physical configuration.
#[derive(Debug, Clone)]
pub struct SimParams {
    /// Total simulated time, s.
    pub duration: f64,
    /// Integrator step, s.
    pub dt: f64,
    /// Population output grid spacing, s.
    pub output_interval: f64,
    /// Cantilever tip amplitude at the configured drive frequency, m.
    pub drive_amplitude: f64,
    /// Drive frequency, Hz.
    pub drive_frequency: f64,
    /// Multiplier on the Landau-Zener exponent (see config docs).
    pub zeeman_factor: f64,
    pub loss_mode: LossMode,
    /// One-body background lifetime, s; None disables background loss.
    pub background_lifetime: Option<f64>,
    /// External-trap harmonic frequency for the stretched state, Hz; 0 off.
    pub external_trap_frequency: f64,
    /// Use the field interpolation table instead of analytic evaluation.
    pub use_table: bool,
}

/// Per-atom phase-space state of the 1-D ensemble.
#[derive(Debug, Clone)]
pub struct EnsembleState {
    /// Axial positions, m (lab frame, along the tip axis).
    pub z: Vec<f64>,
    /// Axial velocities, m/s.
    pub v: Vec<f64>,
    /// Zeeman sublevels.
    pub m_f: Vec<i32>,
    pub alive: Vec<bool>,
    pub stream_ids: Vec<u64>,
    /// Global clock, s.
    pub time: f64,
    rngs: Vec<StreamRng>,
}

impl EnsembleState {
    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }
}

/// Metadata attached to every result.
#[derive(Debug, Clone, Serialize)]
pub struct RunMetadata {
    pub seed: u64,
    pub config_hash: String,
    pub atom_count: u64,
    pub drive_frequency: f64,
    pub v_ac: f64,
    pub drive_amplitude: f64,
}

/// Trapped population versus time.
#[derive(Debug, Clone, Serialize)]
pub struct RunResult {
    /// Output times, s.
    pub times: Vec<f64>,
    /// Fraction of the initial ensemble still trapped.
    pub trapped_fraction: Vec<f64>,
    /// Binomial standard error per point.
    pub stderr: Vec<f64>,
    pub metadata: RunMetadata,
}

/// Remaining population per drive frequency.
#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    /// Drive frequencies, Hz.
    pub frequencies: Vec<f64>,
    pub remaining_fraction: Vec<f64>,
    pub stderr: Vec<f64>,
    pub metadata: RunMetadata,
}

/// Assembled 1-D simulation: trap, cantilever, drive, domain, and engine
/// parameters, ready to sample and evolve ensembles.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub trap: TrapConfig,
    pub cantilever: LoadedCantilever,
    pub drive: DriveConfig,
    pub params: SimParams,
    /// Cloud temperature, K.
    pub temperature: f64,
    pub atom_count: u64,
    pub seed: u64,
    pub config_hash: String,
    pub mode: SimMode,
    /// Trap center on the axis (magnet-center origin), m.
    z_trap: f64,
    /// Atoms at or below this coordinate have hit the cantilever.
    z_surface: f64,
    z_lo: f64,
    z_hi: f64,
    table: Option<FieldTable>,
}

impl Simulation {
    pub fn from_run_config(cfg: &RunConfig) -> Result<Simulation, Error> {
        let trap = cfg.trap_config()?;
        let cantilever = cfg.loaded_cantilever()?;
        let drive = cfg.drive_config()?;
        let z_trap = cfg.standoff_from_center();
        let z_surface = trap.magnet.half_lengths.z + 0.5e-6;
        let hw = cfg.raw.simulation.domain_halfwidth_um * 1e-6;
        let z_lo = (z_trap - hw).max(z_surface);
        let z_hi = z_trap + hw;
        if z_lo >= z_hi {
            return Err(Error::validation(
                "simulation.domain_halfwidth_um",
                "domain collapses onto the magnet surface",
            ));
        }

        let params = SimParams {
            duration: cfg.duration,
            dt: cfg.dt,
            output_interval: cfg.raw.simulation.output_interval_ms * 1e-3,
            drive_amplitude: response_amplitude(&cantilever, &drive),
            drive_frequency: drive.drive_frequency,
            zeeman_factor: cfg.raw.spin.zeeman_factor,
            loss_mode: cfg.raw.spin.loss_mode,
            background_lifetime: Some(cfg.raw.spin.background_lifetime_ms * 1e-3),
            external_trap_frequency: cfg.raw.trap.external_trap_frequency_Hz,
            use_table: cfg.raw.simulation.use_field_table,
        };

        let mut sim = Simulation {
            trap,
            cantilever,
            drive,
            params,
            temperature: cfg.temperature,
            atom_count: cfg.atom_count,
            seed: cfg.seed,
            config_hash: cfg.config_hash.clone(),
            mode: cfg.raw.simulation.mode,
            z_trap,
            z_surface,
            z_lo,
            z_hi,
            table: None,
        };

        // Spin-following floor along the simulated axis.
        let floor = cfg.raw.trap.b_floor_uT * 1e-6;
        let mut b_min = f64::INFINITY;
        for i in 0..=400 {
            let z = z_lo + (z_hi - z_lo) * i as f64 / 400.0;
            b_min = b_min.min(sim.trap.field_norm(Vec3::new(0.0, 0.0, z))?);
        }
        if b_min < floor {
            return Err(Error::validation(
                "trap.b_floor_uT",
                format!(
                    "|B| reaches {:.3} uT on the axis, below the {:.3} uT floor",
                    b_min * 1e6,
                    floor * 1e6
                ),
            ));
        }

        if sim.params.use_table {
            let sp = cfg.raw.simulation.table_spacing_um * 1e-6;
            let lo = Vec3::new(-sp, -sp, z_lo - 2.0 * sp);
            let hi = Vec3::new(sp, sp, z_hi + 2.0 * sp);
            sim.table = Some(FieldTable::build(&sim.trap.magnet, lo, hi, sp)?);
        }
        Ok(sim)
    }

    /// Change the drive frequency and refresh the tip amplitude accordingly.
    pub fn set_drive_frequency(&mut self, f: f64) {
        self.drive.drive_frequency = f;
        self.params.drive_frequency = f;
        self.params.drive_amplitude = response_amplitude(&self.cantilever, &self.drive);
    }

    /// Disable the interpolation table (exact analytic fields).
    pub fn set_exact_fields(&mut self) {
        self.params.use_table = false;
        self.table = None;
    }

    /// |B| and d|B|/dz on the axis.
    #[inline]
    fn field_on_axis(&self, z: f64) -> (f64, f64) {
        let p = Vec3::new(0.0, 0.0, z);
        if let Some(table) = &self.table {
            if let Some((b_mag, g)) = table.sample(p) {
                let b = b_mag + self.trap.bias_field;
                let n = b.norm();
                if n == 0.0 {
                    return (0.0, 0.0);
                }
                let grad_z = (g[0][2] * b.x + g[1][2] * b.y + g[2][2] * b.z) / n;
                return (n, grad_z);
            }
        }
        let b = self
            .trap
            .field(p)
            .expect("axis point inside magnet body");
        let g = self
            .trap
            .gradient(p)
            .expect("axis point inside magnet body");
        let n = b.norm();
        if n == 0.0 {
            return (0.0, 0.0);
        }
        let grad_z = (g[0][2] * b.x + g[1][2] * b.y + g[2][2] * b.z) / n;
        (n, grad_z)
    }

    /// Adiabatic potential for sublevel m_f, J, including the external
    /// confinement term scaled by m_f / F.
    #[inline]
    fn potential(&self, z: f64, m_f: i32) -> f64 {
        let (b, _) = self.field_on_axis(z);
        let c = PhysicalConstants::DEFAULT;
        let zeeman = m_f as f64 * self.trap.g_f * c.mu_b * b;
        let omega = std::f64::consts::TAU * self.params.external_trap_frequency;
        let dz = z - self.z_trap;
        let ext = (m_f as f64 / F_TOTAL as f64)
            * 0.5
            * self.trap.atom_mass
            * omega
            * omega
            * dz
            * dz;
        zeeman + ext
    }

    /// Acceleration for sublevel m_f, m/s^2.
    #[inline]
    fn acceleration(&self, z: f64, m_f: i32) -> f64 {
        let (_, grad_z) = self.field_on_axis(z);
        let c = PhysicalConstants::DEFAULT;
        let f_zeeman = -(m_f as f64) * self.trap.g_f * c.mu_b * grad_z;
        let omega = std::f64::consts::TAU * self.params.external_trap_frequency;
        let f_ext =
            -(m_f as f64 / F_TOTAL as f64) * self.trap.atom_mass * omega * omega * (z - self.z_trap);
        (f_zeeman + f_ext) / self.trap.atom_mass
    }

    /// Boltzmann-sample the initial ensemble: positions by rejection against
    /// exp(-(U - U_min)/kT) in the stretched-state potential, velocities
    /// Maxwell-Boltzmann, all atoms in m_F = 2.
    pub fn sample_ensemble(&self) -> Result<EnsembleState, Error> {
        let n = self.atom_count as usize;
        let kt = PhysicalConstants::DEFAULT.k_b * self.temperature;

        // Locate the potential minimum over the domain.
        let scan = 2000;
        let mut u_min = f64::INFINITY;
        let mut z_min = self.z_lo;
        let mut min_idx = 0usize;
        for i in 0..=scan {
            let z = self.z_lo + (self.z_hi - self.z_lo) * i as f64 / scan as f64;
            let u = self.potential(z, F_TOTAL);
            if u < u_min {
                u_min = u;
                z_min = z;
                min_idx = i;
            }
        }
        if min_idx == 0 || min_idx == scan {
            return Err(Error::SamplingFailure(
                "potential has no interior minimum in the domain".into(),
            ));
        }

        let sigma_v = (kt / self.trap.atom_mass).sqrt();
        let mut state = EnsembleState {
            z: Vec::with_capacity(n),
            v: Vec::with_capacity(n),
            m_f: vec![F_TOTAL; n],
            alive: vec![true; n],
            stream_ids: (0..n as u64).collect(),
            time: 0.0,
            rngs: Vec::with_capacity(n),
        };

        for id in 0..n as u64 {
            let mut rng = rng_stream(self.seed, id);
            if self.temperature <= 0.0 {
                state.z.push(z_min);
                state.v.push(0.0);
                state.rngs.push(rng);
                continue;
            }
            let mut placed = false;
            for _ in 0..100_000 {
                let z = rng.uniform_in(self.z_lo, self.z_hi);
                let w = (-(self.potential(z, F_TOTAL) - u_min) / kt).exp();
                if rng.uniform() < w {
                    state.z.push(z);
                    placed = true;
                    break;
                }
            }
            if !placed {
                return Err(Error::SamplingFailure(format!(
                    "rejection sampling exhausted for atom {id}"
                )));
            }
            state.v.push(sigma_v * rng.normal());
            state.rngs.push(rng);
        }
        Ok(state)
    }

    /// Integrate the ensemble and record the trapped fraction on a fixed
    /// output grid.
    ///
    /// Lossless undriven runs with exact fields additionally verify symplectic
    /// energy conservation and abort if the drift exceeds 1%.
    pub fn evolve(&self, state: &EnsembleState) -> Result<RunResult, Error> {
        let n = state.len();
        let dt = self.params.dt;
        let steps = (self.params.duration / dt).round() as u64;
        let driven = self.params.drive_amplitude > 0.0;
        let undriven_lossless = !driven && self.params.background_lifetime.is_none();
        let check_energy = undriven_lossless && !self.params.use_table;

        let outcomes: Vec<(Option<f64>, f64)> = (0..n)
            .into_par_iter()
            .map(|i| self.evolve_atom(state, i, steps, check_energy))
            .collect();

        if check_energy {
            let max_drift = outcomes.iter().map(|(_, d)| *d).fold(0.0, f64::max);
            if max_drift > 0.01 {
                return Err(Error::Instability {
                    drift: max_drift,
                    limit: 0.01,
                });
            }
        }

        let n_out = (self.params.duration / self.params.output_interval).round() as usize;
        let mut times = Vec::with_capacity(n_out + 1);
        let mut fraction = Vec::with_capacity(n_out + 1);
        let mut stderr = Vec::with_capacity(n_out + 1);
        for k in 0..=n_out {
            let t = (k as f64 * self.params.output_interval).min(self.params.duration);
            let alive = outcomes
                .iter()
                .filter(|(loss, _)| loss.map_or(true, |tl| tl > t))
                .count();
            let p = alive as f64 / n as f64;
            times.push(t);
            fraction.push(p);
            stderr.push((p * (1.0 - p) / n as f64).sqrt());
        }

        Ok(RunResult {
            times,
            trapped_fraction: fraction,
            stderr,
            metadata: self.metadata(),
        })
    }

    /// Maximum relative per-atom energy drift over the configured duration,
    /// with the drive and all loss channels disabled and fields evaluated
    /// analytically. Validation helper for the symplectic integrator.
    pub fn energy_drift(&self, state: &EnsembleState) -> Result<f64, Error> {
        let mut sim = self.clone();
        sim.params.drive_amplitude = 0.0;
        sim.params.background_lifetime = None;
        sim.set_exact_fields();
        let steps = (sim.params.duration / sim.params.dt).round() as u64;
        let drifts: Vec<f64> = (0..state.len())
            .into_par_iter()
            .map(|i| sim.evolve_atom(state, i, steps, true).1)
            .collect();
        Ok(drifts.into_iter().fold(0.0, f64::max))
    }

    fn metadata(&self) -> RunMetadata {
        RunMetadata {
            seed: self.seed,
            config_hash: self.config_hash.clone(),
            atom_count: self.atom_count,
            drive_frequency: self.params.drive_frequency,
            v_ac: self.drive.v_ac,
            drive_amplitude: self.params.drive_amplitude,
        }
    }

    /// Returns (loss time if lost, relative energy drift when checked).
    fn evolve_atom(
        &self,
        state: &EnsembleState,
        i: usize,
        steps: u64,
        check_energy: bool,
    ) -> (Option<f64>, f64) {
        let dt = self.params.dt;
        let mut rng = state.rngs[i].clone();
        let mut z = state.z[i];
        let mut v = state.v[i];
        let mut m_f = state.m_f[i];
        if !state.alive[i] || m_f <= 0 {
            return (Some(0.0), 0.0);
        }

        let t_death = self
            .params
            .background_lifetime
            .map(|tau| rng.exponential(tau));

        let driven = self.params.drive_amplitude > 0.0;
        let gamma = self.trap.gamma;
        let f_drive = self.params.drive_frequency;
        let mut mismatch_prev = if driven {
            gamma * self.field_on_axis(z).0 - f_drive
        } else {
            0.0
        };

        let e0 = if check_energy {
            0.5 * self.trap.atom_mass * v * v + self.potential(z, m_f)
        } else {
            0.0
        };

        let mut a = self.acceleration(z, m_f);
        for step in 0..steps {
            let t = step as f64 * dt;
            if let Some(td) = t_death {
                if td <= t + dt {
                    return (Some(td.max(t)), 0.0);
                }
            }

            // Velocity Verlet.
            let z_new = z + v * dt + 0.5 * a * dt * dt;
            let a_new = self.acceleration(z_new, m_f);
            let v_new = v + 0.5 * (a + a_new) * dt;

            if z_new <= self.z_surface || z_new >= self.z_hi || z_new <= self.z_lo {
                return (Some(t + dt), 0.0);
            }

            if driven {
                let mismatch_new = gamma * self.field_on_axis(z_new).0 - f_drive;
                if mismatch_prev != 0.0 && mismatch_prev * mismatch_new < 0.0 {
                    let (z_cross, frac) = self.bisect_crossing(z, z_new, f_drive);
                    let v_cross = v + frac * (v_new - v);
                    let (_, grad_z) = self.field_on_axis(z_cross);
                    let event = CrossingEvent {
                        position: Vec3::new(0.0, 0.0, z_cross),
                        speed: v_cross.abs(),
                        gradient: grad_z.abs(),
                        drive_amplitude: self.params.drive_amplitude,
                        incoming_m_f: m_f,
                    };
                    m_f = apply_crossing(
                        m_f,
                        &event,
                        self.params.zeeman_factor,
                        self.params.loss_mode,
                        &mut rng,
                    );
                    if m_f <= 0 {
                        return (Some(t + frac * dt), 0.0);
                    }
                }
                mismatch_prev = mismatch_new;
            }

            z = z_new;
            v = v_new;
            a = a_new;
        }

        let drift = if check_energy {
            let e1 = 0.5 * self.trap.atom_mass * v * v + self.potential(z, m_f);
            let kt_floor = PhysicalConstants::DEFAULT.k_b * 1e-6;
            let scale = e0.abs().max(kt_floor);
            (e1 - e0).abs() / scale
        } else {
            0.0
        };
        (None, drift)
    }

    /// Refine the slice crossing between z_a and z_b; returns the crossing
    /// coordinate and its fraction along the step.
    fn bisect_crossing(&self, z_a: f64, z_b: f64, f_drive: f64) -> (f64, f64) {
        let gamma = self.trap.gamma;
        let mut a = z_a;
        let mut b = z_b;
        let mut fa = gamma * self.field_on_axis(a).0 - f_drive;
        for _ in 0..60 {
            if (b - a).abs() <= 1e-9 {
                break;
            }
            let mid = 0.5 * (a + b);
            let fm = gamma * self.field_on_axis(mid).0 - f_drive;
            if fa * fm <= 0.0 {
                b = mid;
            } else {
                a = mid;
                fa = fm;
            }
        }
        let z_cross = 0.5 * (a + b);
        let frac = if z_b == z_a {
            0.0
        } else {
            ((z_cross - z_a) / (z_b - z_a)).clamp(0.0, 1.0)
        };
        (z_cross, frac)
    }
}

/// Per-atom state of the 3-D ensemble.
#[derive(Debug, Clone)]
pub struct EnsembleState3D {
    pub pos: Vec<Vec3>,
    pub vel: Vec<Vec3>,
    pub m_f: Vec<i32>,
    pub alive: Vec<bool>,
    pub stream_ids: Vec<u64>,
    pub time: f64,
    rngs: Vec<StreamRng>,
}

impl Simulation {
    /// Potential in 3-D, J. Exact fields only; the interpolation table covers
    /// a thin box around the axis and is a 1-D acceleration.
    fn potential_3d(&self, p: Vec3, m_f: i32) -> f64 {
        let b = self.trap.field_norm(p).unwrap_or(f64::INFINITY);
        let c = PhysicalConstants::DEFAULT;
        let omega = std::f64::consts::TAU * self.params.external_trap_frequency;
        let d = p - Vec3::new(0.0, 0.0, self.z_trap);
        m_f as f64 * self.trap.g_f * c.mu_b * b
            + (m_f as f64 / F_TOTAL as f64)
                * 0.5
                * self.trap.atom_mass
                * omega
                * omega
                * d.norm_squared()
    }

    fn acceleration_3d(&self, p: Vec3, m_f: i32, gravity: bool) -> Vec3 {
        let c = PhysicalConstants::DEFAULT;
        let grad = self.trap.grad_norm(p).unwrap_or(Vec3::ZERO);
        let omega = std::f64::consts::TAU * self.params.external_trap_frequency;
        let d = p - Vec3::new(0.0, 0.0, self.z_trap);
        let mut f = grad * (-(m_f as f64) * self.trap.g_f * c.mu_b)
            + d * (-(m_f as f64 / F_TOTAL as f64) * self.trap.atom_mass * omega * omega);
        if gravity {
            f.y -= self.trap.atom_mass * 9.81;
        }
        f / self.trap.atom_mass
    }

    /// Boltzmann-sample a 3-D ensemble around the trap center.
    pub fn sample_ensemble_3d(&self, gravity: bool) -> Result<EnsembleState3D, Error> {
        let n = self.atom_count as usize;
        let kt = PhysicalConstants::DEFAULT.k_b * self.temperature;
        let center = Vec3::new(0.0, 0.0, self.z_trap);
        let hw = 0.5 * (self.z_hi - self.z_lo);
        let _ = gravity; // sampling ignores the mm-scale gravitational sag
        let u_min = self.potential_3d(center, F_TOTAL);
        let sigma_v = (kt / self.trap.atom_mass).sqrt();

        let mut state = EnsembleState3D {
            pos: Vec::with_capacity(n),
            vel: Vec::with_capacity(n),
            m_f: vec![F_TOTAL; n],
            alive: vec![true; n],
            stream_ids: (0..n as u64).collect(),
            time: 0.0,
            rngs: Vec::with_capacity(n),
        };
        for id in 0..n as u64 {
            let mut rng = rng_stream(self.seed, id);
            if self.temperature <= 0.0 {
                state.pos.push(center);
                state.vel.push(Vec3::ZERO);
                state.rngs.push(rng);
                continue;
            }
            let mut placed = false;
            for _ in 0..200_000 {
                let p = center
                    + Vec3::new(
                        rng.uniform_in(-hw, hw),
                        rng.uniform_in(-hw, hw),
                        rng.uniform_in(-hw, hw),
                    );
                if p.z <= self.z_surface || self.trap.magnet.contains(p) {
                    continue;
                }
                let w = (-(self.potential_3d(p, F_TOTAL) - u_min) / kt).exp();
                if rng.uniform() < w {
                    state.pos.push(p);
                    placed = true;
                    break;
                }
            }
            if !placed {
                return Err(Error::SamplingFailure(format!(
                    "3-D rejection sampling exhausted for atom {id}"
                )));
            }
            state.vel.push(Vec3::new(
                sigma_v * rng.normal(),
                sigma_v * rng.normal(),
                sigma_v * rng.normal(),
            ));
            state.rngs.push(rng);
        }
        Ok(state)
    }

    /// 3-D trajectory integration. Same crossing and loss machinery as the
    /// 1-D engine with the slice normal taken from grad|B|; held to
    /// qualitative accuracy.
    pub fn evolve_3d(&self, state: &EnsembleState3D, gravity: bool) -> Result<RunResult, Error> {
        let n = state.pos.len();
        let dt = self.params.dt;
        let steps = (self.params.duration / dt).round() as u64;
        let driven = self.params.drive_amplitude > 0.0;
        let gamma = self.trap.gamma;
        let f_drive = self.params.drive_frequency;
        let center = Vec3::new(0.0, 0.0, self.z_trap);
        let r_max = 0.5 * (self.z_hi - self.z_lo) * 3.0f64.sqrt();

        let outcomes: Vec<Option<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut rng = state.rngs[i].clone();
                let mut p = state.pos[i];
                let mut v = state.vel[i];
                let mut m_f = state.m_f[i];
                if !state.alive[i] || m_f <= 0 {
                    return Some(0.0);
                }
                let t_death = self
                    .params
                    .background_lifetime
                    .map(|tau| rng.exponential(tau));
                let mut mismatch_prev = if driven {
                    gamma * self.trap.field_norm(p).unwrap_or(0.0) - f_drive
                } else {
                    0.0
                };
                let mut a = self.acceleration_3d(p, m_f, gravity);
                for step in 0..steps {
                    let t = step as f64 * dt;
                    if let Some(td) = t_death {
                        if td <= t + dt {
                            return Some(td.max(t));
                        }
                    }
                    let p_new = p + v * dt + a * (0.5 * dt * dt);
                    if p_new.z <= self.z_surface
                        || self.trap.magnet.contains(p_new)
                        || (p_new - center).norm() > r_max
                    {
                        return Some(t + dt);
                    }
                    let a_new = self.acceleration_3d(p_new, m_f, gravity);
                    let v_new = v + (a + a_new) * (0.5 * dt);

                    if driven {
                        let mismatch_new =
                            gamma * self.trap.field_norm(p_new).unwrap_or(0.0) - f_drive;
                        if mismatch_prev != 0.0 && mismatch_prev * mismatch_new < 0.0 {
                            // Linear interpolation of the crossing point.
                            let frac = mismatch_prev / (mismatch_prev - mismatch_new);
                            let p_cross = p + (p_new - p) * frac;
                            let v_cross = v + (v_new - v) * frac;
                            let grad = self.trap.grad_norm(p_cross).unwrap_or(Vec3::ZERO);
                            let b_prime = grad.norm();
                            let normal = grad.normalized();
                            let event = CrossingEvent {
                                position: p_cross,
                                speed: v_cross.dot(normal).abs(),
                                gradient: b_prime,
                                drive_amplitude: self.params.drive_amplitude,
                                incoming_m_f: m_f,
                            };
                            m_f = apply_crossing(
                                m_f,
                                &event,
                                self.params.zeeman_factor,
                                self.params.loss_mode,
                                &mut rng,
                            );
                            if m_f <= 0 {
                                return Some(t + frac * dt);
                            }
                        }
                        mismatch_prev = mismatch_new;
                    }
                    p = p_new;
                    v = v_new;
                    a = a_new;
                }
                None
            })
            .collect();

        let n_out = (self.params.duration / self.params.output_interval).round() as usize;
        let mut times = Vec::with_capacity(n_out + 1);
        let mut fraction = Vec::with_capacity(n_out + 1);
        let mut stderr = Vec::with_capacity(n_out + 1);
        for k in 0..=n_out {
            let t = (k as f64 * self.params.output_interval).min(self.params.duration);
            let alive = outcomes
                .iter()
                .filter(|loss| loss.map_or(true, |tl| tl > t))
                .count();
            let frac = alive as f64 / n as f64;
            times.push(t);
            fraction.push(frac);
            stderr.push((frac * (1.0 - frac) / n as f64).sqrt());
        }
        Ok(RunResult {
            times,
            trapped_fraction: fraction,
            stderr,
            metadata: self.metadata(),
        })
    }
}

/// Run one decay curve from a config: sample the ensemble and evolve it,
/// honoring the configured simulation mode.
pub fn decay_curve(cfg: &RunConfig) -> Result<RunResult, Error> {
    let sim = Simulation::from_run_config(cfg)?;
    match sim.mode {
        SimMode::OneD => {
            let state = sim.sample_ensemble()?;
            sim.evolve(&state)
        }
        SimMode::ThreeD => {
            let gravity = cfg.raw.trap.gravity;
            let state = sim.sample_ensemble_3d(gravity)?;
            sim.evolve_3d(&state, gravity)
        }
    }
}

/// Remaining population after `t_interaction` at each drive frequency.
/// Every point runs an independent ensemble with a seed derived from the
/// master seed and the point index.
pub fn frequency_sweep(
    cfg: &RunConfig,
    frequencies: &[f64],
    t_interaction: f64,
) -> Result<SweepResult, Error> {
    if frequencies.is_empty() {
        return Err(Error::InvalidInput("frequency list must not be empty".into()));
    }
    let base = Simulation::from_run_config(cfg)?;
    let mut remaining = Vec::with_capacity(frequencies.len());
    let mut stderr = Vec::with_capacity(frequencies.len());
    for (idx, &f) in frequencies.iter().enumerate() {
        let mut sim = base.clone();
        sim.set_drive_frequency(f);
        sim.params.duration = t_interaction;
        sim.seed = rng_stream(cfg.seed, 0x5EED_0000 + idx as u64).next_u64();
        let state = sim.sample_ensemble()?;
        let result = sim.evolve(&state)?;
        remaining.push(*result.trapped_fraction.last().unwrap());
        stderr.push(*result.stderr.last().unwrap());
    }
    Ok(SweepResult {
        frequencies: frequencies.to_vec(),
        remaining_fraction: remaining,
        stderr,
        metadata: base.metadata(),
    })
}

impl RunResult {
    /// Decay-curve CSV with metadata lines.
    pub fn to_csv(&self) -> String {
        let mut doc = crate::output::CsvDoc::new("decay-curve");
        doc.meta("schema_version", crate::config::SCHEMA_VERSION)
            .meta("seed", self.metadata.seed)
            .meta("config_hash", &self.metadata.config_hash)
            .meta("atom_count", self.metadata.atom_count)
            .meta("drive_frequency_hz", format!("{:.6e}", self.metadata.drive_frequency))
            .meta("v_ac_V", format!("{:.3}", self.metadata.v_ac))
            .meta(
                "drive_amplitude_m",
                format!("{:.6e}", self.metadata.drive_amplitude),
            )
            .header(&["t_s", "trapped_fraction", "stderr"]);
        for i in 0..self.times.len() {
            doc.row(&[self.times[i], self.trapped_fraction[i], self.stderr[i]]);
        }
        doc.finish()
    }
}

impl SweepResult {
    /// Loss-spectrum CSV with metadata lines.
    pub fn to_csv(&self) -> String {
        let mut doc = crate::output::CsvDoc::new("loss-spectrum");
        doc.meta("schema_version", crate::config::SCHEMA_VERSION)
            .meta("seed", self.metadata.seed)
            .meta("config_hash", &self.metadata.config_hash)
            .meta("atom_count", self.metadata.atom_count)
            .meta("v_ac_V", format!("{:.3}", self.metadata.v_ac))
            .header(&["f_drive_Hz", "remaining_fraction", "stderr"]);
        for i in 0..self.frequencies.len() {
            doc.row(&[
                self.frequencies[i],
                self.remaining_fraction[i],
                self.stderr[i],
            ]);
        }
        doc.finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    pub(crate) fn test_config(atoms: u64, duration_ms: f64, extra: &str) -> RunConfig {
        let text = format!(
            r#"{{
                "schema_version": 1,
                "seed": 42,
                "atom_count": {atoms},
                "temperature_uK": 100.0,
                "duration_ms": {duration_ms},
                "dt_us": 1.0{extra}
            }}"#
        );
        parse_config(&text, "test").unwrap()
    }

    #[test]
    fn ensemble_equipartition() {
        let cfg = test_config(100_000, 1.0, "");
        let sim = Simulation::from_run_config(&cfg).unwrap();
        let state = sim.sample_ensemble().unwrap();
        let kt = PhysicalConstants::DEFAULT.k_b * 1e-4;
        let v2: f64 = state.v.iter().map(|v| v * v).sum::<f64>() / state.len() as f64;
        let expected = kt / PhysicalConstants::DEFAULT.m_rb87;
        assert!(
            (v2 - expected).abs() / expected < 0.02,
            "<v^2> = {v2:.3e}, expected {expected:.3e}"
        );
    }

    #[test]
    fn zero_temperature_collapses_to_minimum() {
        let text = r#"{
            "schema_version": 1,
            "seed": 1,
            "atom_count": 10,
            "temperature_uK": 0.0,
            "duration_ms": 1.0,
            "dt_us": 1.0
        }"#;
        let cfg = parse_config(text, "test").unwrap();
        let sim = Simulation::from_run_config(&cfg).unwrap();
        let state = sim.sample_ensemble().unwrap();
        for (&z, &v) in state.z.iter().zip(&state.v) {
            assert_eq!(v, 0.0);
            assert!((z - state.z[0]).abs() < 1e-12);
        }
        // All at the trap standoff, within the scan resolution.
        assert!((state.z[0] - 142.5e-6).abs() < 1e-6, "z = {}", state.z[0]);
    }

    #[test]
    fn fixed_seed_reproduces_ensemble() {
        let cfg = test_config(500, 1.0, "");
        let sim = Simulation::from_run_config(&cfg).unwrap();
        let a = sim.sample_ensemble().unwrap();
        let b = sim.sample_ensemble().unwrap();
        assert_eq!(a.z, b.z);
        assert_eq!(a.v, b.v);
    }

    #[test]
    fn undriven_lossless_conserves_energy() {
        // 100 ms, exact fields, no drive, no background.
        let extra = r#",
            "drive": {"v_dc_V": 40.0, "v_ac_V": 0.0, "gap_um": 9.0, "area_fraction": 1.34},
            "simulation": {"domain_halfwidth_um": 60.0, "use_field_table": false,
                           "table_spacing_um": 1.0, "output_interval_ms": 10.0, "mode": "one_d"}"#;
        let cfg = test_config(64, 100.0, extra);
        let mut sim = Simulation::from_run_config(&cfg).unwrap();
        sim.params.background_lifetime = None;
        let state = sim.sample_ensemble().unwrap();
        let kt = PhysicalConstants::DEFAULT.k_b * 1e-4;
        let mut max_drift = 0.0f64;
        for i in 0..state.len() {
            let e0 = 0.5 * PhysicalConstants::DEFAULT.m_rb87 * state.v[i] * state.v[i]
                + sim.potential(state.z[i], 2);
            let (loss, drift) = sim.evolve_atom(&state, i, 100_000, true);
            assert!(loss.is_none(), "atom {i} lost (E0/kT = {})", e0 / kt);
            max_drift = max_drift.max(drift);
        }
        assert!(max_drift <= 1e-4, "max drift = {max_drift:.2e}");
    }

    #[test]
    fn trapped_fraction_monotone_and_bounded() {
        let cfg = test_config(300, 20.0, "");
        let sim = Simulation::from_run_config(&cfg).unwrap();
        let state = sim.sample_ensemble().unwrap();
        let result = sim.evolve(&state).unwrap();
        assert_eq!(result.trapped_fraction[0], 1.0);
        for pair in result.trapped_fraction.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-12);
            assert!((0.0..=1.0).contains(&pair[1]));
        }
    }

    #[test]
    fn driven_loses_more_than_undriven() {
        let cfg = test_config(400, 30.0, "");
        let sim = Simulation::from_run_config(&cfg).unwrap();
        let state = sim.sample_ensemble().unwrap();
        let driven = sim.evolve(&state).unwrap();

        let off = test_config(
            400,
            30.0,
            r#",
            "drive": {"v_dc_V": 40.0, "v_ac_V": 0.0, "gap_um": 9.0, "area_fraction": 1.34}"#,
        );
        let sim_off = Simulation::from_run_config(&off).unwrap();
        let state_off = sim_off.sample_ensemble().unwrap();
        let undriven = sim_off.evolve(&state_off).unwrap();

        assert!(
            driven.trapped_fraction.last().unwrap() + 0.02
                < *undriven.trapped_fraction.last().unwrap(),
            "driven {:?} vs undriven {:?}",
            driven.trapped_fraction.last(),
            undriven.trapped_fraction.last()
        );
    }

    #[test]
    fn table_and_exact_agree_on_loss_statistics() {
        let cfg = test_config(300, 20.0, "");
        let sim_table = Simulation::from_run_config(&cfg).unwrap();
        let mut sim_exact = Simulation::from_run_config(&cfg).unwrap();
        sim_exact.set_exact_fields();
        let state = sim_table.sample_ensemble().unwrap();
        let state_exact = sim_exact.sample_ensemble().unwrap();
        let a = sim_table.evolve(&state).unwrap();
        let b = sim_exact.evolve(&state_exact).unwrap();
        let fa = a.trapped_fraction.last().unwrap();
        let fb = b.trapped_fraction.last().unwrap();
        assert!((fa - fb).abs() < 0.08, "table {fa} vs exact {fb}");
    }

    #[test]
    fn three_d_mode_qualitative() {
        let extra = r#",
            "simulation": {"domain_halfwidth_um": 45.0, "use_field_table": false,
                           "table_spacing_um": 1.0, "output_interval_ms": 2.0,
                           "mode": "three_d"}"#;
        let cfg = test_config(150, 16.0, extra);
        let sim = Simulation::from_run_config(&cfg).unwrap();
        let state = sim.sample_ensemble_3d(false).unwrap();
        let driven = sim.evolve_3d(&state, false).unwrap();

        let mut sim_off = sim.clone();
        sim_off.drive.v_ac = 0.0;
        sim_off.params.drive_amplitude = 0.0;
        let undriven = sim_off.evolve_3d(&state, false).unwrap();

        assert!(
            driven.trapped_fraction.last().unwrap() <= undriven.trapped_fraction.last().unwrap(),
            "driven {:?} vs undriven {:?}",
            driven.trapped_fraction.last(),
            undriven.trapped_fraction.last()
        );
        for pair in driven.trapped_fraction.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-12);
        }
    }

    #[test]
    fn csv_output_deterministic() {
        let cfg = test_config(100, 5.0, "");
        let sim = Simulation::from_run_config(&cfg).unwrap();
        let r1 = sim.evolve(&sim.sample_ensemble().unwrap()).unwrap();
        let r2 = sim.evolve(&sim.sample_ensemble().unwrap()).unwrap();
        assert_eq!(r1.to_csv(), r2.to_csv());
        assert!(r1.to_csv().contains("config_hash"));
    }
}

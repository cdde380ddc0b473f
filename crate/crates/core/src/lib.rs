//! Deterministic simulator for cold atoms magnetically trapped near a driven
//! micro-cantilever with a ferromagnetic tip.
//!
//! The crate covers the full chain from device parameters to observables:
//! analytic magnetostatics of the tip magnet, cantilever mechanics and
//! capacitive drive, the composite magnetic trap and its resonant slice,
//! Landau-Zener spin-flip physics, thermal-ensemble Monte Carlo trap-loss
//! simulation, curve fitting for the resulting spectra and decay curves, and
//! thermal-noise-limited spin-detection budgets.
//!
//! All internal quantities are SI. Configuration files accept human units
//! through explicitly suffixed keys (`standoff_um`, `temperature_uK`, ...);
//! see [`config`].

pub mod analysis;
pub mod cantilever;
pub mod config;
pub mod constants;
pub mod detection;
pub mod error;
pub mod magnetostatics;
pub mod montecarlo;
pub mod output;
pub mod rng;
pub mod spindynamics;
pub mod trapmodel;
pub mod vec3;

pub use error::Error;
pub use vec3::Vec3;

//! Closed-form Landau-Zener probability against direct integration of the
//! two-level Schroedinger equation, over three decades of exponent.

use atomtip_core::spindynamics::{lz_oracle, lz_probability, CrossingEvent, LzSweepParams};
use atomtip_core::vec3::Vec3;

fn event(grad: f64, dz: f64, v: f64) -> CrossingEvent {
    CrossingEvent {
        position: Vec3::ZERO,
        speed: v,
        gradient: grad,
        drive_amplitude: dz,
        incoming_m_f: 2,
    }
}

#[test]
fn closed_form_matches_schroedinger_over_three_decades() {
    // Exponents from 1e-3 to 1: dz scaled so the closed-form exponent sweeps
    // the full range at fixed gradient and speed.
    let gamma = 7e9;
    let (grad, v) = (10.0, 0.098);
    // Baseline amplitude whose exponent is ~8.1e-3.
    let dz0 = 34e-9;
    let params = LzSweepParams::default();
    for scale in [0.35, 0.6, 1.0, 2.0, 4.0, 7.0, 11.0] {
        let ev = event(grad, dz0 * scale, v);
        let p_closed = lz_probability(&ev);
        let p_oracle = lz_oracle(&ev, gamma, &params).unwrap();
        let rel = (p_oracle - p_closed).abs() / p_closed;
        assert!(
            rel < 0.05,
            "scale {scale}: closed {p_closed:.4e} vs oracle {p_oracle:.4e} (rel {rel:.3})"
        );
    }
}

#[test]
fn exponent_decades_cover_intended_range() {
    let (grad, v) = (10.0, 0.098);
    let p_lo = lz_probability(&event(grad, 34e-9 * 0.35, v));
    let p_hi = lz_probability(&event(grad, 34e-9 * 11.0, v));
    assert!(p_lo < 1.1e-3, "low end {p_lo:.2e}");
    assert!(p_hi > 0.6, "high end {p_hi:.2e}");
}

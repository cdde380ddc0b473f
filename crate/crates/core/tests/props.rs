//! Property tests for the exact scaling laws and bounds the physics
//! guarantees.

use atomtip_core::cantilever::{loaded_resonance, spring_constant, Beam};
use atomtip_core::config::parse_config;
use atomtip_core::constants::CONIMNP_DENSITY;
use atomtip_core::detection::min_force;
use atomtip_core::magnetostatics::{Magnet, Rotation};
use atomtip_core::rng::rng_stream;
use atomtip_core::spindynamics::{lz_probability, CrossingEvent};
use atomtip_core::vec3::Vec3;
use proptest::prelude::*;

fn beam(l: f64, w: f64, h: f64, e: f64) -> Beam {
    Beam::new(l, w, h, e, 2330.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn spring_constant_scaling_laws(
        l in 20e-6..500e-6f64,
        w in 1e-6..100e-6f64,
        h in 0.1e-6..20e-6f64,
        e in 50e9..400e9f64,
        c in 1.1..4.0f64,
    ) {
        let k = spring_constant(&beam(l, w, h, e));
        // Linear in E and w, cubic in h/l.
        prop_assert!((spring_constant(&beam(l, w, h, c * e)) / k - c).abs() < 1e-12);
        prop_assert!((spring_constant(&beam(l, c * w, h, e)) / k - c).abs() < 1e-12);
        prop_assert!((spring_constant(&beam(l, w, c * h, e)) / k - c * c * c).abs() < 1e-9);
        prop_assert!((spring_constant(&beam(c * l, w, h, e)) / k - 1.0 / (c * c * c)).abs() < 1e-9);
    }

    #[test]
    fn resonance_monotone_in_load(
        mag in 1e3..1e6f64,
        density in 2000.0..12000.0f64,
    ) {
        let magnet = Magnet::new(
            Vec3::new(30e-6, 4.5e-6, 42.5e-6),
            mag,
            Vec3::ZERO,
            Rotation::IDENTITY,
        ).unwrap();
        let mut c = atomtip_core::cantilever::LoadedCantilever::new(
            beam(130e-6, 60e-6, 25e-6, 169e9), magnet, density, 1e4,
        ).unwrap();
        let f_light = loaded_resonance(&c);
        c.magnet_density = density * 2.0;
        prop_assert!(loaded_resonance(&c) < f_light);
    }

    #[test]
    fn min_force_exact_scalings(
        t in 0.1..400.0f64,
        b in 0.01..10.0f64,
        q in 1e3..1e6f64,
        c in 1.5..9.0f64,
    ) {
        let magnet = Magnet::new(
            Vec3::new(0.45e-6, 0.35e-6, 0.55e-6), 2e5, Vec3::ZERO, Rotation::IDENTITY,
        ).unwrap();
        let mk = |qf: f64| atomtip_core::cantilever::LoadedCantilever::new(
            Beam::new(50e-6, 1.1e-6, 0.2e-6, 150e9, 3000.0).unwrap(),
            magnet, CONIMNP_DENSITY, qf,
        ).unwrap();
        let base = min_force(&mk(q), t, b);
        prop_assert!((min_force(&mk(q), c * t, b) / base - c.sqrt()).abs() < 1e-9);
        prop_assert!((min_force(&mk(q), t, c * b) / base - c.sqrt()).abs() < 1e-9);
        prop_assert!((min_force(&mk(c * q), t, b) / base - 1.0 / c.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn lz_probability_bounded_and_monotone(
        grad in 0.1..100.0f64,
        dz in 0.0..200e-9f64,
        v in 1e-4..1.0f64,
        c in 1.01..5.0f64,
    ) {
        let ev = |g: f64, d: f64, s: f64| CrossingEvent {
            position: Vec3::ZERO,
            speed: s,
            gradient: g,
            drive_amplitude: d,
            incoming_m_f: 2,
        };
        let p = lz_probability(&ev(grad, dz, v));
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!(lz_probability(&ev(c * grad, dz, v)) >= p);
        prop_assert!(lz_probability(&ev(grad, c * dz, v)) >= p);
        prop_assert!(lz_probability(&ev(grad, dz, c * v)) <= p);
    }

    #[test]
    fn rng_streams_reproduce_and_separate(seed in any::<u64>(), id in 0u64..1000) {
        let mut a = rng_stream(seed, id);
        let mut b = rng_stream(seed, id);
        for _ in 0..32 {
            prop_assert_eq!(a.next_u64(), b.next_u64());
        }
        let mut c = rng_stream(seed, id + 1);
        let va: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let vc: Vec<u64> = (0..8).map(|_| c.next_u64()).collect();
        prop_assert_ne!(va, vc);
    }

    #[test]
    fn config_round_trip_equality(
        seed in any::<u64>(),
        atoms in 1u64..100_000,
        temp in 0.1..500.0f64,
        standoff in 50.0..400.0f64,
    ) {
        let text = format!(
            r#"{{
                "schema_version": 1,
                "seed": {seed},
                "atom_count": {atoms},
                "temperature_uK": {temp},
                "duration_ms": 10.0,
                "dt_us": 1.0,
                "trap": {{"standoff_um": {standoff}, "standoff_from": "face",
                         "bias_transverse_uT": 130.0, "b_floor_uT": 1.0,
                         "external_trap_frequency_Hz": 1000.0}}
            }}"#
        );
        let cfg = parse_config(&text, "prop").unwrap();
        let text2 = serde_json::to_string(&cfg.raw).unwrap();
        let cfg2 = parse_config(&text2, "prop2").unwrap();
        prop_assert_eq!(cfg.raw, cfg2.raw);
    }
}

//! Bit-exact reproducibility of the Monte Carlo under different worker
//! counts, and sqrt(N) scaling of the population standard error.

use atomtip_core::config::parse_config;
use atomtip_core::montecarlo::Simulation;

fn config(atoms: u64, seed: u64) -> atomtip_core::config::RunConfig {
    let text = format!(
        r#"{{
        "schema_version": 1,
        "seed": {seed},
        "atom_count": {atoms},
        "temperature_uK": 100.0,
        "duration_ms": 15.0,
        "dt_us": 1.0
    }}"#
    );
    parse_config(&text, "determinism").unwrap()
}

#[test]
fn identical_results_across_thread_counts() {
    let cfg = config(400, 42);
    let mut outputs = Vec::new();
    for threads in [1usize, 2, 7] {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        let csv = pool.install(|| {
            let sim = Simulation::from_run_config(&cfg).unwrap();
            let state = sim.sample_ensemble().unwrap();
            sim.evolve(&state).unwrap().to_csv()
        });
        outputs.push(csv);
    }
    assert_eq!(outputs[0], outputs[1], "1 vs 2 threads differ");
    assert_eq!(outputs[0], outputs[2], "1 vs 7 threads differ");
}

#[test]
fn different_seeds_differ() {
    let a = {
        let sim = Simulation::from_run_config(&config(300, 1)).unwrap();
        sim.evolve(&sim.sample_ensemble().unwrap()).unwrap()
    };
    let b = {
        let sim = Simulation::from_run_config(&config(300, 2)).unwrap();
        sim.evolve(&sim.sample_ensemble().unwrap()).unwrap()
    };
    assert_ne!(a.trapped_fraction, b.trapped_fraction);
}

#[test]
fn doubling_atoms_halves_standard_error() {
    // Empirical spread of the final trapped fraction over independent seeds,
    // with disjoint seed ranges so the two sets share no atom streams.
    let spread = |atoms: u64, seed0: u64| -> f64 {
        let finals: Vec<f64> = (0..48)
            .map(|seed| {
                let sim = Simulation::from_run_config(&config(atoms, seed0 + seed)).unwrap();
                let state = sim.sample_ensemble().unwrap();
                *sim.evolve(&state).unwrap().trapped_fraction.last().unwrap()
            })
            .collect();
        let mean = finals.iter().sum::<f64>() / finals.len() as f64;
        (finals.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (finals.len() - 1) as f64).sqrt()
    };
    let s1 = spread(250, 1000);
    let s4 = spread(1000, 5000);
    // Quadrupling the ensemble should halve the spread; allow statistical
    // slack for 48 samples (sigma of the ratio is ~15%).
    let ratio = s1 / s4;
    assert!(
        (1.4..2.8).contains(&ratio),
        "spread ratio {ratio:.2} (s250 = {s1:.4}, s1000 = {s4:.4})"
    );
}

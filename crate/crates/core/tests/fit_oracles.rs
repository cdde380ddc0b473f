//! Bootstrap resampling as an independent check of the covariance-based fit
//! uncertainties.

use atomtip_core::analysis::{fit_exponential, fit_lorentzian, FitOptions, FitPoint};
use atomtip_core::rng::rng_stream;

fn bootstrap_sigma<F>(points: &[FitPoint], fit_param: F, resamples: usize) -> f64
where
    F: Fn(&[FitPoint]) -> Option<f64>,
{
    let mut rng = rng_stream(99, 0);
    let mut values = Vec::with_capacity(resamples);
    while values.len() < resamples {
        let sample: Vec<FitPoint> = (0..points.len())
            .map(|_| points[(rng.uniform() * points.len() as f64) as usize])
            .collect();
        if let Some(v) = fit_param(&sample) {
            values.push(v);
        }
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

#[test]
fn lorentzian_width_uncertainty_vs_bootstrap() {
    // Well-conditioned synthetic data with deterministic noise.
    let mut rng = rng_stream(5, 0);
    let (a, x0, g, c) = (1.0, 0.0, 1.0, 0.2);
    let points: Vec<FitPoint> = (0..61)
        .map(|i| {
            let x = -3.0 + 6.0 * i as f64 / 60.0;
            let hw2: f64 = 0.25 * g * g;
            let y = a * hw2 / ((x - x0) * (x - x0) + hw2) + c + 0.02 * rng.normal();
            FitPoint::new(x, y)
        })
        .collect();
    let fit = fit_lorentzian(&points, &FitOptions::default()).unwrap();
    assert!(fit.converged);
    let sigma_cov = fit.uncertainties[2];
    let sigma_boot = bootstrap_sigma(
        &points,
        |pts| {
            fit_lorentzian(pts, &FitOptions::default())
                .ok()
                .filter(|f| f.converged)
                .map(|f| f.width())
        },
        200,
    );
    let ratio = sigma_boot / sigma_cov;
    assert!(
        (0.5..2.0).contains(&ratio),
        "bootstrap {sigma_boot:.3e} vs covariance {sigma_cov:.3e}"
    );
}

#[test]
fn exponential_lifetime_uncertainty_vs_bootstrap() {
    let mut rng = rng_stream(6, 0);
    let (a, tau, c) = (1.0, 21e-3, 0.1);
    let points: Vec<FitPoint> = (0..41)
        .map(|i| {
            let x = i as f64 * 2.5e-3;
            let y = a * (-x / tau).exp() + c + 0.02 * rng.normal();
            FitPoint::new(x, y)
        })
        .collect();
    let fit = fit_exponential(&points, &FitOptions::default()).unwrap();
    assert!(fit.converged);
    let sigma_cov = fit.lifetime_sigma();
    let sigma_boot = bootstrap_sigma(
        &points,
        |pts| {
            fit_exponential(pts, &FitOptions::default())
                .ok()
                .filter(|f| f.converged)
                .map(|f| f.lifetime())
        },
        200,
    );
    let ratio = sigma_boot / sigma_cov;
    assert!(
        (0.5..2.0).contains(&ratio),
        "bootstrap {sigma_boot:.3e} vs covariance {sigma_cov:.3e}"
    );
}

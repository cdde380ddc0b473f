//! Least-squares fits for the two lineshapes this project needs: a
//! Lorentzian peak/dip and an exponential decay. Damped Gauss-Newton
//! (Levenberg-Marquardt) with analytic Jacobians and multi-start
//! initialization; parameter uncertainties from the covariance of the
//! linearized problem.

use serde::Serialize;

use crate::error::Error;

/// One sample: abscissa, ordinate, optional 1-sigma weight.
#[derive(Debug, Clone, Copy)]
pub struct FitPoint {
    pub x: f64,
    pub y: f64,
    pub sigma: Option<f64>,
}

impl FitPoint {
    pub fn new(x: f64, y: f64) -> FitPoint {
        FitPoint { x, y, sigma: None }
    }

    pub fn weighted(x: f64, y: f64, sigma: f64) -> FitPoint {
        FitPoint {
            x,
            y,
            sigma: Some(sigma),
        }
    }
}

/// Fitted model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FitModel {
    /// y = A (G/2)^2 / ((x - x0)^2 + (G/2)^2) + C
    Lorentzian,
    /// y = A exp(-x / tau) + C
    Exponential,
}

/// Result of a fit. Parameter order depends on the model:
/// Lorentzian: [A, x0, Gamma, C]; exponential: [A, tau, C].
#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub model: FitModel,
    pub parameters: Vec<f64>,
    pub uncertainties: Vec<f64>,
    /// Sqrt of the weighted sum of squared residuals at the solution.
    pub residual_norm: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl FitResult {
    pub fn amplitude(&self) -> f64 {
        self.parameters[0]
    }

    pub fn center(&self) -> f64 {
        assert_eq!(self.model, FitModel::Lorentzian);
        self.parameters[1]
    }

    pub fn width(&self) -> f64 {
        assert_eq!(self.model, FitModel::Lorentzian);
        self.parameters[2]
    }

    pub fn lifetime(&self) -> f64 {
        assert_eq!(self.model, FitModel::Exponential);
        self.parameters[1]
    }

    pub fn lifetime_sigma(&self) -> f64 {
        assert_eq!(self.model, FitModel::Exponential);
        self.uncertainties[1]
    }

    pub fn offset(&self) -> f64 {
        *self.parameters.last().unwrap()
    }
}

/// Options shared by both fits.
#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    /// Fix the additive offset to this value instead of floating it.
    pub fix_offset: Option<f64>,
    pub max_iterations: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            fix_offset: None,
            max_iterations: 200,
        }
    }
}

fn lorentzian(x: f64, p: &[f64]) -> f64 {
    let (a, x0, g, c) = (p[0], p[1], p[2], p[3]);
    let hw2 = 0.25 * g * g;
    a * hw2 / ((x - x0).powi(2) + hw2) + c
}

fn lorentzian_jac(x: f64, p: &[f64], out: &mut [f64]) {
    let (a, x0, g) = (p[0], p[1], p[2]);
    let hw2 = 0.25 * g * g;
    let d2 = (x - x0).powi(2);
    let den = d2 + hw2;
    out[0] = hw2 / den;
    out[1] = a * hw2 * 2.0 * (x - x0) / (den * den);
    out[2] = a * 0.5 * g * d2 / (den * den);
    out[3] = 1.0;
}

fn exponential(x: f64, p: &[f64]) -> f64 {
    let (a, tau, c) = (p[0], p[1], p[2]);
    a * (-x / tau).exp() + c
}

fn exponential_jac(x: f64, p: &[f64], out: &mut [f64]) {
    let (a, tau) = (p[0], p[1]);
    let e = (-x / tau).exp();
    out[0] = e;
    out[1] = a * e * x / (tau * tau);
    out[2] = 1.0;
}

/// Fit y = A (G/2)^2 / ((x-x0)^2 + (G/2)^2) + C.
///
/// Needs at least 5 points. Handles dips (A < 0) as well as peaks. On
/// non-convergence the best point found is returned with `converged = false`.
pub fn fit_lorentzian(points: &[FitPoint], opts: &FitOptions) -> Result<FitResult, Error> {
    if points.len() < 5 {
        return Err(Error::InvalidInput(
            "lorentzian fit needs at least 5 points".into(),
        ));
    }
    check_finite(points)?;
    let (ymin, ymax) = y_range(points);
    if ymax == ymin {
        return Err(Error::InvalidInput("degenerate data: all y equal".into()));
    }
    let xmin = points.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
    let xmax = points.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
    let span = (xmax - xmin).max(f64::MIN_POSITIVE);
    let median = median_y(points);

    // Multi-start: both extrema as candidate centers, several widths.
    let x_at_max = points
        .iter()
        .fold((points[0].x, f64::NEG_INFINITY), |acc, p| {
            if p.y > acc.1 {
                (p.x, p.y)
            } else {
                acc
            }
        })
        .0;
    let x_at_min = points
        .iter()
        .fold((points[0].x, f64::INFINITY), |acc, p| {
            if p.y < acc.1 {
                (p.x, p.y)
            } else {
                acc
            }
        })
        .0;
    let mut starts = Vec::new();
    for (x0, a) in [(x_at_max, ymax - median), (x_at_min, ymin - median)] {
        for gfrac in [0.05, 0.15, 0.4] {
            starts.push(vec![a, x0, gfrac * span, median]);
        }
    }

    run_multistart(
        points,
        FitModel::Lorentzian,
        &starts,
        lorentzian,
        lorentzian_jac,
        opts,
    )
}

/// Fit y = A exp(-x/tau) + C. Needs at least 4 points.
pub fn fit_exponential(points: &[FitPoint], opts: &FitOptions) -> Result<FitResult, Error> {
    if points.len() < 4 {
        return Err(Error::InvalidInput(
            "exponential fit needs at least 4 points".into(),
        ));
    }
    check_finite(points)?;
    let (ymin, ymax) = y_range(points);
    if ymax == ymin {
        return Err(Error::InvalidInput("degenerate data: all y equal".into()));
    }
    let xmin = points.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
    let xmax = points.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
    let span = (xmax - xmin).max(f64::MIN_POSITIVE);

    let first_y = points
        .iter()
        .min_by(|a, b| a.x.total_cmp(&b.x))
        .unwrap()
        .y;
    let last_y = points
        .iter()
        .max_by(|a, b| a.x.total_cmp(&b.x))
        .unwrap()
        .y;
    let mut starts = Vec::new();
    for tfrac in [0.1, 0.3, 1.0, 3.0] {
        starts.push(vec![first_y - last_y, tfrac * span, last_y]);
    }

    run_multistart(
        points,
        FitModel::Exponential,
        &starts,
        exponential,
        exponential_jac,
        opts,
    )
}

fn check_finite(points: &[FitPoint]) -> Result<(), Error> {
    for p in points {
        if !p.x.is_finite() || !p.y.is_finite() {
            return Err(Error::InvalidInput("non-finite data point".into()));
        }
        if let Some(s) = p.sigma {
            if !(s > 0.0) {
                return Err(Error::InvalidInput("sigma must be positive".into()));
            }
        }
    }
    Ok(())
}

fn y_range(points: &[FitPoint]) -> (f64, f64) {
    points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        (lo.min(p.y), hi.max(p.y))
    })
}

fn median_y(points: &[FitPoint]) -> f64 {
    let mut ys: Vec<f64> = points.iter().map(|p| p.y).collect();
    ys.sort_by(f64::total_cmp);
    ys[ys.len() / 2]
}

type EvalFn = fn(f64, &[f64]) -> f64;
type JacFn = fn(f64, &[f64], &mut [f64]);

fn run_multistart(
    points: &[FitPoint],
    model: FitModel,
    starts: &[Vec<f64>],
    eval: EvalFn,
    jac: JacFn,
    opts: &FitOptions,
) -> Result<FitResult, Error> {
    let mut best: Option<(Vec<f64>, f64, bool, usize)> = None;
    for start in starts {
        let mut p0 = start.clone();
        if let Some(c) = opts.fix_offset {
            *p0.last_mut().unwrap() = c;
        }
        let (p, chi2, converged, iters) = levenberg_marquardt(points, p0, eval, jac, opts);
        let better = match &best {
            Some((_, c, _, _)) => chi2 < *c,
            None => true,
        };
        if better {
            best = Some((p, chi2, converged, iters));
        }
    }
    let (p, chi2, converged, iterations) = best.unwrap();
    let uncertainties = covariance_sigmas(points, &p, eval, jac, opts);
    let mut result = FitResult {
        model,
        parameters: p,
        uncertainties,
        residual_norm: chi2.sqrt(),
        converged,
        iterations,
    };
    // Report positive widths; the lineshape is even in Gamma.
    if model == FitModel::Lorentzian {
        result.parameters[2] = result.parameters[2].abs();
    }
    if converged {
        let scale_ok = match model {
            FitModel::Lorentzian => result.parameters[2] > 0.0,
            FitModel::Exponential => result.parameters[1] > 0.0,
        };
        result.converged = scale_ok;
    }
    Ok(result)
}

fn weight(p: &FitPoint) -> f64 {
    match p.sigma {
        Some(s) => 1.0 / (s * s),
        None => 1.0,
    }
}

fn chi_squared(points: &[FitPoint], p: &[f64], eval: EvalFn) -> f64 {
    points
        .iter()
        .map(|pt| weight(pt) * (pt.y - eval(pt.x, p)).powi(2))
        .sum()
}

/// Core LM loop with multiplicative damping on the normal-equation diagonal.
/// The last parameter is the offset; it is held fixed when `fix_offset` is
/// set by masking its update.
fn levenberg_marquardt(
    points: &[FitPoint],
    mut p: Vec<f64>,
    eval: EvalFn,
    jac: JacFn,
    opts: &FitOptions,
) -> (Vec<f64>, f64, bool, usize) {
    let np = p.len();
    let offset_fixed = opts.fix_offset.is_some();
    let mut lambda = 1e-3;
    let mut chi2 = chi_squared(points, &p, eval);
    let mut converged = false;
    let mut iterations = 0;
    let mut jrow = vec![0.0; np];

    for iter in 0..opts.max_iterations {
        iterations = iter + 1;
        // Build J^T W J and J^T W r.
        let mut jtj = vec![vec![0.0; np]; np];
        let mut jtr = vec![0.0; np];
        for pt in points {
            jac(pt.x, &p, &mut jrow);
            let w = weight(pt);
            let r = pt.y - eval(pt.x, &p);
            for i in 0..np {
                jtr[i] += w * jrow[i] * r;
                for j in 0..np {
                    jtj[i][j] += w * jrow[i] * jrow[j];
                }
            }
        }
        if offset_fixed {
            let last = np - 1;
            for j in 0..np {
                jtj[last][j] = 0.0;
                jtj[j][last] = 0.0;
            }
            jtj[last][last] = 1.0;
            jtr[last] = 0.0;
        }

        let mut improved = false;
        for _ in 0..20 {
            let mut a = jtj.clone();
            for (i, row) in a.iter_mut().enumerate() {
                row[i] *= 1.0 + lambda;
                if row[i] == 0.0 {
                    row[i] = lambda.max(1e-12);
                }
            }
            let Some(delta) = solve(a, jtr.clone()) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = p.iter().zip(&delta).map(|(v, d)| v + d).collect();
            let trial_chi2 = chi_squared(points, &trial, eval);
            if trial_chi2.is_finite() && trial_chi2 < chi2 {
                let rel = (chi2 - trial_chi2) / chi2.max(f64::MIN_POSITIVE);
                let step: f64 = delta
                    .iter()
                    .zip(&p)
                    .map(|(d, v)| (d / v.abs().max(1e-30)).abs())
                    .fold(0.0, f64::max);
                p = trial;
                chi2 = trial_chi2;
                lambda = (lambda * 0.3).max(1e-12);
                improved = true;
                if rel < 1e-12 || step < 1e-10 {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if converged {
            break;
        }
        if !improved {
            // No downhill step found at any damping: stationary point.
            converged = chi2.is_finite();
            break;
        }
    }
    (p, chi2, converged, iterations)
}

/// 1-sigma parameter uncertainties from (J^T W J)^-1, scaled by the reduced
/// chi-square for unweighted data.
fn covariance_sigmas(
    points: &[FitPoint],
    p: &[f64],
    eval: EvalFn,
    jac: JacFn,
    opts: &FitOptions,
) -> Vec<f64> {
    let np = p.len();
    let mut jtj = vec![vec![0.0; np]; np];
    let mut jrow = vec![0.0; np];
    let weighted = points.iter().any(|pt| pt.sigma.is_some());
    for pt in points {
        jac(pt.x, p, &mut jrow);
        let w = weight(pt);
        for i in 0..np {
            for j in 0..np {
                jtj[i][j] += w * jrow[i] * jrow[j];
            }
        }
    }
    if opts.fix_offset.is_some() {
        let last = np - 1;
        for j in 0..np {
            jtj[last][j] = 0.0;
            jtj[j][last] = 0.0;
        }
        jtj[last][last] = f64::INFINITY; // zero variance
    }
    let dof = points.len().saturating_sub(if opts.fix_offset.is_some() {
        np - 1
    } else {
        np
    });
    let s2 = if weighted || dof == 0 {
        1.0
    } else {
        chi_squared(points, p, eval) / dof as f64
    };
    let mut sigmas = vec![0.0; np];
    if let Some(inv) = invert(jtj) {
        for i in 0..np {
            let v = inv[i][i] * s2;
            sigmas[i] = if v.is_finite() && v >= 0.0 { v.sqrt() } else { 0.0 };
        }
    }
    sigmas
}

/// Gaussian elimination with partial pivoting for the small normal systems.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let mut pivot = col;
        for row in col + 1..n {
            if a[row][col].abs() > a[pivot][col].abs() {
                pivot = row;
            }
        }
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = b[row];
        for k in row + 1..n {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    Some(x)
}

fn invert(a: Vec<Vec<f64>>) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut out = vec![vec![0.0; n]; n];
    for col in 0..n {
        let mut e = vec![0.0; n];
        e[col] = 1.0;
        let x = solve(a.clone(), e)?;
        for row in 0..n {
            out[row][col] = x[row];
        }
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn lorentzian_samples(a: f64, x0: f64, g: f64, c: f64, n: usize) -> Vec<FitPoint> {
        (0..n)
            .map(|i| {
                let x = x0 - 3.0 * g + 6.0 * g * i as f64 / (n - 1) as f64;
                FitPoint::new(x, lorentzian(x, &[a, x0, g, c]))
            })
            .collect()
    }

    #[test]
    fn noiseless_lorentzian_recovered() {
        // Device-scale numbers: center 1057.7 kHz, width 0.67 kHz.
        let pts = lorentzian_samples(1.0, 1_057_700.0, 670.0, 0.1, 41);
        let fit = fit_lorentzian(&pts, &FitOptions::default()).unwrap();
        assert!(fit.converged);
        assert_relative_eq!(fit.center(), 1_057_700.0, max_relative = 1e-6);
        assert_relative_eq!(fit.width(), 670.0, max_relative = 1e-6);
        assert_relative_eq!(fit.amplitude(), 1.0, max_relative = 1e-6);
        assert_relative_eq!(fit.offset(), 0.1, max_relative = 1e-5);
    }

    #[test]
    fn noiseless_dip_recovered() {
        let pts = lorentzian_samples(-0.5, 0.0, 730.0, 1.0, 31);
        let fit = fit_lorentzian(&pts, &FitOptions::default()).unwrap();
        assert!(fit.converged);
        assert_relative_eq!(fit.width(), 730.0, max_relative = 1e-6);
        assert!(fit.amplitude() < 0.0);
    }

    #[test]
    fn noiseless_exponential_recovered() {
        let p = [0.9, 21e-3, 0.05];
        let pts: Vec<FitPoint> = (0..30)
            .map(|i| {
                let x = i as f64 * 4e-3;
                FitPoint::new(x, exponential(x, &p))
            })
            .collect();
        let fit = fit_exponential(&pts, &FitOptions::default()).unwrap();
        assert!(fit.converged);
        assert_relative_eq!(fit.lifetime(), 21e-3, max_relative = 1e-6);
        assert_relative_eq!(fit.amplitude(), 0.9, max_relative = 1e-6);
    }

    #[test]
    fn response_power_width_matches_cantilever_linewidth() {
        // The squared drive response is Lorentzian near resonance with
        // FWHM = f0/Q = 670 Hz for the measured linewidth configuration.
        use crate::cantilever::{response_amplitude, Beam, DriveConfig, LoadedCantilever};
        use crate::constants::{CONIMNP_DENSITY, SILICON};
        use crate::magnetostatics::{Magnet, Rotation};
        use crate::vec3::Vec3;

        let beam = Beam::new(130e-6, 60e-6, 25e-6, SILICON.youngs_modulus, SILICON.density)
            .unwrap();
        let magnet = Magnet::from_dimensions_and_moment(
            Vec3::new(60e-6, 9e-6, 85e-6),
            2e-9,
            Vec3::ZERO,
            Rotation::IDENTITY,
        )
        .unwrap();
        let mut c = LoadedCantilever::new(beam, magnet, CONIMNP_DENSITY, 1e4).unwrap();
        c.f0_measured = Some(1_057_700.0);
        c.linewidth_measured = Some(670.0);

        let f0 = c.f0_effective();
        let pts: Vec<FitPoint> = (0..81)
            .map(|i| {
                let f = f0 - 2000.0 + 4000.0 * i as f64 / 80.0;
                let drv = DriveConfig {
                    v_dc: 40.0,
                    v_ac: 10.0,
                    gap: 9e-6,
                    effective_area: 7.8e-9,
                    drive_frequency: f,
                };
                FitPoint::new(f, response_amplitude(&c, &drv).powi(2))
            })
            .collect();
        let fit = fit_lorentzian(&pts, &FitOptions::default()).unwrap();
        assert!(fit.converged);
        assert!(
            (fit.width() - 670.0).abs() <= 20.0,
            "fitted width {:.1} Hz",
            fit.width()
        );
        assert_relative_eq!(fit.center(), f0, max_relative = 1e-6);
    }

    #[test]
    fn scaling_y_scales_amplitude_only() {
        let pts = lorentzian_samples(1.0, 5.0, 0.8, 0.2, 25);
        let scaled: Vec<FitPoint> = pts
            .iter()
            .map(|p| FitPoint::new(p.x, 3.0 * p.y))
            .collect();
        let f1 = fit_lorentzian(&pts, &FitOptions::default()).unwrap();
        let f2 = fit_lorentzian(&scaled, &FitOptions::default()).unwrap();
        assert_relative_eq!(f2.amplitude(), 3.0 * f1.amplitude(), max_relative = 1e-8);
        assert_relative_eq!(f2.offset(), 3.0 * f1.offset(), max_relative = 1e-7);
        assert_relative_eq!(f2.center(), f1.center(), max_relative = 1e-9);
        assert_relative_eq!(f2.width(), f1.width(), max_relative = 1e-8);
    }

    #[test]
    fn residual_not_worse_than_any_start() {
        // Shallow dip on a sparse grid, the troublesome case for single-start.
        let mut pts = lorentzian_samples(-0.2, 2.0, 0.5, 1.0, 15);
        // Perturb deterministically.
        for (i, p) in pts.iter_mut().enumerate() {
            p.y += 0.01 * ((i * 2654435761) % 97) as f64 / 97.0;
        }
        let fit = fit_lorentzian(&pts, &FitOptions::default()).unwrap();
        let starts = [
            vec![-0.2, 2.0, 0.05, 1.0],
            vec![0.2, 0.5, 1.0, 1.0],
            vec![-0.1, 3.4, 0.2, 1.0],
        ];
        for s in &starts {
            let chi_start = chi_squared(&pts, s, lorentzian);
            assert!(fit.residual_norm.powi(2) <= chi_start + 1e-12);
        }
    }

    #[test]
    fn fixed_offset_respected() {
        let pts = lorentzian_samples(1.0, 0.0, 1.0, 0.5, 21);
        let fit = fit_lorentzian(
            &pts,
            &FitOptions {
                fix_offset: Some(0.5),
                max_iterations: 200,
            },
        )
        .unwrap();
        assert_eq!(fit.offset(), 0.5);
        assert_eq!(*fit.uncertainties.last().unwrap(), 0.0);
        assert_relative_eq!(fit.width(), 1.0, max_relative = 1e-6);
    }

    #[test]
    fn degenerate_data_rejected() {
        let pts: Vec<FitPoint> = (0..10).map(|i| FitPoint::new(i as f64, 1.0)).collect();
        assert!(fit_lorentzian(&pts, &FitOptions::default()).is_err());
        assert!(fit_exponential(&pts, &FitOptions::default()).is_err());
    }

    #[test]
    fn too_few_points_rejected() {
        let pts: Vec<FitPoint> = (0..4).map(|i| FitPoint::new(i as f64, i as f64)).collect();
        assert!(fit_lorentzian(&pts, &FitOptions::default()).is_err());
        assert!(fit_exponential(&pts[..3], &FitOptions::default()).is_err());
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let p_l = [0.8, 1.2, 0.6, 0.3];
        let p_e = [0.8, 1.2, 0.3];
        let h = 1e-7;
        for x in [0.7, 1.2, 2.5] {
            let mut out = [0.0; 4];
            lorentzian_jac(x, &p_l, &mut out);
            for i in 0..4 {
                let mut pp = p_l;
                let mut pm = p_l;
                pp[i] += h;
                pm[i] -= h;
                let fd = (lorentzian(x, &pp) - lorentzian(x, &pm)) / (2.0 * h);
                assert_relative_eq!(out[i], fd, max_relative = 1e-5, epsilon = 1e-9);
            }
            let mut out = [0.0; 3];
            exponential_jac(x, &p_e, &mut out);
            for i in 0..3 {
                let mut pp = p_e;
                let mut pm = p_e;
                pp[i] += h;
                pm[i] -= h;
                let fd = (exponential(x, &pp) - exponential(x, &pm)) / (2.0 * h);
                assert_relative_eq!(out[i], fd, max_relative = 1e-5, epsilon = 1e-9);
            }
        }
    }
}

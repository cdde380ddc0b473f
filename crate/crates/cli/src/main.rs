//! `atomtip` — one executable exposing the simulator's workflows as
//! subcommands with JSON configs and CSV/JSON outputs.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use atomtip_core::analysis::{fit_exponential, fit_lorentzian, FitOptions, FitPoint};
use atomtip_core::cantilever::{
    drive_amplitude, loaded_resonance, response_amplitude, spring_constant,
};
use atomtip_core::config::{load_config, RunConfig};
use atomtip_core::detection::{sensitivity_curve, DetectionScenario};
use atomtip_core::error::Error;
use atomtip_core::magnetostatics::{field_at, gradient_at};
use atomtip_core::montecarlo::{decay_curve, frequency_sweep, Simulation};
use atomtip_core::output::{read_csv, CsvDoc};
use atomtip_core::trapmodel::{
    larmor_frequency, resonant_slice, zeeman_potential, FieldModel, SliceProbe,
};
use atomtip_core::vec3::Vec3;

/// Environment variable holding a fallback directory for config files.
const CONFIG_DIR_ENV: &str = "ATOMTIP_CONFIG_DIR";

#[derive(Parser)]
#[command(
    name = "atomtip",
    about = "Simulator for cold atoms magnetically coupled to a driven cantilever tip",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output file; defaults to the config's output_path, else stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for the Monte Carlo (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Evaluate fields analytically instead of via the interpolation table.
    #[arg(long)]
    exact_fields: bool,
    /// Also write a simple SVG line plot next to the CSV output.
    #[arg(long)]
    svg: bool,
    /// Print progress to stderr.
    #[arg(short, long)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Print derived cantilever properties as JSON.
    CantileverProps(CommonArgs),
    /// Tabulate the tip field over a plane through the trap axis.
    FieldMap {
        #[command(flatten)]
        common: CommonArgs,
        /// Grid spacing in micrometers.
        #[arg(long, default_value_t = 2.0)]
        spacing_um: f64,
        /// Transverse half-extent of the map in micrometers.
        #[arg(long, default_value_t = 50.0)]
        halfwidth_um: f64,
    },
    /// Axial profile of |B|, Larmor frequency, and Zeeman potentials.
    TrapProfile(CommonArgs),
    /// Trapped population versus time.
    DecayCurve(CommonArgs),
    /// Remaining population versus drive frequency.
    LossSpectrum(CommonArgs),
    /// Thermal force floor versus spin force (sensitivity table).
    DetectionLimits(CommonArgs),
    /// Fit a CSV to a lorentzian or exponential model.
    Fit {
        /// Input CSV with columns x,y[,sigma]; `#` metadata lines allowed.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        model: ModelArg,
        /// Fix the additive offset instead of floating it.
        #[arg(long)]
        fix_offset: Option<f64>,
        /// Config used to produce the data; hash-checked against the CSV.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output file for the fit JSON; defaults to stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Lorentzian,
    Exponential,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Unknown subcommands and malformed usage exit 64.
            let _ = e.print();
            return ExitCode::from(64);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::ConfigIo { .. }
                | Error::ConfigParse { .. }
                | Error::ConfigValidation { .. }
                | Error::InvalidInput(_) => 1,
                _ => 2,
            };
            ExitCode::from(code)
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::CantileverProps(common) => cantilever_props(&common),
        Command::FieldMap {
            common,
            spacing_um,
            halfwidth_um,
        } => field_map(&common, spacing_um * 1e-6, halfwidth_um * 1e-6),
        Command::TrapProfile(common) => trap_profile(&common),
        Command::DecayCurve(common) => decay_curve_cmd(&common),
        Command::LossSpectrum(common) => loss_spectrum_cmd(&common),
        Command::DetectionLimits(common) => detection_limits(&common),
        Command::Fit {
            input,
            model,
            fix_offset,
            config,
            output,
        } => fit_cmd(&input, model, fix_offset, config.as_deref(), output.as_deref()),
    }
}

/// Resolve a config path, falling back to $ATOMTIP_CONFIG_DIR.
fn resolve_config(path: &Path) -> PathBuf {
    if path.exists() {
        return path.to_path_buf();
    }
    if let Ok(dir) = std::env::var(CONFIG_DIR_ENV) {
        let candidate = Path::new(&dir).join(path);
        if candidate.exists() {
            return candidate;
        }
    }
    path.to_path_buf()
}

fn load(common: &CommonArgs) -> Result<RunConfig, Error> {
    let mut cfg = load_config(resolve_config(&common.config))?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(n) = common.threads {
        // Ignore failure if a pool already exists (e.g. repeated calls in tests).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    if common.exact_fields {
        cfg.raw.simulation.use_field_table = false;
    }
    if common.verbose {
        eprintln!(
            "config {} (hash {}), seed {}",
            common.config.display(),
            cfg.config_hash,
            cfg.seed
        );
    }
    Ok(cfg)
}

fn emit(common: &CommonArgs, cfg: &RunConfig, text: &str) -> Result<(), Error> {
    let target = common
        .output
        .clone()
        .or_else(|| cfg.output_path.as_ref().map(PathBuf::from));
    match target {
        Some(path) => std::fs::write(&path, text).map_err(|e| Error::ConfigIo {
            path: path.display().to_string(),
            source: e,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Write an SVG polyline plot of (x, y) next to the CSV output.
fn emit_svg(common: &CommonArgs, cfg: &RunConfig, xs: &[f64], ys: &[f64]) -> Result<(), Error> {
    if !common.svg {
        return Ok(());
    }
    let base = common
        .output
        .clone()
        .or_else(|| cfg.output_path.as_ref().map(PathBuf::from));
    let Some(base) = base else {
        return Ok(());
    };
    let path = base.with_extension("svg");
    let (w, h, m) = (640.0, 400.0, 50.0);
    let (xmin, xmax) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, &v| {
        (a.0.min(v), a.1.max(v))
    });
    let (ymin, ymax) = ys.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, &v| {
        (a.0.min(v), a.1.max(v))
    });
    let sx = |x: f64| m + (x - xmin) / (xmax - xmin).max(f64::MIN_POSITIVE) * (w - 2.0 * m);
    let sy = |y: f64| h - m - (y - ymin) / (ymax - ymin).max(f64::MIN_POSITIVE) * (h - 2.0 * m);
    let pts: Vec<String> = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| format!("{:.1},{:.1}", sx(x), sy(y)))
        .collect();
    let svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <polyline points=\"{}\" fill=\"none\" stroke=\"black\" stroke-width=\"1.5\"/>\n\
         </svg>\n",
        pts.join(" ")
    );
    std::fs::write(&path, svg).map_err(|e| Error::ConfigIo {
        path: path.display().to_string(),
        source: e,
    })
}

fn cantilever_props(common: &CommonArgs) -> Result<(), Error> {
    let cfg = load(common)?;
    let c = cfg.loaded_cantilever()?;
    let drv = cfg.drive_config()?;
    let k = spring_constant(&c.beam);
    let f0 = loaded_resonance(&c);
    let json = serde_json::json!({
        "spring_constant_N_per_m": k,
        "beam_mass_kg": c.beam.mass(),
        "magnet_mass_kg": c.magnet_mass(),
        "f0_predicted_Hz": f0,
        "f0_effective_Hz": c.f0_effective(),
        "drive_q": c.drive_q(),
        "linewidth_Hz": c.f0_effective() / c.drive_q(),
        "delta_z_resonance_m": drive_amplitude(&c, &drv),
        "delta_z_at_drive_m": response_amplitude(&c, &drv),
        "thin_beam_valid": c.beam.thin_beam_valid(),
        "config_hash": cfg.config_hash,
    });
    emit(common, &cfg, &format!("{:#}\n", json))
}

fn field_map(common: &CommonArgs, spacing: f64, halfwidth: f64) -> Result<(), Error> {
    let cfg = load(common)?;
    let magnet = cfg.magnet()?;
    let z_face = magnet.half_lengths.z;
    let z_lo = z_face + 2e-6;
    let z_hi = cfg.standoff_from_center() + cfg.raw.simulation.domain_halfwidth_um * 1e-6;

    let mut doc = CsvDoc::new("field-map");
    doc.meta("config_hash", &cfg.config_hash)
        .meta("moment_J_per_T", format!("{:.6e}", magnet.total_moment()))
        .header(&["x_m", "y_m", "z_m", "Bx_T", "By_T", "Bz_T", "B_T", "gradB_T_per_m"]);
    let nx = (2.0 * halfwidth / spacing).round() as i64;
    let nz = ((z_hi - z_lo) / spacing).round() as i64;
    for iz in 0..=nz {
        let z = z_lo + (z_hi - z_lo) * iz as f64 / nz.max(1) as f64;
        for ix in -(nx / 2)..=(nx / 2) {
            let p = Vec3::new(ix as f64 * spacing, 0.0, z);
            if magnet.contains(p) {
                continue;
            }
            let b = field_at(&magnet, p)?;
            let (_, grad) = gradient_at(&magnet, p)?;
            doc.row(&[p.x, p.y, p.z, b.x, b.y, b.z, b.norm(), grad.norm()]);
        }
    }
    emit(common, &cfg, &doc.finish())
}

fn trap_profile(common: &CommonArgs) -> Result<(), Error> {
    let cfg = load(common)?;
    let trap = cfg.trap_config()?;
    let drive = cfg.drive_config()?;
    let z_trap = cfg.standoff_from_center();
    let hw = cfg.raw.simulation.domain_halfwidth_um * 1e-6;
    let z_lo = (z_trap - hw).max(trap.magnet.half_lengths.z + 1e-6);
    let z_hi = z_trap + hw;

    let slice = resonant_slice(
        &trap,
        trap.gamma,
        drive.drive_frequency,
        &SliceProbe::Line {
            from: Vec3::new(0.0, 0.0, z_lo),
            to: Vec3::new(0.0, 0.0, z_hi),
            samples: 4000,
        },
    )?;

    let mut doc = CsvDoc::new("trap-profile");
    doc.meta("config_hash", &cfg.config_hash)
        .meta("drive_frequency_Hz", format!("{:.6e}", drive.drive_frequency))
        .meta("resonant_B_T", format!("{:.6e}", slice.target_b));
    for (i, p) in slice.points.iter().enumerate() {
        doc.meta(&format!("slice_z_um_{i}"), format!("{:.4}", p.z * 1e6));
    }
    doc.header(&[
        "z_m", "B_T", "larmor_Hz", "U_mF2_J", "U_mF1_J", "U_mF0_J", "U_mFm1_J", "U_mFm2_J",
    ]);
    let n = 800;
    for i in 0..=n {
        let z = z_lo + (z_hi - z_lo) * i as f64 / n as f64;
        let p = Vec3::new(0.0, 0.0, z);
        let b = trap.field_norm(p)?;
        let nu = larmor_frequency(&trap, p)?;
        let us: Vec<f64> = [2, 1, 0, -1, -2]
            .iter()
            .map(|&m| zeeman_potential(&trap, p, m))
            .collect::<Result<_, _>>()?;
        doc.row(&[z, b, nu, us[0], us[1], us[2], us[3], us[4]]);
    }
    emit(common, &cfg, &doc.finish())
}

fn decay_curve_cmd(common: &CommonArgs) -> Result<(), Error> {
    let cfg = load(common)?;
    if common.verbose {
        let sim = Simulation::from_run_config(&cfg)?;
        eprintln!(
            "drive {:.1} kHz, dz = {:.2} nm, {} atoms, {:.0} ms",
            sim.params.drive_frequency / 1e3,
            sim.params.drive_amplitude * 1e9,
            cfg.atom_count,
            cfg.duration * 1e3
        );
    }
    let result = decay_curve(&cfg)?;
    emit_svg(common, &cfg, &result.times, &result.trapped_fraction)?;
    emit(common, &cfg, &result.to_csv())
}

fn loss_spectrum_cmd(common: &CommonArgs) -> Result<(), Error> {
    let cfg = load(common)?;
    let sweep_cfg = cfg.raw.sweep.clone().ok_or_else(|| {
        Error::validation("sweep", "loss-spectrum needs a `sweep` config section")
    })?;
    let freqs: Vec<f64> = sweep_cfg.frequencies_kHz.iter().map(|f| f * 1e3).collect();
    let result = frequency_sweep(&cfg, &freqs, sweep_cfg.interaction_time_ms * 1e-3)?;
    emit_svg(common, &cfg, &result.frequencies, &result.remaining_fraction)?;
    emit(common, &cfg, &result.to_csv())
}

fn detection_limits(common: &CommonArgs) -> Result<(), Error> {
    let cfg = load(common)?;
    let det = cfg.raw.detection.clone().unwrap_or_default();
    let mut cantilever = cfg.loaded_cantilever()?;
    cantilever.q_factor = det.q_factor;
    let separations: Vec<f64> = (0..det.z_points)
        .map(|i| {
            (det.z_min_um + (det.z_max_um - det.z_min_um) * i as f64 / (det.z_points - 1) as f64)
                * 1e-6
        })
        .collect();
    let scenario = DetectionScenario {
        cantilever,
        temperature: det.temperature_K,
        bandwidth: det.bandwidth_Hz,
        spin_count: det.spin_count,
        separations,
    };
    let curve = sensitivity_curve(&scenario)?;

    let mut doc = CsvDoc::new("detection-limits");
    doc.meta("config_hash", &cfg.config_hash)
        .meta("temperature_K", det.temperature_K)
        .meta("bandwidth_Hz", det.bandwidth_Hz)
        .meta("q_factor", det.q_factor)
        .meta("spin_count", det.spin_count)
        .header(&["z_m", "F_min_N", "F_spins_N", "F_single_N"]);
    for r in &curve.rows {
        doc.row(&[r.z, r.f_min, r.f_spins, r.f_single]);
    }
    let xs: Vec<f64> = curve.rows.iter().map(|r| r.z).collect();
    let ys: Vec<f64> = curve.rows.iter().map(|r| r.f_single).collect();
    emit_svg(common, &cfg, &xs, &ys)?;
    emit(common, &cfg, &doc.finish())?;

    let summary = serde_json::json!({
        "crossing_single_spin_m": curve.crossing_single,
        "crossing_spin_ensemble_m": curve.crossing_spins,
        "f_min_N": curve.rows.first().map(|r| r.f_min),
    });
    if common.output.is_some() || cfg.output_path.is_some() {
        println!("{summary:#}");
    }
    Ok(())
}

fn fit_cmd(
    input: &Path,
    model: ModelArg,
    fix_offset: Option<f64>,
    config: Option<&Path>,
    output: Option<&Path>,
) -> Result<(), Error> {
    let text = std::fs::read_to_string(input).map_err(|e| Error::ConfigIo {
        path: input.display().to_string(),
        source: e,
    })?;
    let data = read_csv(&text)?;
    if let Some(cfg_path) = config {
        let cfg = load_config(resolve_config(cfg_path))?;
        if let Some((_, h)) = data.metadata.iter().find(|(k, _)| k == "config_hash") {
            if *h != cfg.config_hash {
                eprintln!(
                    "warning: CSV was produced with config hash {h}, but {} has hash {}",
                    cfg_path.display(),
                    cfg.config_hash
                );
            }
        }
    }
    if data.columns.len() < 2 {
        return Err(Error::InvalidInput("fit input needs x and y columns".into()));
    }
    // Third column, when present, carries 1-sigma weights. Zero entries
    // (e.g. the binomial stderr of a fraction pinned at 1) are floored to
    // the smallest positive sigma so no point gets infinite weight.
    let sigmas = data.columns.get(2);
    let sigma_floor = sigmas.and_then(|s| {
        s.iter()
            .copied()
            .filter(|&v| v > 0.0)
            .min_by(f64::total_cmp)
    });
    let points: Vec<FitPoint> = (0..data.columns[0].len())
        .map(|i| {
            let sigma = match (sigmas, sigma_floor) {
                (Some(s), Some(floor)) => Some(s[i].max(floor)),
                _ => None,
            };
            FitPoint {
                x: data.columns[0][i],
                y: data.columns[1][i],
                sigma,
            }
        })
        .collect();
    let opts = FitOptions {
        fix_offset,
        ..FitOptions::default()
    };
    let result = match model {
        ModelArg::Lorentzian => fit_lorentzian(&points, &opts)?,
        ModelArg::Exponential => fit_exponential(&points, &opts)?,
    };
    let json = serde_json::to_string_pretty(&result).expect("fit result serializes");
    match output {
        Some(path) => std::fs::write(path, json + "\n").map_err(|e| Error::ConfigIo {
            path: path.display().to_string(),
            source: e,
        }),
        None => {
            println!("{json}");
            Ok(())
        }
    }
}

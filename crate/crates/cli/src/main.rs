//! Command-line front end: experiment configs in, JSON/CSV reports out.
//!
//! Exit codes: 0 on success, 1 on computation errors, 2 on config errors.
//! All randomness derives from `--seed` (default 0); for a fixed config and
//! build the JSON reports are byte-identical except for the timestamp field.

mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use config::{load_config, parse_floats, CondenserConfig, MeasureConfig, RegionConfig};
use plaplab::capacity::{
    solve_condenser, spherical_condenser_oracle, CompactSet, Condenser, Domain, SolverOpts,
};
use plaplab::conformal::{curvature_at, ConformalFactor};
use plaplab::dimension::{box_counting_dim, theorem4_experiment, PointCloud, Theorem4Config};
use plaplab::measure::SurfaceGenerator;
use plaplab::report::Provenance;
use plaplab::spectra::{ap_spectrum, cone_functional, ConeSpec, EigenSpectrum};
use plaplab::thinness::{find_escape_ray, p_thin_partial_sums, wiener_partial_sums, ThinnessOpts};
use plaplab::verify::{run_suites, VerifyOptions};
use plaplab::wolff::{wolff_potential, wolff_upper_report, WolffParams};
use plaplab::Error;

#[derive(Parser)]
#[command(name = "plaplab", version, about = "Numerical laboratory for Wolff potentials, p-capacity, p-thinness, and conformal curvature spectra")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Seed for all derived randomness.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Intermediate-curvature spectrum and cone membership of an eigenvalue
    /// tuple.
    Cone {
        /// Comma-separated Schouten eigenvalues.
        #[arg(long, allow_hyphen_values = true)]
        spectrum: String,
        /// Exponent of the intermediate curvature cone.
        #[arg(long)]
        p: f64,
        /// Also test the r-form curvature-operator cone.
        #[arg(long)]
        r: Option<usize>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Condenser capacity: grid value vs the radial oracle.
    Capacity {
        /// Built-in geometry (`spherical` is the only preset).
        #[arg(long)]
        preset: Option<String>,
        /// Condenser descriptor file (JSON/TOML) when no preset is used.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        n: usize,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        /// Inner radius of the spherical preset.
        #[arg(long, default_value_t = 1.0)]
        r: f64,
        /// Outer radius of the spherical preset.
        #[arg(long = "big-r", default_value_t = 2.0)]
        big_r: f64,
        /// Grid spacing.
        #[arg(long, default_value_t = 1.0 / 32.0)]
        h: f64,
        /// Relative energy-decrease stopping tolerance of the solver.
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Wolff potential of a measure at a point, with certified bounds;
    /// or the per-annulus decay survey with --survey.
    Wolff {
        /// Measure descriptor file (JSON/TOML).
        #[arg(long)]
        config: PathBuf,
        /// Evaluation point (or the survey center), comma-separated.
        #[arg(long, allow_hyphen_values = true)]
        point: String,
        #[arg(long)]
        p: f64,
        /// Upper integration limit.
        #[arg(long)]
        radius: f64,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        /// Run the decay survey around the point instead of a single value.
        #[arg(long)]
        survey: bool,
        /// Growth exponent hypothesis for the survey.
        #[arg(long, default_value_t = 1.0)]
        m: f64,
        #[arg(long, default_value_t = 0.2)]
        eps: f64,
        #[arg(long, default_value_t = 4)]
        i_min: i32,
        #[arg(long, default_value_t = 12)]
        i_max: i32,
        #[arg(long, default_value_t = 25)]
        samples_per_annulus: usize,
        /// Write the per-annulus table as CSV here (survey mode).
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Thinness partial sums of a region set at a point.
    Thin {
        /// Region descriptor file (JSON/TOML).
        #[arg(long)]
        config: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        x0: String,
        #[arg(long)]
        p: f64,
        #[arg(long, default_value_t = 3)]
        i_min: i32,
        #[arg(long, default_value_t = 9)]
        i_max: i32,
        /// Also compute the Wiener-type sums.
        #[arg(long)]
        wiener: bool,
        /// Also search for an escape ray of this length.
        #[arg(long)]
        escape_ray: Option<f64>,
        /// Write the per-annulus table as CSV here.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Curvature spectra of a conformal factor at a point.
    Curvature {
        /// Conformal factor descriptor file (JSON/TOML).
        #[arg(long)]
        config: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        point: String,
        /// Exponent for the intermediate curvature spectrum.
        #[arg(long)]
        p: f64,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Box-counting dimension of a generated point cloud.
    Dimension {
        /// Generator: `segment`, `plane`, or `cantor`.
        #[arg(long)]
        generator: String,
        #[arg(long, default_value_t = 3)]
        n: usize,
        /// Patch dimension for `plane`.
        #[arg(long, default_value_t = 1)]
        m: usize,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        /// Contraction ratio for `cantor`.
        #[arg(long, default_value_t = 1.0 / 3.0)]
        ratio: f64,
        #[arg(long, default_value_t = 8)]
        depth: usize,
        #[arg(long)]
        delta_min: Option<f64>,
        #[arg(long)]
        delta_max: Option<f64>,
        #[arg(long, default_value_t = 8)]
        scales: usize,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// The orchestrated tightness experiment.
    Theorem4 {
        /// Experiment config file (JSON/TOML); flags override.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
        /// Include the Wolff decay survey sub-check.
        #[arg(long)]
        with_wolff_survey: bool,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run the acceptance suites.
    Verify {
        /// Comma-separated suite names, or `all`.
        #[arg(long, default_value = "all")]
        suite: String,
        /// Reduced sample counts (tolerances unchanged).
        #[arg(long)]
        quick: bool,
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::InvalidParameter(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn timestamp() -> String {
    match std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH) {
        Ok(d) => format!("{}.{:09}", d.as_secs(), d.subsec_nanos()),
        Err(_) => "0".into(),
    }
}

fn emit(report: serde_json::Value, out: &Option<PathBuf>) -> plaplab::Result<()> {
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn provenance(seed: u64, canonical: &str) -> serde_json::Value {
    let mut p = Provenance::new(seed, canonical);
    p.timestamp = timestamp();
    serde_json::to_value(&p).expect("provenance serializes")
}

fn run(cli: Cli) -> plaplab::Result<ExitCode> {
    match cli.command {
        Command::Cone { spectrum, p, r, common } => {
            let values = parse_floats(&spectrum)?;
            let s = EigenSpectrum::new(values)?;
            let ap = ap_spectrum(&s, p)?;
            let f_ap = cone_functional(&s, ConeSpec::Ap { p })?;
            let mut body = json!({
                "spectrum": s.values(),
                "p": p,
                "ap_spectrum": ap.values(),
                "ap_cone_functional": f_ap,
                "ap_member": f_ap >= 0.0,
                "trace": s.trace(),
            });
            if let Some(r) = r {
                let f_r = cone_functional(&s, ConeSpec::Rr { r })?;
                body["rr_cone_functional"] = json!(f_r);
                body["rr_member"] = json!(f_r >= 0.0);
            }
            println!(
                "A^({p}) spectrum: {:?}  membership: {}",
                ap.values(),
                f_ap >= 0.0
            );
            let report = json!({
                "provenance": provenance(common.seed, &format!("cone;{spectrum};{p};{r:?}")),
                "cone": body,
            });
            emit(report, &common.out)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Capacity { preset, config, n, p, r, big_r, h, tol, common } => {
            let report = match (preset.as_deref(), config) {
                (Some("spherical"), None) => {
                    let oracle = spherical_condenser_oracle(n, p, r, big_r)?;
                    let k = CompactSet::ball(vec![0.0; n], r);
                    let omega = Domain::Ball { center: vec![0.0; n], radius: big_r };
                    let condenser = Condenser::with_spacing(k, omega, h)?;
                    let solver = SolverOpts { levels: 3, tol, ..Default::default() };
                    let res = solve_condenser(&condenser, p, &solver)?;
                    let rel = (res.value - oracle).abs() / oracle;
                    println!(
                        "oracle {oracle:.6}  grid {:.6}  relative error {:.3}%",
                        res.value,
                        rel * 100.0
                    );
                    json!({
                        "provenance": provenance(common.seed, &format!("capacity;spherical;{n};{p};{r};{big_r};{h}")),
                        "oracle": oracle,
                        "grid_value": res.value,
                        "relative_error": rel,
                        "iterations": res.iterations,
                        "converged": res.converged,
                        "energy_history": res.energy_history,
                        "h": h,
                    })
                }
                (None, Some(path)) => {
                    let cfg: CondenserConfig = load_config(&path)?;
                    let condenser = Condenser::with_spacing(cfg.k, cfg.omega, cfg.h)?;
                    let solver = SolverOpts { tol, ..Default::default() };
                    let res = solve_condenser(&condenser, p, &solver)?;
                    println!("capacity {:.6} at h = {}", res.value, cfg.h);
                    json!({
                        "provenance": provenance(common.seed, &format!("capacity;file;{p}")),
                        "grid_value": res.value,
                        "iterations": res.iterations,
                        "converged": res.converged,
                        "energy_history": res.energy_history,
                        "h": cfg.h,
                    })
                }
                _ => {
                    return Err(Error::Config(
                        "give exactly one of --preset spherical or --config <file>".into(),
                    ))
                }
            };
            emit(report, &common.out)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Wolff {
            config,
            point,
            p,
            radius,
            tol,
            survey,
            m,
            eps,
            i_min,
            i_max,
            samples_per_annulus,
            csv,
            common,
        } => {
            let mu = load_config::<MeasureConfig>(&config)?.build()?;
            let x = parse_floats(&point)?;
            if survey {
                let rep = wolff_upper_report(
                    &mu,
                    &x,
                    p,
                    m,
                    eps,
                    radius,
                    i_min..=i_max,
                    samples_per_annulus,
                    common.seed,
                )?;
                println!(
                    "decay survey: C* = {:.6e}, budget ratio {:.4} (summable: {})",
                    rep.c_star, rep.budget_ratio, rep.budget_summable
                );
                if let Some(path) = csv {
                    std::fs::write(path, rep.to_csv())?;
                }
                let report = json!({
                    "provenance": provenance(common.seed, &format!("wolff-survey;{point};{p};{m};{eps};{radius};{i_min};{i_max};{samples_per_annulus}")),
                    "survey": rep,
                });
                emit(report, &common.out)?;
                return Ok(ExitCode::SUCCESS);
            }
            let params = WolffParams::new(p, radius, tol)?;
            let w = wolff_potential(&mu, &x, &params)?;
            println!(
                "W(x, {radius}) = {:.8}  in [{:.8}, {:.8}]  ({} intervals)",
                w.value, w.lower, w.upper, w.intervals
            );
            let report = json!({
                "provenance": provenance(common.seed, &format!("wolff;{point};{p};{radius};{tol}")),
                "wolff": w,
            });
            emit(report, &common.out)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Thin { config, x0, p, i_min, i_max, wiener, escape_ray, csv, common } => {
            let region = load_config::<RegionConfig>(&config)?.build()?;
            let x0v = parse_floats(&x0)?;
            let opts = ThinnessOpts::default();
            let density = p_thin_partial_sums(&region, &x0v, p, i_min..=i_max, &opts)?;
            println!("capacity-density verdict: {:?} ({})", density.verdict, density.rule);
            let mut body = json!({
                "density": density,
            });
            if wiener {
                let w = wiener_partial_sums(&region, &x0v, p, i_min..=i_max, &opts)?;
                println!("wiener verdict: {:?} ({})", w.verdict, w.rule);
                body["wiener"] = serde_json::to_value(&w)?;
            }
            if let Some(t0) = escape_ray {
                let ray = find_escape_ray(&region, &x0v, t0, 100_000, common.seed)?;
                println!(
                    "escape ray: {} (tested {}, blocked fraction {:.4})",
                    if ray.direction.is_some() { "found" } else { "not found" },
                    ray.tested,
                    ray.blocked_fraction
                );
                body["escape_ray"] = serde_json::to_value(&ray)?;
            }
            if let Some(path) = csv {
                let d: plaplab::thinness::ThinnessReport =
                    serde_json::from_value(body["density"].clone())?;
                std::fs::write(path, d.to_csv())?;
            }
            let report = json!({
                "provenance": provenance(common.seed, &format!("thin;{x0};{p};{i_min};{i_max}")),
                "thinness": body,
            });
            emit(report, &common.out)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Curvature { config, point, p, common } => {
            let factor: ConformalFactor = if config.extension().and_then(|e| e.to_str())
                == Some("csv")
            {
                ConformalFactor::GridField { field: config::load_field_csv(&config)? }
            } else {
                load_config(&config)?
            };
            let x = parse_floats(&point)?;
            let rep = curvature_at(&factor, &x, p)?;
            println!(
                "schouten {:?}\nA^({p}) {:?}  scalar {:.6}",
                rep.schouten_spectrum.values(),
                rep.ap_spectrum.values(),
                rep.scalar
            );
            let report = json!({
                "provenance": provenance(common.seed, &format!("curvature;{point};{p}")),
                "curvature": rep,
            });
            emit(report, &common.out)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Dimension {
            generator,
            n,
            m,
            samples,
            ratio,
            depth,
            delta_min,
            delta_max,
            scales,
            common,
        } => {
            let (mu, default_min, default_max) = match generator.as_str() {
                "segment" => (
                    SurfaceGenerator::Segment { n, length: 1.0, samples }.build()?,
                    4.0 / samples as f64,
                    0.2,
                ),
                "plane" => {
                    let per_axis = (samples as f64).powf(1.0 / m as f64).round() as usize;
                    (
                        SurfaceGenerator::KPlanePatch { n, m, side: 1.0, samples_per_axis: per_axis }
                            .build()?,
                        4.0 / per_axis as f64,
                        0.2,
                    )
                }
                "cantor" => (
                    SurfaceGenerator::CantorDust { n, ratio, depth }.build()?,
                    ratio.powi(depth as i32 - 1),
                    ratio.powi(2),
                ),
                other => return Err(Error::Config(format!("unknown generator '{other}'"))),
            };
            let cloud = PointCloud::from_measure(&mu, generator.clone())?;
            let dmin = delta_min.unwrap_or(default_min);
            let dmax = delta_max.unwrap_or(default_max);
            let (dim, residual) = box_counting_dim(&cloud, dmin, dmax, scales)?;
            println!("box-counting dimension {dim:.4} (fit residual {residual:.2e})");
            let report = json!({
                "provenance": provenance(common.seed, &format!("dimension;{generator};{n};{m};{samples};{scales}")),
                "dimension": { "value": dim, "fit_residual": residual,
                               "delta_min": dmin, "delta_max": dmax, "points": cloud.points.len() },
            });
            emit(report, &common.out)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Theorem4 { config, n, k, with_wolff_survey, common } => {
            let mut cfg: Theorem4Config = match config {
                Some(path) => load_config(&path)?,
                None => Theorem4Config {
                    n: 5,
                    k: 2,
                    spectra_samples: 1000,
                    cloud_samples: 10_000,
                    seed: common.seed,
                    with_wolff_survey: false,
                },
            };
            if let Some(n) = n {
                cfg.n = n;
            }
            if let Some(k) = k {
                cfg.k = k;
            }
            if with_wolff_survey {
                cfg.with_wolff_survey = true;
            }
            cfg.seed = common.seed;
            let rep = theorem4_experiment(&cfg)?;
            for c in &rep.sub_checks {
                println!("[{}] {}: {}", if c.pass { "ok" } else { "FAIL" }, c.name, c.detail);
            }
            let all = rep.all_pass();
            let report = json!({
                "provenance": provenance(common.seed, &format!("theorem4;{};{}", cfg.n, cfg.k)),
                "experiment": rep,
            });
            emit(report, &common.out)?;
            Ok(if all { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Verify { suite, quick, common } => {
            let names: Vec<String> = suite.split(',').map(|s| s.trim().to_string()).collect();
            let opts = VerifyOptions { seed: common.seed, quick };
            let mut report = run_suites(&names, &opts)?;
            report.provenance.timestamp = timestamp();
            for c in &report.criteria {
                println!("{}", c.summary_line());
                for l in &c.lines {
                    println!("    [{}] {}: {}", if l.pass { "ok" } else { "FAIL" }, l.name, l.detail);
                }
            }
            let all = report.all_passed;
            emit(serde_json::to_value(&report)?, &common.out)?;
            Ok(if all { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
    }
}

//! Command line front end.
//!
//! Every command reads its parameters from flags and, optionally, from a JSON
//! file given with `--config` whose keys are the flag names. Flags win over
//! the file. Exit codes: 0 success, 1 bad usage or input, 2 numerical or
//! invariant failure.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::characteristics::{kinetic_energy, moment_g, MassSpec, PhaseState};
use crate::error::Error;
use crate::integrator::{
    compare_to_analytic, integrate_recorded, reversibility_error, CollisionEvent,
    IntegrationReport, Method,
};
use crate::io::{read_json, write_json, TrajectoryTable};
use crate::lagrange::lagrange_solution;
use crate::minsize::{flatness_report, g_ratio_e, min_size_attainment, FlatnessReport};
use crate::solver::{multistart, rescale_minimum, MinimaCatalog, MultistartOptions};
use crate::trajectory::{sample, Family, Grid, SampledTrajectory, TrajectorySpec};

/// Environment variable consulted when no seed is given.
pub const SEED_ENV: &str = "NBODY_SEED";

#[derive(Parser, Debug)]
#[command(
    name = "homographic",
    version,
    about = "Central configurations and homographic N-body orbits"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Search for central configurations by multistart minimization.
    Solve(SolveArgs),
    /// Sample an analytic circular or pulsating trajectory.
    Trajectory(TrajectoryArgs),
    /// Integrate the equations of motion from a trajectory's initial state.
    Integrate(IntegrateArgs),
    /// Check a trajectory CSV against the minimum-size bound.
    Verify(VerifyArgs),
}

/// Failure carrying the process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: 1,
            message: message.into(),
        }
    }

    fn numeric(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::usage(e.to_string())
    }
}

type Outcome = std::result::Result<(), Failure>;

macro_rules! merge_options {
    ($flags:expr, $file:expr; $($field:ident),* $(; $($flag:ident),*)?) => {{
        $( if $flags.$field.is_none() { $flags.$field = $file.$field; } )*
        $($( $flags.$flag |= $file.$flag; )*)?
    }};
}

fn load_config<T: DeserializeOwned + Default>(
    path: Option<&Path>,
) -> std::result::Result<T, Failure> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Failure::usage(format!("cannot read config {}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| Failure::usage(format!("bad config {}: {e}", p.display())))
        }
    }
}

fn required<T>(value: Option<T>, name: &str) -> std::result::Result<T, Failure> {
    value.ok_or_else(|| Failure::usage(format!("missing required option --{name}")))
}

fn output_dir(out: Option<PathBuf>) -> std::result::Result<PathBuf, Failure> {
    let dir = out.unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)
        .map_err(|e| Failure::usage(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn mass_spec(
    masses: Option<Vec<f64>>,
    gamma: Option<f64>,
) -> std::result::Result<MassSpec, Failure> {
    Ok(MassSpec::new(
        required(masses, "masses")?,
        gamma.unwrap_or(1.0),
    )?)
}

fn resolve_seed(seed: Option<u64>) -> std::result::Result<u64, Failure> {
    if let Some(s) = seed {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(text) => text
            .trim()
            .parse()
            .map_err(|_| Failure::usage(format!("{SEED_ENV}={text:?} is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}

#[derive(Args, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
struct SolveArgs {
    /// JSON file with default values for these options.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// Comma separated masses.
    #[arg(long, value_delimiter = ',')]
    masses: Option<Vec<f64>>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Multiplier of the moment of inertia in the objective.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    starts: Option<usize>,
    /// Random seed; falls back to NBODY_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
    /// Residual at which a run counts as converged.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_solve(mut args: SolveArgs) -> Outcome {
    let file: SolveArgs = load_config(args.config.as_deref())?;
    merge_options!(args, file; masses, gamma, lambda, starts, seed, tol, max_iterations, out);
    let spec = mass_spec(args.masses, args.gamma)?;
    let lambda = args.lambda.unwrap_or(0.5);
    let starts = args.starts.unwrap_or(50);
    let seed = resolve_seed(args.seed)?;
    let mut options = MultistartOptions::default();
    if let Some(tol) = args.tol {
        options.solver.tol = tol;
    }
    if let Some(n) = args.max_iterations {
        options.solver.max_iterations = n;
    }
    let out = output_dir(args.out)?;

    let catalog = multistart(&spec, lambda, starts, seed, &options)?;
    write_json(&out.join("catalog.json"), &catalog)?;
    println!(
        "{} of {} starts converged into {} classes; lower bound C_L = {:.12}",
        catalog.n_converged,
        catalog.n_starts,
        catalog.entries.len(),
        catalog.lower_bound
    );
    for (k, entry) in catalog.entries.iter().enumerate() {
        println!(
            "class {k}: C = {:.12}, residual = {:.3e}, starts = {}",
            entry.result.c_estimate, entry.result.residual, entry.class_size
        );
    }
    if catalog.entries.is_empty() {
        return Err(Failure::numeric("no start converged"));
    }
    Ok(())
}

#[derive(Args, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
struct TrajectoryArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// Catalog written by `solve`; without it the three-body equilateral
    /// solution for --masses is used.
    #[arg(long)]
    catalog: Option<PathBuf>,
    /// Catalog entry, 0 being the smallest C.
    #[arg(long)]
    entry: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    masses: Option<Vec<f64>>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// circular or pulsating.
    #[arg(long)]
    family: Option<Family>,
    /// Angular velocity at the start of a pulsating orbit.
    #[arg(long)]
    omega0: Option<f64>,
    /// Alternative to --omega0: `e = 1 - omega0²/(2 lambda)`.
    #[arg(long, allow_negative_numbers = true)]
    eccentricity: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    periods: Option<f64>,
    /// phi (default) or time.
    #[arg(long)]
    grid: Option<Grid>,
    /// Write 3D coordinates (z = 0).
    #[arg(long)]
    embed_3d: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct TrajectoryProfile {
    family: Family,
    eccentricity: f64,
    period: f64,
    samples: usize,
    /// `max |f√g / (f√g)₀ - 1|`.
    fsqrtg_spread: f64,
    g_min: f64,
    g_max: f64,
    b_min: f64,
    b_max: f64,
    /// Range of `b` implied by the eccentricity.
    b_bounds: [f64; 2],
}

fn trajectory_spec(args: &TrajectoryArgs) -> std::result::Result<TrajectorySpec, Failure> {
    let (masses, seed, lambda) = match &args.catalog {
        Some(path) => {
            let catalog: MinimaCatalog = read_json(path)?;
            let k = args.entry.unwrap_or(0);
            let entry = catalog
                .entries
                .get(k)
                .ok_or_else(|| Failure::usage(format!("catalog has no entry {k}")))?;
            let result = match args.lambda {
                Some(l) => rescale_minimum(&catalog.masses, &entry.result, l)?,
                None => entry.result.clone(),
            };
            (catalog.masses, result.config, result.lambda)
        }
        None => {
            let spec = mass_spec(args.masses.clone(), args.gamma)?;
            let lambda = args.lambda.unwrap_or(0.5);
            let seed = lagrange_solution(&spec, lambda)?.config;
            (spec, seed, lambda)
        }
    };
    match args.family.unwrap_or(Family::Circular) {
        Family::Circular => {
            if args.omega0.is_some() || args.eccentricity.is_some() {
                return Err(Failure::usage(
                    "the circular family takes neither --omega0 nor --eccentricity",
                ));
            }
            Ok(TrajectorySpec::circular(masses, seed, lambda)?)
        }
        Family::Pulsating => {
            let omega0 = match (args.omega0, args.eccentricity) {
                (Some(w), None) => w,
                (None, Some(e)) if e < 1.0 => (2.0 * lambda * (1.0 - e)).sqrt(),
                (None, Some(e)) => {
                    return Err(Failure::usage(format!(
                        "eccentricity must be below 1, got {e}"
                    )))
                }
                _ => {
                    return Err(Failure::usage(
                        "pulsating orbits need exactly one of --omega0, --eccentricity",
                    ))
                }
            };
            Ok(TrajectorySpec::pulsating(masses, seed, lambda, omega0)?)
        }
    }
}

fn embed(traj: SampledTrajectory) -> SampledTrajectory {
    SampledTrajectory {
        states: traj.states.iter().map(PhaseState::to_3d).collect(),
        ..traj
    }
}

fn cmd_trajectory(mut args: TrajectoryArgs) -> Outcome {
    let file: TrajectoryArgs = load_config(args.config.as_deref())?;
    merge_options!(args, file; catalog, entry, masses, gamma, lambda, family, omega0, eccentricity,
        samples, periods, grid, out; embed_3d);
    let spec = trajectory_spec(&args)?;
    let samples = args.samples.unwrap_or(201);
    let periods = args.periods.unwrap_or(1.0);
    let out = output_dir(args.out.clone())?;

    let mut traj = sample(&spec, samples, periods, args.grid.unwrap_or(Grid::Phi))?;
    if args.embed_3d {
        traj = embed(traj);
    }
    let table = TrajectoryTable::from_trajectory(spec.masses(), &traj)?;
    let c0 = table.derived[0].f * table.derived[0].g.sqrt();
    let e = spec.eccentricity();
    let (_, _, b0) = spec.seed_values()?;
    let low = ((1.0 - e) / (1.0 + e)).min(1.0);
    let high = ((1.0 - e) / (1.0 + e)).max(1.0);
    let profile = TrajectoryProfile {
        family: spec.family(),
        eccentricity: e,
        period: spec.period(),
        samples,
        fsqrtg_spread: table
            .derived
            .iter()
            .map(|d| (d.f * d.g.sqrt() / c0 - 1.0).abs())
            .fold(0.0, f64::max),
        g_min: table
            .derived
            .iter()
            .map(|d| d.g)
            .fold(f64::INFINITY, f64::min),
        g_max: table.derived.iter().map(|d| d.g).fold(0.0, f64::max),
        b_min: table
            .derived
            .iter()
            .map(|d| d.b)
            .fold(f64::INFINITY, f64::min),
        b_max: table.derived.iter().map(|d| d.b).fold(0.0, f64::max),
        b_bounds: [b0 * low, b0 * high],
    };
    table.write_file(&out.join("trajectory.csv"))?;
    write_json(&out.join("trajectory_spec.json"), &spec)?;
    write_json(&out.join("profile.json"), &profile)?;
    println!(
        "{} samples over {periods} periods (T = {:.12}); f*sqrt(g) = {c0:.12}, relative spread {:.3e}",
        samples, profile.period, profile.fsqrtg_spread
    );
    println!("b in [{:.12}, {:.12}]", profile.b_min, profile.b_max);
    Ok(())
}

#[derive(Args, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
struct IntegrateArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// trajectory_spec.json written by `trajectory`.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    dt: Option<f64>,
    /// Number of steps; defaults to --periods worth of steps.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    periods: Option<f64>,
    /// rk4 or leapfrog.
    #[arg(long)]
    method: Option<Method>,
    /// Keep every k-th step in the CSV.
    #[arg(long)]
    record_every: Option<usize>,
    /// Allowed relative energy and angular momentum drift.
    #[arg(long)]
    drift_tol: Option<f64>,
    /// Allowed position error and center of mass drift, relative to b.
    #[arg(long)]
    position_tol: Option<f64>,
    /// Also integrate back from the end and check that the start is recovered.
    #[arg(long)]
    reversibility: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct IntegrateOutput {
    report: IntegrationReport,
    collision: Option<CollisionEvent>,
    reversibility_error: Option<f64>,
    drift_tol: f64,
    position_tol: f64,
    pass: bool,
}

fn cmd_integrate(mut args: IntegrateArgs) -> Outcome {
    let file: IntegrateArgs = load_config(args.config.as_deref())?;
    merge_options!(args, file; spec, dt, steps, periods, method, record_every, drift_tol,
        position_tol, out; reversibility);
    let spec: TrajectorySpec = read_json(&required(args.spec, "spec")?)?;
    let dt = args.dt.unwrap_or(1e-4);
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Failure::usage(format!("--dt must be positive, got {dt}")));
    }
    let steps = match args.steps {
        Some(n) => n,
        None => (args.periods.unwrap_or(1.0) * spec.period() / dt).round() as usize,
    };
    let method = args.method.unwrap_or(Method::Rk4);
    let drift_tol = args.drift_tol.unwrap_or(1e-8);
    let position_tol = args.position_tol.unwrap_or(1e-5);
    let out = output_dir(args.out)?;

    let initial = spec.state_at_time(0.0);
    let run = integrate_recorded(
        spec.masses(),
        &initial,
        dt,
        steps,
        method,
        args.record_every.unwrap_or(100),
    )?;
    let report = compare_to_analytic(&run, &spec)?;
    let reversibility = if args.reversibility {
        Some(
            reversibility_error(spec.masses(), &initial, dt, steps, method)
                .unwrap_or(f64::INFINITY),
        )
    } else {
        None
    };
    let pass = run.collision.is_none()
        && report.energy_drift <= drift_tol
        && report.lz_drift <= drift_tol
        && report.relative_position_error <= position_tol
        && report.com_drift <= 1e-10 * report.reference_size
        && reversibility.is_none_or(|e| e <= 1e-9);
    TrajectoryTable::from_trajectory(spec.masses(), &run.trajectory)?
        .write_file(&out.join("numeric.csv"))?;
    let output = IntegrateOutput {
        report,
        collision: run.collision,
        reversibility_error: reversibility,
        drift_tol,
        position_tol,
        pass,
    };
    write_json(&out.join("report.json"), &output)?;
    let r = &output.report;
    println!(
        "{} steps of {dt:e} ({:?}): position error {:.3e} b, energy drift {:.3e}, Lz drift {:.3e}, com drift {:.3e}",
        r.steps, method, r.relative_position_error, r.energy_drift, r.lz_drift, r.com_drift
    );
    if let Some(c) = &output.collision {
        println!(
            "close encounter of particles {} and {} at t = {:.6}",
            c.i + 1,
            c.j + 1,
            c.time
        );
    }
    if let Some(e) = reversibility {
        println!("reversibility error {e:.3e}");
    }
    if !pass {
        return Err(Failure::numeric("integration exceeded its tolerances"));
    }
    Ok(())
}

#[derive(Args, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
struct VerifyArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// Trajectory CSV to check.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// trajectory_spec.json of the orbit; enables the comparison with G(φ).
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Masses, when no --spec is given.
    #[arg(long, value_delimiter = ',')]
    masses: Option<Vec<f64>>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Allowed deviation of g/W from G(φ).
    #[arg(long)]
    ratio_tol: Option<f64>,
    /// Allowed z, vz and characteristic column mismatch, relative.
    #[arg(long)]
    flat_tol: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct VerifyOutput {
    samples: usize,
    family: Option<Family>,
    eccentricity: Option<f64>,
    min_ratio: f64,
    max_ratio: f64,
    max_ratio_vs_g: Option<f64>,
    attained: usize,
    /// Worst relative mismatch of the f, g, b, T, Lz, E columns.
    column_mismatch: f64,
    flatness: FlatnessReport,
    violations: Vec<String>,
}

fn cmd_verify(mut args: VerifyArgs) -> Outcome {
    let file: VerifyArgs = load_config(args.config.as_deref())?;
    merge_options!(args, file; csv, spec, masses, gamma, ratio_tol, flat_tol, out);
    let mut table = TrajectoryTable::read_file(&required(args.csv, "csv")?)?;
    let orbit: Option<TrajectorySpec> = args.spec.as_deref().map(read_json).transpose()?;
    let masses = match &orbit {
        Some(o) => o.masses().clone(),
        None => mass_spec(args.masses, args.gamma)?,
    };
    if masses.len() != table.particles() {
        return Err(Failure::usage(format!(
            "{} masses for {} particles in the CSV",
            masses.len(),
            table.particles()
        )));
    }
    let ratio_tol = args.ratio_tol.unwrap_or(1e-8);
    let flat_tol = args.flat_tol.unwrap_or(1e-9);
    let out = output_dir(args.out)?;

    let recomputed = TrajectoryTable::from_trajectory(&masses, &table.trajectory)?;
    let column_mismatch = recomputed
        .derived
        .iter()
        .zip(&table.derived)
        .flat_map(|(a, b)| {
            let scale = a.f.abs().max(a.g.abs());
            [
                a.f - b.f,
                a.g - b.g,
                a.b - b.b,
                a.kinetic - b.kinetic,
                a.lz - b.lz,
                a.energy - b.energy,
            ]
            .map(|d| d.abs() / scale)
        })
        .fold(0.0, f64::max);
    let samples = min_size_attainment(&masses, &table.trajectory)?;

    let mut violations = Vec::new();
    let mut flatness = FlatnessReport {
        max_abs_z: 0.0,
        max_abs_vz: 0.0,
        max_rv_dot: 0.0,
        speed_ratio_spread: 0.0,
    };
    let mut flat_scaled: f64 = 0.0;
    for state in &table.trajectory.states {
        let r = flatness_report(&masses, state);
        let b = (moment_g(&masses, &state.config) / masses.total_mass()).sqrt();
        let v = (2.0 * kinetic_energy(&masses, state) / masses.total_mass()).sqrt();
        flat_scaled = flat_scaled.max(r.max_abs_z / b).max(r.max_abs_vz / v);
        flatness.max_abs_z = flatness.max_abs_z.max(r.max_abs_z);
        flatness.max_abs_vz = flatness.max_abs_vz.max(r.max_abs_vz);
        flatness.max_rv_dot = flatness.max_rv_dot.max(r.max_rv_dot);
        flatness.speed_ratio_spread = flatness.speed_ratio_spread.max(r.speed_ratio_spread);
    }
    if flat_scaled > flat_tol {
        violations.push(format!(
            "trajectory leaves the plane: relative z or vz up to {flat_scaled:.3e}"
        ));
    }
    if column_mismatch > flat_tol {
        violations.push(format!(
            "characteristic columns disagree with the states by {column_mismatch:.3e}"
        ));
    }
    let min_ratio = samples
        .iter()
        .map(|s| s.ratio)
        .fold(f64::INFINITY, f64::min);
    let max_ratio = samples.iter().map(|s| s.ratio).fold(0.0, f64::max);
    if min_ratio < 1.0 - 1e-9 {
        violations.push(format!(
            "g/W drops to {min_ratio:.12}, below the minimum-size bound"
        ));
    }

    let e = orbit.as_ref().map(TrajectorySpec::eccentricity);
    let mut max_ratio_vs_g = None;
    if let Some(e) = e {
        let g: Vec<f64> = table
            .trajectory
            .phis
            .iter()
            .map(|&phi| g_ratio_e(e, phi))
            .collect::<crate::error::Result<_>>()?;
        let worst = samples
            .iter()
            .zip(&g)
            .map(|(s, g)| (s.ratio - g).abs())
            .fold(0.0, f64::max);
        if worst > ratio_tol {
            violations.push(format!("g/W departs from G(phi) by {worst:.3e}"));
        }
        max_ratio_vs_g = Some(worst);
        table.push_column("G", g)?;
    }
    if orbit.as_ref().map(TrajectorySpec::family) == Some(Family::Circular)
        && flatness.max_rv_dot > ratio_tol
    {
        violations.push(format!(
            "velocities are not perpendicular to radii: cosine up to {:.3e}",
            flatness.max_rv_dot
        ));
    }

    table.push_column("W", samples.iter().map(|s| s.w).collect())?;
    table.push_column("ratio", samples.iter().map(|s| s.ratio).collect())?;
    table.push_column(
        "attained",
        samples
            .iter()
            .map(|s| f64::from(u8::from(s.attained)))
            .collect(),
    )?;
    table.write_file(&out.join("verify.csv"))?;
    let output = VerifyOutput {
        samples: samples.len(),
        family: orbit.as_ref().map(TrajectorySpec::family),
        eccentricity: e,
        min_ratio,
        max_ratio,
        max_ratio_vs_g,
        attained: samples.iter().filter(|s| s.attained).count(),
        column_mismatch,
        flatness,
        violations,
    };
    write_json(&out.join("verify.json"), &output)?;
    println!(
        "{} samples: g/W in [{:.12}, {:.12}], {} at the minimum size",
        output.samples, min_ratio, max_ratio, output.attained
    );
    if let Some(w) = max_ratio_vs_g {
        println!("largest |g/W - G(phi)| = {w:.3e}");
    }
    for v in &output.violations {
        println!("violation: {v}");
    }
    if !output.violations.is_empty() {
        return Err(Failure::numeric(format!(
            "{} invariant violations",
            output.violations.len()
        )));
    }
    Ok(())
}

/// Parses `args` (program name first), runs the command and returns the exit
/// code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Trajectory(a) => cmd_trajectory(a),
        Command::Integrate(a) => cmd_integrate(a),
        Command::Verify(a) => cmd_verify(a),
    };
    match outcome {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

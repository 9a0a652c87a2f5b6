//! Fixed-step integration of `m_i r̈_i = F_i(r)`, used as an independent
//! check on the analytic trajectories.

use serde::{Deserialize, Serialize};

use crate::characteristics::{
    angular_momentum, center_of_mass, cohesion, dist, dot, forces, kinetic_energy, moment_g, norm,
    Configuration, MassSpec, PhaseState,
};
use crate::error::{Error, Result};
use crate::trajectory::{SampledTrajectory, TrajectorySpec};

/// Integration stops once any pair comes closer than this fraction of the
/// initial minimum separation.
pub const ENCOUNTER_GUARD: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Rk4,
    Leapfrog,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rk4" => Ok(Method::Rk4),
            "leapfrog" | "verlet" => Ok(Method::Leapfrog),
            other => Err(Error::InvalidParameter(format!(
                "unknown integration method {other:?}"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollisionEvent {
    /// Step during which the encounter was detected.
    pub step: usize,
    pub time: f64,
    pub i: usize,
    pub j: usize,
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegrationRun {
    pub trajectory: SampledTrajectory,
    pub method: Method,
    pub dt: f64,
    /// Steps actually taken.
    pub steps: usize,
    pub collision: Option<CollisionEvent>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegrationReport {
    /// Largest particle displacement from the analytic reference.
    pub max_position_error: f64,
    /// `max_position_error` divided by the initial rms size.
    pub relative_position_error: f64,
    /// `max |E(t) - E(0)| / |E(0)|`.
    pub energy_drift: f64,
    /// `max |L_z(t) - L_z(0)| / |L_z(0)|`.
    pub lz_drift: f64,
    /// `max |com(t) - com(0)|`.
    pub com_drift: f64,
    pub reference_size: f64,
    pub steps: usize,
    pub method: Method,
    pub dt: f64,
    pub collided: bool,
}

/// `a_i = F_i / m_i`.
pub fn accelerations(spec: &MassSpec, config: &Configuration) -> Result<Vec<f64>> {
    let mut acc = forces(spec, config)?;
    let dim = config.dim();
    for (k, a) in acc.iter_mut().enumerate() {
        *a /= spec.mass(k / dim);
    }
    Ok(acc)
}

fn config_from(dim: usize, coords: Vec<f64>) -> Result<Configuration> {
    Configuration::from_flat(dim, coords)
}

fn axpy(base: &[f64], scale: f64, dir: &[f64]) -> Vec<f64> {
    base.iter().zip(dir).map(|(b, d)| b + scale * d).collect()
}

fn rk4_step(
    spec: &MassSpec,
    x: &[f64],
    v: &[f64],
    dim: usize,
    dt: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let acc = |pos: &[f64]| accelerations(spec, &config_from(dim, pos.to_vec())?);
    let k1x = v.to_vec();
    let k1v = acc(x)?;
    let x2 = axpy(x, 0.5 * dt, &k1x);
    let k2x = axpy(v, 0.5 * dt, &k1v);
    let k2v = acc(&x2)?;
    let x3 = axpy(x, 0.5 * dt, &k2x);
    let k3x = axpy(v, 0.5 * dt, &k2v);
    let k3v = acc(&x3)?;
    let x4 = axpy(x, dt, &k3x);
    let k4x = axpy(v, dt, &k3v);
    let k4v = acc(&x4)?;
    let w = dt / 6.0;
    let nx = (0..x.len())
        .map(|k| x[k] + w * (k1x[k] + 2.0 * k2x[k] + 2.0 * k3x[k] + k4x[k]))
        .collect();
    let nv = (0..v.len())
        .map(|k| v[k] + w * (k1v[k] + 2.0 * k2v[k] + 2.0 * k3v[k] + k4v[k]))
        .collect();
    Ok((nx, nv))
}

/// Kick-drift-kick; `acc` holds the accelerations at `x` on entry and at the
/// new positions on exit.
fn leapfrog_step(
    spec: &MassSpec,
    x: &[f64],
    v: &[f64],
    acc: &mut Vec<f64>,
    dim: usize,
    dt: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let half = axpy(v, 0.5 * dt, acc);
    let nx = axpy(x, dt, &half);
    *acc = accelerations(spec, &config_from(dim, nx.clone())?)?;
    let nv = axpy(&half, 0.5 * dt, acc);
    Ok((nx, nv))
}

/// Rotation angle that best maps `reference` onto `config` (mass weighted,
/// in the xy plane).
pub(crate) fn rotation_angle(
    spec: &MassSpec,
    reference: &Configuration,
    config: &Configuration,
) -> f64 {
    let (mut sin, mut cos) = (0.0, 0.0);
    for i in 0..config.len() {
        let p = reference.position(i);
        let q = config.position(i);
        cos += spec.mass(i) * (p[0] * q[0] + p[1] * q[1]);
        sin += spec.mass(i) * (p[0] * q[1] - p[1] * q[0]);
    }
    sin.atan2(cos)
}

fn unwrap_angle(previous: f64, wrapped: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    previous + (wrapped - previous + PI).rem_euclid(TAU) - PI
}

fn closest_pair(config: &Configuration) -> (usize, usize, f64) {
    config.pairwise_distances().fold(
        (0, 1, f64::INFINITY),
        |best, p| if p.2 < best.2 { p } else { best },
    )
}

/// Closest approach of any pair while all particles move on straight lines
/// from `before` to `after`. Catches pairs that a large step carries
/// straight through each other.
fn closest_swept_pair(before: &[f64], after: &[f64], dim: usize) -> (usize, usize, f64) {
    let n = before.len() / dim;
    let mut best = (0, 1, f64::INFINITY);
    for i in 0..n {
        for j in i + 1..n {
            let d0: Vec<f64> = (0..dim)
                .map(|k| before[j * dim + k] - before[i * dim + k])
                .collect();
            let d1: Vec<f64> = (0..dim)
                .map(|k| after[j * dim + k] - after[i * dim + k])
                .collect();
            let delta: Vec<f64> = d0.iter().zip(&d1).map(|(a, b)| b - a).collect();
            let dd = dot(&delta, &delta);
            let s = if dd > 0.0 {
                (-dot(&d0, &delta) / dd).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let closest: Vec<f64> = d0.iter().zip(&delta).map(|(a, b)| a + s * b).collect();
            let d = norm(&closest);
            if d < best.2 {
                best = (i, j, d);
            }
        }
    }
    best
}

/// Integrates `n_steps` of size `dt`, recording every step.
pub fn integrate(
    spec: &MassSpec,
    initial: &PhaseState,
    dt: f64,
    n_steps: usize,
    method: Method,
) -> Result<IntegrationRun> {
    integrate_recorded(spec, initial, dt, n_steps, method, 1)
}

/// Integrates `n_steps` of size `dt`, recording the initial state, every
/// `record_every`-th step, and the final step.
///
/// A close encounter stops the run early; the states recorded so far are
/// returned together with a [`CollisionEvent`].
pub fn integrate_recorded(
    spec: &MassSpec,
    initial: &PhaseState,
    dt: f64,
    n_steps: usize,
    method: Method,
    record_every: usize,
) -> Result<IntegrationRun> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "time step must be positive, got {dt}"
        )));
    }
    if record_every == 0 {
        return Err(Error::InvalidParameter(
            "record_every must be at least 1".to_string(),
        ));
    }
    if initial.len() != spec.len() {
        return Err(Error::Mismatch(format!(
            "{} masses for {} particles",
            spec.len(),
            initial.len()
        )));
    }
    let dim = initial.dim();
    let reference = initial.config.clone();
    let guard = ENCOUNTER_GUARD * reference.min_pairwise_distance();
    let mut x = reference.coords().to_vec();
    let mut v = initial.velocities().to_vec();
    let mut acc = accelerations(spec, &reference)?;

    let mut trajectory = SampledTrajectory {
        times: vec![0.0],
        phis: vec![0.0],
        states: vec![initial.clone()],
    };
    let mut collision = None;
    let mut steps = 0;

    for step in 1..=n_steps {
        let time = step as f64 * dt;
        let advanced = match method {
            Method::Rk4 => rk4_step(spec, &x, &v, dim, dt),
            Method::Leapfrog => leapfrog_step(spec, &x, &v, &mut acc, dim, dt),
        };
        let (nx, nv) = match advanced {
            Ok(next) => next,
            Err(Error::Collision { i, j, distance }) => {
                collision = Some(CollisionEvent {
                    step,
                    time,
                    i,
                    j,
                    distance,
                });
                break;
            }
            Err(e) => return Err(e),
        };
        if nx.iter().chain(&nv).any(|c| !c.is_finite()) {
            let (i, j, distance) = closest_pair(&config_from(dim, x.clone())?);
            collision = Some(CollisionEvent {
                step,
                time,
                i,
                j,
                distance,
            });
            break;
        }
        let (i, j, distance) = closest_swept_pair(&x, &nx, dim);
        if distance < guard {
            collision = Some(CollisionEvent {
                step,
                time,
                i,
                j,
                distance,
            });
            break;
        }
        let config = config_from(dim, nx)?;
        x = config.coords().to_vec();
        v = nv;
        steps = step;
        if step % record_every == 0 || step == n_steps {
            let phi = unwrap_angle(
                *trajectory.phis.last().unwrap_or(&0.0),
                rotation_angle(spec, &reference, &config),
            );
            trajectory.times.push(time);
            trajectory.phis.push(phi);
            trajectory.states.push(PhaseState::new(config, v.clone())?);
        }
    }

    Ok(IntegrationRun {
        trajectory,
        method,
        dt,
        steps,
        collision,
    })
}

/// Compares a numerical run against the analytic trajectory sampled at the
/// same times.
pub fn compare_to_analytic(
    run: &IntegrationRun,
    spec: &TrajectorySpec,
) -> Result<IntegrationReport> {
    let traj = &run.trajectory;
    let masses = spec.masses();
    if traj.is_empty() || traj.states.len() != traj.times.len() {
        return Err(Error::Mismatch(
            "trajectory has no consistent samples".to_string(),
        ));
    }
    if traj.times.windows(2).any(|w| !(w[1] >= w[0])) {
        return Err(Error::Mismatch("sample times are not monotone".to_string()));
    }
    let first = &traj.states[0];
    if first.len() != masses.len() || first.dim() != spec.seed().dim() {
        return Err(Error::Mismatch(format!(
            "run has {} particles in {}D, reference has {} in {}D",
            first.len(),
            first.dim(),
            masses.len(),
            spec.seed().dim()
        )));
    }

    let energy = |s: &PhaseState| -> Result<f64> {
        Ok(kinetic_energy(masses, s) - cohesion(masses, &s.config)?)
    };
    let e0 = energy(first)?;
    let lz0 = angular_momentum(masses, first)[2];
    let com0 = center_of_mass(masses, &first.config);
    let b0 = (moment_g(masses, spec.seed()) / masses.total_mass()).sqrt();

    let mut report = IntegrationReport {
        max_position_error: 0.0,
        relative_position_error: 0.0,
        energy_drift: 0.0,
        lz_drift: 0.0,
        com_drift: 0.0,
        reference_size: b0,
        steps: run.steps,
        method: run.method,
        dt: run.dt,
        collided: run.collision.is_some(),
    };
    for (t, state) in traj.times.iter().zip(&traj.states) {
        let exact = spec.state_at_time(*t);
        for i in 0..state.len() {
            let err = dist(state.config.position(i), exact.config.position(i));
            report.max_position_error = report.max_position_error.max(err);
        }
        report.energy_drift = report.energy_drift.max(((energy(state)? - e0) / e0).abs());
        let lz = angular_momentum(masses, state)[2];
        report.lz_drift = report.lz_drift.max(((lz - lz0) / lz0).abs());
        let com = center_of_mass(masses, &state.config);
        report.com_drift = report.com_drift.max(dist(&com, &com0));
    }
    report.relative_position_error = report.max_position_error / b0;
    Ok(report)
}

/// Integrates forward, reverses the velocities and integrates back; returns
/// the largest position and velocity mismatch with the start, relative to
/// the rms size and rms speed.
pub fn reversibility_error(
    spec: &MassSpec,
    initial: &PhaseState,
    dt: f64,
    n_steps: usize,
    method: Method,
) -> Result<f64> {
    let forward = integrate_recorded(spec, initial, dt, n_steps, method, n_steps.max(1))?;
    if forward.collision.is_some() {
        return Err(Error::InvalidParameter(
            "forward run hit a close encounter".to_string(),
        ));
    }
    let end = forward.trajectory.states.last().expect("start is recorded");
    let flipped: Vec<f64> = end.velocities().iter().map(|v| -v).collect();
    let turned = PhaseState::new(end.config.clone(), flipped)?;
    let back = integrate_recorded(spec, &turned, dt, n_steps, method, n_steps.max(1))?;
    let home = back.trajectory.states.last().expect("start is recorded");

    let size = (moment_g(spec, &initial.config) / spec.total_mass()).sqrt();
    let speed = (2.0 * kinetic_energy(spec, initial) / spec.total_mass()).sqrt();
    let mut worst: f64 = 0.0;
    for i in 0..initial.len() {
        worst = worst.max(dist(home.config.position(i), initial.config.position(i)) / size);
        let v_back: Vec<f64> = home.velocity(i).iter().map(|v| -v).collect();
        if speed > 0.0 {
            worst = worst.max(dist(&v_back, initial.velocity(i)) / speed);
        }
    }
    Ok(worst)
}

/// Time averages of `4T - 2f` and of `f` over the samples.
pub fn virial_means(spec: &MassSpec, traj: &SampledTrajectory) -> Result<(f64, f64)> {
    let n = traj.states.len() as f64;
    let mut virial = 0.0;
    let mut cohesion_sum = 0.0;
    for s in &traj.states {
        let f = cohesion(spec, &s.config)?;
        virial += 4.0 * kinetic_energy(spec, s) - 2.0 * f;
        cohesion_sum += f;
    }
    Ok((virial / n, cohesion_sum / n))
}

//! Homographic trajectories generated by a central configuration.
//!
//! Every particle keeps its place in the seed shape while the whole system
//! rotates by `φ(t)` and is scaled by `a(φ)`:
//!
//! ```text
//! r_j(t) = a(φ) · R(φ) · r_j(0),   a(φ) = p / (1 - e cos φ),   p = 1 - e
//! e = 1 - ω₀² / (2λ),   a² φ̇ = ω₀
//! ```
//!
//! The rigid rotation at `ω = √(2λ)` is the special case `e = 0`.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::characteristics::{
    center_of_mass, characteristics, cohesion, moment_g, norm, Characteristics, Configuration,
    MassSpec, PhaseState,
};
use crate::error::{Error, Result};
use crate::quadrature;
use crate::solver::residual;

/// Largest seed residual accepted when building a trajectory.
pub const SEED_TOLERANCE: f64 = 1e-9;

const PHASE_QUADRATURE_TOL: f64 = 1e-13;
const PHASE_INVERSION_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Circular,
    Pulsating,
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "circular" => Ok(Family::Circular),
            "pulsating" => Ok(Family::Pulsating),
            other => Err(Error::InvalidParameter(format!(
                "unknown trajectory family {other:?}"
            ))),
        }
    }
}

/// `e = 1 - ω₀² / (2λ)` for unit initial scale.
pub fn eccentricity(lambda: f64, omega0: f64) -> f64 {
    1.0 - omega0 * omega0 / (2.0 * lambda)
}

/// Scale factor `a(φ) = (1 - e) / (1 - e cos φ)`, with `a(0) = 1`.
pub fn scale_a(phi: f64, e: f64) -> f64 {
    (1.0 - e) / (1.0 - e * phi.cos())
}

fn check_orbit(lambda: f64, omega0: f64) -> Result<f64> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    if !(omega0.is_finite() && omega0 > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "initial angular velocity must be positive, got {omega0}"
        )));
    }
    let e = eccentricity(lambda, omega0);
    if e.abs() >= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "orbit is not bounded: omega0²/(2 lambda) = {} must lie in (0, 2)",
            1.0 - e
        )));
    }
    Ok(e)
}

/// Converts `(λ₀, a₀, ω₀)` with arbitrary initial scale into the equivalent
/// unit-scale parameters `(λ₀ / a₀³, ω₀)`.
pub fn reduce_to_d1(lambda0: f64, a0: f64, omega0: f64) -> Result<(f64, f64)> {
    if !(a0.is_finite() && a0 > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "initial scale must be positive, got {a0}"
        )));
    }
    if !(lambda0.is_finite() && lambda0 > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "lambda must be positive, got {lambda0}"
        )));
    }
    let ratio = a0.powi(3) * omega0 * omega0 / (2.0 * lambda0);
    if !(ratio > 0.0 && ratio < 2.0) {
        return Err(Error::InvalidParameter(format!(
            "a0³ omega0² / (2 lambda0) = {ratio} must lie in (0, 2)"
        )));
    }
    let lambda = lambda0 / a0.powi(3);
    check_orbit(lambda, omega0)?;
    Ok((lambda, omega0))
}

/// Relation between time and the rotation angle along a pulsating orbit,
/// `ω₀ t = ∫_0^φ p² dα / (1 - e cos α)²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseClock {
    pub e: f64,
    pub p: f64,
    /// Sectorial constant `a² φ̇`, equal to `ω₀` for unit initial scale.
    pub c: f64,
    /// Time for one full turn of `φ`.
    pub period: f64,
}

impl PhaseClock {
    pub fn new(lambda: f64, omega0: f64) -> Result<Self> {
        let e = check_orbit(lambda, omega0)?;
        Ok(Self::with_eccentricity(e, omega0))
    }

    fn with_eccentricity(e: f64, omega0: f64) -> Self {
        let mut clock = Self {
            e,
            p: 1.0 - e,
            c: omega0,
            period: 0.0,
        };
        clock.period = clock.sweep_time(0.0, TAU);
        clock
    }

    fn dt_dphi(&self, phi: f64) -> f64 {
        let d = 1.0 - self.e * phi.cos();
        self.p * self.p / (self.c * d * d)
    }

    fn sweep_time(&self, from: f64, to: f64) -> f64 {
        if self.e == 0.0 {
            return (to - from) / self.c;
        }
        quadrature::integrate(
            |phi| self.dt_dphi(phi),
            from,
            to,
            PHASE_QUADRATURE_TOL / self.c,
        )
    }

    pub fn a(&self, phi: f64) -> f64 {
        self.p / (1.0 - self.e * phi.cos())
    }

    pub fn da_dphi(&self, phi: f64) -> f64 {
        let d = 1.0 - self.e * phi.cos();
        -self.p * self.e * phi.sin() / (d * d)
    }

    pub fn phi_dot(&self, phi: f64) -> f64 {
        let a = self.a(phi);
        self.c / (a * a)
    }

    /// Time at which the angle reaches `phi` (`phi ≥ 0`).
    pub fn time_at(&self, phi: f64) -> f64 {
        let turns = (phi / TAU).floor();
        turns * self.period + self.sweep_time(0.0, phi - turns * TAU)
    }

    /// Inverse of [`time_at`](Self::time_at) by safeguarded Newton iteration
    /// on `dφ/dt = c / a²`.
    pub fn phi_at(&self, t: f64) -> f64 {
        if self.e == 0.0 {
            return self.c * t;
        }
        let turns = (t / self.period).floor();
        let tau = t - turns * self.period;
        let (mut lo, mut hi) = (0.0, TAU);
        let mut phi = TAU * tau / self.period;
        let mut t_phi = self.sweep_time(0.0, phi);
        for _ in 0..100 {
            let miss = t_phi - tau;
            if miss == 0.0 {
                break;
            }
            if miss > 0.0 {
                hi = phi;
            } else {
                lo = phi;
            }
            let mut next = phi - miss * self.phi_dot(phi);
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            let step = next - phi;
            t_phi += self.sweep_time(phi, next);
            phi = next;
            if step.abs() < PHASE_INVERSION_TOL || hi - lo < PHASE_INVERSION_TOL {
                break;
            }
        }
        turns * TAU + phi
    }
}

/// `φ(t)` for unit initial scale.
pub fn phi_of_t(t: f64, lambda: f64, omega0: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "time must be non-negative, got {t}"
        )));
    }
    Ok(PhaseClock::new(lambda, omega0)?.phi_at(t))
}

#[derive(Deserialize)]
struct RawTrajectorySpec {
    masses: MassSpec,
    seed: Configuration,
    lambda: f64,
    family: Family,
    omega0: f64,
    #[serde(default = "unit_scale")]
    a0: f64,
}

fn unit_scale() -> f64 {
    1.0
}

/// Seed central configuration plus the orbit parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTrajectorySpec")]
pub struct TrajectorySpec {
    masses: MassSpec,
    seed: Configuration,
    lambda: f64,
    family: Family,
    omega0: f64,
    a0: f64,
}

impl TryFrom<RawTrajectorySpec> for TrajectorySpec {
    type Error = Error;

    fn try_from(raw: RawTrajectorySpec) -> Result<Self> {
        let (lambda, omega0) = reduce_to_d1(raw.lambda, raw.a0, raw.omega0)?;
        let seed = raw.seed.scaled(raw.a0);
        match raw.family {
            Family::Circular => {
                let spec = TrajectorySpec::circular(raw.masses, seed, lambda)?;
                if (spec.omega0 - omega0).abs() > 1e-12 * omega0 {
                    return Err(Error::InvalidParameter(format!(
                        "circular family rotates at sqrt(2 lambda) = {}, got omega0 = {omega0}",
                        spec.omega0
                    )));
                }
                Ok(spec)
            }
            Family::Pulsating => TrajectorySpec::pulsating(raw.masses, seed, lambda, omega0),
        }
    }
}

impl TrajectorySpec {
    pub fn circular(masses: MassSpec, seed: Configuration, lambda: f64) -> Result<Self> {
        let omega = (2.0 * lambda).sqrt();
        Self::build(masses, seed, lambda, Family::Circular, omega)
    }

    pub fn pulsating(
        masses: MassSpec,
        seed: Configuration,
        lambda: f64,
        omega0: f64,
    ) -> Result<Self> {
        Self::build(masses, seed, lambda, Family::Pulsating, omega0)
    }

    /// Orbit started from `a0 · seed`, where `seed` is central for `lambda0`.
    pub fn pulsating_scaled(
        masses: MassSpec,
        seed: Configuration,
        lambda0: f64,
        a0: f64,
        omega0: f64,
    ) -> Result<Self> {
        let (lambda, omega0) = reduce_to_d1(lambda0, a0, omega0)?;
        Self::pulsating(masses, seed.scaled(a0), lambda, omega0)
    }

    fn build(
        masses: MassSpec,
        seed: Configuration,
        lambda: f64,
        family: Family,
        omega0: f64,
    ) -> Result<Self> {
        check_orbit(lambda, omega0)?;
        if seed.dim() != 2 {
            return Err(Error::InvalidConfiguration(format!(
                "trajectory seeds are planar, got {}D",
                seed.dim()
            )));
        }
        if seed.len() != masses.len() {
            return Err(Error::Mismatch(format!(
                "{} masses for {} particles",
                masses.len(),
                seed.len()
            )));
        }
        let b = (moment_g(&masses, &seed) / masses.total_mass()).sqrt();
        if norm(&center_of_mass(&masses, &seed)) > 1e-9 * b {
            return Err(Error::InvalidConfiguration(
                "seed center of mass is not at the origin".to_string(),
            ));
        }
        let res = residual(&masses, &seed, lambda)?;
        if res > SEED_TOLERANCE {
            return Err(Error::InvalidConfiguration(format!(
                "seed is not a central configuration for lambda = {lambda}: residual {res:e}"
            )));
        }
        Ok(Self {
            masses,
            seed,
            lambda,
            family,
            omega0,
            a0: 1.0,
        })
    }

    pub fn masses(&self) -> &MassSpec {
        &self.masses
    }

    pub fn seed(&self) -> &Configuration {
        &self.seed
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    pub fn a0(&self) -> f64 {
        self.a0
    }

    /// Zero for the circular family by construction.
    pub fn eccentricity(&self) -> f64 {
        match self.family {
            Family::Circular => 0.0,
            Family::Pulsating => eccentricity(self.lambda, self.omega0),
        }
    }

    pub fn clock(&self) -> PhaseClock {
        PhaseClock::with_eccentricity(self.eccentricity(), self.omega0)
    }

    pub fn period(&self) -> f64 {
        self.clock().period
    }

    /// `(f, g, b)` of the seed.
    pub fn seed_values(&self) -> Result<(f64, f64, f64)> {
        let f = cohesion(&self.masses, &self.seed)?;
        let g = moment_g(&self.masses, &self.seed);
        Ok((f, g, (g / self.masses.total_mass()).sqrt()))
    }

    /// State after the system has turned by `phi`.
    pub fn state_at_phi(&self, phi: f64) -> PhaseState {
        state_on_clock(&self.seed, &self.clock(), phi)
    }

    pub fn state_at_time(&self, t: f64) -> PhaseState {
        let clock = self.clock();
        state_on_clock(&self.seed, &clock, clock.phi_at(t))
    }
}

fn state_on_clock(seed: &Configuration, clock: &PhaseClock, phi: f64) -> PhaseState {
    let a = clock.a(phi);
    let phi_dot = clock.phi_dot(phi);
    let a_dot = clock.da_dphi(phi) * phi_dot;
    let (s, c) = phi.sin_cos();
    let mut coords = Vec::with_capacity(seed.coords().len());
    let mut velocities = Vec::with_capacity(seed.coords().len());
    for p in seed.positions() {
        let (x, y) = (c * p[0] - s * p[1], s * p[0] + c * p[1]);
        coords.push(a * x);
        coords.push(a * y);
        velocities.push(a_dot * x - a * phi_dot * y);
        velocities.push(a_dot * y + a * phi_dot * x);
    }
    let config = Configuration::from_flat(2, coords).expect("rotated seed stays well formed");
    PhaseState::new(config, velocities).expect("velocity layout matches positions")
}

/// Rigid rotation of the seed at `ω = √(2λ)`.
pub fn circular_state(spec: &TrajectorySpec, t: f64) -> Result<PhaseState> {
    if spec.family != Family::Circular {
        return Err(Error::InvalidParameter(
            "circular_state needs a circular trajectory".to_string(),
        ));
    }
    Ok(spec.state_at_time(t))
}

/// Rotating, pulsating state with exact velocities.
pub fn pulsating_state(spec: &TrajectorySpec, t: f64) -> Result<PhaseState> {
    if spec.family != Family::Pulsating {
        return Err(Error::InvalidParameter(
            "pulsating_state needs a pulsating trajectory".to_string(),
        ));
    }
    Ok(spec.state_at_time(t))
}

/// Characteristics evaluated on the constructed states at each angle.
pub fn characteristics_profile(
    spec: &TrajectorySpec,
    phis: &[f64],
) -> Result<Vec<Characteristics>> {
    phis.iter()
        .map(|&phi| characteristics(&spec.masses, &spec.state_at_phi(phi)))
        .collect()
}

/// Closed-form values of the characteristics at angle `phi`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictedProfile {
    pub f: f64,
    pub g: f64,
    pub b: f64,
    pub kinetic: f64,
    pub energy: f64,
    pub angular_momentum_z: f64,
}

/// `f = f_λ / a`, `g = g_λ a²`, `T = f_λ (1 + e² - 2e cos φ) / (2(1 - e))`,
/// `L_z = g_λ ω₀`.
pub fn predicted_profile(spec: &TrajectorySpec, phi: f64) -> Result<PredictedProfile> {
    let (f0, g0, b0) = spec.seed_values()?;
    let e = spec.eccentricity();
    let a = scale_a(phi, e);
    let kinetic = f0 * (1.0 + e * e - 2.0 * e * phi.cos()) / (2.0 * (1.0 - e));
    Ok(PredictedProfile {
        f: f0 / a,
        g: g0 * a * a,
        b: b0 * a,
        kinetic,
        energy: kinetic - f0 / a,
        angular_momentum_z: g0 * spec.omega0,
    })
}

/// Closed-form averages over `φ ∈ [0, 2π)`: `(⟨f⟩, ⟨T⟩)`.
pub fn predicted_means(spec: &TrajectorySpec) -> Result<(f64, f64)> {
    let (f0, _, _) = spec.seed_values()?;
    let e = spec.eccentricity();
    Ok((f0 / (1.0 - e), f0 * (1.0 + e * e) / (2.0 * (1.0 - e))))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Grid {
    /// Uniform in the rotation angle.
    Phi,
    /// Uniform in time.
    Time,
}

impl std::str::FromStr for Grid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "time" => Ok(Grid::Time),
            "phi" => Ok(Grid::Phi),
            other => Err(Error::InvalidParameter(format!("unknown grid {other:?}"))),
        }
    }
}

/// Time series of phase states, analytic or integrated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledTrajectory {
    pub times: Vec<f64>,
    /// Rotation angle of the configuration at each sample.
    pub phis: Vec<f64>,
    pub states: Vec<PhaseState>,
}

impl SampledTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Smallest and largest pairwise distance over all samples.
    pub fn distance_bounds(&self) -> (f64, f64) {
        self.states
            .iter()
            .fold((f64::INFINITY, 0.0), |(lo, hi), s| {
                (
                    lo.min(s.config.min_pairwise_distance()),
                    hi.max(s.config.max_pairwise_distance()),
                )
            })
    }
}

/// `n` samples (`n ≥ 2`) covering `periods` full turns, endpoints included.
pub fn sample(
    spec: &TrajectorySpec,
    n: usize,
    periods: f64,
    grid: Grid,
) -> Result<SampledTrajectory> {
    if n < 2 {
        return Err(Error::InvalidParameter(
            "need at least two samples".to_string(),
        ));
    }
    if !(periods.is_finite() && periods > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "number of periods must be positive, got {periods}"
        )));
    }
    let clock = spec.clock();
    let mut out = SampledTrajectory {
        times: Vec::with_capacity(n),
        phis: Vec::with_capacity(n),
        states: Vec::with_capacity(n),
    };
    for k in 0..n {
        let frac = k as f64 / (n - 1) as f64;
        let (t, phi) = match grid {
            Grid::Phi => {
                let phi = frac * periods * TAU;
                (clock.time_at(phi), phi)
            }
            Grid::Time => {
                let t = frac * periods * clock.period;
                (t, clock.phi_at(t))
            }
        };
        out.times.push(t);
        out.phis.push(phi);
        out.states.push(state_on_clock(&spec.seed, &clock, phi));
    }
    Ok(out)
}

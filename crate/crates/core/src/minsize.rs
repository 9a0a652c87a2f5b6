//! Minimum moment of inertia at fixed angular momentum and kinetic energy.
//!
//! `g ≥ L²/(2T)` for every state, with equality only for flat states whose
//! velocities are perpendicular to the radii and proportional to them in
//! length. This module evaluates the bound, probes it numerically, and
//! measures how far sampled trajectories sit above it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::characteristics::{
    angular_momentum, characteristics, cross, dot, embed, kinetic_energy, moment_g, norm,
    Configuration, MassSpec, PhaseState,
};
use crate::error::{Error, Result};
use crate::trajectory::{eccentricity, SampledTrajectory, TrajectorySpec};

/// Samples with `g / W` at most `1 + ATTAINMENT_TOLERANCE` count as reaching
/// the minimum.
pub const ATTAINMENT_TOLERANCE: f64 = 1e-6;

/// `W(L, T) = L²/(2T)`.
pub fn w_closed_form(l: f64, t: f64) -> Result<f64> {
    if !(t.is_finite() && t > 0.0) || !l.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "kinetic energy must be positive and L finite, got T = {t}, L = {l}"
        )));
    }
    Ok(l * l / (2.0 * t))
}

/// `G = (1 + e² - 2e cos φ) / (1 - e cos φ)²` for eccentricity `e`.
pub fn g_ratio_e(e: f64, phi: f64) -> Result<f64> {
    if !(e.is_finite() && e.abs() < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "need |e| < 1, got e = {e}"
        )));
    }
    let c = phi.cos();
    Ok((1.0 + e * e - 2.0 * e * c) / (1.0 - e * c).powi(2))
}

/// [`g_ratio_e`] with `e = 1 - ω₀²/(2λ)`.
pub fn g_ratio(lambda: f64, omega0: f64, phi: f64) -> Result<f64> {
    g_ratio_e(eccentricity(lambda, omega0), phi)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlatnessReport {
    pub max_abs_z: f64,
    pub max_abs_vz: f64,
    /// Largest `|r_i·v_i| / (|r_i||v_i|)`.
    pub max_rv_dot: f64,
    /// Largest deviation of `|v_i|/|r_i|` from `2T/L`.
    pub speed_ratio_spread: f64,
}

pub fn flatness_report(spec: &MassSpec, state: &PhaseState) -> FlatnessReport {
    let planar = state.dim() == 2;
    let t = kinetic_energy(spec, state);
    let l = norm(&angular_momentum(spec, state));
    let omega = if l > 0.0 { 2.0 * t / l } else { 0.0 };
    let mut report = FlatnessReport {
        max_abs_z: 0.0,
        max_abs_vz: 0.0,
        max_rv_dot: 0.0,
        speed_ratio_spread: 0.0,
    };
    for i in 0..state.len() {
        let r = state.config.position(i);
        let v = state.velocity(i);
        if !planar {
            report.max_abs_z = report.max_abs_z.max(r[2].abs());
            report.max_abs_vz = report.max_abs_vz.max(v[2].abs());
        }
        let (nr, nv) = (norm(r), norm(v));
        if nr > 0.0 && nv > 0.0 {
            report.max_rv_dot = report.max_rv_dot.max(dot(r, v).abs() / (nr * nv));
        }
        if nr > 0.0 {
            report.speed_ratio_spread = report.speed_ratio_spread.max((nv / nr - omega).abs());
        }
    }
    report
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttainmentSample {
    pub t: f64,
    pub phi: f64,
    pub g: f64,
    pub w: f64,
    /// `g / W(L, T)`.
    pub ratio: f64,
    pub attained: bool,
}

/// `g(t) / W(|L(t)|, T(t))` at every sample.
pub fn min_size_attainment(
    spec: &MassSpec,
    traj: &SampledTrajectory,
) -> Result<Vec<AttainmentSample>> {
    traj.times
        .iter()
        .zip(&traj.phis)
        .zip(&traj.states)
        .map(|((&t, &phi), state)| {
            if state.len() != spec.len() {
                return Err(Error::Mismatch(format!(
                    "{} masses for {} particles",
                    spec.len(),
                    state.len()
                )));
            }
            let kinetic = kinetic_energy(spec, state);
            if kinetic <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "kinetic energy vanishes at t = {t}"
                )));
            }
            let g = moment_g(spec, &state.config);
            let w = w_closed_form(norm(&angular_momentum(spec, state)), kinetic)?;
            let ratio = g / w;
            Ok(AttainmentSample {
                t,
                phi,
                g,
                w,
                ratio,
                attained: ratio <= 1.0 + ATTAINMENT_TOLERANCE,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircularIdentities {
    /// `|λg - |E|| / |E|`.
    pub energy: f64,
    /// `|L - √(2λ) g| / L`.
    pub angular_momentum: f64,
}

/// Relative misfit of the identities that hold along rigid rotation.
pub fn circular_identities(
    orbit: &TrajectorySpec,
    state: &PhaseState,
) -> Result<CircularIdentities> {
    let ch = characteristics(orbit.masses(), state)?;
    let lambda = orbit.lambda();
    let l = ch.angular_momentum_norm();
    Ok(CircularIdentities {
        energy: (lambda * ch.g - ch.energy.abs()).abs() / ch.energy.abs(),
        angular_momentum: (l - (2.0 * lambda).sqrt() * ch.g).abs() / l,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BruteForceOptions {
    pub starts: usize,
    pub penalty_stages: usize,
    pub penalty_growth: f64,
    pub stage_iterations: usize,
    pub polish_iterations: usize,
}

impl Default for BruteForceOptions {
    fn default() -> Self {
        BruteForceOptions {
            starts: 200,
            penalty_stages: 5,
            penalty_growth: 10.0,
            stage_iterations: 300,
            polish_iterations: 3000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BruteForceResult {
    /// Smallest feasible `g` found.
    pub w: f64,
    /// The state attaining it, in 3D.
    pub state: PhaseState,
    /// Largest relative violation of the four constraints at that state.
    pub constraint_residual: f64,
    pub starts: usize,
    pub feasible_starts: usize,
}

/// Largest relative violation of `L = (0, 0, l)` and `T = t` at `state`.
pub fn constraint_residual(spec: &MassSpec, state: &PhaseState, l: f64, t: f64) -> f64 {
    let lv = angular_momentum(spec, state);
    let dl = [lv[0], lv[1], lv[2] - l];
    let dl = dl.iter().fold(0.0f64, |m, c| m.max(c.abs())) / l.abs();
    dl.max((kinetic_energy(spec, state) - t).abs() / t)
}

/// Numerical minimum of `g` over 3D states with `L = (0, 0, l)` and
/// kinetic energy `t`.
///
/// Each start runs a penalty descent with a growing weight, is then pushed
/// onto the constraint set by Gauss-Newton steps and finished by projected
/// gradient descent on that set, so every reported value is feasible.
pub fn brute_force_w(
    spec: &MassSpec,
    l: f64,
    t: f64,
    options: &BruteForceOptions,
    rng_seed: u64,
) -> Result<BruteForceResult> {
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "kinetic energy must be positive, got {t}"
        )));
    }
    if !(l.is_finite() && l != 0.0) {
        return Err(Error::InvalidParameter(format!(
            "angular momentum must be nonzero, got {l}"
        )));
    }
    if options.starts == 0 {
        return Err(Error::InvalidParameter(
            "need at least one start".to_string(),
        ));
    }
    // Units with unit total mass, T = 1/2 and L = ±1, where W = 1.
    let total = spec.total_mass();
    let weights = spec.fractions();
    let nu = (2.0 * t / total).sqrt();
    let rho = l.abs() / (total * nu);
    let problem = Problem {
        w: weights,
        lz: l.signum(),
    };

    let runs: Vec<Option<Vec<f64>>> = (0..options.starts)
        .into_par_iter()
        .map(|k| problem.run_start(options, rng_seed, k))
        .collect();
    let feasible: Vec<&Vec<f64>> = runs.iter().flatten().collect();
    let best = feasible
        .iter()
        .min_by(|a, b| problem.g(a).total_cmp(&problem.g(b)))
        .ok_or_else(|| {
            Error::InvalidParameter("no start reached the constraint set".to_string())
        })?;

    let n = spec.len();
    let positions: Vec<f64> = best[..3 * n].iter().map(|c| c * rho).collect();
    let velocities: Vec<f64> = best[3 * n..].iter().map(|c| c * nu).collect();
    let state = PhaseState::new(Configuration::from_flat(3, positions)?, velocities)?;
    Ok(BruteForceResult {
        w: moment_g(spec, &state.config),
        constraint_residual: constraint_residual(spec, &state, l, t),
        state,
        starts: options.starts,
        feasible_starts: feasible.len(),
    })
}

/// The scaled problem: state `x = (r₁..r_N, v₁..v_N)` in 3D, mass fractions
/// `w`, target `L = (0, 0, lz)` and `T = 1/2`.
struct Problem {
    w: Vec<f64>,
    lz: f64,
}

const FEASIBILITY: f64 = 1e-13;

impl Problem {
    fn n(&self) -> usize {
        self.w.len()
    }

    fn r<'a>(&self, x: &'a [f64], i: usize) -> &'a [f64] {
        &x[3 * i..3 * i + 3]
    }

    fn v<'a>(&self, x: &'a [f64], i: usize) -> &'a [f64] {
        let n = self.n();
        &x[3 * (n + i)..3 * (n + i) + 3]
    }

    fn g(&self, x: &[f64]) -> f64 {
        (0..self.n())
            .map(|i| self.w[i] * dot(self.r(x, i), self.r(x, i)))
            .sum()
    }

    fn g_gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut grad = vec![0.0; x.len()];
        for i in 0..self.n() {
            for k in 0..3 {
                grad[3 * i + k] = 2.0 * self.w[i] * x[3 * i + k];
            }
        }
        grad
    }

    fn constraints(&self, x: &[f64]) -> [f64; 4] {
        let mut c = [0.0, 0.0, -self.lz, -0.5];
        for i in 0..self.n() {
            let l = cross(&embed(self.r(x, i)), &embed(self.v(x, i)));
            for a in 0..3 {
                c[a] += self.w[i] * l[a];
            }
            c[3] += 0.5 * self.w[i] * dot(self.v(x, i), self.v(x, i));
        }
        c
    }

    /// Rows are the gradients of the four constraints.
    fn jacobian(&self, x: &[f64]) -> [Vec<f64>; 4] {
        let n = self.n();
        let mut rows: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; x.len()]);
        for i in 0..n {
            let r = embed(self.r(x, i));
            let v = embed(self.v(x, i));
            let w = self.w[i];
            for a in 0..3 {
                let mut e = [0.0; 3];
                e[a] = 1.0;
                let dr = cross(&v, &e);
                let dv = cross(&e, &r);
                for k in 0..3 {
                    rows[a][3 * i + k] = w * dr[k];
                    rows[a][3 * (n + i) + k] = w * dv[k];
                }
            }
            for k in 0..3 {
                rows[3][3 * (n + i) + k] = w * v[k];
            }
        }
        rows
    }

    fn penalty(&self, x: &[f64], mu: f64) -> (f64, Vec<f64>) {
        let c = self.constraints(x);
        let jac = self.jacobian(x);
        let mut grad = self.g_gradient(x);
        for (ck, row) in c.iter().zip(&jac) {
            for (gk, jk) in grad.iter_mut().zip(row) {
                *gk += 2.0 * mu * ck * jk;
            }
        }
        let value = self.g(x) + mu * c.iter().map(|v| v * v).sum::<f64>();
        (value, grad)
    }

    /// Solves `(J Jᵀ) y = J u`.
    fn normal_solve(&self, jac: &[Vec<f64>; 4], u: &[f64]) -> Option<[f64; 4]> {
        let mut m = [[0.0; 4]; 4];
        let mut rhs = [0.0; 4];
        for a in 0..4 {
            for b in 0..4 {
                m[a][b] = dot(&jac[a], &jac[b]);
            }
            rhs[a] = dot(&jac[a], u);
        }
        solve4(m, rhs)
    }

    /// Gauss-Newton steps onto the constraint set.
    fn project(&self, x: &mut [f64]) -> bool {
        for _ in 0..60 {
            let c = self.constraints(x);
            if c.iter().all(|v| v.abs() <= FEASIBILITY) {
                return true;
            }
            let jac = self.jacobian(x);
            let mut m = [[0.0; 4]; 4];
            for a in 0..4 {
                for b in 0..4 {
                    m[a][b] = dot(&jac[a], &jac[b]);
                }
            }
            let Some(y) = solve4(m, c) else {
                return false;
            };
            for a in 0..4 {
                for (xk, jk) in x.iter_mut().zip(&jac[a]) {
                    *xk -= y[a] * jk;
                }
            }
            if x.iter().any(|v| !v.is_finite()) {
                return false;
            }
        }
        self.constraints(x).iter().all(|v| v.abs() <= FEASIBILITY)
    }

    fn tangent_descent(&self, x: &[f64]) -> Option<Vec<f64>> {
        let grad = self.g_gradient(x);
        let jac = self.jacobian(x);
        let y = self.normal_solve(&jac, &grad)?;
        let mut d: Vec<f64> = grad.iter().map(|v| -v).collect();
        for a in 0..4 {
            for (dk, jk) in d.iter_mut().zip(&jac[a]) {
                *dk += y[a] * jk;
            }
        }
        Some(d)
    }

    /// Projected gradient descent on the constraint set.
    fn polish(&self, x: &mut Vec<f64>, iterations: usize) -> bool {
        let mut step = 0.1;
        let mut g = self.g(x);
        for _ in 0..iterations {
            let Some(d) = self.tangent_descent(x) else {
                return false;
            };
            let slope = dot(&d, &d);
            if slope.sqrt() < 1e-12 {
                break;
            }
            let mut accepted = false;
            for _ in 0..60 {
                let mut trial: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + step * b).collect();
                if self.project(&mut trial) {
                    let gt = self.g(&trial);
                    if gt <= g - 1e-4 * step * slope {
                        *x = trial;
                        g = gt;
                        accepted = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
            step = (step * 2.0).min(1.0);
        }
        true
    }

    fn run_start(&self, options: &BruteForceOptions, seed: u64, index: usize) -> Option<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index as u64);
        let mut x: Vec<f64> = (0..6 * self.n())
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let mut mu = 1.0;
        for _ in 0..options.penalty_stages {
            descend(&mut x, |y| self.penalty(y, mu), options.stage_iterations);
            mu *= options.penalty_growth;
        }
        if !self.project(&mut x) || !self.polish(&mut x, options.polish_iterations) {
            return None;
        }
        Some(x)
    }
}

/// Gradient descent with Barzilai-Borwein trial steps and Armijo
/// backtracking.
fn descend<F: Fn(&[f64]) -> (f64, Vec<f64>)>(x: &mut Vec<f64>, objective: F, iterations: usize) {
    let (mut value, mut grad) = objective(x);
    let mut step = 1e-2;
    for _ in 0..iterations {
        let slope = dot(&grad, &grad);
        if !(slope > 1e-24) {
            return;
        }
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&grad).map(|(a, g)| a - step * g).collect();
            let (tv, tg) = objective(&trial);
            if tv.is_finite() && tv <= value - 1e-4 * step * slope {
                accepted = Some((trial, tv, tg));
                break;
            }
            step *= 0.5;
        }
        let Some((trial, tv, tg)) = accepted else {
            return;
        };
        let s: Vec<f64> = trial.iter().zip(x.iter()).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = tg.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        step = if sy > 0.0 {
            (dot(&s, &s) / sy).min(1e3)
        } else {
            step * 2.0
        };
        *x = trial;
        value = tv;
        grad = tg;
    }
}

/// Gaussian elimination with partial pivoting; `None` when singular.
fn solve4(mut m: [[f64; 4]; 4], mut rhs: [f64; 4]) -> Option<[f64; 4]> {
    let scale = m.iter().flatten().fold(0.0f64, |s, v| s.max(v.abs()));
    if !(scale > 0.0) {
        return None;
    }
    for col in 0..4 {
        let pivot = (col..4).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[pivot][col].abs() <= 1e-14 * scale {
            return None;
        }
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in col + 1..4 {
            let factor = m[row][col] / m[col][col];
            let (top, bottom) = m.split_at_mut(row);
            for (x, y) in bottom[0][col..].iter_mut().zip(&top[col][col..]) {
                *x -= factor * y;
            }
            rhs[row] -= factor * rhs[col];
        }
    }
    let mut out = [0.0; 4];
    for row in (0..4).rev() {
        let tail: f64 = (row + 1..4).map(|k| m[row][k] * out[k]).sum();
        out[row] = (rhs[row] - tail) / m[row][row];
    }
    Some(out)
}

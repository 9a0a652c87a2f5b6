//! Central configurations as minima of `f + λ g` over planar configurations.
//!
//! A configuration is central when `F_i + 2 λ m_i r_i = 0` for every particle,
//! which is exactly the stationarity condition of `f + λ g` because
//! `∂f/∂r_i = F_i` and `∂g/∂r_i = 2 m_i r_i`.
//!
//! The minimizer is steepest descent in the mass metric (direction
//! `-∇_i / m_i`) with Barzilai-Borwein trial steps and Armijo backtracking.
//! Objective changes along a step are evaluated in closed form from the step
//! itself, so the sufficient-decrease test stays meaningful long after the
//! plain difference `value(x + αp) - value(x)` has drowned in round-off.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::characteristics::{
    center_of_mass, cohesion, forces, moment_g, norm, Configuration, MassSpec,
};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Dimensionless residual at which a run counts as converged.
    pub tol: f64,
    pub max_iterations: usize,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    /// Backtracking factor.
    pub shrink: f64,
    /// Trial steps may not bring any pair closer than this fraction of `b`.
    pub min_separation: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iterations: 100_000,
            armijo: 1e-4,
            shrink: 0.5,
            min_separation: 1e-9,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MultistartOptions {
    pub solver: SolverOptions,
    /// Two minima are the same class when their positions agree to this
    /// fraction of `b` after removing rotation, reflection and relabeling of
    /// equal masses.
    pub dedup_tolerance: f64,
    /// Every `k`-th start is drawn on a line instead of in a disk, so that
    /// collinear central configurations (saddles in the plane, never reached
    /// from generic planar seeds) are represented in the catalog. `0`
    /// disables collinear starts.
    pub collinear_every: usize,
}

impl Default for MultistartOptions {
    fn default() -> Self {
        Self {
            solver: SolverOptions::default(),
            dedup_tolerance: 1e-4,
            collinear_every: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinimizationResult {
    pub config: Configuration,
    pub lambda: f64,
    /// `f + λ g` at `config`.
    pub objective: f64,
    pub residual: f64,
    /// `f √g`, an estimate of `C(m)` (or of `C_k(m)` for a local minimum).
    pub c_estimate: f64,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    #[serde(flatten)]
    pub result: MinimizationResult,
    /// Number of converged starts that landed in this class.
    pub class_size: usize,
    /// Index of the first start that found it.
    pub first_start: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinimaCatalog {
    pub masses: MassSpec,
    pub lambda: f64,
    pub rng_seed: u64,
    pub n_starts: usize,
    pub n_converged: usize,
    pub n_failed: usize,
    pub dedup_tolerance: f64,
    pub lower_bound: f64,
    /// Sorted ascending by `c_estimate`.
    pub entries: Vec<CatalogEntry>,
}

impl MinimaCatalog {
    /// Best known global minimum.
    pub fn best(&self) -> Option<&CatalogEntry> {
        self.entries.first()
    }
}

fn check_planar(spec: &MassSpec, config: &Configuration) -> Result<()> {
    if config.dim() != 2 {
        return Err(Error::InvalidConfiguration(format!(
            "central configurations are sought in the plane, got {}D",
            config.dim()
        )));
    }
    if config.len() != spec.len() {
        return Err(Error::Mismatch(format!(
            "{} masses for {} particles",
            spec.len(),
            config.len()
        )));
    }
    Ok(())
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "lambda must be positive, got {lambda}"
        )))
    }
}

/// Value of `f + λ g` and its gradient `F_i + 2 λ m_i r_i`.
pub fn objective_and_gradient(
    spec: &MassSpec,
    config: &Configuration,
    lambda: f64,
) -> Result<(f64, Vec<f64>)> {
    check_planar(spec, config)?;
    let f = cohesion(spec, config)?;
    let g = moment_g(spec, config);
    let mut grad = forces(spec, config)?;
    for (i, p) in config.positions().enumerate() {
        let w = 2.0 * lambda * spec.mass(i);
        grad[2 * i] += w * p[0];
        grad[2 * i + 1] += w * p[1];
    }
    Ok((f + lambda * g, grad))
}

fn residual_from_gradient(spec: &MassSpec, grad: &[f64], lambda: f64, b: f64) -> f64 {
    grad.chunks_exact(2)
        .enumerate()
        .map(|(i, gi)| norm(gi) / (2.0 * lambda * spec.mass(i) * b))
        .fold(0.0, f64::max)
}

/// `max_i |F_i + 2 λ m_i r_i| / (2 λ m_i b)`; zero exactly on a central
/// configuration.
pub fn residual(spec: &MassSpec, config: &Configuration, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    let (_, grad) = objective_and_gradient(spec, config, lambda)?;
    let b = (moment_g(spec, config) / spec.total_mass()).sqrt();
    Ok(residual_from_gradient(spec, &grad, lambda, b))
}

/// Change of `f + λ g` along `x + α p`, computed from the step so that it
/// keeps full relative precision however small it is.
fn objective_change(
    spec: &MassSpec,
    config: &Configuration,
    dir: &[f64],
    alpha: f64,
    lambda: f64,
) -> f64 {
    let x = config.coords();
    let n = config.len();
    let mut df = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let dx = x[2 * j] - x[2 * i];
            let dy = x[2 * j + 1] - x[2 * i + 1];
            let qx = dir[2 * j] - dir[2 * i];
            let qy = dir[2 * j + 1] - dir[2 * i + 1];
            let l0 = (dx * dx + dy * dy).sqrt();
            let l1 = ((dx + alpha * qx).powi(2) + (dy + alpha * qy).powi(2)).sqrt();
            let dl2 = alpha * (2.0 * (dx * qx + dy * qy) + alpha * (qx * qx + qy * qy));
            df -= spec.gamma() * spec.mass(i) * spec.mass(j) * dl2 / (l0 * l1 * (l0 + l1));
        }
    }
    let mut dg = 0.0;
    for i in 0..n {
        let (px, py) = (dir[2 * i], dir[2 * i + 1]);
        let r_dot_p = x[2 * i] * px + x[2 * i + 1] * py;
        dg += spec.mass(i) * alpha * (2.0 * r_dot_p + alpha * (px * px + py * py));
    }
    df + lambda * dg
}

/// Rescales to the exact minimizer of `f/α + λ α² g` along the ray, which
/// enforces `f = 2 λ g`.
fn radial_polish(spec: &MassSpec, config: &Configuration, lambda: f64) -> Result<Configuration> {
    let f = cohesion(spec, config)?;
    let g = moment_g(spec, config);
    Ok(config.scaled((f / (2.0 * lambda * g)).cbrt()))
}

fn finish(
    spec: &MassSpec,
    config: Configuration,
    lambda: f64,
    converged: bool,
    residual: f64,
    iterations: usize,
) -> Result<MinimizationResult> {
    let f = cohesion(spec, &config)?;
    let g = moment_g(spec, &config);
    Ok(MinimizationResult {
        objective: f + lambda * g,
        c_estimate: f * g.sqrt(),
        config,
        lambda,
        residual,
        converged,
        iterations,
    })
}

/// Runs the descent from `seed` until the residual drops below `opts.tol`.
///
/// Running out of iterations, or a line search that cannot make progress, is
/// not an error: the best state is returned with `converged == false`.
pub fn minimize(
    spec: &MassSpec,
    lambda: f64,
    seed: &Configuration,
    opts: &SolverOptions,
) -> Result<MinimizationResult> {
    check_lambda(lambda)?;
    check_planar(spec, seed)?;
    let total = spec.total_mass();
    let mut x = radial_polish(spec, &seed.centered(spec), lambda)?;
    let (_, mut grad) = objective_and_gradient(spec, &x, lambda)?;
    let mut previous: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut last_alpha = 0.5 / (2.0 * lambda);
    let max_alpha = 1e3 / (2.0 * lambda);
    let mut res = f64::INFINITY;
    let mut iter = 0;

    while iter < opts.max_iterations {
        let b = (moment_g(spec, &x) / total).sqrt();
        res = residual_from_gradient(spec, &grad, lambda, b);
        if res <= opts.tol {
            // Confirm on the polished, re-centered state.
            let polished = radial_polish(spec, &x.centered(spec), lambda)?;
            let (_, g2) = objective_and_gradient(spec, &polished, lambda)?;
            let b2 = (moment_g(spec, &polished) / total).sqrt();
            let r2 = residual_from_gradient(spec, &g2, lambda, b2);
            x = polished;
            grad = g2;
            previous = None;
            if r2 <= opts.tol {
                return finish(spec, x, lambda, true, r2, iter);
            }
            res = r2;
        }

        let dir: Vec<f64> = grad
            .iter()
            .enumerate()
            .map(|(k, gk)| -gk / spec.mass(k / 2))
            .collect();
        let slope: f64 = grad.iter().zip(&dir).map(|(a, b)| a * b).sum();

        let mut alpha = match &previous {
            Some((x_prev, g_prev)) => {
                let mut s_ms = 0.0;
                let mut s_y = 0.0;
                for k in 0..dir.len() {
                    let s = x.coords()[k] - x_prev[k];
                    s_ms += spec.mass(k / 2) * s * s;
                    s_y += s * (grad[k] - g_prev[k]);
                }
                if s_y > 0.0 && s_ms > 0.0 {
                    s_ms / s_y
                } else {
                    2.0 * last_alpha
                }
            }
            None => last_alpha,
        }
        .min(max_alpha);

        let floor = 1e-14 * alpha.max(last_alpha);
        let accepted = loop {
            if alpha < floor {
                break None;
            }
            let mut trial = x.clone();
            for (c, d) in trial.coords_mut().iter_mut().zip(&dir) {
                *c += alpha * d;
            }
            if trial.min_pairwise_distance() < opts.min_separation * b {
                alpha *= opts.shrink;
                continue;
            }
            let delta = objective_change(spec, &x, &dir, alpha, lambda);
            if delta.is_finite() && delta <= opts.armijo * alpha * slope {
                break Some(trial);
            }
            alpha *= opts.shrink;
        };

        let Some(next) = accepted else {
            break;
        };
        let (_, next_grad) = objective_and_gradient(spec, &next, lambda)?;
        previous = Some((x.coords().to_vec(), std::mem::replace(&mut grad, next_grad)));
        x = next;
        last_alpha = alpha;
        iter += 1;
    }

    let x = x.centered(spec);
    let res = residual(spec, &x, lambda).unwrap_or(res);
    let converged = res <= opts.tol;
    finish(spec, x, lambda, converged, res, iter)
}

fn order_key_pick(
    spec: &MassSpec,
    config: &Configuration,
    candidates: &[usize],
    tie: f64,
) -> Option<usize> {
    let max_mass = candidates
        .iter()
        .map(|&i| spec.mass(i))
        .fold(f64::NEG_INFINITY, f64::max);
    let heavy: Vec<usize> = candidates
        .iter()
        .copied()
        .filter(|&i| spec.mass(i) == max_mass)
        .collect();
    let r_max = heavy
        .iter()
        .map(|&i| config.radius(i))
        .fold(f64::NEG_INFINITY, f64::max);
    heavy
        .into_iter()
        .filter(|&i| config.radius(i) >= r_max - tie)
        .min()
}

/// Fixes the rotation and reflection gauge of a zero-COM planar configuration.
///
/// The heaviest particle (ties: outermost, then lowest index) is rotated onto
/// the positive x axis; the next particle in the same order that lies off the
/// axis is then reflected into `y > 0`.
pub fn canonicalize(spec: &MassSpec, config: &Configuration) -> Result<Configuration> {
    check_planar(spec, config)?;
    let b = (moment_g(spec, config) / spec.total_mass()).sqrt();
    let tie = 1e-8 * b;
    let eps = 1e-12 * b;
    let mut remaining: Vec<usize> = (0..config.len()).collect();

    let mut reference = order_key_pick(spec, config, &remaining, tie);
    if reference.is_some_and(|i| config.radius(i) <= eps) {
        let outward: Vec<usize> = remaining
            .iter()
            .copied()
            .filter(|&i| config.radius(i) > eps)
            .collect();
        reference = order_key_pick(spec, config, &outward, tie);
    }
    let Some(reference) = reference else {
        return Ok(config.clone());
    };
    let p = config.position(reference);
    let mut out = config.rotated(-p[1].atan2(p[0]));
    remaining.retain(|&i| i != reference);

    while let Some(next) = order_key_pick(spec, &out, &remaining, tie) {
        let y = out.position(next)[1];
        if y.abs() > eps {
            if y < 0.0 {
                out = out.reflected();
            }
            break;
        }
        remaining.retain(|&i| i != next);
    }
    Ok(out)
}

fn equal_mass_permutations(spec: &MassSpec, limit: usize) -> Vec<Vec<usize>> {
    let n = spec.len();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in 0..n {
        match groups.iter_mut().find(|g| spec.mass(g[0]) == spec.mass(i)) {
            Some(g) => g.push(i),
            None => groups.push(vec![i]),
        }
    }
    let count = groups.iter().try_fold(1usize, |acc, g| {
        let fact = (1..=g.len()).try_fold(1usize, |a, k| a.checked_mul(k))?;
        acc.checked_mul(fact)
    });
    if count.is_none_or(|c| c > limit) {
        return vec![(0..n).collect()];
    }

    let mut perms = vec![(0..n).collect::<Vec<usize>>()];
    for group in &groups {
        let mut next = Vec::new();
        for base in &perms {
            for arrangement in permutations(group) {
                let mut p = base.clone();
                for (slot, &src) in group.iter().zip(&arrangement) {
                    p[*slot] = src;
                }
                next.push(p);
            }
        }
        perms = next;
    }
    perms
}

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for k in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(k);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

/// Largest particle displacement between `a` and `b` after the best rotation,
/// minimized over reflection and over relabelings of equal masses.
pub fn class_distance(spec: &MassSpec, a: &Configuration, b: &Configuration) -> f64 {
    let mut best = f64::INFINITY;
    for perm in equal_mass_permutations(spec, 5040) {
        for mirrored in [false, true] {
            let a = if mirrored { a.reflected() } else { a.clone() };
            let (mut sin, mut cos) = (0.0, 0.0);
            for (i, &src) in perm.iter().enumerate() {
                let p = a.position(src);
                let q = b.position(i);
                let m = spec.mass(i);
                cos += m * (p[0] * q[0] + p[1] * q[1]);
                sin += m * (p[0] * q[1] - p[1] * q[0]);
            }
            let aligned = a.rotated(sin.atan2(cos));
            let worst = perm
                .iter()
                .enumerate()
                .map(|(i, &src)| crate::characteristics::dist(aligned.position(src), b.position(i)))
                .fold(0.0, f64::max);
            best = best.min(worst);
        }
    }
    best
}

/// `γ (Σ_{i<j} m_i m_j)^{3/2} (Σ m_i)^{-1/2}`, a lower bound for `f √g`.
pub fn lower_bound_cl(spec: &MassSpec) -> f64 {
    spec.gamma() * spec.pair_mass_sum().powf(1.5) / spec.total_mass().sqrt()
}

fn random_seed(
    spec: &MassSpec,
    lambda: f64,
    rng: &mut ChaCha8Rng,
    collinear: bool,
) -> Configuration {
    let radius = 2.0 * (lower_bound_cl(spec) / (2.0 * lambda)).cbrt();
    let n = spec.len();
    loop {
        let mut coords = Vec::with_capacity(2 * n);
        for _ in 0..n {
            if collinear {
                coords.push(radius * rng.gen_range(-1.0..1.0));
                coords.push(0.0);
            } else {
                let r = radius * rng.gen::<f64>().sqrt();
                let theta = TAU * rng.gen::<f64>();
                coords.push(r * theta.cos());
                coords.push(r * theta.sin());
            }
        }
        let Ok(config) = Configuration::from_flat(2, coords) else {
            continue;
        };
        if config.min_pairwise_distance() > 1e-3 * radius {
            return config.centered(spec);
        }
    }
}

/// Seed configuration used by start `index` of [`multistart`].
pub fn start_configuration(
    spec: &MassSpec,
    lambda: f64,
    rng_seed: u64,
    index: usize,
    collinear_every: usize,
) -> Configuration {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    rng.set_stream(index as u64);
    let collinear = collinear_every > 0 && index % collinear_every == collinear_every - 1;
    random_seed(spec, lambda, &mut rng, collinear)
}

/// Minimizes from `n_starts` random seeds and groups the converged results
/// into classes.
pub fn multistart(
    spec: &MassSpec,
    lambda: f64,
    n_starts: usize,
    rng_seed: u64,
    opts: &MultistartOptions,
) -> Result<MinimaCatalog> {
    check_lambda(lambda)?;
    if n_starts == 0 {
        return Err(Error::InvalidParameter(
            "need at least one start".to_string(),
        ));
    }
    let runs: Vec<Option<MinimizationResult>> = (0..n_starts)
        .into_par_iter()
        .map(|k| {
            let seed = start_configuration(spec, lambda, rng_seed, k, opts.collinear_every);
            minimize(spec, lambda, &seed, &opts.solver)
                .ok()
                .filter(|r| r.converged)
        })
        .collect();

    let mut entries: Vec<CatalogEntry> = Vec::new();
    let mut n_converged = 0;
    for (k, run) in runs.into_iter().enumerate() {
        let Some(mut result) = run else {
            continue;
        };
        n_converged += 1;
        result.config = canonicalize(spec, &result.config)?;
        let b = (moment_g(spec, &result.config) / spec.total_mass()).sqrt();
        let tol = opts.dedup_tolerance * b;
        match entries
            .iter_mut()
            .find(|e| class_distance(spec, &e.result.config, &result.config) <= tol)
        {
            Some(entry) => entry.class_size += 1,
            None => entries.push(CatalogEntry {
                result,
                class_size: 1,
                first_start: k,
            }),
        }
    }
    entries.sort_by(|a, b| a.result.c_estimate.total_cmp(&b.result.c_estimate));

    Ok(MinimaCatalog {
        masses: spec.clone(),
        lambda,
        rng_seed,
        n_starts,
        n_converged,
        n_failed: n_starts - n_converged,
        dedup_tolerance: opts.dedup_tolerance,
        lower_bound: lower_bound_cl(spec),
        entries,
    })
}

/// Moves a minimum along its scaling ray to a new multiplier:
/// `r_new = (λ_old / λ_new)^{1/3} r_old`.
pub fn rescale_minimum(
    spec: &MassSpec,
    result: &MinimizationResult,
    lambda_new: f64,
) -> Result<MinimizationResult> {
    check_lambda(lambda_new)?;
    if !result.converged {
        return Err(Error::InvalidParameter(
            "only converged minima can be rescaled".to_string(),
        ));
    }
    let config = result.config.scaled((result.lambda / lambda_new).cbrt());
    let res = residual(spec, &config, lambda_new)?;
    let converged = result.converged;
    finish(spec, config, lambda_new, converged, res, result.iterations)
}

/// Center-of-mass offset of a result, relative to its rms size.
pub fn relative_com_offset(spec: &MassSpec, config: &Configuration) -> f64 {
    let b = (moment_g(spec, config) / spec.total_mass()).sqrt();
    norm(&center_of_mass(spec, config)) / b
}

//! Masses, states and the scalar characteristics of a gravitating system.
//!
//! Positions and velocities are stored flat, `dim` components per particle.
//! Planar states use `dim == 2`; they are embedded in the `z = 0` plane only
//! where a cross product needs the third axis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pairs closer than this fraction of the configuration's largest separation
/// count as a collision.
pub const COLLISION_GUARD: f64 = 1e-12;

#[derive(Deserialize)]
struct RawMassSpec {
    masses: Vec<f64>,
    #[serde(default = "unit_gamma")]
    gamma: f64,
}

fn unit_gamma() -> f64 {
    1.0
}

/// Particle masses and the gravitational constant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMassSpec")]
pub struct MassSpec {
    masses: Vec<f64>,
    gamma: f64,
}

impl TryFrom<RawMassSpec> for MassSpec {
    type Error = Error;

    fn try_from(raw: RawMassSpec) -> Result<Self> {
        MassSpec::new(raw.masses, raw.gamma)
    }
}

impl MassSpec {
    pub fn new(masses: Vec<f64>, gamma: f64) -> Result<Self> {
        if masses.len() < 2 {
            return Err(Error::InvalidMasses(format!(
                "need at least two particles, got {}",
                masses.len()
            )));
        }
        if let Some((i, m)) = masses
            .iter()
            .enumerate()
            .find(|(_, m)| !(m.is_finite() && **m > 0.0))
        {
            return Err(Error::InvalidMasses(format!(
                "mass {i} must be positive and finite, got {m}"
            )));
        }
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::InvalidMasses(format!(
                "gravitational constant must be positive, got {gamma}"
            )));
        }
        Ok(Self { masses, gamma })
    }

    /// Masses with `gamma = 1`.
    pub fn unit_gravity(masses: Vec<f64>) -> Result<Self> {
        Self::new(masses, 1.0)
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn mass(&self, i: usize) -> f64 {
        self.masses[i]
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Mass fractions `m_i / Σ m_j`.
    pub fn fractions(&self) -> Vec<f64> {
        let total = self.total_mass();
        self.masses.iter().map(|m| m / total).collect()
    }

    /// `Σ_{i<j} m_i m_j`.
    pub fn pair_mass_sum(&self) -> f64 {
        let mut sum = 0.0;
        for i in 0..self.len() {
            for j in i + 1..self.len() {
                sum += self.masses[i] * self.masses[j];
            }
        }
        sum
    }
}

#[derive(Serialize, Deserialize)]
struct RawConfiguration {
    dim: usize,
    positions: Vec<Vec<f64>>,
}

/// Positions of `N` particles in the plane or in space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawConfiguration", into = "RawConfiguration")]
pub struct Configuration {
    dim: usize,
    coords: Vec<f64>,
}

impl TryFrom<RawConfiguration> for Configuration {
    type Error = Error;

    fn try_from(raw: RawConfiguration) -> Result<Self> {
        let config = Configuration::from_positions(raw.dim, &raw.positions)?;
        Ok(config)
    }
}

impl From<Configuration> for RawConfiguration {
    fn from(config: Configuration) -> Self {
        RawConfiguration {
            dim: config.dim,
            positions: config.positions().map(|p| p.to_vec()).collect(),
        }
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 2 || dim == 3 {
        Ok(())
    } else {
        Err(Error::InvalidConfiguration(format!(
            "dimension must be 2 or 3, got {dim}"
        )))
    }
}

impl Configuration {
    /// Builds a configuration from flat coordinates and checks that no two
    /// particles coincide.
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        let config = Self::from_flat(dim, coords)?;
        check_separation(&config)?;
        Ok(config)
    }

    pub fn from_positions(dim: usize, positions: &[Vec<f64>]) -> Result<Self> {
        check_dim(dim)?;
        let mut coords = Vec::with_capacity(dim * positions.len());
        for (i, p) in positions.iter().enumerate() {
            if p.len() != dim {
                return Err(Error::InvalidConfiguration(format!(
                    "particle {i} has {} coordinates, expected {dim}",
                    p.len()
                )));
            }
            coords.extend_from_slice(p);
        }
        Self::new(dim, coords)
    }

    /// Shape and finiteness checks only; collisions are left to the force
    /// evaluations, which report the offending pair.
    pub(crate) fn from_flat(dim: usize, coords: Vec<f64>) -> Result<Self> {
        check_dim(dim)?;
        if !coords.len().is_multiple_of(dim) || coords.len() / dim < 2 {
            return Err(Error::InvalidConfiguration(format!(
                "{} coordinates do not describe at least two particles in {dim}D",
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidConfiguration(
                "non-finite coordinate".to_string(),
            ));
        }
        Ok(Self { dim, coords })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub(crate) fn coords_mut(&mut self) -> &mut [f64] {
        &mut self.coords
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn positions(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    /// Position of particle `i` embedded in space.
    pub fn position3(&self, i: usize) -> [f64; 3] {
        embed(self.position(i))
    }

    pub fn radius(&self, i: usize) -> f64 {
        norm(self.position(i))
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        dist(self.position(i), self.position(j))
    }

    pub fn min_pairwise_distance(&self) -> f64 {
        self.pairwise_distances()
            .map(|(_, _, d)| d)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_pairwise_distance(&self) -> f64 {
        self.pairwise_distances()
            .map(|(_, _, d)| d)
            .fold(0.0, f64::max)
    }

    pub fn pairwise_distances(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n = self.len();
        (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j, self.distance(i, j))))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            dim: self.dim,
            coords: self.coords.iter().map(|c| c * factor).collect(),
        }
    }

    pub fn translated(&self, offset: &[f64]) -> Self {
        let mut out = self.clone();
        for p in out.coords.chunks_exact_mut(self.dim) {
            for (c, o) in p.iter_mut().zip(offset) {
                *c += o;
            }
        }
        out
    }

    /// Rotation by `angle` about the origin (about the z axis in 3D).
    pub fn rotated(&self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        let mut out = self.clone();
        for p in out.coords.chunks_exact_mut(self.dim) {
            let (x, y) = (p[0], p[1]);
            p[0] = c * x - s * y;
            p[1] = s * x + c * y;
        }
        out
    }

    /// Mirror image `y -> -y`.
    pub fn reflected(&self) -> Self {
        let mut out = self.clone();
        for p in out.coords.chunks_exact_mut(self.dim) {
            p[1] = -p[1];
        }
        out
    }

    /// The same positions in 3D with `z = 0` if the input is planar.
    pub fn to_3d(&self) -> Self {
        if self.dim == 3 {
            return self.clone();
        }
        let coords = self.positions().flat_map(embed).collect();
        Self { dim: 3, coords }
    }

    /// Translates so that the center of mass sits at the origin.
    pub fn centered(&self, spec: &MassSpec) -> Self {
        let com = center_of_mass(spec, self);
        let neg: Vec<f64> = com.iter().map(|c| -c).collect();
        self.translated(&neg)
    }
}

/// A configuration together with per-particle velocities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseState {
    pub config: Configuration,
    velocities: Vec<f64>,
}

impl PhaseState {
    pub fn new(config: Configuration, velocities: Vec<f64>) -> Result<Self> {
        if velocities.len() != config.coords.len() {
            return Err(Error::InvalidConfiguration(format!(
                "{} velocity components for {} particles in {}D",
                velocities.len(),
                config.len(),
                config.dim
            )));
        }
        if velocities.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfiguration(
                "non-finite velocity".to_string(),
            ));
        }
        Ok(Self { config, velocities })
    }

    pub fn at_rest(config: Configuration) -> Self {
        let velocities = vec![0.0; config.coords.len()];
        Self { config, velocities }
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn len(&self) -> usize {
        self.config.len()
    }

    pub fn is_empty(&self) -> bool {
        self.config.is_empty()
    }

    pub fn velocities(&self) -> &[f64] {
        &self.velocities
    }

    pub fn velocity(&self, i: usize) -> &[f64] {
        let d = self.config.dim;
        &self.velocities[i * d..(i + 1) * d]
    }

    pub fn to_3d(&self) -> Self {
        if self.config.dim == 3 {
            return self.clone();
        }
        let velocities = self.velocities.chunks_exact(2).flat_map(embed).collect();
        Self {
            config: self.config.to_3d(),
            velocities,
        }
    }
}

/// Scalar bundle evaluated at a state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Characteristics {
    /// Cohesion (force function).
    pub f: f64,
    /// Moment of inertia about the origin.
    pub g: f64,
    /// Root-mean-square size.
    pub b: f64,
    /// Kinetic energy.
    pub kinetic: f64,
    pub angular_momentum: [f64; 3],
    /// `kinetic - f`.
    pub energy: f64,
}

impl Characteristics {
    pub fn angular_momentum_norm(&self) -> f64 {
        norm(&self.angular_momentum)
    }
}

fn check_lengths(spec: &MassSpec, config: &Configuration) {
    assert_eq!(
        spec.len(),
        config.len(),
        "mass spec has {} particles, configuration has {}",
        spec.len(),
        config.len()
    );
}

/// Fails with the closest offending pair if any two particles are closer than
/// the collision guard.
pub fn check_separation(config: &Configuration) -> Result<()> {
    let scale = config.max_pairwise_distance();
    let limit = COLLISION_GUARD * scale;
    let mut worst: Option<(usize, usize, f64)> = None;
    for (i, j, d) in config.pairwise_distances() {
        if (d <= limit || d == 0.0) && worst.is_none_or(|w| d < w.2) {
            worst = Some((i, j, d));
        }
    }
    match worst {
        Some((i, j, distance)) => Err(Error::Collision { i, j, distance }),
        None => Ok(()),
    }
}

/// All gravitational forces, flat with `dim` components per particle.
pub fn forces(spec: &MassSpec, config: &Configuration) -> Result<Vec<f64>> {
    check_lengths(spec, config);
    check_separation(config)?;
    let dim = config.dim;
    let n = config.len();
    let mut out = vec![0.0; n * dim];
    for i in 0..n {
        for j in i + 1..n {
            let ri = config.position(i);
            let rj = config.position(j);
            let mut d = [0.0; 3];
            let mut d2 = 0.0;
            for k in 0..dim {
                d[k] = rj[k] - ri[k];
                d2 += d[k] * d[k];
            }
            let scale = spec.gamma * spec.masses[i] * spec.masses[j] / (d2 * d2.sqrt());
            for k in 0..dim {
                out[i * dim + k] += scale * d[k];
                out[j * dim + k] -= scale * d[k];
            }
        }
    }
    Ok(out)
}

/// Net force on particle `i`: `Σ_{j≠i} γ m_i m_j (r_j - r_i) / |r_j - r_i|³`.
pub fn force_on_particle(spec: &MassSpec, config: &Configuration, i: usize) -> Result<Vec<f64>> {
    check_lengths(spec, config);
    if i >= config.len() {
        return Err(Error::InvalidParameter(format!(
            "particle index {i} out of range for {} particles",
            config.len()
        )));
    }
    check_separation(config)?;
    let dim = config.dim;
    let ri = config.position(i);
    let mut out = vec![0.0; dim];
    for j in (0..config.len()).filter(|&j| j != i) {
        let rj = config.position(j);
        let d = dist(ri, rj);
        let scale = spec.gamma * spec.masses[i] * spec.masses[j] / (d * d * d);
        for k in 0..dim {
            out[k] += scale * (rj[k] - ri[k]);
        }
    }
    Ok(out)
}

/// Cohesion `f = Σ_{i<j} γ m_i m_j / |r_j - r_i|`.
pub fn cohesion(spec: &MassSpec, config: &Configuration) -> Result<f64> {
    check_lengths(spec, config);
    check_separation(config)?;
    Ok(config
        .pairwise_distances()
        .map(|(i, j, d)| spec.gamma * spec.masses[i] * spec.masses[j] / d)
        .sum())
}

/// Moment of inertia about the origin, `g = Σ m_i |r_i|²`.
pub fn moment_g(spec: &MassSpec, config: &Configuration) -> f64 {
    check_lengths(spec, config);
    config
        .positions()
        .zip(&spec.masses)
        .map(|(p, m)| m * dot(p, p))
        .sum()
}

/// Root-mean-square size `b = sqrt(g / Σ m)`.
pub fn rms_size_b(spec: &MassSpec, config: &Configuration) -> f64 {
    (moment_g(spec, config) / spec.total_mass()).sqrt()
}

/// `B⁻¹ Σ_{i<j} m_i m_j |r_j - r_i|²`; translation invariant, equal to
/// [`moment_g`] exactly when the center of mass is at the origin.
pub fn moment_g_pairwise(spec: &MassSpec, config: &Configuration) -> f64 {
    check_lengths(spec, config);
    let sum: f64 = config
        .pairwise_distances()
        .map(|(i, j, d)| spec.masses[i] * spec.masses[j] * d * d)
        .sum();
    sum / spec.total_mass()
}

pub fn center_of_mass(spec: &MassSpec, config: &Configuration) -> Vec<f64> {
    check_lengths(spec, config);
    let mut com = vec![0.0; config.dim];
    for (p, m) in config.positions().zip(&spec.masses) {
        for (c, x) in com.iter_mut().zip(p) {
            *c += m * x;
        }
    }
    let total = spec.total_mass();
    com.iter_mut().for_each(|c| *c /= total);
    com
}

pub fn kinetic_energy(spec: &MassSpec, state: &PhaseState) -> f64 {
    check_lengths(spec, &state.config);
    0.5 * state
        .velocities
        .chunks_exact(state.config.dim)
        .zip(&spec.masses)
        .map(|(v, m)| m * dot(v, v))
        .sum::<f64>()
}

/// `L = Σ r_i × m_i v_i`, always a 3-vector.
pub fn angular_momentum(spec: &MassSpec, state: &PhaseState) -> [f64; 3] {
    check_lengths(spec, &state.config);
    let dim = state.config.dim;
    let mut total = [0.0; 3];
    for (i, m) in spec.masses.iter().enumerate() {
        let r = embed(state.config.position(i));
        let v = embed(&state.velocities[i * dim..(i + 1) * dim]);
        let l = cross(&r, &v);
        for k in 0..3 {
            total[k] += m * l[k];
        }
    }
    total
}

pub fn linear_momentum(spec: &MassSpec, state: &PhaseState) -> Vec<f64> {
    let dim = state.config.dim;
    let mut p = vec![0.0; dim];
    for (v, m) in state.velocities.chunks_exact(dim).zip(&spec.masses) {
        for k in 0..dim {
            p[k] += m * v[k];
        }
    }
    p
}

pub fn total_energy(spec: &MassSpec, state: &PhaseState) -> Result<f64> {
    Ok(kinetic_energy(spec, state) - cohesion(spec, &state.config)?)
}

pub fn characteristics(spec: &MassSpec, state: &PhaseState) -> Result<Characteristics> {
    let f = cohesion(spec, &state.config)?;
    let g = moment_g(spec, &state.config);
    let kinetic = kinetic_energy(spec, state);
    Ok(Characteristics {
        f,
        g,
        b: (g / spec.total_mass()).sqrt(),
        kinetic,
        angular_momentum: angular_momentum(spec, state),
        energy: kinetic - f,
    })
}

pub(crate) fn embed(p: &[f64]) -> [f64; 3] {
    [p[0], p[1], if p.len() > 2 { p[2] } else { 0.0 }]
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub(crate) fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

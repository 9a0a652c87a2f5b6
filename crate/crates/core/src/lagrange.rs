//! Closed-form equilateral solution of the three-body minimum problem.

use serde::{Deserialize, Serialize};

use crate::characteristics::{Configuration, MassSpec};
use crate::error::{Error, Result};
use crate::solver::canonicalize;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LagrangeSolution {
    /// Common pairwise distance.
    pub side: f64,
    /// Distances of the three particles from the center of mass.
    pub radii: [f64; 3],
    /// Exact `C(m)`.
    pub c3: f64,
    pub config: Configuration,
}

fn check_three(spec: &MassSpec) -> Result<[f64; 3]> {
    match spec.masses() {
        &[a, b, c] => Ok([a, b, c]),
        other => Err(Error::InvalidMasses(format!(
            "closed form needs exactly three particles, got {}",
            other.len()
        ))),
    }
}

/// `γ (m₁m₂ + m₂m₃ + m₁m₃)^{3/2} (m₁ + m₂ + m₃)^{-1/2}`.
pub fn exact_c3(spec: &MassSpec) -> Result<f64> {
    let [m1, m2, m3] = check_three(spec)?;
    Ok(spec.gamma() * (m1 * m2 + m2 * m3 + m1 * m3).powf(1.5) / (m1 + m2 + m3).sqrt())
}

/// Equilateral central configuration for multiplier `lambda`.
///
/// The triangle is laid out from the closed-form radii: particle 1 on the x
/// axis, particles 2 and 3 on either side at the angles fixed by the law of
/// cosines, then brought into the solver's canonical gauge.
pub fn lagrange_solution(spec: &MassSpec, lambda: f64) -> Result<LagrangeSolution> {
    let m = check_three(spec)?;
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    let total: f64 = m.iter().sum();
    let scale = (spec.gamma() / (2.0 * lambda)).cbrt() / total.powf(2.0 / 3.0);
    let side = (spec.gamma() * total / (2.0 * lambda)).cbrt();
    let radius_of = |a: f64, b: f64| scale * (a * a + a * b + b * b).sqrt();
    let radii = [
        radius_of(m[1], m[2]),
        radius_of(m[0], m[2]),
        radius_of(m[0], m[1]),
    ];

    let opening = |ra: f64, rb: f64| {
        ((ra * ra + rb * rb - side * side) / (2.0 * ra * rb))
            .clamp(-1.0, 1.0)
            .acos()
    };
    let theta2 = opening(radii[0], radii[1]);
    let theta3 = -opening(radii[0], radii[2]);
    let coords = vec![
        radii[0],
        0.0,
        radii[1] * theta2.cos(),
        radii[1] * theta2.sin(),
        radii[2] * theta3.cos(),
        radii[2] * theta3.sin(),
    ];
    let config = canonicalize(spec, &Configuration::new(2, coords)?)?;
    Ok(LagrangeSolution {
        side,
        radii,
        c3: exact_c3(spec)?,
        config,
    })
}

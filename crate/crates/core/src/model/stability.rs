//! Linearisation of the coupled system around stationary points.

use num_complex::Complex64;
use serde::Serialize;

use super::{check_range, ModelError, ModelParams};

/// Residual norm below which a point counts as stationary.
pub const STATIONARITY_TOL: f64 = 1e-9;

// eigenvalue real parts inside this band are treated as zero
const ZERO_EIG: f64 = 1e-12;

/// Right-hand side of the coupled system,
/// `(T (R (1 - R) - R (x ê_C + (1 - x) ê_D)), -w R x (1 - x))`.
#[inline]
pub fn hes_rhs(params: &ModelParams, r: f64, x: f64, w: f64) -> (f64, f64) {
    let dr = params.growth_rate * (r * (1.0 - r) - r * params.mean_normalized_extraction(x));
    let dx = -w * r * x * (1.0 - x);
    (dr, dx)
}

/// Jacobian of [`hes_rhs`] with respect to `(R, x)`.
pub fn jacobian(params: &ModelParams, r: f64, x: f64, w: f64) -> [[f64; 2]; 2] {
    let t = params.growth_rate;
    let (c, d) = (params.ehat_c, params.ehat_d);
    [
        [t * ((1.0 - 2.0 * r) - d * (1.0 - x) - c * x), (d - c) * r * t],
        [-w * x * (1.0 - x), -w * r * ((1.0 - x) - x)],
    ]
}

/// Eigenvalues on the depleted set `R = 0`: `{0, T (1 - ê_D (1 - x) - ê_C x)}`.
pub fn s1_eigenvalues(params: &ModelParams, x: f64) -> [f64; 2] {
    let t = params.growth_rate;
    [0.0, t * (1.0 - params.ehat_d * (1.0 - x) - params.ehat_c * x)]
}

/// Eigenvalues at `(1 - ê_C, 1)`: `{T (ê_C - 1), w (1 - ê_C)}`.
pub fn s2_eigenvalues(params: &ModelParams, w: f64) -> [f64; 2] {
    [
        params.growth_rate * (params.ehat_c - 1.0),
        w * (1.0 - params.ehat_c),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    Stable,
    Unstable,
    NeutrallyStable,
    Indeterminate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub equilibrium: (f64, f64),
    pub jacobian: [[f64; 2]; 2],
    pub eigenvalues: [Complex64; 2],
    pub classification: Classification,
}

fn eigenvalues_2x2(m: &[[f64; 2]; 2]) -> [Complex64; 2] {
    let half_trace = 0.5 * (m[0][0] + m[1][1]);
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = Complex64::new(half_trace * half_trace - det, 0.0).sqrt();
    let mid = Complex64::new(half_trace, 0.0);
    [mid - disc, mid + disc]
}

/// Linear stability of a stationary point `(r_star, x_star)` at selection
/// pressure `w`. Points whose residual exceeds [`STATIONARITY_TOL`] are
/// rejected.
pub fn stability_report(
    params: &ModelParams,
    r_star: f64,
    x_star: f64,
    w: f64,
) -> Result<StabilityReport, ModelError> {
    check_range("R*", r_star, 0.0, 1.0)?;
    check_range("x*", x_star, 0.0, 1.0)?;
    check_range("w", w, -1.0, 1.0)?;
    let (dr, dx) = hes_rhs(params, r_star, x_star, w);
    let residual = dr.hypot(dx);
    if residual >= STATIONARITY_TOL {
        return Err(ModelError::NotStationary {
            r: r_star,
            x: x_star,
            residual,
            tol: STATIONARITY_TOL,
        });
    }
    let jac = jacobian(params, r_star, x_star, w);
    let eigenvalues = eigenvalues_2x2(&jac);
    let re = [eigenvalues[0].re, eigenvalues[1].re];
    let classification = if re.iter().any(|&v| v > ZERO_EIG) {
        Classification::Unstable
    } else if re.iter().all(|&v| v < -ZERO_EIG) {
        Classification::Stable
    } else {
        let zero = eigenvalues.iter().filter(|e| e.norm() <= ZERO_EIG).count();
        let negative = re.iter().filter(|&&v| v < -ZERO_EIG).count();
        if r_star.abs() <= ZERO_EIG && zero == 1 && negative == 1 {
            Classification::NeutrallyStable
        } else {
            Classification::Indeterminate
        }
    };
    Ok(StabilityReport {
        equilibrium: (r_star, x_star),
        jacobian: jac,
        eigenvalues,
        classification,
    })
}

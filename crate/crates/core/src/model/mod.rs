//! Domain types and analytic results for the mean-field HES.

mod closed_form;
mod equilibria;
mod params;
mod stability;
mod state;

pub use closed_form::{
    cumulative_payoff_fixed_strategy, instantaneous_payoff, resource_integral_fixed_strategy,
    resource_trajectory_fixed_strategy, x_trajectory_fixed_resource,
};
pub use equilibria::{
    interior_equilibrium_r, nash_x, stationary_x_oracle, threshold_xl, StationaryOracle,
};
pub use params::{ModelParams, ParamError, ParamsSpec};
pub use stability::{
    hes_rhs, jacobian, s1_eigenvalues, s2_eigenvalues, stability_report, Classification,
    StabilityReport, STATIONARITY_TOL,
};
pub use state::{HesState, PayoffBasis, Strategy, Trajectory, TrajectoryError};
pub(crate) use state::fmt_num;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("{name} = {value} outside [{lo}, {hi}]")]
    OutOfRange {
        name: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("{0}")]
    Invalid(String),
    #[error("point (R={r}, x={x}) is not stationary: residual {residual:.3e} exceeds {tol:.0e}")]
    NotStationary {
        r: f64,
        x: f64,
        residual: f64,
        tol: f64,
    },
    #[error("no convergence after {steps} steps (t = {t}, |dR/dt| = {dr:.3e}, |dx/dt| = {dx:.3e})")]
    NoConvergence { steps: usize, t: f64, dr: f64, dx: f64 },
}

pub(crate) fn check_range(name: &'static str, value: f64, lo: f64, hi: f64) -> Result<(), ModelError> {
    if value.is_finite() && value >= lo && value <= hi {
        Ok(())
    } else {
        Err(ModelError::OutOfRange { name, value, lo, hi })
    }
}

/// One micro-step of the discretised resource map shared by the agent model
/// and the game server: `R + (1/N)(T R (1 - R) - T R (x ê_C + (1 - x) ê_D))`,
/// clamped to `[0, 1]`. `n_coop` is the post-decision cooperator count.
pub fn resource_map_step(params: &ModelParams, r: f64, n_coop: usize) -> f64 {
    let n = params.n_players as f64;
    let x = n_coop as f64 / n;
    let t = params.growth_rate;
    let drift = t * r * (1.0 - r) - t * r * params.mean_normalized_extraction(x);
    (r + drift / n).clamp(0.0, 1.0)
}

//! Stationary points of the strategy-frozen and coupled systems.

use super::stability::hes_rhs;
use super::{check_range, ModelError, ModelParams};

/// Cooperator fraction below which the resource is depleted at
/// stationarity: `(ê_D - 1) / (ê_D - ê_C)`.
pub fn threshold_xl(params: &ModelParams) -> f64 {
    (params.ehat_d - 1.0) / (params.ehat_d - params.ehat_c)
}

/// The unique multiple of `1/N` in `(x_l, x_l + 1/N]`.
///
/// `x_l N` is snapped to the nearest integer when within 1e-9 so that a
/// threshold that is an exact multiple of `1/N` in real arithmetic is
/// treated as one despite rounding in `threshold_xl`.
pub fn nash_x(params: &ModelParams) -> f64 {
    let n = params.n_players as f64;
    let scaled = threshold_xl(params) * n;
    let nearest = scaled.round();
    let floor = if (scaled - nearest).abs() <= 1e-9 {
        nearest
    } else {
        scaled.floor()
    };
    (floor + 1.0) / n
}

/// Stationary resource level when the cooperator fraction is frozen at
/// `x_star`: `max(0, 1 - ê_D + (ê_D - ê_C) x_star)`, and exactly 0 for
/// every `x_star <= x_l`.
pub fn interior_equilibrium_r(params: &ModelParams, x_star: f64) -> Result<f64, ModelError> {
    check_range("x*", x_star, 0.0, 1.0)?;
    if x_star <= threshold_xl(params) {
        return Ok(0.0);
    }
    Ok((1.0 - params.ehat_d + (params.ehat_d - params.ehat_c) * x_star).max(0.0))
}

/// End point of the long-horizon integration performed by
/// [`stationary_x_oracle`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationaryOracle {
    pub x: f64,
    pub r: f64,
    pub t_end: f64,
    pub steps: usize,
}

const ORACLE_DT: f64 = 0.01;
const ORACLE_TOL: f64 = 1e-10;
const ORACLE_MAX_STEPS: usize = 20_000_000;

/// Stationary cooperator fraction reached from `(r0, x0)` under a constant
/// selection pressure, found by RK4 integration until both `|dR/dt|` and
/// `|dx/dt|` fall below 1e-10.
///
/// On the neutral set `R = 0` the limit depends on the initial condition,
/// which is why this is an integration rather than a formula.
pub fn stationary_x_oracle(
    params: &ModelParams,
    r0: f64,
    x0: f64,
    w: f64,
) -> Result<StationaryOracle, ModelError> {
    check_range("R0", r0, 0.0, 1.0)?;
    check_range("x0", x0, 0.0, 1.0)?;
    check_range("w", w, -1.0, 1.0)?;
    let f = |r: f64, x: f64| hes_rhs(params, r, x, w);
    let (mut r, mut x) = (r0, x0);
    let h = ORACLE_DT;
    for step in 0..=ORACLE_MAX_STEPS {
        let (dr, dx) = f(r, x);
        if dr.abs() < ORACLE_TOL && dx.abs() < ORACLE_TOL {
            return Ok(StationaryOracle {
                x,
                r,
                t_end: step as f64 * h,
                steps: step,
            });
        }
        if step == ORACLE_MAX_STEPS {
            return Err(ModelError::NoConvergence {
                steps: step,
                t: step as f64 * h,
                dr: dr.abs(),
                dx: dx.abs(),
            });
        }
        let (k1r, k1x) = (dr, dx);
        let (k2r, k2x) = f(r + 0.5 * h * k1r, x + 0.5 * h * k1x);
        let (k3r, k3x) = f(r + 0.5 * h * k2r, x + 0.5 * h * k2x);
        let (k4r, k4x) = f(r + h * k3r, x + h * k3x);
        r = (r + h / 6.0 * (k1r + 2.0 * k2r + 2.0 * k3r + k4r)).clamp(0.0, 1.0);
        x = (x + h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)).clamp(0.0, 1.0);
    }
    unreachable!("loop returns on its last iteration")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Strategy;

    fn with_rates(n: usize, c: f64, d: f64) -> ModelParams {
        ModelParams::from_normalized(2.0, n, c, d, 40.0, 0.5, 0.5).unwrap()
    }

    /// Unilateral deviation check at `k/N`, payoffs measured as `R e_X`.
    ///
    /// A cooperator who defects moves the population to `(k-1)/N`, whose
    /// stationary resource is compared; a defector who cooperates gives up
    /// `e_D` for `e_C` at the current resource level.
    fn deviation_test(params: &ModelParams, k: usize) -> bool {
        let n = params.n_players as f64;
        let x = k as f64 / n;
        let r_here = interior_equilibrium_r(params, x).unwrap();
        if r_here <= 0.0 {
            return false;
        }
        let coop_stays = r_here * params.extraction_rate(Strategy::C);
        let coop_defects = if k == 0 {
            f64::NEG_INFINITY
        } else {
            interior_equilibrium_r(params, (k - 1) as f64 / n).unwrap()
                * params.extraction_rate(Strategy::D)
        };
        let defector_stays = r_here * params.extraction_rate(Strategy::D);
        let defector_cooperates = r_here * params.extraction_rate(Strategy::C);
        coop_defects <= coop_stays && defector_cooperates <= defector_stays && coop_defects == 0.0
    }

    fn brute_force_nash(params: &ModelParams) -> Vec<f64> {
        (0..=params.n_players)
            .filter(|&k| deviation_test(params, k))
            .map(|k| k as f64 / params.n_players as f64)
            .collect()
    }

    #[test]
    fn threshold_examples() {
        assert!((threshold_xl(&with_rates(20, 0.7, 1.1)) - 0.25).abs() < 1e-12);
        assert!((threshold_xl(&with_rates(20, 0.5, 1.5)) - 0.5).abs() < 1e-15);
        let barely = threshold_xl(&with_rates(20, 0.7, 1.0 + 1e-9));
        assert!(barely > 0.0 && barely < 1e-8);
    }

    #[test]
    fn threshold_and_equilibrium_agree() {
        for (c, d) in [(0.7, 1.1), (0.5, 1.5), (0.1, 3.0), (0.99, 1.01)] {
            let p = with_rates(20, c, d);
            assert_eq!(interior_equilibrium_r(&p, threshold_xl(&p)).unwrap(), 0.0);
        }
    }

    #[test]
    fn equilibrium_examples() {
        let p = ModelParams::reference();
        assert!((interior_equilibrium_r(&p, 1.0).unwrap() - 0.3).abs() < 1e-15);
        assert!((interior_equilibrium_r(&p, 0.5).unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(interior_equilibrium_r(&p, 0.1).unwrap(), 0.0);
        assert!(interior_equilibrium_r(&p, 1.1).is_err());
    }

    #[test]
    fn nash_examples() {
        let p = ModelParams::reference();
        assert!((nash_x(&p) - 0.30).abs() < 1e-15);
        assert_eq!(brute_force_nash(&p), vec![0.30]);
        let four = with_rates(4, 0.7, 1.1);
        assert!((nash_x(&four) - 0.5).abs() < 1e-15);
        assert_eq!(brute_force_nash(&four), vec![0.5]);
        // threshold 0.5 is a multiple of 1/20: the half-open interval excludes it
        let exact = with_rates(20, 0.5, 1.5);
        assert!((nash_x(&exact) - 0.55).abs() < 1e-15);
    }

    #[test]
    fn nash_agrees_with_brute_force_over_grid() {
        for n in [2usize, 3, 5, 7, 20, 33] {
            for c in [0.1, 0.45, 0.7, 0.95] {
                for d in [1.05, 1.1, 1.6, 2.5] {
                    let p = with_rates(n, c, d);
                    let k = (nash_x(&p) * n as f64).round() as usize;
                    if k > n {
                        continue;
                    }
                    let found = brute_force_nash(&p);
                    assert_eq!(found, vec![k as f64 / n as f64], "n={n} c={c} d={d}");
                }
            }
        }
    }

    #[test]
    fn equilibrium_cross_checked_by_integration() {
        let p = ModelParams::reference();
        let end = stationary_x_oracle(&p, 0.5, 0.5, 0.0).unwrap();
        assert_eq!(end.x, 0.5);
        assert!((end.r - 0.1).abs() < 1e-9);
    }

    #[test]
    fn oracle_examples() {
        let p = ModelParams::reference();
        let coop = stationary_x_oracle(&p, 0.5, 0.5, -1.0).unwrap();
        assert!((coop.x - 1.0).abs() < 1e-9);
        assert!((coop.r - 0.3).abs() < 1e-9);
        let defect = stationary_x_oracle(&p, 0.5, 0.5, 1.0).unwrap();
        assert!(defect.x > 0.0 && defect.x < 0.5, "{defect:?}");
        assert!(defect.r < 1e-8);
        // the neutral set: the end point depends on where we start
        let other = stationary_x_oracle(&p, 0.5, 0.7, 1.0).unwrap();
        assert!(other.x > defect.x);
    }
}

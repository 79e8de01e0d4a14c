//! Analytic solutions of the decoupled sub-systems.

use super::{check_range, ModelError, ModelParams};

/// `U_X = R e_X`.
pub fn instantaneous_payoff(r: f64, e_x: f64) -> Result<f64, ModelError> {
    check_range("R", r, 0.0, 1.0)?;
    if !(e_x.is_finite() && e_x > 0.0) {
        return Err(ModelError::Invalid(format!("extraction rate must be > 0, got {e_x}")));
    }
    Ok(r * e_x)
}

fn check_fixed_strategy(ehat_x: f64, r0: f64, t: f64) -> Result<(), ModelError> {
    if !(ehat_x.is_finite() && ehat_x > 0.0) {
        return Err(ModelError::Invalid(format!(
            "normalised extraction rate must be > 0, got {ehat_x}"
        )));
    }
    if !(r0 > 0.0 && r0 <= 1.0) {
        return Err(ModelError::OutOfRange {
            name: "R0",
            value: r0,
            lo: 0.0,
            hi: 1.0,
        });
    }
    if !(t.is_finite() && t >= 0.0) {
        return Err(ModelError::Invalid(format!("time must be >= 0, got {t}")));
    }
    Ok(())
}

/// Solution of `dR/dt = T (R (1 - R) - ê_X R)` from `R(0) = r0`.
///
/// With `a = 1 - ê_X` this is the logistic curve
/// `a R0 / (R0 + (a - R0) e^{-aTt})`, evaluated in the cancellation-free
/// form `R0 / (R0 (1 - e^{-aTt}) / a + e^{-aTt})`. At `ê_X = 1` the
/// quotient is replaced by its limit `R0 / (1 + T R0 t)`.
pub fn resource_trajectory_fixed_strategy(
    params: &ModelParams,
    ehat_x: f64,
    r0: f64,
    t: f64,
) -> Result<f64, ModelError> {
    check_fixed_strategy(ehat_x, r0, t)?;
    let growth = params.growth_rate;
    let a = 1.0 - ehat_x;
    if a == 0.0 {
        return Ok(r0 / (1.0 + growth * r0 * t));
    }
    let s = a * growth * t;
    let decay = (-s).exp();
    let gain = -(-s).exp_m1() / a;
    let r = r0 / (r0 * gain + decay);
    // overflow of e^{-s} drives the quotient to 0, never below
    Ok(if r.is_finite() { r.clamp(0.0, 1.0) } else { 0.0 })
}

/// `∫_0^t R(s) ds` for the fixed-strategy resource curve.
///
/// Since `R = D'/(T D)` with `D(t) = R0 e^{aTt} + a - R0`, the integral is
/// `ln(D(t)/D(0)) / T = ln(1 + R0 (e^{aTt} - 1)/a) / T`.
pub fn resource_integral_fixed_strategy(
    params: &ModelParams,
    ehat_x: f64,
    r0: f64,
    t: f64,
) -> Result<f64, ModelError> {
    check_fixed_strategy(ehat_x, r0, t)?;
    let growth = params.growth_rate;
    let a = 1.0 - ehat_x;
    if a == 0.0 {
        return Ok((r0 * growth * t).ln_1p() / growth);
    }
    let s = a * growth * t;
    let log_ratio = if s > 0.0 {
        // factor out e^{s} so large horizons do not overflow
        s + ((-s).exp() - r0 * (-s).exp_m1() / a).ln()
    } else {
        (r0 * s.exp_m1() / a).ln_1p()
    };
    Ok(log_ratio / growth)
}

/// Per-player cumulative payoff `P(t_f) = Q(t_f) / N = e_X ∫ R dt` when
/// every player extracts at normalised rate `ehat_x`.
pub fn cumulative_payoff_fixed_strategy(
    params: &ModelParams,
    ehat_x: f64,
    r0: f64,
    t_f: f64,
) -> Result<f64, ModelError> {
    let e_x = ehat_x * params.growth_rate / params.n_players as f64;
    Ok(e_x * resource_integral_fixed_strategy(params, ehat_x, r0, t_f)?)
}

/// Cooperator fraction under `dx/dt = -w R x (1 - x)` with `R` held fixed:
/// `x0 / (x0 + (1 - x0) e^{R t w})`.
pub fn x_trajectory_fixed_resource(w: f64, r: f64, x0: f64, t: f64) -> Result<f64, ModelError> {
    check_range("w", w, -1.0, 1.0)?;
    check_range("R", r, 0.0, 1.0)?;
    check_range("x0", x0, 0.0, 1.0)?;
    if !(t.is_finite() && t >= 0.0) {
        return Err(ModelError::Invalid(format!("time must be >= 0, got {t}")));
    }
    if x0 == 0.0 || x0 == 1.0 {
        return Ok(x0);
    }
    let growth = (r * t * w).exp();
    if growth.is_infinite() {
        return Ok(0.0);
    }
    Ok(x0 / (x0 + (1.0 - x0) * growth))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> ModelParams {
        ModelParams::reference()
    }

    /// Independent RK4 on the scalar resource equation.
    fn rk4_resource(growth: f64, ehat: f64, r0: f64, t_end: f64, steps: usize) -> Vec<f64> {
        let f = |r: f64| growth * (r * (1.0 - r) - ehat * r);
        let h = t_end / steps as f64;
        let mut r = r0;
        let mut out = vec![r];
        for _ in 0..steps {
            let k1 = f(r);
            let k2 = f(r + 0.5 * h * k1);
            let k3 = f(r + 0.5 * h * k2);
            let k4 = f(r + h * k3);
            r += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            out.push(r);
        }
        out
    }

    /// Trapezoidal quadrature of the closed-form R(t), step `h`.
    fn trapezoid_payoff(params: &ModelParams, ehat: f64, r0: f64, t_f: f64, h: f64) -> f64 {
        let n = (t_f / h).round() as usize;
        let h = t_f / n as f64;
        let e_x = ehat * params.growth_rate / params.n_players as f64;
        let mut acc = 0.0;
        let mut prev = r0;
        for i in 1..=n {
            let r = resource_trajectory_fixed_strategy(params, ehat, r0, i as f64 * h).unwrap();
            acc += 0.5 * h * (prev + r);
            prev = r;
        }
        e_x * acc
    }

    #[test]
    fn payoff_examples() {
        assert_eq!(instantaneous_payoff(0.0, 0.11).unwrap(), 0.0);
        let params = p();
        let u = instantaneous_payoff(0.5, params.e_d).unwrap();
        assert!((u - 0.055).abs() < 1e-15);
        assert_eq!(
            instantaneous_payoff(1.0, 0.1).unwrap(),
            instantaneous_payoff(1.0, 0.1).unwrap()
        );
        assert!(instantaneous_payoff(1.2, 0.1).is_err());
        assert!(instantaneous_payoff(-0.1, 0.1).is_err());
    }

    #[test]
    fn trajectory_limits() {
        let params = p();
        assert_eq!(resource_trajectory_fixed_strategy(&params, 0.7, 0.5, 0.0).unwrap(), 0.5);
        let coop = resource_trajectory_fixed_strategy(&params, 0.7, 0.5, 200.0).unwrap();
        assert!((coop - 0.3).abs() < 1e-12);
        let defect = resource_trajectory_fixed_strategy(&params, 1.1, 0.5, 500.0).unwrap();
        assert!(defect < 1e-40);
        assert_eq!(resource_trajectory_fixed_strategy(&params, 1.1, 0.5, 1e6).unwrap(), 0.0);
    }

    #[test]
    fn singular_rate_branch_is_continuous() {
        let params = p();
        for t in [0.3, 2.0, 17.0] {
            let at_one = resource_trajectory_fixed_strategy(&params, 1.0, 0.4, t).unwrap();
            let near = resource_trajectory_fixed_strategy(&params, 1.0 + 1e-9, 0.4, t).unwrap();
            assert!((at_one - near).abs() < 1e-7, "t={t}");
            assert!((at_one - 0.4 / (1.0 + 2.0 * 0.4 * t)).abs() < 1e-15);
            let i1 = resource_integral_fixed_strategy(&params, 1.0, 0.4, t).unwrap();
            let i2 = resource_integral_fixed_strategy(&params, 1.0 - 1e-9, 0.4, t).unwrap();
            assert!((i1 - i2).abs() < 1e-7);
        }
    }

    #[test]
    fn closed_form_matches_rk4() {
        let params = p();
        for ehat in [0.7, 1.1, 1.0, 0.2, 1.9] {
            let rk = rk4_resource(2.0, ehat, 0.5, 40.0, 40_000);
            for (i, r_num) in rk.iter().enumerate().step_by(100) {
                let t = i as f64 * 1e-3;
                let r = resource_trajectory_fixed_strategy(&params, ehat, 0.5, t).unwrap();
                assert!((r - r_num).abs() < 1e-9, "ehat={ehat} t={t}: {r} vs {r_num}");
            }
        }
    }

    #[test]
    fn payoff_matches_quadrature() {
        let params = p();
        // frozen oracle value: trapezoid, h = 1e-4, over the closed-form R(t)
        let oracle = trapezoid_payoff(&params, 0.7, 0.5, 40.0, 1e-4);
        let closed = cumulative_payoff_fixed_strategy(&params, 0.7, 0.5, 40.0).unwrap();
        assert!(((closed - oracle) / oracle).abs() < 1e-6, "{closed} vs {oracle}");
        // independent adaptive quadrature (scipy quad) gave 0.8578788968
        assert!((closed - 0.857_878_896_8).abs() < 1e-9, "{closed}");
        for ehat in [1.1, 1.0, 0.35] {
            for t_f in [0.5, 3.0, 25.0] {
                let q = trapezoid_payoff(&params, ehat, 0.8, t_f, 1e-4);
                let c = cumulative_payoff_fixed_strategy(&params, ehat, 0.8, t_f).unwrap();
                assert!(((c - q) / q).abs() < 1e-6);
            }
        }
        assert_eq!(cumulative_payoff_fixed_strategy(&params, 0.7, 0.5, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn defection_wins_short_cooperation_wins_long() {
        let params = p();
        let pd1 = cumulative_payoff_fixed_strategy(&params, 1.1, 0.5, 1.0).unwrap();
        let pc1 = cumulative_payoff_fixed_strategy(&params, 0.7, 0.5, 1.0).unwrap();
        let pd2 = cumulative_payoff_fixed_strategy(&params, 1.1, 0.5, 2.0).unwrap();
        let pc2 = cumulative_payoff_fixed_strategy(&params, 0.7, 0.5, 2.0).unwrap();
        assert!(pd1 > pc1);
        assert!(pc2 > pd2);
    }

    #[test]
    fn huge_horizon_is_finite() {
        let params = p();
        let v = resource_integral_fixed_strategy(&params, 0.5, 0.5, 1e5).unwrap();
        // grows like a t for a = 0.5
        assert!((v - 0.5 * 1e5).abs() < 10.0);
        let w = resource_integral_fixed_strategy(&params, 1.5, 0.5, 1e5).unwrap();
        assert!(w.is_finite() && w > 0.0);
    }

    #[test]
    fn fixed_resource_transient() {
        for t in [0.0, 1.0, 10.0] {
            assert_eq!(x_trajectory_fixed_resource(0.0, 0.5, 0.37, t).unwrap(), 0.37);
        }
        assert_eq!(x_trajectory_fixed_resource(0.3, 0.5, 0.37, 0.0).unwrap(), 0.37);
        assert!(x_trajectory_fixed_resource(1.0, 0.5, 0.5, 200.0).unwrap() < 1e-40);
        assert!(1.0 - x_trajectory_fixed_resource(-1.0, 0.5, 0.5, 200.0).unwrap() < 1e-15);
        assert_eq!(x_trajectory_fixed_resource(1.0, 1.0, 0.5, 1e6).unwrap(), 0.0);
        assert_eq!(x_trajectory_fixed_resource(1.0, 0.5, 1.0, 5.0).unwrap(), 1.0);
        assert!(x_trajectory_fixed_resource(1.5, 0.5, 0.5, 1.0).is_err());
        // same value as the unsimplified form -x0 / (e^{Rtw} x0 - e^{Rtw} - x0)
        let (w, r, x0, t): (f64, f64, f64, f64) = (0.6, 0.4, 0.3, 2.5);
        let e = (r * t * w).exp();
        let printed = -x0 / (e * x0 - e - x0);
        assert!((x_trajectory_fixed_resource(w, r, x0, t).unwrap() - printed).abs() < 1e-15);
    }
}

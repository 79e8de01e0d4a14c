use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Strategy;

#[derive(Debug, Error, PartialEq)]
pub enum ParamError {
    #[error("growth rate T must be > 0, got {0}")]
    GrowthRate(f64),
    #[error("player count N must be >= 2, got {0}")]
    Players(usize),
    #[error("carrying capacity K must be 1 (resource is normalised), got {0}")]
    Capacity(f64),
    #[error("normalised extraction rates must satisfy 0 < ê_C < 1 < ê_D, got ê_C = {c}, ê_D = {d}")]
    Ordering { c: f64, d: f64 },
    #[error("raw and normalised extraction rates disagree: N·e_{which}/T = {derived} but ê_{which} = {given}")]
    Inconsistent {
        which: char,
        derived: f64,
        given: f64,
    },
    #[error("horizon t_f must be > 0, got {0}")]
    Horizon(f64),
    #[error("{name} must lie in [0, 1], got {value}")]
    Initial { name: &'static str, value: f64 },
    #[error("give either raw extraction rates (e_c, e_d) or normalised ones (ehat_c, ehat_d)")]
    MissingRates,
}

/// Constants of the coupled resource/strategy system.
///
/// Raw extraction rates `e_c`, `e_d` (per player, per unit time) and the
/// normalised rates `ê = N e / T` are both stored; constructors derive one
/// from the other.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamsSpec")]
pub struct ModelParams {
    pub growth_rate: f64,
    pub capacity: f64,
    pub n_players: usize,
    pub e_c: f64,
    pub e_d: f64,
    pub ehat_c: f64,
    pub ehat_d: f64,
    pub t_f: f64,
    pub r0: f64,
    pub x0: f64,
}

/// Deserialisation form: either pair of extraction rates may be given.
#[derive(Debug, Clone, Deserialize)]
pub struct ParamsSpec {
    pub growth_rate: f64,
    #[serde(default = "one")]
    pub capacity: f64,
    pub n_players: usize,
    pub e_c: Option<f64>,
    pub e_d: Option<f64>,
    pub ehat_c: Option<f64>,
    pub ehat_d: Option<f64>,
    pub t_f: f64,
    pub r0: f64,
    pub x0: f64,
}

fn one() -> f64 {
    1.0
}

impl TryFrom<ParamsSpec> for ModelParams {
    type Error = ParamError;

    fn try_from(s: ParamsSpec) -> Result<Self, ParamError> {
        let p = match (s.ehat_c, s.ehat_d, s.e_c, s.e_d) {
            (Some(c), Some(d), ec, ed) => {
                let p = Self::from_normalized(s.growth_rate, s.n_players, c, d, s.t_f, s.r0, s.x0)?;
                // raw rates, if also present, must agree
                for (which, given, derived) in [('C', ec, p.e_c), ('D', ed, p.e_d)] {
                    if let Some(given) = given {
                        if !close(given, derived) {
                            return Err(ParamError::Inconsistent {
                                which,
                                derived: given * p.n_players as f64 / p.growth_rate,
                                given: if which == 'C' { c } else { d },
                            });
                        }
                    }
                }
                p
            }
            (None, None, Some(c), Some(d)) => {
                Self::from_raw(s.growth_rate, s.n_players, c, d, s.t_f, s.r0, s.x0)?
            }
            _ => return Err(ParamError::MissingRates),
        };
        if s.capacity != 1.0 {
            return Err(ParamError::Capacity(s.capacity));
        }
        Ok(p)
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

impl ModelParams {
    /// The configuration used throughout the experiments: N = 20, T = 2,
    /// ê_C = 0.7, ê_D = 1.1, R0 = x0 = 0.5, t_f = 40.
    pub fn reference() -> Self {
        Self::from_normalized(2.0, 20, 0.7, 1.1, 40.0, 0.5, 0.5).expect("reference parameters are valid")
    }

    pub fn from_normalized(
        growth_rate: f64,
        n_players: usize,
        ehat_c: f64,
        ehat_d: f64,
        t_f: f64,
        r0: f64,
        x0: f64,
    ) -> Result<Self, ParamError> {
        let n = n_players as f64;
        let p = Self {
            growth_rate,
            capacity: 1.0,
            n_players,
            e_c: ehat_c * growth_rate / n,
            e_d: ehat_d * growth_rate / n,
            ehat_c,
            ehat_d,
            t_f,
            r0,
            x0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn from_raw(
        growth_rate: f64,
        n_players: usize,
        e_c: f64,
        e_d: f64,
        t_f: f64,
        r0: f64,
        x0: f64,
    ) -> Result<Self, ParamError> {
        let n = n_players as f64;
        let p = Self {
            growth_rate,
            capacity: 1.0,
            n_players,
            e_c,
            e_d,
            ehat_c: n * e_c / growth_rate,
            ehat_d: n * e_d / growth_rate,
            t_f,
            r0,
            x0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        if !(self.growth_rate.is_finite() && self.growth_rate > 0.0) {
            return Err(ParamError::GrowthRate(self.growth_rate));
        }
        if self.n_players < 2 {
            return Err(ParamError::Players(self.n_players));
        }
        if self.capacity != 1.0 {
            return Err(ParamError::Capacity(self.capacity));
        }
        let (c, d) = (self.ehat_c, self.ehat_d);
        if !(c > 0.0 && c < 1.0 && d > 1.0 && d.is_finite()) {
            return Err(ParamError::Ordering { c, d });
        }
        let n = self.n_players as f64;
        for (which, raw, hat) in [('C', self.e_c, c), ('D', self.e_d, d)] {
            let derived = n * raw / self.growth_rate;
            if !close(derived, hat) {
                return Err(ParamError::Inconsistent {
                    which,
                    derived,
                    given: hat,
                });
            }
        }
        if !(self.t_f.is_finite() && self.t_f > 0.0) {
            return Err(ParamError::Horizon(self.t_f));
        }
        for (name, value) in [("R0", self.r0), ("x0", self.x0)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(ParamError::Initial { name, value });
            }
        }
        Ok(())
    }

    pub fn with_initial(mut self, r0: f64, x0: f64) -> Result<Self, ParamError> {
        self.r0 = r0;
        self.x0 = x0;
        self.validate()?;
        Ok(self)
    }

    pub fn with_horizon(mut self, t_f: f64) -> Result<Self, ParamError> {
        self.t_f = t_f;
        self.validate()?;
        Ok(self)
    }

    /// Same normalised rates with a different population size.
    pub fn with_players(self, n_players: usize) -> Result<Self, ParamError> {
        Self::from_normalized(
            self.growth_rate,
            n_players,
            self.ehat_c,
            self.ehat_d,
            self.t_f,
            self.r0,
            self.x0,
        )
    }

    pub fn extraction_rate(&self, s: Strategy) -> f64 {
        match s {
            Strategy::C => self.e_c,
            Strategy::D => self.e_d,
        }
    }

    pub fn normalized_rate(&self, s: Strategy) -> f64 {
        match s {
            Strategy::C => self.ehat_c,
            Strategy::D => self.ehat_d,
        }
    }

    /// `x ê_C + (1 - x) ê_D`.
    pub fn mean_normalized_extraction(&self, x: f64) -> f64 {
        x * self.ehat_c + (1.0 - x) * self.ehat_d
    }

    /// Integrand of the collective objective: `T R (x ê_C + (1 - x) ê_D)`.
    pub fn payoff_rate(&self, r: f64, x: f64) -> f64 {
        self.growth_rate * r * self.mean_normalized_extraction(x)
    }

    /// Largest payoff difference between strategies, reached at R = 1.
    pub fn max_payoff_gap(&self) -> f64 {
        self.e_d - self.e_c
    }

    /// Number of micro-steps in a full game, `N t_f`, rounded.
    pub fn max_decisions(&self) -> u64 {
        (self.n_players as f64 * self.t_f).round() as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_rates() {
        let p = ModelParams::reference();
        assert!((p.e_d - 0.11).abs() < 1e-15);
        assert!((p.e_c - 0.07).abs() < 1e-15);
        assert_eq!(p.max_decisions(), 800);
    }

    #[test]
    fn raw_and_normalized_constructors_agree() {
        let a = ModelParams::from_raw(2.0, 20, 0.07, 0.11, 40.0, 0.5, 0.5).unwrap();
        let b = ModelParams::reference();
        assert!((a.ehat_c - b.ehat_c).abs() < 1e-14);
        assert!((a.ehat_d - b.ehat_d).abs() < 1e-14);
    }

    #[test]
    fn ordering_enforced() {
        assert!(matches!(
            ModelParams::from_normalized(2.0, 20, 1.2, 1.1, 40.0, 0.5, 0.5),
            Err(ParamError::Ordering { .. })
        ));
        assert!(matches!(
            ModelParams::from_normalized(2.0, 20, 0.7, 0.9, 40.0, 0.5, 0.5),
            Err(ParamError::Ordering { .. })
        ));
        assert!(matches!(
            ModelParams::from_normalized(2.0, 1, 0.7, 1.1, 40.0, 0.5, 0.5),
            Err(ParamError::Players(1))
        ));
        assert!(matches!(
            ModelParams::from_normalized(2.0, 20, 0.7, 1.1, 40.0, 1.5, 0.5),
            Err(ParamError::Initial { name: "R0", .. })
        ));
    }

    #[test]
    fn deserialize_either_rate_form() {
        let normalized: ModelParams = serde_json::from_str(
            r#"{"growth_rate":2,"n_players":20,"ehat_c":0.7,"ehat_d":1.1,"t_f":40,"r0":0.5,"x0":0.5}"#,
        )
        .unwrap();
        let raw: ModelParams = serde_json::from_str(
            r#"{"growth_rate":2,"n_players":20,"e_c":0.07,"e_d":0.11,"t_f":40,"r0":0.5,"x0":0.5}"#,
        )
        .unwrap();
        assert!((normalized.e_c - raw.e_c).abs() < 1e-15);
        let bad = serde_json::from_str::<ModelParams>(
            r#"{"growth_rate":2,"n_players":20,"t_f":40,"r0":0.5,"x0":0.5}"#,
        );
        assert!(bad.is_err());
        let round: ModelParams =
            serde_json::from_str(&serde_json::to_string(&normalized).unwrap()).unwrap();
        assert_eq!(round, normalized);
    }
}

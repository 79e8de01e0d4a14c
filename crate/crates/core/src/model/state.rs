use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Cooperate (sustainable extraction) or defect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    C,
    D,
}

impl Strategy {
    pub fn as_char(self) -> char {
        match self {
            Strategy::C => 'C',
            Strategy::D => 'D',
        }
    }

    pub fn from_char(c: char) -> Option<Self> {
        match c {
            'C' => Some(Strategy::C),
            'D' => Some(Strategy::D),
            _ => None,
        }
    }

    pub fn is_cooperator(self) -> bool {
        self == Strategy::C
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut chars = s.chars();
        match (chars.next().and_then(Strategy::from_char), chars.next()) {
            (Some(st), None) => Ok(st),
            _ => Err(format!("strategy must be \"C\" or \"D\", got {s:?}")),
        }
    }
}

/// Resource level and cooperator fraction at time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HesState {
    pub t: f64,
    #[serde(rename = "R")]
    pub r: f64,
    pub x: f64,
}

impl HesState {
    pub fn new(t: f64, r: f64, x: f64) -> Self {
        Self { t, r, x }
    }
}

/// How `Trajectory::cumulative_payoff` is normalised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PayoffBasis {
    /// The collective objective `∫ T R (x ê_C + (1 - x) ê_D) dt`.
    Collective,
    /// Average per-player payoff (collective divided by N).
    PerPlayer,
}

#[derive(Debug, Error, PartialEq)]
pub enum TrajectoryError {
    #[error("sample times must be strictly increasing (t = {prev} followed by t = {next})")]
    NonIncreasingTime { prev: f64, next: f64 },
    #[error("cumulative payoff decreased at t = {t}")]
    DecreasingPayoff { t: f64 },
    #[error("samples and payoff accumulator lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("trajectory is empty")]
    Empty,
}

/// Time-ordered samples with the running value of the payoff integral.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    samples: Vec<HesState>,
    cumulative_payoff: Vec<f64>,
    basis: PayoffBasis,
    /// Number of times a state component was pulled back into [0, 1].
    pub clamp_events: usize,
}

// payoff increments below this are treated as rounding, not decreases
const PAYOFF_SLACK: f64 = 1e-12;

impl Trajectory {
    pub fn new(
        samples: Vec<HesState>,
        cumulative_payoff: Vec<f64>,
        basis: PayoffBasis,
    ) -> Result<Self, TrajectoryError> {
        if samples.len() != cumulative_payoff.len() {
            return Err(TrajectoryError::LengthMismatch(samples.len(), cumulative_payoff.len()));
        }
        if samples.is_empty() {
            return Err(TrajectoryError::Empty);
        }
        for (a, b) in samples.iter().zip(&samples[1..]) {
            if !(b.t > a.t) {
                return Err(TrajectoryError::NonIncreasingTime { prev: a.t, next: b.t });
            }
        }
        for (i, w) in cumulative_payoff.windows(2).enumerate() {
            if w[1] < w[0] - PAYOFF_SLACK {
                return Err(TrajectoryError::DecreasingPayoff { t: samples[i + 1].t });
            }
        }
        Ok(Self {
            samples,
            cumulative_payoff,
            basis,
            clamp_events: 0,
        })
    }

    pub fn single(state: HesState, basis: PayoffBasis) -> Self {
        Self {
            samples: vec![state],
            cumulative_payoff: vec![0.0],
            basis,
            clamp_events: 0,
        }
    }

    /// Appends a sample; time must advance and payoff must not decrease.
    pub fn push(&mut self, state: HesState, payoff: f64) -> Result<(), TrajectoryError> {
        let last = self.last();
        if !(state.t > last.t) {
            return Err(TrajectoryError::NonIncreasingTime { prev: last.t, next: state.t });
        }
        if payoff < self.final_payoff() - PAYOFF_SLACK {
            return Err(TrajectoryError::DecreasingPayoff { t: state.t });
        }
        self.samples.push(state);
        self.cumulative_payoff.push(payoff);
        Ok(())
    }

    pub fn samples(&self) -> &[HesState] {
        &self.samples
    }

    pub fn cumulative_payoff(&self) -> &[f64] {
        &self.cumulative_payoff
    }

    pub fn basis(&self) -> PayoffBasis {
        self.basis
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn first(&self) -> HesState {
        self.samples[0]
    }

    pub fn last(&self) -> HesState {
        *self.samples.last().expect("trajectory is never empty")
    }

    pub fn final_payoff(&self) -> f64 {
        *self.cumulative_payoff.last().expect("trajectory is never empty")
    }

    /// Index of the sample taken exactly at `t` (within 1e-9), if any.
    pub fn index_at(&self, t: f64) -> Option<usize> {
        let i = self.samples.partition_point(|s| s.t < t - 1e-9);
        (i < self.samples.len() && (self.samples[i].t - t).abs() <= 1e-9).then_some(i)
    }

    pub fn state_at(&self, t: f64) -> Option<HesState> {
        self.index_at(t).map(|i| self.samples[i])
    }

    pub fn payoff_at(&self, t: f64) -> Option<f64> {
        self.index_at(t).map(|i| self.cumulative_payoff[i])
    }

    /// Samples whose time is an integer, in order.
    pub fn integer_samples(&self) -> impl Iterator<Item = (HesState, f64)> + '_ {
        self.samples
            .iter()
            .zip(&self.cumulative_payoff)
            .filter(|(s, _)| (s.t - s.t.round()).abs() <= 1e-9)
            .map(|(s, p)| (*s, *p))
    }

    /// Converts a collective trajectory to per-player payoffs.
    pub fn per_player(mut self, n_players: usize) -> Self {
        if self.basis == PayoffBasis::Collective {
            let n = n_players as f64;
            for p in &mut self.cumulative_payoff {
                *p /= n;
            }
            self.basis = PayoffBasis::PerPlayer;
        }
        self
    }

    /// Writes `t,R,x,w,cumulative_payoff` rows; `w` is evaluated per row.
    pub fn write_csv<W: Write>(&self, out: W, w_at: impl Fn(f64) -> f64) -> std::io::Result<()> {
        let mut out = csv::Writer::from_writer(out);
        out.write_record(["t", "R", "x", "w", "cumulative_payoff"])?;
        for (s, p) in self.samples.iter().zip(&self.cumulative_payoff) {
            out.write_record([
                fmt_num(s.t),
                fmt_num(s.r),
                fmt_num(s.x),
                fmt_num(w_at(s.t)),
                fmt_num(*p),
            ])?;
        }
        out.flush()
    }
}

/// Locale-independent shortest round-trip formatting.
pub(crate) fn fmt_num(v: f64) -> String {
    format!("{v}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(ts: &[f64], ps: &[f64]) -> Result<Trajectory, TrajectoryError> {
        let samples = ts.iter().map(|&t| HesState::new(t, 0.5, 0.5)).collect();
        Trajectory::new(samples, ps.to_vec(), PayoffBasis::Collective)
    }

    #[test]
    fn rejects_non_increasing_time() {
        assert!(matches!(
            traj(&[0.0, 1.0, 1.0], &[0.0, 0.1, 0.2]),
            Err(TrajectoryError::NonIncreasingTime { .. })
        ));
        assert!(matches!(
            traj(&[0.0, 1.0], &[0.0, -0.1]),
            Err(TrajectoryError::DecreasingPayoff { .. })
        ));
        assert!(matches!(traj(&[], &[]), Err(TrajectoryError::Empty)));
    }

    #[test]
    fn lookup_and_integer_samples() {
        let t = traj(&[0.0, 0.5, 1.0, 1.25, 2.0], &[0.0, 0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(t.index_at(1.25), Some(3));
        assert_eq!(t.index_at(1.3), None);
        let ints: Vec<f64> = t.integer_samples().map(|(s, _)| s.t).collect();
        assert_eq!(ints, vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn strategy_parsing() {
        assert_eq!("C".parse::<Strategy>(), Ok(Strategy::C));
        assert!("CD".parse::<Strategy>().is_err());
        assert_eq!(serde_json::to_string(&Strategy::D).unwrap(), "\"D\"");
    }

    #[test]
    fn csv_uses_decimal_point() {
        let t = traj(&[0.0, 1.0], &[0.0, 0.25]).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf, |_| -1.0).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("t,R,x,w,cumulative_payoff"));
        assert_eq!(text.lines().nth(2), Some("1,0.5,0.5,-1,0.25"));
    }
}

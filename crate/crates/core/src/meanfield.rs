//! Fixed-step RK4 integration of the coupled resource/strategy equations
//! under a piecewise-constant selection pressure.
//!
//! Steps never straddle a schedule breakpoint or an integer time: each
//! span between consecutive sample points is divided into the smallest
//! number of equal steps no longer than `dt`. The payoff integral is
//! carried as a third state component, so the RK4 weights act on the
//! integrand as Simpson's rule.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{check_range, hes_rhs, HesState, ModelError, ModelParams, PayoffBasis, Trajectory};

pub const DEFAULT_DT: f64 = 0.01;

#[derive(Debug, Error, PartialEq)]
pub enum ScheduleError {
    #[error("schedule needs {0} values for {1} breakpoints")]
    Shape(usize, usize),
    #[error("breakpoints must be strictly increasing (b[{index}] = {value})")]
    NotIncreasing { index: usize, value: f64 },
    #[error("control value w[{index}] = {value} outside [-1, 1]")]
    OutOfBounds { index: usize, value: f64 },
}

/// Piecewise-constant `w(t)`: `values[k]` applies on `[grid[k], grid[k+1])`
/// and the right end point belongs to the last interval.
///
/// A single zero-length interval (`grid = [t0, t0]`) represents an empty
/// horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSchedule {
    grid: Vec<f64>,
    values: Vec<f64>,
}

impl ControlSchedule {
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self, ScheduleError> {
        if values.is_empty() || grid.len() != values.len() + 1 {
            return Err(ScheduleError::Shape(grid.len().saturating_sub(1), grid.len()));
        }
        let empty_horizon = values.len() == 1 && grid[0] == grid[1] && grid[0].is_finite();
        if !empty_horizon {
            for (i, pair) in grid.windows(2).enumerate() {
                if !(pair[1] > pair[0]) || !pair[1].is_finite() || !pair[0].is_finite() {
                    return Err(ScheduleError::NotIncreasing {
                        index: i + 1,
                        value: pair[1],
                    });
                }
            }
        }
        for (index, &value) in values.iter().enumerate() {
            if !(-1.0..=1.0).contains(&value) {
                return Err(ScheduleError::OutOfBounds { index, value });
            }
        }
        Ok(Self { grid, values })
    }

    pub fn constant(t0: f64, t_f: f64, w: f64) -> Result<Self, ScheduleError> {
        Self::new(vec![t0, t_f], vec![w])
    }

    /// `values.len()` equal intervals on `[t0, t_f]`.
    pub fn uniform(t0: f64, t_f: f64, values: Vec<f64>) -> Result<Self, ScheduleError> {
        let m = values.len();
        if m == 0 {
            return Err(ScheduleError::Shape(0, 0));
        }
        let width = (t_f - t0) / m as f64;
        let mut grid: Vec<f64> = (0..m).map(|k| t0 + k as f64 * width).collect();
        grid.push(t_f);
        Self::new(grid, values)
    }

    /// Joins schedules whose horizons abut end to start.
    pub fn concat(parts: &[ControlSchedule]) -> Result<Self, ScheduleError> {
        let mut grid = Vec::new();
        let mut values = Vec::new();
        for part in parts {
            if grid.is_empty() {
                grid.push(part.grid[0]);
            }
            grid.extend_from_slice(&part.grid[1..]);
            values.extend_from_slice(&part.values);
        }
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut_checked(&mut self, values: &[f64]) -> Result<(), ScheduleError> {
        if values.len() != self.values.len() {
            return Err(ScheduleError::Shape(values.len(), self.grid.len()));
        }
        for (index, &value) in values.iter().enumerate() {
            if !(-1.0..=1.0).contains(&value) {
                return Err(ScheduleError::OutOfBounds { index, value });
            }
        }
        self.values.copy_from_slice(values);
        Ok(())
    }

    pub fn start(&self) -> f64 {
        self.grid[0]
    }

    pub fn end(&self) -> f64 {
        *self.grid.last().expect("grid has at least two points")
    }

    pub fn intervals(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty_horizon(&self) -> bool {
        self.start() == self.end()
    }

    /// Control value at `t`; times outside the horizon take the nearest
    /// interval's value.
    pub fn value_at(&self, t: f64) -> f64 {
        let inner = &self.grid[1..self.grid.len() - 1];
        let k = inner.partition_point(|&b| b <= t);
        self.values[k]
    }
}

/// Which components of the state evolve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dynamics {
    #[default]
    Coupled,
    /// `x` pinned at its initial value.
    FixedStrategy,
    /// `R` pinned at its initial value.
    FixedResource,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrateOptions {
    pub dt: f64,
    pub dynamics: Dynamics,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            dynamics: Dynamics::Coupled,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum IntegrateError {
    #[error("step size must be finite and > 0, got {0}")]
    Step(f64),
    #[error("invalid initial state: {0}")]
    State(#[from] ModelError),
    #[error("state became non-finite at t = {t}")]
    NonFinite { t: f64 },
}

/// End state of an integration without the sample history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Endpoint {
    pub state: HesState,
    pub payoff: f64,
    pub clamp_events: usize,
}

/// Integrates from `(r0, x0)` at the schedule's start to its end with
/// step `dt`; samples at every integer time and every breakpoint.
pub fn integrate(
    params: &ModelParams,
    schedule: &ControlSchedule,
    r0: f64,
    x0: f64,
    dt: f64,
) -> Result<Trajectory, IntegrateError> {
    let opts = IntegrateOptions {
        dt,
        ..Default::default()
    };
    let start = HesState::new(schedule.start(), r0, x0);
    integrate_with(params, schedule, start, 0.0, opts)
}

/// General form of [`integrate`]: explicit start state (its `t` is
/// replaced by the schedule start), initial payoff, and dynamics variant.
pub fn integrate_with(
    params: &ModelParams,
    schedule: &ControlSchedule,
    start: HesState,
    payoff0: f64,
    opts: IntegrateOptions,
) -> Result<Trajectory, IntegrateError> {
    let mut samples = Vec::new();
    let mut payoffs = Vec::new();
    let end = run(params, schedule, start, payoff0, opts, |s, p| {
        samples.push(s);
        payoffs.push(p);
    })?;
    let mut traj = Trajectory::new(samples, payoffs, PayoffBasis::Collective)
        .expect("integrator emits strictly increasing times and non-decreasing payoff");
    traj.clamp_events = end.clamp_events;
    Ok(traj)
}

/// Final state and payoff only; same stepping as [`integrate_with`].
pub fn integrate_endpoint(
    params: &ModelParams,
    schedule: &ControlSchedule,
    start: HesState,
    payoff0: f64,
    opts: IntegrateOptions,
) -> Result<Endpoint, IntegrateError> {
    run(params, schedule, start, payoff0, opts, |_, _| {})
}

/// Sample times: breakpoints plus integers inside the horizon, with
/// integers closer than 1e-9 to a breakpoint merged into it.
pub fn sample_times(schedule: &ControlSchedule) -> Vec<f64> {
    let grid = schedule.grid();
    let (t0, t_f) = (schedule.start(), schedule.end());
    let mut times = Vec::with_capacity(grid.len() + (t_f - t0) as usize + 2);
    let mut g = 0;
    let mut next_int = t0.ceil();
    while g < grid.len() {
        let b = grid[g];
        if next_int <= t_f && next_int < b - 1e-9 {
            times.push(next_int);
            next_int += 1.0;
        } else {
            if (next_int - b).abs() <= 1e-9 {
                next_int += 1.0;
            }
            if times.last() != Some(&b) {
                times.push(b);
            }
            g += 1;
        }
    }
    times
}

/// State carried through a span: resource, cooperator fraction and the
/// accumulated payoff integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Augmented {
    pub r: f64,
    pub x: f64,
    pub payoff: f64,
}

/// Advances `state` from `a` to `b` under constant `w` with the smallest
/// number of equal RK4 steps no longer than `opts.dt`. Returns the number
/// of clamping events.
pub fn advance_span(
    params: &ModelParams,
    state: &mut Augmented,
    w: f64,
    a: f64,
    b: f64,
    opts: IntegrateOptions,
) -> Result<usize, IntegrateError> {
    let freeze_x = opts.dynamics == Dynamics::FixedStrategy;
    let freeze_r = opts.dynamics == Dynamics::FixedResource;
    let rhs = |r: f64, x: f64| {
        let (dr, dx) = hes_rhs(params, r, x, w);
        let dr = if freeze_r { 0.0 } else { dr };
        let dx = if freeze_x { 0.0 } else { dx };
        (dr, dx, params.payoff_rate(r, x))
    };
    let Augmented {
        mut r,
        mut x,
        mut payoff,
    } = *state;
    let mut clamps = 0;
    let n = ((b - a) / opts.dt - 1e-9).ceil().max(1.0) as usize;
    let h = (b - a) / n as f64;
    for i in 0..n {
        let (k1r, k1x, k1p) = rhs(r, x);
        let (k2r, k2x, k2p) = rhs(r + 0.5 * h * k1r, x + 0.5 * h * k1x);
        let (k3r, k3x, k3p) = rhs(r + 0.5 * h * k2r, x + 0.5 * h * k2x);
        let (k4r, k4x, k4p) = rhs(r + h * k3r, x + h * k3x);
        r += h / 6.0 * (k1r + 2.0 * k2r + 2.0 * k3r + k4r);
        x += h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
        payoff += h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
        if !(r.is_finite() && x.is_finite() && payoff.is_finite()) {
            return Err(IntegrateError::NonFinite {
                t: a + (i + 1) as f64 * h,
            });
        }
        if !(0.0..=1.0).contains(&r) {
            r = r.clamp(0.0, 1.0);
            clamps += 1;
        }
        if !(0.0..=1.0).contains(&x) {
            x = x.clamp(0.0, 1.0);
            clamps += 1;
        }
    }
    *state = Augmented { r, x, payoff };
    Ok(clamps)
}

fn run(
    params: &ModelParams,
    schedule: &ControlSchedule,
    start: HesState,
    payoff0: f64,
    opts: IntegrateOptions,
    mut on_sample: impl FnMut(HesState, f64),
) -> Result<Endpoint, IntegrateError> {
    if !(opts.dt.is_finite() && opts.dt > 0.0) {
        return Err(IntegrateError::Step(opts.dt));
    }
    check_range("R0", start.r, 0.0, 1.0)?;
    check_range("x0", start.x, 0.0, 1.0)?;

    let times = sample_times(schedule);
    let mut state = Augmented {
        r: start.r,
        x: start.x,
        payoff: payoff0,
    };
    let mut clamps = 0usize;
    on_sample(HesState::new(times[0], state.r, state.x), state.payoff);
    for span in times.windows(2) {
        let (a, b) = (span[0], span[1]);
        let w = schedule.value_at(0.5 * (a + b));
        clamps += advance_span(params, &mut state, w, a, b, opts)?;
        on_sample(HesState::new(b, state.r, state.x), state.payoff);
    }
    Ok(Endpoint {
        state: HesState::new(*times.last().expect("non-empty"), state.r, state.x),
        payoff: state.payoff,
        clamp_events: clamps,
    })
}

/// Deviation between integrations at `dt` and `dt / 2`, measured at
/// integer times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub dt: f64,
    pub max_dev_r: f64,
    pub max_dev_x: f64,
    pub max_dev_payoff: f64,
}

pub fn halve_step_check(
    params: &ModelParams,
    schedule: &ControlSchedule,
    r0: f64,
    x0: f64,
    dt: f64,
) -> Result<ConvergenceReport, IntegrateError> {
    let coarse = integrate(params, schedule, r0, x0, dt)?;
    let fine = integrate(params, schedule, r0, x0, dt / 2.0)?;
    let mut report = ConvergenceReport {
        dt,
        max_dev_r: 0.0,
        max_dev_x: 0.0,
        max_dev_payoff: 0.0,
    };
    for ((a, pa), (b, pb)) in coarse.integer_samples().zip(fine.integer_samples()) {
        debug_assert_eq!(a.t, b.t);
        report.max_dev_r = report.max_dev_r.max((a.r - b.r).abs());
        report.max_dev_x = report.max_dev_x.max((a.x - b.x).abs());
        report.max_dev_payoff = report.max_dev_payoff.max((pa - pb).abs());
    }
    Ok(report)
}

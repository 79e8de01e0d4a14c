//! Optimal selection pressure `w(t)` maximising `∫ T R (x ê_C + (1 - x) ê_D) dt`.
//!
//! Four regimes: strategy pinned, resource pinned, myopic one-unit pieces,
//! and the full coupled horizon.

mod transcription;

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::meanfield::{
    integrate_endpoint, integrate_with, Augmented, ControlSchedule, Dynamics, IntegrateError, IntegrateOptions,
    ScheduleError, DEFAULT_DT,
};
use crate::model::{fmt_num, HesState, ModelParams, ParamError, Trajectory};
use transcription::{ascend, AscentSettings, Transcription};

/// Step of the finite-difference gradient in `w`.
pub const FD_STEP: f64 = 1e-4;
/// Control intervals per unit time in the default grid.
pub const INTERVALS_PER_UNIT: f64 = 2.0;
/// `1 - x` below which `x` counts as fully cooperative for plateau
/// canonicalisation.
pub const PLATEAU_TOL: f64 = 1e-9;

const RANDOM_STARTS: usize = 5;
const MAX_ITER: usize = 400;
const PG_TOL: f64 = 1e-9;
const TIE_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum OcError {
    #[error("invalid problem: {0}")]
    Problem(String),
    #[error("{solver} needs mode {expected:?}, problem has {got:?}")]
    Mode {
        solver: &'static str,
        expected: OcMode,
        got: OcMode,
    },
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Params(#[from] ParamError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OcMode {
    FixedStrategy,
    FixedResource,
    Coupled,
}

impl OcMode {
    pub fn dynamics(self) -> Dynamics {
        match self {
            OcMode::FixedStrategy => Dynamics::FixedStrategy,
            OcMode::FixedResource => Dynamics::FixedResource,
            OcMode::Coupled => Dynamics::Coupled,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub r_lo: f64,
    pub r_hi: f64,
    pub x_lo: f64,
    pub x_hi: f64,
    pub w_lo: f64,
    pub w_hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcProblem {
    /// Initial state is `(params.r0, params.x0)`.
    pub params: ModelParams,
    pub t0: f64,
    pub t_f: f64,
    pub bounds: Bounds,
    pub mode: OcMode,
    pub grid_m: usize,
    /// Seed of the random multi-start points.
    pub seed: u64,
    pub dt: f64,
}

impl OcProblem {
    /// Full control range, state boxes `[0, 1]` except the pinned
    /// component, and two control intervals per unit time.
    pub fn new(params: ModelParams, t0: f64, t_f: f64, mode: OcMode) -> Result<Self, OcError> {
        let mut bounds = Bounds {
            r_lo: 0.0,
            r_hi: 1.0,
            x_lo: 0.0,
            x_hi: 1.0,
            w_lo: -1.0,
            w_hi: 1.0,
        };
        match mode {
            OcMode::FixedStrategy => (bounds.x_lo, bounds.x_hi) = (params.x0, params.x0),
            OcMode::FixedResource => (bounds.r_lo, bounds.r_hi) = (params.r0, params.r0),
            OcMode::Coupled => {}
        }
        let grid_m = ((t_f - t0) * INTERVALS_PER_UNIT).round().max(1.0) as usize;
        let p = Self {
            params,
            t0,
            t_f,
            bounds,
            mode,
            grid_m,
            seed: 0,
            dt: DEFAULT_DT,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_grid(mut self, grid_m: usize) -> Result<Self, OcError> {
        self.grid_m = grid_m;
        self.validate()?;
        Ok(self)
    }

    pub fn with_w_bounds(mut self, lo: f64, hi: f64) -> Result<Self, OcError> {
        self.bounds.w_lo = lo;
        self.bounds.w_hi = hi;
        self.validate()?;
        Ok(self)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), OcError> {
        let bad = |m: String| Err(OcError::Problem(m));
        if !(self.t0.is_finite() && self.t_f.is_finite() && self.t0 < self.t_f) {
            return bad(format!("need t_0 < t_f, got [{}, {}]", self.t0, self.t_f));
        }
        let b = &self.bounds;
        if !(b.w_lo >= -1.0 && b.w_hi <= 1.0 && b.w_lo <= b.w_hi) {
            return bad(format!("control bounds [{}, {}] must lie in [-1, 1]", b.w_lo, b.w_hi));
        }
        if !(b.r_lo <= b.r_hi && b.x_lo <= b.x_hi) {
            return bad("state bounds are inverted".into());
        }
        match self.mode {
            OcMode::FixedStrategy if !(b.x_lo == self.params.x0 && b.x_hi == self.params.x0) => {
                return bad("fixed-strategy mode pins x to x0".into());
            }
            OcMode::FixedResource if !(b.r_lo == self.params.r0 && b.r_hi == self.params.r0) => {
                return bad("fixed-resource mode pins R to R0".into());
            }
            _ => {}
        }
        if self.grid_m == 0 {
            return bad("grid_M must be at least 1".into());
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad(format!("step size must be > 0, got {}", self.dt));
        }
        Ok(())
    }

    fn opts(&self) -> IntegrateOptions {
        IntegrateOptions {
            dt: self.dt,
            dynamics: self.mode.dynamics(),
        }
    }

    fn start(&self) -> HesState {
        HesState::new(self.t0, self.params.r0, self.params.x0)
    }

    fn uniform(&self, values: Vec<f64>) -> Result<ControlSchedule, OcError> {
        Ok(ControlSchedule::uniform(self.t0, self.t_f, values)?)
    }

    fn expect_mode(&self, solver: &'static str, expected: OcMode) -> Result<(), OcError> {
        if self.mode == expected {
            Ok(())
        } else {
            Err(OcError::Mode {
                solver,
                expected,
                got: self.mode,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SolverTrace {
    pub iterations: usize,
    pub grad_norm: f64,
    pub restarts: usize,
    pub evaluations: usize,
    /// No start reached a stationary point of the projected ascent.
    pub degraded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OcSolution {
    pub schedule: ControlSchedule,
    pub trajectory: Trajectory,
    pub objective: f64,
    pub trace: SolverTrace,
}

impl OcSolution {
    /// Columns `t, w_star, R, x, cumulative_payoff`.
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut out = csv::Writer::from_writer(out);
        out.write_record(["t", "w_star", "R", "x", "cumulative_payoff"])?;
        for (s, p) in self.trajectory.samples().iter().zip(self.trajectory.cumulative_payoff()) {
            out.write_record([
                fmt_num(s.t),
                fmt_num(self.schedule.value_at(s.t)),
                fmt_num(s.r),
                fmt_num(s.x),
                fmt_num(*p),
            ])?;
        }
        out.flush()
    }
}

/// The collective payoff integral of the coupled system under `schedule`,
/// from `(r0, x0)` at the schedule's start.
pub fn objective(params: &ModelParams, schedule: &ControlSchedule, r0: f64, x0: f64) -> Result<f64, OcError> {
    objective_with(params, schedule, r0, x0, Dynamics::Coupled)
}

pub fn objective_with(
    params: &ModelParams,
    schedule: &ControlSchedule,
    r0: f64,
    x0: f64,
    dynamics: Dynamics,
) -> Result<f64, OcError> {
    let opts = IntegrateOptions {
        dt: DEFAULT_DT,
        dynamics,
    };
    let start = HesState::new(schedule.start(), r0, x0);
    Ok(integrate_endpoint(params, schedule, start, 0.0, opts)?.payoff)
}

fn finish(problem: &OcProblem, schedule: ControlSchedule, trace: SolverTrace) -> Result<OcSolution, OcError> {
    let trajectory = integrate_with(&problem.params, &schedule, problem.start(), 0.0, problem.opts())?;
    Ok(OcSolution {
        objective: trajectory.final_payoff(),
        schedule,
        trajectory,
        trace,
    })
}

/// With `x` pinned every control is payoff-equivalent; returns `w ≡ 0`.
pub fn solve_fixed_strategy(problem: &OcProblem) -> Result<OcSolution, OcError> {
    problem.validate()?;
    problem.expect_mode("solve_fixed_strategy", OcMode::FixedStrategy)?;
    let schedule = problem.uniform(vec![0.0; problem.grid_m])?;
    finish(problem, schedule, SolverTrace::default())
}

/// With `R` pinned the payoff rate falls with `x`, so the control sits at
/// its upper bound throughout.
pub fn solve_fixed_resource(problem: &OcProblem) -> Result<OcSolution, OcError> {
    problem.validate()?;
    problem.expect_mode("solve_fixed_resource", OcMode::FixedResource)?;
    let schedule = problem.uniform(vec![problem.bounds.w_hi; problem.grid_m])?;
    finish(problem, schedule, SolverTrace::default())
}

fn transcription<'a>(problem: &'a OcProblem, grid: &[f64]) -> Transcription<'a> {
    let start = Augmented {
        r: problem.params.r0,
        x: problem.params.x0,
        payoff: 0.0,
    };
    Transcription::new(&problem.params, grid, start, problem.opts())
}

/// Sets `w ≤ 0` to 0 on intervals that begin with `1 - x` below
/// [`PLATEAU_TOL`], where the replicator factor makes such controls inert.
fn canonicalize(values: &[f64], interval_start_x: &[f64]) -> Vec<f64> {
    values
        .iter()
        .zip(interval_start_x)
        .map(|(&w, &x)| if w <= 0.0 && 1.0 - x < PLATEAU_TOL { 0.0 } else { w })
        .collect()
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Finite-difference gradient of the objective over the problem's grid.
pub fn fd_gradient(problem: &OcProblem, values: &[f64], h: f64) -> Result<Vec<f64>, OcError> {
    problem.validate()?;
    let shape = problem.uniform(vec![0.0; problem.grid_m])?;
    let tr = transcription(problem, shape.grid());
    let (cps, end) = tr.checkpoints(values)?;
    Ok(tr.gradient(values, &cps, end.payoff, h, problem.bounds.w_lo, problem.bounds.w_hi)?)
}

/// Piecewise-constant `w` on `grid_m` uniform intervals maximised by
/// projected gradient ascent from `w ≡ -1, 0, +1` and five random starts.
///
/// The best objective wins; near-ties go to the candidate closest to its
/// plateau-canonical form, then to the strictly larger objective, then to
/// the earlier start.
pub fn solve_continuous(problem: &OcProblem) -> Result<OcSolution, OcError> {
    problem.validate()?;
    problem.expect_mode("solve_continuous", OcMode::Coupled)?;
    let m = problem.grid_m;
    let (lo, hi) = (problem.bounds.w_lo, problem.bounds.w_hi);
    let shape = problem.uniform(vec![0.0; m])?;
    let tr = transcription(problem, shape.grid());

    let mut rng = ChaCha8Rng::seed_from_u64(problem.seed);
    let mut starts: Vec<Vec<f64>> = [-1.0, 0.0, 1.0].iter().map(|&w: &f64| vec![w.clamp(lo, hi); m]).collect();
    for _ in 0..RANDOM_STARTS {
        starts.push((0..m).map(|_| rng.random_range(lo..=hi)).collect());
    }
    let settings = AscentSettings {
        lo,
        hi,
        fd_step: FD_STEP,
        max_iter: MAX_ITER,
        pg_tol: PG_TOL,
    };

    let mut trace = SolverTrace {
        restarts: starts.len(),
        degraded: true,
        ..Default::default()
    };
    let mut best: Option<(f64, f64, Vec<f64>)> = None;
    for start in starts {
        let run = ascend(&tr, start, settings)?;
        trace.iterations += run.iterations;
        trace.evaluations += run.evaluations;
        trace.degraded &= !run.converged;
        let (cps, _) = tr.checkpoints(&run.values)?;
        let xs: Vec<f64> = cps.iter().map(|c| c.x).collect();
        let offset = distance(&run.values, &canonicalize(&run.values, &xs));
        let better = match &best {
            None => true,
            Some((f, d, _)) => {
                let tol = TIE_TOL * f.abs().max(1.0);
                let tied = (run.objective - f).abs() <= tol;
                run.objective > f + tol || (tied && (offset < *d || (offset == *d && run.objective > *f)))
            }
        };
        if better {
            trace.grad_norm = run.grad_norm;
            best = Some((run.objective, offset, run.values));
        }
    }
    let (_, _, values) = best.expect("at least three starts");
    let (cps, _) = tr.checkpoints(&values)?;
    let xs: Vec<f64> = cps.iter().map(|c| c.x).collect();
    let schedule = problem.uniform(canonicalize(&values, &xs))?;
    finish(problem, schedule, trace)
}

/// Myopic control: each unit interval `[i, i+1]` is optimised on its own,
/// starting from where the previous one ended.
pub fn solve_piecewise(problem: &OcProblem) -> Result<OcSolution, OcError> {
    problem.validate()?;
    problem.expect_mode("solve_piecewise", OcMode::Coupled)?;
    let pieces = (problem.t_f - problem.t0).round() as usize;
    if pieces == 0 || ((problem.t_f - problem.t0) - pieces as f64).abs() > 1e-9 {
        return Err(OcError::Problem(format!(
            "piecewise control needs an integer horizon, got {}",
            problem.t_f - problem.t0
        )));
    }
    let mut state = problem.start();
    let mut values = Vec::with_capacity(pieces);
    let mut trace = SolverTrace {
        degraded: false,
        ..Default::default()
    };
    for i in 0..pieces {
        let a = problem.t0 + i as f64;
        let params = problem.params.clone().with_initial(state.r, state.x)?;
        let piece = OcProblem {
            params,
            t0: a,
            t_f: a + 1.0,
            grid_m: 1,
            ..problem.clone()
        };
        let sol = solve_continuous(&piece)?;
        trace.iterations += sol.trace.iterations;
        trace.evaluations += sol.trace.evaluations;
        trace.restarts += sol.trace.restarts;
        trace.degraded |= sol.trace.degraded;
        trace.grad_norm = trace.grad_norm.max(sol.trace.grad_norm);
        values.push(sol.schedule.values()[0]);
        state = sol.trajectory.last();
    }
    let schedule = problem.uniform(values)?;
    finish(problem, schedule, trace)
}

/// Dispatches on the problem's mode; coupled problems use the full-horizon
/// solver.
pub fn solve(problem: &OcProblem) -> Result<OcSolution, OcError> {
    match problem.mode {
        OcMode::FixedStrategy => solve_fixed_strategy(problem),
        OcMode::FixedResource => solve_fixed_resource(problem),
        OcMode::Coupled => solve_continuous(problem),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepMode {
    FixedStrategy,
    FixedResource,
    Piecewise,
    Continuous,
}

impl SweepMode {
    pub fn solve(self, params: &ModelParams, t0: f64, t_f: f64) -> Result<OcSolution, OcError> {
        let mode = match self {
            SweepMode::FixedStrategy => OcMode::FixedStrategy,
            SweepMode::FixedResource => OcMode::FixedResource,
            SweepMode::Piecewise | SweepMode::Continuous => OcMode::Coupled,
        };
        let problem = OcProblem::new(params.clone(), t0, t_f, mode)?;
        match self {
            SweepMode::Piecewise => solve_piecewise(&problem),
            _ => solve(&problem),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub r_final: f64,
    pub x_final: f64,
    /// `T R (x ê_C + (1 - x) ê_D)` at `t_f`.
    pub payoff_inst: f64,
    pub payoff_cum: f64,
    pub degraded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub t_f: f64,
    pub result: Result<SweepPoint, String>,
}

/// One solve on `[0, t_f]` per horizon; failures are kept per row.
pub fn horizon_sweep(params: &ModelParams, t_f_list: &[f64], mode: SweepMode) -> Vec<SweepRow> {
    t_f_list
        .iter()
        .map(|&t_f| {
            let result = mode
                .solve(params, 0.0, t_f)
                .map(|sol| {
                    let end = sol.trajectory.last();
                    SweepPoint {
                        r_final: end.r,
                        x_final: end.x,
                        payoff_inst: params.payoff_rate(end.r, end.x),
                        payoff_cum: sol.objective,
                        degraded: sol.trace.degraded,
                    }
                })
                .map_err(|e| e.to_string());
            SweepRow { t_f, result }
        })
        .collect()
}

/// Columns `t_f, R_final, x_final, payoff_inst, payoff_cum`; failed
/// horizons leave the value columns empty.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> std::io::Result<()> {
    let mut out = csv::Writer::from_writer(out);
    out.write_record(["t_f", "R_final", "x_final", "payoff_inst", "payoff_cum"])?;
    for row in rows {
        match &row.result {
            Ok(p) => out.write_record([
                fmt_num(row.t_f),
                fmt_num(p.r_final),
                fmt_num(p.x_final),
                fmt_num(p.payoff_inst),
                fmt_num(p.payoff_cum),
            ])?,
            Err(_) => out.write_record([fmt_num(row.t_f), String::new(), String::new(), String::new(), String::new()])?,
        }
    }
    out.flush()
}

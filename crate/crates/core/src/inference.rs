//! Critical-time fitting: an optimal-control phase up to `tau`, then a
//! frozen strategy mix, compared with the observed mean cooperator fraction.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::meanfield::{integrate_with, ControlSchedule, Dynamics, IntegrateError, IntegrateOptions, DEFAULT_DT};
use crate::model::{fmt_num, HesState, ModelParams, PayoffBasis, Trajectory};
use crate::optctl::{solve_continuous, solve_piecewise, OcError, OcMode, OcProblem};
use crate::record::{GameRecord, NeighborRef, RECORD_FIELDS};
use crate::socialnet::GraphKind;

pub use crate::record::GameType;

const LATTICE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct RowProblem {
    /// 1-based line number in the input file.
    pub line: usize,
    pub message: String,
}

impl fmt::Display for RowProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

const LISTED_ROWS: usize = 10;

fn list(problems: &[RowProblem]) -> String {
    let mut s = problems.iter().take(LISTED_ROWS).map(|p| p.to_string()).collect::<Vec<_>>().join("; ");
    if problems.len() > LISTED_ROWS {
        s.push_str(&format!("; and {} more", problems.len() - LISTED_ROWS));
    }
    s
}

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("series lengths differ: {0} vs {1}")]
    Length(usize, usize),
    #[error("tau must be in 1..={t_f}, got {tau}")]
    Tau { tau: u32, t_f: u32 },
    #[error("horizon must be a positive integer, got {0}")]
    Horizon(f64),
    #[error("solver failed for tau = {tau}: {source}")]
    Solver { tau: u32, source: OcError },
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
    #[error("series has no realizations")]
    Empty,
    #[error("no records")]
    NoRecords,
    #[error("{} invalid rows: {}", .0.len(), list(.0))]
    Rows(Vec<RowProblem>),
    #[error("realization {game_id}: {message}")]
    Realization { game_id: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// `Σ_t |a(t) - b(t)|` over aligned integer-time series.
pub fn error_indicator(x_exp: &[f64], x_model: &[f64]) -> Result<f64, InferenceError> {
    if x_exp.len() != x_model.len() {
        return Err(InferenceError::Length(x_exp.len(), x_model.len()));
    }
    Ok(x_exp.iter().zip(x_model).map(|(a, b)| (a - b).abs()).sum())
}

fn integer_horizon(params: &ModelParams) -> Result<u32, InferenceError> {
    let t_f = params.t_f;
    if t_f >= 1.0 && (t_f - t_f.round()).abs() <= 1e-9 {
        Ok(t_f.round() as u32)
    } else {
        Err(InferenceError::Horizon(t_f))
    }
}

/// One game's integer-time samples, `t = 0..=t_end`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRun {
    pub game_id: String,
    pub rows: Vec<HesState>,
}

impl SeriesRun {
    pub fn t_end(&self) -> u32 {
        self.rows.last().map_or(0, |s| s.t.round() as u32)
    }

    /// `x` at integer time `t`, holding the last row after the series ends.
    pub fn x_at(&self, t: u32) -> f64 {
        let i = (t as usize).min(self.rows.len() - 1);
        self.rows[i].x
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSeries {
    pub realizations: Vec<SeriesRun>,
    pub game_type: GameType,
    pub site: String,
    pub network: Option<GraphKind>,
    pub params: ModelParams,
}

impl ExperimentSeries {
    /// Checks the shape invariants: rows at `t = 0, 1, ...`, `t_end ≤ t_f`,
    /// starting from `(R0, x0)`.
    pub fn validate(&self) -> Result<(), InferenceError> {
        let t_f = integer_horizon(&self.params)?;
        if self.realizations.is_empty() {
            return Err(InferenceError::Empty);
        }
        let n = self.params.n_players as f64;
        let x0_seats = (self.params.x0 * n).round() / n;
        for run in &self.realizations {
            let bad = |message: String| {
                Err(InferenceError::Realization {
                    game_id: run.game_id.clone(),
                    message,
                })
            };
            let Some(first) = run.rows.first() else {
                return bad("no rows".into());
            };
            for (i, s) in run.rows.iter().enumerate() {
                if (s.t - i as f64).abs() > 1e-9 {
                    return bad(format!("row {i} has t = {}, expected {i}", s.t));
                }
            }
            if run.t_end() > t_f {
                return bad(format!("ends at t = {} beyond t_f = {t_f}", run.t_end()));
            }
            let x_ok = (first.x - self.params.x0).abs() <= LATTICE_TOL || (first.x - x0_seats).abs() <= LATTICE_TOL;
            if (first.r - self.params.r0).abs() > LATTICE_TOL || !x_ok {
                return bad(format!(
                    "starts at (R, x) = ({}, {}), params declare ({}, {})",
                    first.r, first.x, self.params.r0, self.params.x0
                ));
            }
        }
        Ok(())
    }

    /// Mean `x` across realizations at `t = 0..=t_f`; truncated
    /// realizations hold their last value.
    pub fn mean_x(&self) -> Result<Vec<f64>, InferenceError> {
        let t_f = integer_horizon(&self.params)?;
        if self.realizations.is_empty() {
            return Err(InferenceError::Empty);
        }
        // running mean: exact when all realisations agree
        Ok((0..=t_f)
            .map(|t| {
                self.realizations
                    .iter()
                    .enumerate()
                    .fold(0.0, |mean, (k, r)| mean + (r.x_at(t) - mean) / (k + 1) as f64)
            })
            .collect())
    }

    /// Columns `game_id,t,R,x`.
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut out = csv::Writer::from_writer(out);
        out.write_record(["game_id", "t", "R", "x"])?;
        for run in &self.realizations {
            for s in &run.rows {
                out.write_record([run.game_id.clone(), fmt_num(s.t.round()), fmt_num(s.r), fmt_num(s.x)])?;
            }
        }
        out.flush()
    }
}

/// Model output for one candidate critical time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoPhase {
    pub tau: u32,
    pub x_frozen: f64,
    /// Control over `[0, t_f]`: the optimal schedule, then `w = 0`.
    pub schedule: ControlSchedule,
    /// Collective payoff basis.
    pub trajectory: Trajectory,
}

#[derive(Debug, Clone)]
struct Phase1 {
    schedule: ControlSchedule,
    trajectory: Trajectory,
}

fn phase_one(params: &ModelParams, game_type: GameType, tau: u32) -> Result<Phase1, InferenceError> {
    let solver = |e| InferenceError::Solver { tau, source: e };
    let problem = OcProblem::new(params.clone(), 0.0, tau as f64, OcMode::Coupled).map_err(solver)?;
    let sol = match game_type {
        GameType::Individual => solve_piecewise(&problem),
        GameType::Group => solve_continuous(&problem),
    }
    .map_err(solver)?;
    Ok(Phase1 {
        schedule: sol.schedule,
        trajectory: sol.trajectory,
    })
}

fn phase_two(params: &ModelParams, tau: u32, one: &Phase1, x_frozen: Option<f64>) -> Result<TwoPhase, InferenceError> {
    let t_f = integer_horizon(params)?;
    let end = one.trajectory.last();
    let x_frozen = x_frozen.unwrap_or(end.x);
    let mut samples = one.trajectory.samples().to_vec();
    let mut payoffs = one.trajectory.cumulative_payoff().to_vec();
    // the boundary row belongs to the frozen phase
    samples.last_mut().expect("solver trajectories are non-empty").x = x_frozen;
    let mut schedule = one.schedule.clone();
    if tau < t_f {
        let zero = ControlSchedule::constant(tau as f64, t_f as f64, 0.0).expect("tau < t_f");
        let opts = IntegrateOptions {
            dt: DEFAULT_DT,
            dynamics: Dynamics::FixedStrategy,
        };
        let start = HesState::new(tau as f64, end.r, x_frozen);
        let tail = integrate_with(params, &zero, start, one.trajectory.final_payoff(), opts)?;
        samples.extend_from_slice(&tail.samples()[1..]);
        payoffs.extend_from_slice(&tail.cumulative_payoff()[1..]);
        schedule = ControlSchedule::concat(&[schedule, zero]).expect("adjacent horizons");
    }
    let trajectory = Trajectory::new(samples, payoffs, PayoffBasis::Collective)
        .expect("phases join at tau with increasing time and payoff");
    Ok(TwoPhase {
        tau,
        x_frozen,
        schedule,
        trajectory,
    })
}

/// Optimal control on `[0, tau]` (myopic pieces for type 1, full horizon
/// for type 2), then `x` frozen at `x(tau)` and only `R` evolving.
pub fn two_phase_prediction(params: &ModelParams, game_type: GameType, tau: u32) -> Result<TwoPhase, InferenceError> {
    let t_f = integer_horizon(params)?;
    if !(1..=t_f).contains(&tau) {
        return Err(InferenceError::Tau { tau, t_f });
    }
    let one = phase_one(params, game_type, tau)?;
    phase_two(params, tau, &one, None)
}

/// First phases for every `tau = 1..=t_f`, reusable across fits with the
/// same parameters and game type.
#[derive(Debug, Clone)]
pub struct PredictionBank {
    params: ModelParams,
    game_type: GameType,
    phases: Vec<Phase1>,
}

impl PredictionBank {
    pub fn new(params: &ModelParams, game_type: GameType) -> Result<Self, InferenceError> {
        let t_f = integer_horizon(params)?;
        let phases = (1..=t_f)
            .into_par_iter()
            .map(|tau| phase_one(params, game_type, tau))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            params: params.clone(),
            game_type,
            phases,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn game_type(&self) -> GameType {
        self.game_type
    }

    pub fn t_f(&self) -> u32 {
        self.phases.len() as u32
    }

    /// Two-phase prediction; `x_frozen` overrides the model's `x(tau)`.
    pub fn predict(&self, tau: u32, x_frozen: Option<f64>) -> Result<TwoPhase, InferenceError> {
        let t_f = self.t_f();
        if !(1..=t_f).contains(&tau) {
            return Err(InferenceError::Tau { tau, t_f });
        }
        phase_two(&self.params, tau, &self.phases[tau as usize - 1], x_frozen)
    }
}

/// Where the frozen cooperator fraction comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FreezeRule {
    /// The model's own `x(tau)`.
    #[default]
    Model,
    /// The observed mean `x` at `tau`.
    Empirical,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub tau_crit: u32,
    pub x_frozen: f64,
    /// `E(tau)` for `tau = 1..=t_f`.
    pub error_curve: Vec<f64>,
    pub predicted: TwoPhase,
    /// Observed mean `x` at `t = 0..=t_f`.
    pub mean_x: Vec<f64>,
    pub freeze: FreezeRule,
}

impl FitResult {
    /// Columns `tau,error`.
    pub fn write_error_curve<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut out = csv::Writer::from_writer(out);
        out.write_record(["tau", "error"])?;
        for (i, e) in self.error_curve.iter().enumerate() {
            out.write_record([(i + 1).to_string(), fmt_num(*e)])?;
        }
        out.flush()
    }

    /// The predicted trajectory as `t,R,x,w,cumulative_payoff`.
    pub fn write_predicted<W: Write>(&self, out: W) -> std::io::Result<()> {
        let sched = &self.predicted.schedule;
        self.predicted.trajectory.write_csv(out, |t| sched.value_at(t))
    }
}

fn model_x(pred: &TwoPhase, t_f: u32) -> Vec<f64> {
    (0..=t_f)
        .map(|t| {
            pred.trajectory
                .state_at(t as f64)
                .expect("predictions are sampled at every integer time")
                .x
        })
        .collect()
}

/// Scans `tau = 1..=t_f` and returns the minimiser of `E`, ties going to
/// the smaller `tau`.
pub fn fit_tau_crit(series: &ExperimentSeries) -> Result<FitResult, InferenceError> {
    let bank = PredictionBank::new(&series.params, series.game_type)?;
    fit_with_bank(series, &bank, FreezeRule::Model)
}

pub fn fit_with_bank(
    series: &ExperimentSeries,
    bank: &PredictionBank,
    freeze: FreezeRule,
) -> Result<FitResult, InferenceError> {
    let mean_x = series.mean_x()?;
    let t_f = bank.t_f();
    if mean_x.len() != t_f as usize + 1 {
        return Err(InferenceError::Length(mean_x.len(), t_f as usize + 1));
    }
    let frozen = |tau: u32| match freeze {
        FreezeRule::Model => None,
        FreezeRule::Empirical => Some(mean_x[tau as usize]),
    };
    let error_curve = (1..=t_f)
        .into_par_iter()
        .map(|tau| {
            let pred = bank.predict(tau, frozen(tau))?;
            error_indicator(&mean_x, &model_x(&pred, t_f))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut best = 0;
    for (i, &e) in error_curve.iter().enumerate() {
        if e < error_curve[best] {
            best = i;
        }
    }
    let tau_crit = best as u32 + 1;
    let predicted = bank.predict(tau_crit, frozen(tau_crit))?;
    Ok(FitResult {
        tau_crit,
        x_frozen: predicted.x_frozen,
        error_curve,
        predicted,
        mean_x,
        freeze,
    })
}

/// Observation model for synthetic series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Noise {
    None,
    /// `x` replaced by `Binomial(N, x) / N` at every `t ≥ 1`; realisation
    /// `i` draws from seed `seed + i`.
    Binomial { seed: u64 },
}

/// Realisations of a two-phase prediction under an observation model.
pub fn synthetic_series(
    params: &ModelParams,
    prediction: &TwoPhase,
    game_type: GameType,
    realizations: usize,
    noise: Noise,
) -> ExperimentSeries {
    let n = params.n_players;
    let model: Vec<HesState> = prediction.trajectory.integer_samples().map(|(s, _)| s).collect();
    let runs = (0..realizations)
        .map(|i| {
            let mut rows = model.clone();
            if let Noise::Binomial { seed } = noise {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
                for s in rows.iter_mut().skip(1) {
                    let p = s.x.clamp(0.0, 1.0);
                    let k = (0..n).filter(|_| rng.random::<f64>() < p).count();
                    s.x = k as f64 / n as f64;
                }
            }
            SeriesRun {
                game_id: format!("synthetic-{i}"),
                rows,
            }
        })
        .collect();
    ExperimentSeries {
        realizations: runs,
        game_type,
        site: "synthetic".into(),
        network: None,
        params: params.clone(),
    }
}

/// Builds a series from integer-sampled trajectories, e.g. abm
/// realisations.
pub fn series_from_trajectories<'a>(
    params: &ModelParams,
    game_type: GameType,
    site: &str,
    network: Option<GraphKind>,
    runs: impl IntoIterator<Item = (String, &'a Trajectory)>,
) -> ExperimentSeries {
    let realizations = runs
        .into_iter()
        .map(|(game_id, traj)| SeriesRun {
            game_id,
            rows: traj.integer_samples().map(|(s, _)| s).collect(),
        })
        .collect();
    ExperimentSeries {
        realizations,
        game_type,
        site: site.into(),
        network,
        params: params.clone(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IngestFormat {
    Records,
    Series,
}

impl std::str::FromStr for IngestFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "records" => Ok(IngestFormat::Records),
            "series" => Ok(IngestFormat::Series),
            _ => Err(format!("format must be records or series, got {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestOptions {
    pub params: ModelParams,
    pub game_type: GameType,
    pub site: String,
    pub network: Option<GraphKind>,
    /// Reject `x` values off the `1/N` lattice.
    pub lattice_check: bool,
}

impl IngestOptions {
    pub fn new(params: ModelParams, game_type: GameType) -> Self {
        Self {
            params,
            game_type,
            site: String::new(),
            network: None,
            lattice_check: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct IngestReport {
    pub rows: usize,
    pub games: usize,
    /// Records whose `neighbor_index` held a strategy instead of a node.
    pub neighbor_as_strategy: usize,
    pub notes: Vec<String>,
}

fn check_state(r: f64, x: f64, n: usize, lattice: bool, line: usize, problems: &mut Vec<RowProblem>) {
    if !(0.0..=1.0).contains(&r) {
        problems.push(RowProblem {
            line,
            message: format!("R = {r} outside [0, 1]"),
        });
    }
    let k = x * n as f64;
    if !(0.0..=1.0).contains(&x) || (lattice && (k - k.round()).abs() > LATTICE_TOL * n as f64) {
        problems.push(RowProblem {
            line,
            message: format!("x = {x} is not a multiple of 1/{n} in [0, 1]"),
        });
    }
}

/// Reads a records log (one JSON object per line) or a `game_id,t,R,x`
/// series CSV.
pub fn ingest_experiment(
    path: &Path,
    format: IngestFormat,
    opts: &IngestOptions,
) -> Result<(ExperimentSeries, IngestReport), InferenceError> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let default_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "game".into());
    let (realizations, report) = match format {
        IngestFormat::Records => ingest_records(reader, &default_id, opts)?,
        IngestFormat::Series => ingest_series(reader, opts)?,
    };
    let series = ExperimentSeries {
        realizations,
        game_type: opts.game_type,
        site: opts.site.clone(),
        network: opts.network,
        params: opts.params.clone(),
    };
    series.validate()?;
    Ok((series, report))
}

fn ingest_records<R: BufRead>(
    reader: R,
    default_id: &str,
    opts: &IngestOptions,
) -> Result<(Vec<SeriesRun>, IngestReport), InferenceError> {
    let params = &opts.params;
    let n = params.n_players;
    let t_f = integer_horizon(params)?;
    let mut problems = Vec::new();
    let mut report = IngestReport::default();
    let mut order: Vec<String> = Vec::new();
    let mut games: HashMap<String, Vec<(usize, GameRecord)>> = HashMap::new();

    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        report.rows += 1;
        let value: serde_json::Value = match serde_json::from_str(&line) {
            Ok(v) => v,
            Err(e) => {
                problems.push(RowProblem {
                    line: line_no,
                    message: format!("not JSON: {e}"),
                });
                continue;
            }
        };
        let Some(obj) = value.as_object() else {
            problems.push(RowProblem {
                line: line_no,
                message: "not a JSON object".into(),
            });
            continue;
        };
        let missing: Vec<&str> = RECORD_FIELDS.iter().copied().filter(|f| !obj.contains_key(*f)).collect();
        if !missing.is_empty() {
            problems.push(RowProblem {
                line: line_no,
                message: format!("missing fields: {}", missing.join(", ")),
            });
            continue;
        }
        let game_id = match obj.get("game_id") {
            Some(serde_json::Value::String(s)) => s.clone(),
            Some(v) => v.to_string(),
            None => default_id.to_string(),
        };
        let rec: GameRecord = match serde_json::from_value(value) {
            Ok(r) => r,
            Err(e) => {
                problems.push(RowProblem {
                    line: line_no,
                    message: e.to_string(),
                });
                continue;
            }
        };
        if matches!(rec.neighbor_index, NeighborRef::Strategy(_)) {
            report.neighbor_as_strategy += 1;
        }
        if rec.vector.chars().count() != n || !rec.vector.chars().all(|c| c == 'C' || c == 'D') {
            problems.push(RowProblem {
                line: line_no,
                message: format!("vector must be {n} characters of C/D"),
            });
        } else if (rec.x - rec.cooperators() as f64 / n as f64).abs() > LATTICE_TOL {
            problems.push(RowProblem {
                line: line_no,
                message: format!("x = {} disagrees with vector ({} cooperators)", rec.x, rec.cooperators()),
            });
        }
        check_state(rec.r, rec.x, n, opts.lattice_check, line_no, &mut problems);
        if !games.contains_key(&game_id) {
            order.push(game_id.clone());
        }
        games.entry(game_id).or_default().push((line_no, rec));
    }
    if report.rows == 0 {
        return Err(InferenceError::NoRecords);
    }
    if !problems.is_empty() {
        return Err(InferenceError::Rows(problems));
    }
    if report.neighbor_as_strategy > 0 {
        report.notes.push(format!(
            "{} records carry a strategy in neighbor_index; read as the displayed neighbour's strategy",
            report.neighbor_as_strategy
        ));
    }

    let nf = n as f64;
    let x0 = (params.x0 * nf).round() / nf;
    let mut runs = Vec::with_capacity(order.len());
    for id in order {
        let mut recs = games.remove(&id).expect("every id was inserted");
        recs.sort_by_key(|(_, r)| r.time.step);
        for pair in recs.windows(2) {
            if pair[0].1.time.step == pair[1].1.time.step {
                problems.push(RowProblem {
                    line: pair[1].0,
                    message: format!("duplicate step {} in game {id}", pair[1].1.time.step),
                });
            }
        }
        let last_step = recs.last().map_or(0, |(_, r)| r.time.step);
        let t_end = last_step.div_ceil(n as u64).min(t_f as u64);
        let mut rows = vec![HesState::new(0.0, params.r0, x0)];
        let mut j = 0;
        for t in 1..=t_end {
            let limit = t * n as u64;
            while j + 1 < recs.len() && recs[j + 1].1.time.step <= limit {
                j += 1;
            }
            let rec = &recs[j].1;
            if rec.time.step > limit {
                rows.push(HesState::new(t as f64, rows.last().unwrap().r, rows.last().unwrap().x));
            } else {
                rows.push(HesState::new(t as f64, rec.r, rec.x));
            }
        }
        runs.push(SeriesRun { game_id: id, rows });
    }
    if !problems.is_empty() {
        return Err(InferenceError::Rows(problems));
    }
    report.games = runs.len();
    Ok((runs, report))
}

fn ingest_series<R: BufRead>(reader: R, opts: &IngestOptions) -> Result<(Vec<SeriesRun>, IngestReport), InferenceError> {
    let n = opts.params.n_players;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| InferenceError::Rows(vec![RowProblem { line: 1, message: e.to_string() }]))?
        .clone();
    if headers.is_empty() {
        return Err(InferenceError::NoRecords);
    }
    let col = |name: &str| headers.iter().position(|h| h == name);
    let cols: Vec<Option<usize>> = ["game_id", "t", "R", "x"].iter().map(|c| col(c)).collect();
    let missing: Vec<&str> = ["game_id", "t", "R", "x"]
        .iter()
        .zip(&cols)
        .filter(|(_, c)| c.is_none())
        .map(|(n, _)| *n)
        .collect();
    if !missing.is_empty() {
        return Err(InferenceError::Rows(vec![RowProblem {
            line: 1,
            message: format!("missing columns: {}", missing.join(", ")),
        }]));
    }
    let [gi, ti, ri, xi] = [cols[0].unwrap(), cols[1].unwrap(), cols[2].unwrap(), cols[3].unwrap()];

    let mut problems = Vec::new();
    let mut report = IngestReport::default();
    let mut order: Vec<String> = Vec::new();
    let mut games: HashMap<String, Vec<(usize, HesState)>> = HashMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                problems.push(RowProblem {
                    line,
                    message: e.to_string(),
                });
                continue;
            }
        };
        report.rows += 1;
        let num = |idx: usize, name: &str, problems: &mut Vec<RowProblem>| -> Option<f64> {
            match rec.get(idx).unwrap_or("").parse::<f64>() {
                Ok(v) if v.is_finite() => Some(v),
                _ => {
                    problems.push(RowProblem {
                        line,
                        message: format!("{name} is not a finite number"),
                    });
                    None
                }
            }
        };
        let (t, r, x) = (num(ti, "t", &mut problems), num(ri, "R", &mut problems), num(xi, "x", &mut problems));
        let (Some(t), Some(r), Some(x)) = (t, r, x) else { continue };
        if t < 0.0 || t.fract() != 0.0 {
            problems.push(RowProblem {
                line,
                message: format!("t = {t} is not a non-negative integer"),
            });
        }
        check_state(r, x, n, opts.lattice_check, line, &mut problems);
        let id = rec.get(gi).unwrap_or("").to_string();
        if !games.contains_key(&id) {
            order.push(id.clone());
        }
        games.entry(id).or_default().push((line, HesState::new(t, r, x)));
    }
    if report.rows == 0 && problems.is_empty() {
        return Err(InferenceError::NoRecords);
    }
    let mut runs = Vec::with_capacity(order.len());
    for id in order {
        let mut rows = games.remove(&id).expect("every id was inserted");
        rows.sort_by(|a, b| a.1.t.total_cmp(&b.1.t));
        for (k, (line, s)) in rows.iter().enumerate() {
            if s.t != k as f64 {
                problems.push(RowProblem {
                    line: *line,
                    message: format!("game {id}: expected t = {k}, got {}", s.t),
                });
                break;
            }
        }
        runs.push(SeriesRun {
            game_id: id,
            rows: rows.into_iter().map(|(_, s)| s).collect(),
        });
    }
    if !problems.is_empty() {
        return Err(InferenceError::Rows(problems));
    }
    report.games = runs.len();
    Ok((runs, report))
}

/// Mean per-player cumulative payoff at integer times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PayoffPoint {
    pub t: u32,
    pub observed: f64,
    pub predicted: f64,
}

/// Trapezoidal accumulation of `T R (x ê_C + (1 - x) ê_D) / N` over unit
/// steps; beyond `t_end` the integrand is zero.
fn accumulate(params: &ModelParams, rows: &[HesState], t_f: u32) -> Vec<f64> {
    let n = params.n_players as f64;
    let rate = |s: &HesState| params.payoff_rate(s.r, s.x) / n;
    let mut out = vec![0.0; t_f as usize + 1];
    for t in 1..=t_f as usize {
        let step = if t < rows.len() {
            0.5 * (rate(&rows[t - 1]) + rate(&rows[t]))
        } else {
            0.0
        };
        out[t] = out[t - 1] + step;
    }
    out
}

/// Observed and predicted mean individual cumulative payoff, both by the
/// same unit-step quadrature of the integer-time states.
pub fn payoff_comparison(series: &ExperimentSeries, fit: &FitResult) -> Result<Vec<PayoffPoint>, InferenceError> {
    let t_f = integer_horizon(&series.params)?;
    if series.realizations.is_empty() {
        return Err(InferenceError::Empty);
    }
    let m = series.realizations.len() as f64;
    let mut observed = vec![0.0; t_f as usize + 1];
    for run in &series.realizations {
        for (o, v) in observed.iter_mut().zip(accumulate(&series.params, &run.rows, t_f)) {
            *o += v / m;
        }
    }
    let model: Vec<HesState> = fit.predicted.trajectory.integer_samples().map(|(s, _)| s).collect();
    let predicted = accumulate(&series.params, &model, t_f);
    Ok((0..=t_f)
        .map(|t| PayoffPoint {
            t,
            observed: observed[t as usize],
            predicted: predicted[t as usize],
        })
        .collect())
}

/// Columns `t,observed,predicted`.
pub fn write_payoff_csv<W: Write>(points: &[PayoffPoint], out: W) -> std::io::Result<()> {
    let mut out = csv::Writer::from_writer(out);
    out.write_record(["t", "observed", "predicted"])?;
    for p in points {
        out.write_record([p.t.to_string(), fmt_num(p.observed), fmt_num(p.predicted)])?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short() -> ModelParams {
        ModelParams::reference().with_horizon(12.0).unwrap()
    }

    #[test]
    fn indicator_basics() {
        let a = vec![0.3; 41];
        let b = vec![0.4; 41];
        assert_eq!(error_indicator(&a, &a).unwrap(), 0.0);
        assert!((error_indicator(&a, &b).unwrap() - 4.1).abs() < 1e-12);
        assert_eq!(error_indicator(&a, &b).unwrap(), error_indicator(&b, &a).unwrap());
        assert!(matches!(error_indicator(&a, &b[1..]), Err(InferenceError::Length(41, 40))));
    }

    #[test]
    fn tau_out_of_range() {
        let p = short();
        assert!(matches!(
            two_phase_prediction(&p, GameType::Group, 0),
            Err(InferenceError::Tau { tau: 0, t_f: 12 })
        ));
        assert!(matches!(
            two_phase_prediction(&p, GameType::Group, 13),
            Err(InferenceError::Tau { .. })
        ));
    }

    #[test]
    fn continuous_at_tau_and_frozen_after() {
        let p = short();
        let pred = two_phase_prediction(&p, GameType::Group, 5).unwrap();
        let one = phase_one(&p, GameType::Group, 5).unwrap();
        let at = pred.trajectory.state_at(5.0).unwrap();
        assert_eq!(at.r, one.trajectory.last().r);
        assert_eq!(at.x, one.trajectory.last().x);
        assert_eq!(pred.x_frozen, at.x);
        for s in pred.trajectory.samples().iter().filter(|s| s.t >= 5.0) {
            assert_eq!(s.x, pred.x_frozen);
        }
        assert_eq!(pred.trajectory.last().t, 12.0);
        assert_eq!(pred.schedule.value_at(8.0), 0.0);
    }

    #[test]
    fn type_one_at_horizon_is_piecewise() {
        let p = short();
        let pred = two_phase_prediction(&p, GameType::Individual, 12).unwrap();
        let problem = OcProblem::new(p.clone(), 0.0, 12.0, OcMode::Coupled).unwrap();
        let pw = solve_piecewise(&problem).unwrap();
        assert_eq!(pred.trajectory, pw.trajectory);
    }

    #[test]
    fn game_type_serde() {
        assert_eq!(serde_json::to_string(&GameType::Group).unwrap(), "2");
        assert_eq!(serde_json::from_str::<GameType>("1").unwrap(), GameType::Individual);
        assert!(serde_json::from_str::<GameType>("3").is_err());
    }

    #[test]
    fn accumulate_is_flat_after_truncation() {
        let p = short();
        let rows = vec![HesState::new(0.0, 0.5, 0.5), HesState::new(1.0, 0.4, 0.5), HesState::new(2.0, 0.0, 0.5)];
        let acc = accumulate(&p, &rows, 12);
        assert!(acc[1] > 0.0);
        assert!(acc[2] > acc[1]);
        assert!(acc[3..].iter().all(|&v| v == acc[2]));
    }
}

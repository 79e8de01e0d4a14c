//! Stochastic replicator dynamics on a network coupled to the discretised
//! resource map.
//!
//! One unit of model time is `N` micro-steps. In each micro-step a random
//! player imitates a random neighbour with the replicator probability,
//! then the resource advances by one step of [`resource_map_step`].

use std::io::Write;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::meanfield::ControlSchedule;
use crate::model::{fmt_num, resource_map_step, HesState, ModelParams, PayoffBasis, Strategy, Trajectory};
use crate::socialnet::{generate, GraphError, GraphKind, SocialGraph};

/// Resource level below which a realisation counts as depleted.
pub const DEFAULT_DEPLETION: f64 = 1e-3;

#[derive(Debug, Error, PartialEq)]
pub enum AbmError {
    #[error("switch probability needs dUmax > 0, |w| <= 1 and |Uj - Ui| <= dUmax (got Ui={u_i}, Uj={u_j}, w={w}, dUmax={du_max})")]
    Probability { u_i: f64, u_j: f64, w: f64, du_max: f64 },
    #[error("graph has {graph} nodes but the game has {players} players")]
    SizeMismatch { graph: usize, players: usize },
    #[error("initial state out of range: R0={r0}, x0={x0}")]
    InitialState { r0: f64, x0: f64 },
    #[error("an ensemble needs at least one realization")]
    NoRealizations,
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// `1/2 + (w/2)(U_j - U_i)/dUmax`: probability that `i` adopts `j`'s strategy.
pub fn switch_probability(u_i: f64, u_j: f64, w: f64, du_max: f64) -> Result<f64, AbmError> {
    let err = || AbmError::Probability { u_i, u_j, w, du_max };
    if !(du_max > 0.0 && du_max.is_finite()) || !(-1.0..=1.0).contains(&w) {
        return Err(err());
    }
    let gap = u_j - u_i;
    if !(gap.abs() <= du_max * (1.0 + 1e-12)) {
        return Err(err());
    }
    Ok((0.5 + 0.5 * w * gap / du_max).clamp(0.0, 1.0))
}

/// Largest noise amplitude of the diffusion approximation, `sqrt(1/(4N))`.
pub fn diffusion_bound(n: usize) -> f64 {
    (1.0 / (4.0 * n as f64)).sqrt()
}

#[derive(Debug, Clone)]
pub struct AgentState {
    pub strategies: Vec<Strategy>,
    pub r: f64,
    /// Micro-steps taken so far.
    pub k: u64,
    n_coop: usize,
    rng: ChaCha8Rng,
}

impl AgentState {
    /// `round(x0 N)` cooperators placed uniformly at random.
    pub fn new(n: usize, r0: f64, x0: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_coop = ((x0 * n as f64).round() as usize).min(n);
        let mut strategies: Vec<Strategy> = (0..n)
            .map(|i| if i < n_coop { Strategy::C } else { Strategy::D })
            .collect();
        strategies.shuffle(&mut rng);
        Self {
            strategies,
            r: r0,
            k: 0,
            n_coop,
            rng,
        }
    }

    /// Starts from an explicit strategy assignment.
    pub fn with_strategies(strategies: Vec<Strategy>, r: f64, seed: u64) -> Self {
        let n_coop = strategies.iter().filter(|s| s.is_cooperator()).count();
        Self {
            strategies,
            r,
            k: 0,
            n_coop,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn n(&self) -> usize {
        self.strategies.len()
    }

    pub fn cooperators(&self) -> usize {
        self.n_coop
    }

    pub fn x(&self) -> f64 {
        self.n_coop as f64 / self.n() as f64
    }

    pub fn set_strategy(&mut self, i: usize, s: Strategy) {
        let old = std::mem::replace(&mut self.strategies[i], s);
        match (old, s) {
            (Strategy::D, Strategy::C) => self.n_coop += 1,
            (Strategy::C, Strategy::D) => self.n_coop -= 1,
            _ => {}
        }
    }
}

/// What happened in one micro-step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MicroOutcome {
    pub focal: usize,
    pub neighbor: usize,
    pub previous: Strategy,
    pub strategy: Strategy,
    pub probability: f64,
    /// Resource after the step.
    pub r: f64,
    pub cooperators: usize,
}

/// One imitation attempt followed by one resource update. The adoption
/// coin is drawn even when `i` and `j` already agree, so the random
/// stream does not depend on the strategy configuration.
pub fn micro_step(state: &mut AgentState, graph: &SocialGraph, params: &ModelParams, w: f64) -> MicroOutcome {
    let n = state.n();
    let focal = state.rng.random_range(0..n);
    let neighbors = graph.neighbors(focal).expect("focal index below n");
    let neighbor = *neighbors.choose(&mut state.rng).expect("connected graphs have no isolated nodes");
    let previous = state.strategies[focal];
    let theirs = state.strategies[neighbor];
    let u_i = state.r * params.extraction_rate(previous);
    let u_j = state.r * params.extraction_rate(theirs);
    let probability = switch_probability(u_i, u_j, w, params.max_payoff_gap())
        .expect("payoff gap never exceeds e_D - e_C for R in [0, 1]");
    let coin: f64 = state.rng.random();
    if coin < probability && previous != theirs {
        state.strategies[focal] = theirs;
        if theirs.is_cooperator() {
            state.n_coop += 1;
        } else {
            state.n_coop -= 1;
        }
    }
    state.r = resource_map_step(params, state.r, state.n_coop);
    state.k += 1;
    MicroOutcome {
        focal,
        neighbor,
        previous,
        strategy: state.strategies[focal],
        probability,
        r: state.r,
        cooperators: state.n_coop,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RealizationOptions {
    /// Stop once `R` falls below this; 0 disables the check.
    pub depletion_eps: f64,
    /// Keep every [`MicroOutcome`].
    pub trace: bool,
}

impl Default for RealizationOptions {
    fn default() -> Self {
        Self {
            depletion_eps: DEFAULT_DEPLETION,
            trace: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Realization {
    /// Integer-time samples with per-player mean cumulative payoff. After
    /// depletion the last state is repeated so every realisation covers
    /// the full horizon.
    pub trajectory: Trajectory,
    pub depleted_at: Option<f64>,
    pub micro_steps: u64,
    pub trace: Vec<MicroOutcome>,
    pub initial_strategies: Vec<Strategy>,
}

/// Runs `N` micro-steps per unit time over the schedule's horizon. The
/// selection pressure of micro-step `k` is `w(t_0 + k/N)`.
pub fn run_realization(
    params: &ModelParams,
    graph: &SocialGraph,
    schedule: &ControlSchedule,
    r0: f64,
    x0: f64,
    seed: u64,
    opts: RealizationOptions,
) -> Result<Realization, AbmError> {
    let n = params.n_players;
    if graph.n() != n {
        return Err(AbmError::SizeMismatch {
            graph: graph.n(),
            players: n,
        });
    }
    if !((0.0..=1.0).contains(&r0) && (0.0..=1.0).contains(&x0)) {
        return Err(AbmError::InitialState { r0, x0 });
    }
    let nf = n as f64;
    let t0 = schedule.start();
    let units = (schedule.end() - t0).round().max(0.0) as u64;
    let total = units * n as u64;

    let mut state = AgentState::new(n, r0, x0, seed);
    let initial_strategies = state.strategies.clone();
    let mut samples = vec![HesState::new(t0, state.r, state.x())];
    let mut payoffs = vec![0.0];
    let mut payoff = 0.0;
    let mut trace = Vec::new();
    let mut depleted_at = None;
    let (e_c, e_d) = (params.e_c, params.e_d);

    let mut k = 0u64;
    while k < total {
        let w = schedule.value_at(t0 + k as f64 / nf);
        let outcome = micro_step(&mut state, graph, params, w);
        k += 1;
        let n_c = state.n_coop as f64;
        // every seat accrues R e_X / N; this is the mean over seats
        payoff += state.r * (n_c * e_c + (nf - n_c) * e_d) / nf / nf;
        if opts.trace {
            trace.push(outcome);
        }
        if k % n as u64 == 0 {
            samples.push(HesState::new(t0 + (k / n as u64) as f64, state.r, state.x()));
            payoffs.push(payoff);
        }
        if opts.depletion_eps > 0.0 && state.r < opts.depletion_eps {
            depleted_at = Some(t0 + k as f64 / nf);
            break;
        }
    }
    let done_units = samples.len() as u64 - 1;
    for u in done_units + 1..=units {
        samples.push(HesState::new(t0 + u as f64, state.r, state.x()));
        payoffs.push(payoff);
    }
    let trajectory = Trajectory::new(samples, payoffs, PayoffBasis::PerPlayer)
        .expect("integer sampling is strictly increasing and payoff accrues non-negatively");
    Ok(Realization {
        trajectory,
        depleted_at,
        micro_steps: k,
        trace,
        initial_strategies,
    })
}

/// Which network each realisation runs on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphSpec {
    pub kind: GraphKind,
    pub c: f64,
    /// Draw a fresh random graph for every realisation. Ignored for
    /// complete and chain, which have one instance each.
    pub regenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub times: Vec<f64>,
    pub mean_r: Vec<f64>,
    pub mean_x: Vec<f64>,
    pub se_r: Vec<f64>,
    pub se_x: Vec<f64>,
    pub mean_payoff: Vec<f64>,
    pub n_realizations: usize,
    /// False for a single realisation, whose standard errors are reported
    /// as 0.
    pub se_defined: bool,
    pub depleted: usize,
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Realisation `i` uses agent seed `base_seed + i`; a regenerated graph
/// uses the same number as its graph seed.
#[allow(clippy::too_many_arguments)]
pub fn run_ensemble(
    params: &ModelParams,
    graph_spec: GraphSpec,
    schedule: &ControlSchedule,
    r0: f64,
    x0: f64,
    n_realizations: usize,
    base_seed: u64,
    opts: RealizationOptions,
) -> Result<EnsembleStats, AbmError> {
    if n_realizations == 0 {
        return Err(AbmError::NoRealizations);
    }
    let n = params.n_players;
    let per_run_graph = graph_spec.regenerate && graph_spec.kind.is_random();
    let shared = if per_run_graph {
        None
    } else {
        Some(generate(graph_spec.kind, n, graph_spec.c, base_seed)?)
    };
    let runs: Vec<Realization> = (0..n_realizations)
        .into_par_iter()
        .map(|i| {
            let seed = base_seed.wrapping_add(i as u64);
            let owned;
            let graph = match &shared {
                Some(g) => g,
                None => {
                    owned = generate(graph_spec.kind, n, graph_spec.c, seed)?;
                    &owned
                }
            };
            run_realization(params, graph, schedule, r0, x0, seed, opts)
        })
        .collect::<Result<_, _>>()?;

    let len = runs[0].trajectory.len();
    let times: Vec<f64> = runs[0].trajectory.samples().iter().map(|s| s.t).collect();
    let mut stats = EnsembleStats {
        times,
        mean_r: Vec::with_capacity(len),
        mean_x: Vec::with_capacity(len),
        se_r: Vec::with_capacity(len),
        se_x: Vec::with_capacity(len),
        mean_payoff: Vec::with_capacity(len),
        n_realizations,
        se_defined: n_realizations >= 2,
        depleted: runs.iter().filter(|r| r.depleted_at.is_some()).count(),
    };
    let mut column = vec![0.0; n_realizations];
    for t in 0..len {
        for (slot, run) in column.iter_mut().zip(&runs) {
            *slot = run.trajectory.samples()[t].r;
        }
        let (m, se) = mean_se(&column);
        stats.mean_r.push(m);
        stats.se_r.push(se);
        for (slot, run) in column.iter_mut().zip(&runs) {
            *slot = run.trajectory.samples()[t].x;
        }
        let (m, se) = mean_se(&column);
        stats.mean_x.push(m);
        stats.se_x.push(se);
        for (slot, run) in column.iter_mut().zip(&runs) {
            *slot = run.trajectory.cumulative_payoff()[t];
        }
        stats.mean_payoff.push(mean_se(&column).0);
    }
    Ok(stats)
}

impl EnsembleStats {
    /// Columns `t, mean_R, se_R, mean_x, se_x`.
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut out = csv::Writer::from_writer(out);
        out.write_record(["t", "mean_R", "se_R", "mean_x", "se_x"])?;
        for i in 0..self.times.len() {
            out.write_record([
                fmt_num(self.times[i]),
                fmt_num(self.mean_r[i]),
                fmt_num(self.se_r[i]),
                fmt_num(self.mean_x[i]),
                fmt_num(self.se_x[i]),
            ])?;
        }
        out.flush()
    }
}

//! Direct transcription of the control problem: piecewise-constant `w` on
//! a fixed grid, objective by RK4, projected gradient ascent with
//! finite-difference gradients.

use rayon::prelude::*;

use crate::meanfield::{advance_span, sample_times, Augmented, ControlSchedule, IntegrateError, IntegrateOptions};
use crate::model::ModelParams;

/// Objective evaluator that can restart from any interval boundary.
///
/// Spans are the same as those of [`crate::meanfield::integrate_with`] on
/// this grid, so values agree with a full integration bit for bit.
pub(crate) struct Transcription<'a> {
    params: &'a ModelParams,
    opts: IntegrateOptions,
    start: Augmented,
    /// Integration spans grouped by control interval.
    spans: Vec<Vec<(f64, f64)>>,
}

impl<'a> Transcription<'a> {
    pub fn new(params: &'a ModelParams, grid: &[f64], start: Augmented, opts: IntegrateOptions) -> Self {
        let m = grid.len() - 1;
        let shape = ControlSchedule::new(grid.to_vec(), vec![0.0; m]).expect("grid validated by the problem");
        let times = sample_times(&shape);
        let inner = &grid[1..m];
        let mut spans = vec![Vec::new(); m];
        for pair in times.windows(2) {
            let mid = 0.5 * (pair[0] + pair[1]);
            let k = inner.partition_point(|&b| b <= mid);
            spans[k].push((pair[0], pair[1]));
        }
        Self {
            params,
            opts,
            start,
            spans,
        }
    }

    pub fn intervals(&self) -> usize {
        self.spans.len()
    }

    fn advance(&self, state: &mut Augmented, k: usize, w: f64) -> Result<(), IntegrateError> {
        for &(a, b) in &self.spans[k] {
            advance_span(self.params, state, w, a, b, self.opts)?;
        }
        Ok(())
    }

    /// States at the start of every interval plus the final state.
    pub fn checkpoints(&self, values: &[f64]) -> Result<(Vec<Augmented>, Augmented), IntegrateError> {
        let mut state = self.start;
        let mut cps = Vec::with_capacity(values.len());
        for (k, &w) in values.iter().enumerate() {
            cps.push(state);
            self.advance(&mut state, k, w)?;
        }
        Ok((cps, state))
    }

    pub fn objective(&self, values: &[f64]) -> Result<f64, IntegrateError> {
        let mut state = self.start;
        for (k, &w) in values.iter().enumerate() {
            self.advance(&mut state, k, w)?;
        }
        Ok(state.payoff)
    }

    /// Objective with interval `k` set to `w_k`, resuming from its checkpoint.
    fn objective_from(&self, k: usize, checkpoint: Augmented, values: &[f64], w_k: f64) -> Result<f64, IntegrateError> {
        let mut state = checkpoint;
        self.advance(&mut state, k, w_k)?;
        for (j, &w) in values.iter().enumerate().skip(k + 1) {
            self.advance(&mut state, j, w)?;
        }
        Ok(state.payoff)
    }

    /// Central differences of step `h`, one-sided where a bound is closer
    /// than `h`.
    pub fn gradient(
        &self,
        values: &[f64],
        checkpoints: &[Augmented],
        base: f64,
        h: f64,
        lo: f64,
        hi: f64,
    ) -> Result<Vec<f64>, IntegrateError> {
        (0..values.len())
            .into_par_iter()
            .map(|k| {
                let v = values[k];
                let up = (hi - v).min(h).max(0.0);
                let down = (v - lo).min(h).max(0.0);
                if up == 0.0 && down == 0.0 {
                    return Ok(0.0);
                }
                let f_up = if up > 0.0 {
                    self.objective_from(k, checkpoints[k], values, v + up)?
                } else {
                    base
                };
                let f_down = if down > 0.0 {
                    self.objective_from(k, checkpoints[k], values, v - down)?
                } else {
                    base
                };
                Ok((f_up - f_down) / (up + down))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct AscentSettings {
    pub lo: f64,
    pub hi: f64,
    pub fd_step: f64,
    pub max_iter: usize,
    /// Stop when the projected gradient step is shorter than this.
    pub pg_tol: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Ascent {
    pub values: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
    pub evaluations: usize,
}

fn project(v: f64, lo: f64, hi: f64) -> f64 {
    v.clamp(lo, hi)
}

const ARMIJO_C: f64 = 1e-4;
const MAX_HALVINGS: usize = 50;

/// Projected gradient ascent with Armijo backtracking along the projected
/// arc. The first trial step moves the steepest component across the full
/// control range.
pub(crate) fn ascend(tr: &Transcription<'_>, start: Vec<f64>, s: AscentSettings) -> Result<Ascent, IntegrateError> {
    let m = tr.intervals();
    let mut v: Vec<f64> = start.into_iter().map(|w| project(w, s.lo, s.hi)).collect();
    let (mut cps, end) = tr.checkpoints(&v)?;
    let mut f = end.payoff;
    let mut evaluations = 1;
    let mut grad_norm = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    let mut candidate = vec![0.0; m];

    while iterations < s.max_iter {
        let g = tr.gradient(&v, &cps, f, s.fd_step, s.lo, s.hi)?;
        evaluations += 2 * m;
        grad_norm = v
            .iter()
            .zip(&g)
            .map(|(&vk, &gk)| (project(vk + gk, s.lo, s.hi) - vk).powi(2))
            .sum::<f64>()
            .sqrt();
        if grad_norm < s.pg_tol {
            converged = true;
            break;
        }
        // components pressed against their bound do not limit the step
        let g_max = v
            .iter()
            .zip(&g)
            .filter(|&(&vk, &gk)| !((vk <= s.lo && gk < 0.0) || (vk >= s.hi && gk > 0.0)))
            .fold(0.0f64, |a, (_, &gk)| a.max(gk.abs()));
        let mut alpha = (s.hi - s.lo) / g_max;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            for k in 0..m {
                candidate[k] = project(v[k] + alpha * g[k], s.lo, s.hi);
            }
            let slope: f64 = candidate.iter().zip(&v).zip(&g).map(|((c, vk), gk)| (c - vk) * gk).sum();
            let f_new = tr.objective(&candidate)?;
            evaluations += 1;
            if f_new > f && f_new >= f + ARMIJO_C * slope {
                accepted = Some(f_new);
                break;
            }
            alpha *= 0.5;
        }
        iterations += 1;
        let Some(f_new) = accepted else {
            // no ascent step at finite-difference resolution
            converged = grad_norm < 1e3 * s.pg_tol;
            break;
        };
        let gain = f_new - f;
        v.copy_from_slice(&candidate);
        let (new_cps, end) = tr.checkpoints(&v)?;
        cps = new_cps;
        f = end.payoff;
        if gain <= 1e-14 * f.abs().max(1.0) {
            converged = true;
            break;
        }
    }
    // projection leaves values an ulp inside a bound; snap them onto it
    for w in &mut v {
        if (*w - s.lo).abs() <= 1e-12 {
            *w = s.lo;
        } else if (*w - s.hi).abs() <= 1e-12 {
            *w = s.hi;
        }
    }
    let f = tr.objective(&v)?;
    Ok(Ascent {
        values: v,
        objective: f,
        iterations,
        grad_norm,
        converged,
        evaluations,
    })
}

//! Box-constrained limited-memory BFGS with random restarts.
//!
//! The quasi-Newton direction is computed on the free variables only; the
//! step is projected back onto the box and accepted by an Armijo backtracking
//! search along the projection path. Curvature pairs are dropped whenever the
//! active set changes.

use std::collections::VecDeque;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Objective to be maximized. Failures (e.g. a covariance that cannot be
/// factored) are reported as `None` and treated as infeasible points.
pub trait Objective: Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> Option<f64>;
    fn value_and_gradient(&self, x: &[f64]) -> Option<(f64, Vec<f64>)>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub restarts: usize,
    pub max_iters: usize,
    /// Number of stored curvature pairs.
    pub memory: usize,
    /// Tolerance on the ∞-norm of the projected gradient.
    pub grad_tol: f64,
    /// Relative objective-decrease tolerance between accepted iterates.
    pub f_tol: f64,
    /// Log-space box; `None` lets the caller supply data-driven defaults.
    pub bounds: Option<Vec<(f64, f64)>>,
    /// Replace the analytic gradient with forward differences.
    pub fd_mode: bool,
    pub fd_step: f64,
    /// Explicit starting points, used before any random ones.
    pub initial: Vec<Vec<f64>>,
    pub parallel_restarts: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            restarts: 20,
            max_iters: 200,
            memory: 10,
            grad_tol: 1e-6,
            f_tol: 2.2e-9,
            bounds: None,
            fd_mode: false,
            fd_step: 1e-6,
            initial: Vec::new(),
            parallel_restarts: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradientTolerance,
    ObjectiveTolerance,
    MaxIterations,
    LineSearchFailed,
    /// Objective not finite at the starting point.
    InitialPointFailed,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RestartReport {
    pub index: usize,
    pub initial: Vec<f64>,
    pub params: Vec<f64>,
    /// `-inf` when the restart failed.
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub seconds: f64,
    pub termination: Termination,
    /// Best-so-far objective after each accepted iterate.
    #[serde(skip)]
    pub trace: Vec<f64>,
}

impl RestartReport {
    pub fn succeeded(&self) -> bool {
        self.termination != Termination::InitialPointFailed
    }
}

#[derive(Clone, Debug)]
pub struct Maximization {
    pub best_params: Vec<f64>,
    pub best_value: f64,
    pub best_index: usize,
    pub restarts: Vec<RestartReport>,
}

impl Maximization {
    pub fn evaluations(&self) -> usize {
        self.restarts.iter().map(|r| r.evaluations).sum()
    }
}

/// Maximizes `objective` over `bounds` from `config.restarts` starting points.
pub fn maximize<O: Objective + ?Sized, R: Rng + ?Sized>(
    objective: &O,
    bounds: &[(f64, f64)],
    config: &OptimizerConfig,
    rng: &mut R,
) -> Result<Maximization> {
    let bounds = config.bounds.as_deref().unwrap_or(bounds);
    let d = objective.dim();
    if bounds.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: bounds.len(),
        });
    }
    if let Some((lo, hi)) = bounds.iter().find(|(lo, hi)| !(lo < hi)) {
        return Err(Error::InvalidParameter(format!("empty bound interval [{lo}, {hi}]")));
    }
    let count = config.restarts.max(config.initial.len()).max(1);
    // one seed per restart so restarts can run in any order
    let seeds: Vec<u64> = (0..count).map(|_| rng.next_u64()).collect();
    let starts: Vec<Vec<f64>> = seeds
        .iter()
        .enumerate()
        .map(|(i, &seed)| match config.initial.get(i) {
            Some(x0) => project(x0, bounds),
            None => {
                let mut r = ChaCha8Rng::seed_from_u64(seed);
                bounds.iter().map(|&(lo, hi)| lo + (hi - lo) * r.random::<f64>()).collect()
            }
        })
        .collect();

    let run = |(i, x0): (usize, &Vec<f64>)| run_restart(objective, bounds, config, i, x0.clone());
    let restarts: Vec<RestartReport> = if config.parallel_restarts {
        starts.par_iter().enumerate().map(run).collect()
    } else {
        starts.iter().enumerate().map(run).collect()
    };

    let mut best: Option<usize> = None;
    for (i, r) in restarts.iter().enumerate() {
        if r.succeeded() && best.is_none_or(|b| r.value > restarts[b].value) {
            best = Some(i);
        }
    }
    let best_index = best.ok_or_else(|| {
        Error::AllRestartsFailed(format!("{count} restarts, objective not finite at any initial point"))
    })?;
    Ok(Maximization {
        best_params: restarts[best_index].params.clone(),
        best_value: restarts[best_index].value,
        best_index,
        restarts,
    })
}

fn project(x: &[f64], bounds: &[(f64, f64)]) -> Vec<f64> {
    x.iter().zip(bounds).map(|(&v, &(lo, hi))| v.clamp(lo, hi)).collect()
}

/// Evaluates the negated objective (we minimize internally).
struct Evaluator<'a, O: Objective + ?Sized> {
    objective: &'a O,
    bounds: &'a [(f64, f64)],
    fd_mode: bool,
    fd_step: f64,
    evaluations: usize,
}

impl<O: Objective + ?Sized> Evaluator<'_, O> {
    fn value(&mut self, x: &[f64]) -> Option<f64> {
        self.evaluations += 1;
        self.objective.value(x).filter(|v| v.is_finite()).map(|v| -v)
    }

    fn value_and_gradient(&mut self, x: &[f64]) -> Option<(f64, Vec<f64>)> {
        if !self.fd_mode {
            self.evaluations += 1;
            let (v, g) = self.objective.value_and_gradient(x)?;
            if !v.is_finite() || g.iter().any(|gi| !gi.is_finite()) {
                return None;
            }
            return Some((-v, g.into_iter().map(|gi| -gi).collect()));
        }
        let f0 = self.value(x)?;
        let mut grad = Vec::with_capacity(x.len());
        let mut probe = x.to_vec();
        for i in 0..x.len() {
            let h = if x[i] + self.fd_step > self.bounds[i].1 { -self.fd_step } else { self.fd_step };
            probe[i] = x[i] + h;
            let fi = self.value(&probe)?;
            probe[i] = x[i];
            grad.push((fi - f0) / h);
        }
        Some((f0, grad))
    }
}

fn run_restart<O: Objective + ?Sized>(
    objective: &O,
    bounds: &[(f64, f64)],
    config: &OptimizerConfig,
    index: usize,
    x0: Vec<f64>,
) -> RestartReport {
    let start = Instant::now();
    let mut eval = Evaluator {
        objective,
        bounds,
        fd_mode: config.fd_mode,
        fd_step: config.fd_step,
        evaluations: 0,
    };
    let d = x0.len();
    let Some((mut f, mut g)) = eval.value_and_gradient(&x0) else {
        return RestartReport {
            index,
            initial: x0.clone(),
            params: x0,
            value: f64::NEG_INFINITY,
            iterations: 0,
            evaluations: eval.evaluations,
            seconds: start.elapsed().as_secs_f64(),
            termination: Termination::InitialPointFailed,
            trace: Vec::new(),
        };
    };
    let mut x = x0.clone();
    let mut trace = vec![-f];
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(config.memory);
    let mut active_prev: Vec<bool> = vec![false; d];
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;

    while iterations < config.max_iters {
        let active: Vec<bool> = (0..d)
            .map(|i| {
                let (lo, hi) = bounds[i];
                (x[i] <= lo && g[i] > 0.0) || (x[i] >= hi && g[i] < 0.0)
            })
            .collect();
        let pg_norm = (0..d).filter(|&i| !active[i]).map(|i| g[i].abs()).fold(0.0, f64::max);
        if pg_norm < config.grad_tol {
            termination = Termination::GradientTolerance;
            break;
        }
        if active != active_prev {
            pairs.clear();
            active_prev = active.clone();
        }

        let mut accepted = None;
        // second attempt uses steepest descent with a fresh memory
        for attempt in 0..2 {
            let mut dir = two_loop(&g, &active, &pairs);
            let mut slope: f64 = dir.iter().zip(&g).map(|(a, b)| a * b).sum();
            if attempt == 1 || !(slope < 0.0) {
                pairs.clear();
                dir = (0..d).map(|i| if active[i] { 0.0 } else { -g[i] }).collect();
                slope = -dir.iter().map(|v| v * v).sum::<f64>();
            }
            // unit step unless the direction is raw steepest descent without scaling
            let mut step = if pairs.is_empty() { (1.0 / pg_norm).min(1.0) } else { 1.0 };
            for _ in 0..40 {
                let trial: Vec<f64> = x
                    .iter()
                    .zip(&dir)
                    .zip(bounds)
                    .map(|((&xi, &di), &(lo, hi))| (xi + step * di).clamp(lo, hi))
                    .collect();
                let moved: f64 = trial.iter().zip(&x).zip(&g).map(|((t, xi), gi)| (t - xi) * gi).sum();
                if trial == x {
                    break;
                }
                if let Some((ft, gt)) = eval.value_and_gradient(&trial) {
                    if ft <= f + 1e-4 * moved.min(0.0) && moved < 0.0 {
                        accepted = Some((trial, ft, gt));
                        break;
                    }
                }
                step *= 0.5;
            }
            if accepted.is_some() || pairs.is_empty() && attempt == 1 {
                break;
            }
            let _ = slope;
        }

        let Some((x_new, f_new, g_new)) = accepted else {
            termination = Termination::LineSearchFailed;
            break;
        };
        iterations += 1;
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let yy: f64 = y.iter().map(|v| v * v).sum();
        if sy > 1e-10 * yy.sqrt() * s.iter().map(|v| v * v).sum::<f64>().sqrt() {
            if pairs.len() == config.memory {
                pairs.pop_front();
            }
            if config.memory > 0 {
                pairs.push_back((s, y, 1.0 / sy));
            }
        }
        let decrease = f - f_new;
        x = x_new;
        f = f_new;
        g = g_new;
        trace.push(-f);
        if decrease <= config.f_tol * f.abs().max(1.0) {
            termination = Termination::ObjectiveTolerance;
            break;
        }
    }

    RestartReport {
        index,
        initial: x0,
        params: x,
        value: -f,
        iterations,
        evaluations: eval.evaluations,
        seconds: start.elapsed().as_secs_f64(),
        termination,
        trace,
    }
}

/// L-BFGS two-loop recursion restricted to the free variables.
fn two_loop(g: &[f64], active: &[bool], pairs: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let free = |v: &[f64]| -> Vec<f64> { v.iter().zip(active).map(|(&x, &a)| if a { 0.0 } else { x }).collect() };
    let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).zip(active).filter(|(_, &a)| !a).map(|((x, y), _)| x * y).sum() };
    let mut q = free(g);
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y, rho) in pairs.iter().rev() {
        let a = rho * dot(s, &q);
        for i in 0..q.len() {
            if !active[i] {
                q[i] -= a * y[i];
            }
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = pairs.back() {
        let yy = dot(y, y);
        let sy = dot(s, y);
        if yy > 0.0 && sy > 0.0 {
            let scale = sy / yy;
            q.iter_mut().for_each(|v| *v *= scale);
        }
    }
    for ((s, y, rho), a) in pairs.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        for i in 0..q.len() {
            if !active[i] {
                q[i] += (a - b) * s[i];
            }
        }
    }
    q.iter().map(|v| -v).collect()
}

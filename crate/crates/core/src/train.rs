//! Gradients, L-BFGS, and the encoding and recovery training procedures.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ansatz::{generate_rea, Ansatz, Encoder, GateKind, Layout, Program};
use crate::channels::CompositeNoise;
use crate::designs::{haar_sample, StateSet};
use crate::error::{Error, Result};
use crate::loss::{
    decoding_program, dloss, dloss_average, dloss_with_gradient, floss, floss_average,
    floss_with_gradient, LossReport, Recovery,
};

/// How objective gradients are computed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMethod {
    /// Reverse-mode differentiation through the circuit and channels.
    #[default]
    Adjoint,
    /// Central differences with step `grad_step`.
    FiniteDifference,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    pub epochs: usize,
    pub iters_per_epoch: usize,
    pub history_size: usize,
    pub grad_step: f64,
    pub convergence_tol: f64,
    pub max_line_search: usize,
    pub armijo_c1: f64,
    pub backtrack: f64,
    pub gradient: GradientMethod,
    /// Initial parameters are drawn uniformly from `(-init_range, init_range)`.
    pub init_range: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            iters_per_epoch: 10,
            history_size: 100,
            grad_step: 1e-5,
            convergence_tol: 1e-8,
            max_line_search: 20,
            armijo_c1: 1e-4,
            backtrack: 0.5,
            gradient: GradientMethod::Adjoint,
            init_range: std::f64::consts::PI,
        }
    }
}

impl OptimConfig {
    /// Defaults for recovery training: 50 epochs, starting near the identity.
    pub fn recovery() -> Self {
        Self {
            epochs: 50,
            init_range: 0.1,
            ..Self::default()
        }
    }

    pub fn max_iterations(&self) -> usize {
        self.epochs * self.iters_per_epoch
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("epochs", self.epochs),
            ("iters_per_epoch", self.iters_per_epoch),
            ("history_size", self.history_size),
            ("max_line_search", self.max_line_search),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidParameter(format!("{name} must be positive")));
        }
        let reals = [
            ("grad_step", self.grad_step),
            ("convergence_tol", self.convergence_tol),
            ("armijo_c1", self.armijo_c1),
            ("init_range", self.init_range),
        ];
        if let Some((name, v)) = reals.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "{name} = {v} must be positive"
            )));
        }
        if !(self.armijo_c1 < 1.0 && self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::InvalidParameter(
                "armijo_c1 and backtrack must lie in (0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// A differentiable scalar objective.
pub trait Objective: Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> Result<f64>;
    fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)>;
}

/// Central-difference gradient `(f(x + h e_i) - f(x - h e_i)) / 2h`.
pub fn fd_gradient<F>(f: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "step {h} must be positive"
        )));
    }
    (0..x.len())
        .into_par_iter()
        .map(|i| {
            let mut p = x.to_vec();
            p[i] = x[i] + h;
            let up = f(&p)?;
            p[i] = x[i] - h;
            let down = f(&p)?;
            let g = (up - down) / (2.0 * h);
            if g.is_finite() {
                Ok(g)
            } else {
                Err(Error::Numerical(format!(
                    "non-finite loss near coordinate {i}"
                )))
            }
        })
        .collect()
}

/// Result of one minimization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimOutcome {
    pub params: Vec<f64>,
    pub value: f64,
    /// The initial value followed by the value after each accepted step.
    pub trajectory: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub line_search_failed: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

struct History {
    pairs: std::collections::VecDeque<(Vec<f64>, Vec<f64>, f64)>,
    capacity: usize,
}

impl History {
    /// Stores a curvature pair; a pair without positive curvature means the
    /// model is stale, so the history restarts.
    fn push(&mut self, s: Vec<f64>, y: Vec<f64>) {
        let sy = dot(&s, &y);
        if sy <= 1e-12 * norm(&s) * norm(&y) {
            self.pairs.clear();
            return;
        }
        if self.pairs.len() == self.capacity {
            self.pairs.pop_front();
        }
        self.pairs.push_back((s, y, 1.0 / sy));
    }

    /// Two-loop recursion: `-H g`.
    fn direction(&self, g: &[f64]) -> Vec<f64> {
        let mut q = g.to_vec();
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for (s, y, rho) in self.pairs.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        if let Some((s, y, _)) = self.pairs.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|qi| *qi *= gamma);
        }
        for ((s, y, rho), a) in self.pairs.iter().zip(alphas.into_iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        q.iter_mut().for_each(|qi| *qi = -*qi);
        q
    }
}

/// L-BFGS with a backtracking Armijo line search. Each backtrack moves to the
/// minimizer of the quadratic interpolant, kept within `[0.1, backtrack]`
/// times the previous step.
///
/// Stops after `epochs * iters_per_epoch` accepted steps or once the gradient
/// norm drops below `convergence_tol`. A failed quasi-Newton line search is
/// retried once from steepest descent with the history cleared; a failed
/// steepest-descent search ends the run with `line_search_failed` set and the
/// best point so far.
pub fn lbfgs_minimize(obj: &dyn Objective, x0: &[f64], cfg: &OptimConfig) -> Result<OptimOutcome> {
    cfg.validate()?;
    if x0.len() != obj.dim() {
        return Err(Error::DimensionMismatch {
            expected: obj.dim(),
            found: x0.len(),
        });
    }
    let mut x = x0.to_vec();
    let (mut fx, mut g) = obj.value_and_gradient(&x)?;
    if !fx.is_finite() {
        return Err(Error::Numerical("non-finite initial loss".into()));
    }
    let mut out = OptimOutcome {
        params: Vec::new(),
        value: fx,
        trajectory: vec![fx],
        iterations: 0,
        evaluations: 1,
        converged: false,
        line_search_failed: false,
    };
    let mut history = History {
        pairs: Default::default(),
        capacity: cfg.history_size,
    };
    let mut retried = false;
    while out.iterations < cfg.max_iterations() {
        if norm(&g) < cfg.convergence_tol {
            out.converged = true;
            break;
        }
        let mut d = history.direction(&g);
        let mut slope = dot(&g, &d);
        let steepest = history.pairs.is_empty() || slope >= 0.0;
        if steepest {
            history.pairs.clear();
            d = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }
        let mut t = if history.pairs.is_empty() {
            (1.0 / norm(&g)).min(1.0)
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..cfg.max_line_search {
            let trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + t * di).collect();
            let ft = obj.value(&trial)?;
            out.evaluations += 1;
            if ft.is_finite() && ft <= fx + cfg.armijo_c1 * t * slope {
                accepted = Some(refine_step(
                    obj, &x, &d, fx, slope, t, ft, trial, cfg, &mut out,
                )?);
                break;
            }
            // minimizer of the quadratic through f(0), f'(0) and f(t)
            let curvature = ft - fx - slope * t;
            let t_quad = if ft.is_finite() && curvature > 0.0 {
                -slope * t * t / (2.0 * curvature)
            } else {
                cfg.backtrack * t
            };
            t = t_quad.clamp(0.1 * t, cfg.backtrack * t);
        }
        let Some(x_new) = accepted else {
            if retried || steepest {
                out.line_search_failed = true;
                break;
            }
            retried = true;
            history.pairs.clear();
            continue;
        };
        let (f_new, g_new) = obj.value_and_gradient(&x_new)?;
        out.evaluations += 1;
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        history.push(s, y);
        x = x_new;
        fx = f_new;
        g = g_new;
        retried = false;
        out.iterations += 1;
        out.trajectory.push(fx);
    }
    out.params = x;
    out.value = fx;
    Ok(out)
}

/// After an accepted step `t`, tries the minimizer of the quadratic through
/// `f(0)`, `f'(0)` and `f(t)` and keeps it if it also satisfies the Armijo
/// condition and lowers the value. Exact on quadratics.
#[allow(clippy::too_many_arguments)]
fn refine_step(
    obj: &dyn Objective,
    x: &[f64],
    d: &[f64],
    fx: f64,
    slope: f64,
    t: f64,
    ft: f64,
    trial: Vec<f64>,
    cfg: &OptimConfig,
    out: &mut OptimOutcome,
) -> Result<Vec<f64>> {
    let curvature = ft - fx - slope * t;
    if curvature <= 0.0 {
        return Ok(trial);
    }
    let t_quad = (-slope * t * t / (2.0 * curvature)).min(10.0 * t);
    if (t_quad - t).abs() <= 0.05 * t {
        return Ok(trial);
    }
    let candidate: Vec<f64> = x.iter().zip(d).map(|(xi, di)| xi + t_quad * di).collect();
    let fq = obj.value(&candidate)?;
    out.evaluations += 1;
    if fq.is_finite() && fq < ft && fq <= fx + cfg.armijo_c1 * t_quad * slope {
        Ok(candidate)
    } else {
        Ok(trial)
    }
}

/// Wraps a value function with central-difference gradients.
pub struct FiniteDifference<F> {
    pub f: F,
    pub dim: usize,
    pub step: f64,
}

impl<F: Fn(&[f64]) -> Result<f64> + Sync> Objective for FiniteDifference<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        (self.f)(x)
    }

    fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        Ok(((self.f)(x)?, fd_gradient(&self.f, x, self.step)?))
    }
}

/// The average-case distinguishability loss of an encoder.
pub struct EncodingObjective<'a> {
    pub set: &'a StateSet,
    pub ansatz: &'a Ansatz,
    pub noise: &'a CompositeNoise,
}

impl Objective for EncodingObjective<'_> {
    fn dim(&self) -> usize {
        self.ansatz.num_params
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        dloss_average(self.set, self.ansatz, x, self.noise)
    }

    fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        dloss_with_gradient(self.set, self.ansatz, x, self.noise)
    }
}

/// The average-case fidelity loss of a decoding program; with `fixed` set,
/// only the parameters after the fixed prefix are free.
pub struct RecoveryObjective<'a> {
    pub set: &'a StateSet,
    pub program: &'a Program,
    pub fixed: &'a [f64],
}

impl RecoveryObjective<'_> {
    fn full(&self, x: &[f64]) -> Vec<f64> {
        let mut p = self.fixed.to_vec();
        p.extend_from_slice(x);
        p
    }
}

impl Objective for RecoveryObjective<'_> {
    fn dim(&self) -> usize {
        self.program.num_params() - self.fixed.len()
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        floss_average(self.set, self.program, &self.full(x))
    }

    fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (v, g) = floss_with_gradient(self.set, self.program, &self.full(x))?;
        Ok((v, g[self.fixed.len()..].to_vec()))
    }
}

fn minimize(obj: &dyn Objective, x0: &[f64], cfg: &OptimConfig) -> Result<OptimOutcome> {
    match cfg.gradient {
        GradientMethod::Adjoint => lbfgs_minimize(obj, x0, cfg),
        GradientMethod::FiniteDifference => {
            let coarse = FiniteDifference {
                f: |x: &[f64]| obj.value(x),
                dim: obj.dim(),
                step: cfg.grad_step,
            };
            let first = lbfgs_minimize(&coarse, x0, cfg)?;
            if !first.line_search_failed {
                return Ok(first);
            }
            // one restart with a finer step from the best point so far
            let fine = FiniteDifference {
                step: cfg.grad_step / 10.0,
                ..coarse
            };
            let rest = OptimConfig {
                epochs: 1,
                iters_per_epoch: cfg.max_iterations().saturating_sub(first.iterations).max(1),
                ..cfg.clone()
            };
            let second = lbfgs_minimize(&fine, &first.params, &rest)?;
            let mut trajectory = first.trajectory;
            trajectory.extend_from_slice(&second.trajectory[1..]);
            Ok(OptimOutcome {
                trajectory,
                iterations: first.iterations + second.iterations,
                evaluations: first.evaluations + second.evaluations,
                ..second
            })
        }
    }
}

/// Initial parameters: uniform on `(-range, range)` from stream 1 of
/// `ChaCha8Rng::seed_from_u64(seed)` (stream 0 draws the ansatz).
pub fn initial_params(seed: u64, count: usize, range: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    (0..count)
        .map(|_| rng.random_range(-range..range))
        .collect()
}

/// How the best seed is picked: lowest worst-case loss on a Haar sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    pub haar_count: usize,
    pub haar_seed: u64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            haar_count: 1000,
            haar_seed: 0,
        }
    }
}

/// An encoding problem: ansatz family, noise and training states.
#[derive(Clone, Debug)]
pub struct EncodingTask {
    pub n: usize,
    pub k: usize,
    pub depth_blocks: usize,
    pub layout: Layout,
    pub single: GateKind,
    pub two: GateKind,
    pub noise: CompositeNoise,
    pub set: StateSet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection_loss: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub line_search_failed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Final evaluation of a trained code with both estimators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalEvaluation {
    pub two_design: LossReport,
    pub haar: LossReport,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    Encoding,
    RecoveryOnly,
    QvectorEndToEnd,
}

/// The persisted result of a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub mode: TrainMode,
    pub k: usize,
    pub best_seed: u64,
    /// Encoder parameters.
    pub params: Vec<f64>,
    pub loss_trajectory: Vec<f64>,
    #[serde(rename = "final")]
    pub final_eval: FinalEvaluation,
    pub ansatz: Ansatz,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recovery: Option<Recovery>,
    pub noise: CompositeNoise,
    pub seeds: Vec<SeedOutcome>,
    pub optimizer: OptimConfig,
    pub wall_time: f64,
}

impl TrainReport {
    pub fn encoder(&self) -> Result<Encoder> {
        Encoder::new(self.k, self.ansatz.clone(), self.params.clone())
    }
}

struct SeedRun<T> {
    outcome: SeedOutcome,
    result: Option<(T, OptimOutcome)>,
}

fn failed_seed<T>(seed: u64, e: Error) -> SeedRun<T> {
    SeedRun {
        outcome: SeedOutcome {
            seed,
            train_loss: None,
            selection_loss: None,
            iterations: 0,
            converged: false,
            line_search_failed: false,
            error: Some(e.to_string()),
        },
        result: None,
    }
}

/// Picks the run with the lowest selection loss, ties to the lowest seed.
fn pick_best<T>(runs: &[SeedRun<T>]) -> Result<usize> {
    runs.iter()
        .enumerate()
        .filter_map(|(i, r)| r.outcome.selection_loss.map(|l| (i, l, r.outcome.seed)))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.2.cmp(&b.2)))
        .map(|(i, _, _)| i)
        .ok_or_else(|| Error::Numerical("every seed failed".into()))
}

fn check_seeds(seeds: &[u64]) -> Result<()> {
    if seeds.is_empty() {
        return Err(Error::InvalidParameter("no seeds given".into()));
    }
    Ok(())
}

/// Trains one encoder per seed on the average-case loss over `task.set` and
/// returns the one with the lowest worst-case loss on a Haar sample.
pub fn train_encoding(
    task: &EncodingTask,
    seeds: &[u64],
    cfg: &OptimConfig,
    selection: &SelectionConfig,
) -> Result<TrainReport> {
    let start = Instant::now();
    cfg.validate()?;
    check_seeds(seeds)?;
    if task.set.k != task.k || task.k > task.n {
        return Err(Error::DimensionMismatch {
            expected: task.k,
            found: task.set.k,
        });
    }
    if task.layout.num_qubits != task.n {
        return Err(Error::DimensionMismatch {
            expected: task.n,
            found: task.layout.num_qubits,
        });
    }
    let haar = haar_sample(task.k, selection.haar_count, selection.haar_seed)?;
    let runs: Vec<SeedRun<(Encoder, LossReport)>> = seeds
        .par_iter()
        .map(|&seed| {
            let run = || -> Result<((Encoder, LossReport), OptimOutcome)> {
                let ansatz = generate_rea(
                    task.n,
                    task.depth_blocks,
                    &task.layout,
                    seed,
                    task.single,
                    task.two,
                )?;
                let obj = EncodingObjective {
                    set: &task.set,
                    ansatz: &ansatz,
                    noise: &task.noise,
                };
                let x0 = initial_params(seed, ansatz.num_params, cfg.init_range);
                let opt = minimize(&obj, &x0, cfg)?;
                let encoder = Encoder::new(task.k, ansatz, opt.params.clone())?;
                let haar_report = dloss(&haar, &encoder, &task.noise)?;
                Ok(((encoder, haar_report), opt))
            };
            match run() {
                Ok((result, opt)) => SeedRun {
                    outcome: SeedOutcome {
                        seed,
                        train_loss: Some(opt.value),
                        selection_loss: result.1.d_worst,
                        iterations: opt.iterations,
                        converged: opt.converged,
                        line_search_failed: opt.line_search_failed,
                        error: None,
                    },
                    result: Some((result, opt)),
                },
                Err(e) => failed_seed(seed, e),
            }
        })
        .collect();
    let best = pick_best(&runs)?;
    let ((encoder, mut haar_report), opt) =
        runs[best].result.clone().expect("selected run succeeded");
    let f = floss(&haar, &encoder, None, &task.noise)?;
    haar_report.f_avg = f.f_avg;
    haar_report.f_worst = f.f_worst;
    let final_eval = FinalEvaluation {
        two_design: combined(&task.set, &encoder, None, &task.noise)?,
        haar: haar_report,
    };
    Ok(TrainReport {
        mode: TrainMode::Encoding,
        k: task.k,
        best_seed: runs[best].outcome.seed,
        params: opt.params,
        loss_trajectory: opt.trajectory,
        final_eval,
        ansatz: encoder.ansatz,
        recovery: None,
        noise: task.noise.clone(),
        seeds: runs.into_iter().map(|r| r.outcome).collect(),
        optimizer: cfg.clone(),
        wall_time: start.elapsed().as_secs_f64(),
    })
}

fn combined(
    set: &StateSet,
    encoder: &Encoder,
    recovery: Option<&Recovery>,
    noise: &CompositeNoise,
) -> Result<LossReport> {
    let mut report = dloss(set, encoder, noise)?;
    let f = floss(set, encoder, recovery, noise)?;
    report.f_avg = f.f_avg;
    report.f_worst = f.f_worst;
    Ok(report)
}

/// A recovery problem on top of a given encoder.
#[derive(Clone, Debug)]
pub struct RecoveryTask {
    pub encoder: Encoder,
    pub depth_blocks: usize,
    pub r: usize,
    /// Layout on the `n + r` qubits the recovery acts on.
    pub layout: Layout,
    pub single: GateKind,
    pub two: GateKind,
    pub noise: CompositeNoise,
    pub set: StateSet,
    pub mode: TrainMode,
}

/// Trains a recovery circuit (and, end to end, the encoder too) on the
/// average-case fidelity loss over `task.set`, one run per seed, and returns
/// the run with the lowest worst-case fidelity loss on a Haar sample.
pub fn train_recovery(
    task: &RecoveryTask,
    seeds: &[u64],
    cfg: &OptimConfig,
    selection: &SelectionConfig,
) -> Result<TrainReport> {
    let start = Instant::now();
    cfg.validate()?;
    check_seeds(seeds)?;
    if task.mode == TrainMode::Encoding {
        return Err(Error::InvalidParameter(
            "recovery training needs recovery_only or qvector_end_to_end".into(),
        ));
    }
    let enc = &task.encoder;
    let total = enc.n() + task.r;
    if task.layout.num_qubits != total {
        return Err(Error::DimensionMismatch {
            expected: total,
            found: task.layout.num_qubits,
        });
    }
    if task.set.k != enc.k {
        return Err(Error::DimensionMismatch {
            expected: enc.k,
            found: task.set.k,
        });
    }
    let haar = haar_sample(enc.k, selection.haar_count, selection.haar_seed)?;
    let runs: Vec<SeedRun<Recovery>> = seeds
        .par_iter()
        .map(|&seed| {
            let run = || -> Result<(Recovery, OptimOutcome, f64)> {
                let rec = generate_rea(
                    total,
                    task.depth_blocks,
                    &task.layout,
                    seed,
                    task.single,
                    task.two,
                )?;
                let prog = decoding_program(&enc.ansatz, Some((&rec, task.r)), &task.noise)?;
                let rec_init = initial_params(seed, rec.num_params, cfg.init_range);
                let (opt, full) = if task.mode == TrainMode::RecoveryOnly {
                    let obj = RecoveryObjective {
                        set: &task.set,
                        program: &prog,
                        fixed: &enc.params,
                    };
                    let opt = minimize(&obj, &rec_init, cfg)?;
                    let full = [enc.params.as_slice(), &opt.params].concat();
                    (opt, full)
                } else {
                    let obj = RecoveryObjective {
                        set: &task.set,
                        program: &prog,
                        fixed: &[],
                    };
                    let x0 = [enc.params.as_slice(), &rec_init].concat();
                    let opt = minimize(&obj, &x0, cfg)?;
                    let full = opt.params.clone();
                    (opt, full)
                };
                let recovery = Recovery {
                    r: task.r,
                    ansatz: rec,
                    params: full[enc.ansatz.num_params..].to_vec(),
                };
                let trained = Encoder::new(
                    enc.k,
                    enc.ansatz.clone(),
                    full[..enc.ansatz.num_params].to_vec(),
                )?;
                let sel = floss(&haar, &trained, Some(&recovery), &task.noise)?
                    .f_worst
                    .ok_or_else(|| Error::Numerical("missing fidelity loss".into()))?;
                let mut opt = opt;
                opt.params = full;
                Ok((recovery, opt, sel))
            };
            match run() {
                Ok((rec, opt, sel)) => SeedRun {
                    outcome: SeedOutcome {
                        seed,
                        train_loss: Some(opt.value),
                        selection_loss: Some(sel),
                        iterations: opt.iterations,
                        converged: opt.converged,
                        line_search_failed: opt.line_search_failed,
                        error: None,
                    },
                    result: Some((rec, opt)),
                },
                Err(e) => failed_seed(seed, e),
            }
        })
        .collect();
    let best = pick_best(&runs)?;
    let (recovery, opt) = runs[best].result.clone().expect("selected run succeeded");
    let encoder = Encoder::new(
        enc.k,
        enc.ansatz.clone(),
        opt.params[..enc.ansatz.num_params].to_vec(),
    )?;
    let final_eval = FinalEvaluation {
        two_design: combined(&task.set, &encoder, Some(&recovery), &task.noise)?,
        haar: combined(&haar, &encoder, Some(&recovery), &task.noise)?,
    };
    Ok(TrainReport {
        mode: task.mode,
        k: enc.k,
        best_seed: runs[best].outcome.seed,
        params: encoder.params,
        loss_trajectory: opt.trajectory,
        final_eval,
        ansatz: encoder.ansatz,
        recovery: Some(recovery),
        noise: task.noise.clone(),
        seeds: runs.into_iter().map(|r| r.outcome).collect(),
        optimizer: cfg.clone(),
        wall_time: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::{build_layout, LayoutKind};
    use crate::channels::NoiseSpec;
    use crate::designs::two_design;

    struct Func<F, G> {
        dim: usize,
        f: F,
        g: G,
    }

    impl<F, G> Objective for Func<F, G>
    where
        F: Fn(&[f64]) -> f64 + Sync,
        G: Fn(&[f64]) -> Vec<f64> + Sync,
    {
        fn dim(&self) -> usize {
            self.dim
        }
        fn value(&self, x: &[f64]) -> Result<f64> {
            Ok((self.f)(x))
        }
        fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
            Ok(((self.f)(x), (self.g)(x)))
        }
    }

    #[allow(clippy::type_complexity)]
    fn rosenbrock() -> Func<impl Fn(&[f64]) -> f64 + Sync, impl Fn(&[f64]) -> Vec<f64> + Sync> {
        Func {
            dim: 2,
            f: |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2),
            g: |x: &[f64]| {
                vec![
                    -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]),
                    200.0 * (x[1] - x[0] * x[0]),
                ]
            },
        }
    }

    fn budget(iters: usize) -> OptimConfig {
        OptimConfig {
            epochs: 1,
            iters_per_epoch: iters,
            convergence_tol: 1e-10,
            ..OptimConfig::default()
        }
    }

    #[test]
    fn quadratic_gradient_by_differences() {
        let g = fd_gradient(|x: &[f64]| Ok(x[0] * x[0] + x[1] * x[1]), &[1.0, 2.0], 1e-5).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-6 && (g[1] - 4.0).abs() < 1e-6);
        let z = fd_gradient(|_: &[f64]| Ok(3.0), &[1.0, 2.0, 3.0], 1e-5).unwrap();
        assert!(z.iter().all(|v| *v == 0.0));
        assert!(fd_gradient(|_: &[f64]| Ok(f64::NAN), &[1.0], 1e-5).is_err());
        assert!(fd_gradient(|_: &[f64]| Ok(0.0), &[1.0], 0.0).is_err());
    }

    #[test]
    fn lbfgs_solves_rosenbrock() {
        let out = lbfgs_minimize(&rosenbrock(), &[-1.2, 1.0], &budget(200)).unwrap();
        assert!((out.params[0] - 1.0).abs() < 1e-6, "{:?}", out.params);
        assert!((out.params[1] - 1.0).abs() < 1e-6);
        assert!(out.iterations <= 200);
    }

    #[test]
    fn lbfgs_quadratic_bowl_converges_quickly() {
        let diag = [1.0, 3.0, 10.0, 0.5, 7.0];
        let obj = Func {
            dim: 5,
            f: move |x: &[f64]| x.iter().zip(&diag).map(|(v, d)| d * v * v).sum::<f64>(),
            g: move |x: &[f64]| x.iter().zip(&diag).map(|(v, d)| 2.0 * d * v).collect(),
        };
        let out = lbfgs_minimize(&obj, &[1.0, -2.0, 0.5, 3.0, -1.0], &budget(100)).unwrap();
        assert!(out.converged);
        assert!(out.iterations <= 10, "{} iterations", out.iterations);
    }

    #[test]
    fn optimal_start_returns_immediately() {
        let out = lbfgs_minimize(&rosenbrock(), &[1.0, 1.0], &budget(50)).unwrap();
        assert_eq!(out.trajectory.len(), 1);
        assert!(out.converged);
    }

    #[test]
    fn trajectory_is_non_increasing() {
        let out = lbfgs_minimize(&rosenbrock(), &[-1.2, 1.0], &budget(200)).unwrap();
        assert!(out.trajectory.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn finite_difference_route_matches_richardson_oracle() {
        let layout = build_layout(LayoutKind::Full, 1, None).unwrap();
        let ansatz = generate_rea(1, 0, &layout, 3, GateKind::Rzyz, GateKind::ControlledV).unwrap();
        let noise = CompositeNoise::uniform(NoiseSpec::AmplitudeDamping { gamma: 0.2 }).unwrap();
        let set = two_design(1).unwrap();
        let f = |x: &[f64]| dloss_average(&set, &ansatz, x, &noise);
        let x = [0.3, -0.7, 1.1];
        let fd = fd_gradient(f, &x, 1e-5).unwrap();
        let (_, adj) = dloss_with_gradient(&set, &ansatz, &x, &noise).unwrap();
        for i in 0..3 {
            let d = |h: f64| {
                let mut p = x.to_vec();
                p[i] += h;
                let up = f(&p).unwrap();
                p[i] -= 2.0 * h;
                (up - f(&p).unwrap()) / (2.0 * h)
            };
            let rich = (4.0 * d(1e-3) - d(2e-3)) / 3.0;
            assert!((fd[i] - rich).abs() < 1e-4);
            assert!((adj[i] - rich).abs() < 1e-4);
        }
    }

    fn depolarizing(p: f64) -> CompositeNoise {
        CompositeNoise::uniform(NoiseSpec::Depolarizing { p }).unwrap()
    }

    fn small_task(n: usize, depth: usize, noise: CompositeNoise) -> EncodingTask {
        EncodingTask {
            n,
            k: 1,
            depth_blocks: depth,
            layout: build_layout(LayoutKind::Full, n, None).unwrap(),
            single: GateKind::Rzyz,
            two: GateKind::ControlledV,
            noise,
            set: two_design(1).unwrap(),
        }
    }

    fn quick() -> (OptimConfig, SelectionConfig) {
        (
            OptimConfig {
                epochs: 2,
                ..OptimConfig::default()
            },
            SelectionConfig {
                haar_count: 40,
                haar_seed: 1,
            },
        )
    }

    #[test]
    fn single_qubit_encoding_cannot_beat_baseline() {
        let (cfg, sel) = quick();
        let report =
            train_encoding(&small_task(1, 0, depolarizing(0.1)), &[1, 2], &cfg, &sel).unwrap();
        let d = report.final_eval.two_design.d_avg.unwrap();
        let base = dloss(
            &two_design(1).unwrap(),
            &Encoder::unencoded(1),
            &depolarizing(0.1),
        )
        .unwrap()
        .d_avg
        .unwrap();
        assert!((d - base).abs() < 1e-9);
    }

    #[test]
    fn encoding_training_is_deterministic_and_improves() {
        let (cfg, sel) = quick();
        let task = small_task(3, 3, depolarizing(0.1));
        let a = train_encoding(&task, &[4, 5], &cfg, &sel).unwrap();
        let b = train_encoding(&task, &[4, 5], &cfg, &sel).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.loss_trajectory, b.loss_trajectory);
        assert_eq!(a.seeds, b.seeds);
        let t = &a.loss_trajectory;
        assert!(t.last().unwrap() < &t[0]);
        assert!(t.windows(2).all(|w| w[1] <= w[0]));
        let json = serde_json::to_string(&a).unwrap();
        let back: TrainReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.params, a.params);
    }

    fn quick_recovery() -> (OptimConfig, SelectionConfig) {
        let (_, sel) = quick();
        (
            OptimConfig {
                epochs: 2,
                ..OptimConfig::recovery()
            },
            sel,
        )
    }

    #[test]
    fn noiseless_identity_recovery_is_perfect() {
        let (cfg, sel) = quick_recovery();
        let layout = build_layout(LayoutKind::Full, 3, None).unwrap();
        let ansatz = generate_rea(3, 2, &layout, 9, GateKind::Rzyz, GateKind::ControlledV).unwrap();
        let params = initial_params(9, ansatz.num_params, 0.1);
        let task = RecoveryTask {
            encoder: Encoder::new(1, ansatz, params).unwrap(),
            depth_blocks: 0,
            r: 0,
            layout,
            single: GateKind::Rzyz,
            two: GateKind::ControlledV,
            noise: depolarizing(0.0),
            set: two_design(1).unwrap(),
            mode: TrainMode::RecoveryOnly,
        };
        let report = train_recovery(&task, &[1], &cfg, &sel).unwrap();
        assert!(report.final_eval.two_design.f_worst.unwrap() < 1e-9);
    }

    #[test]
    fn recovery_training_lowers_fidelity_loss() {
        let (cfg, sel) = quick_recovery();
        let layout3 = build_layout(LayoutKind::Full, 3, None).unwrap();
        let ansatz =
            generate_rea(3, 2, &layout3, 2, GateKind::Rzyz, GateKind::ControlledV).unwrap();
        let params = initial_params(2, ansatz.num_params, 0.1);
        let mut task = RecoveryTask {
            encoder: Encoder::new(1, ansatz, params).unwrap(),
            depth_blocks: 4,
            r: 1,
            layout: build_layout(LayoutKind::Full, 4, None).unwrap(),
            single: GateKind::Rzyz,
            two: GateKind::ControlledV,
            noise: CompositeNoise::uniform(NoiseSpec::BitFlip { p: 0.1 }).unwrap(),
            set: two_design(1).unwrap(),
            mode: TrainMode::RecoveryOnly,
        };
        let only = train_recovery(&task, &[3], &cfg, &sel).unwrap();
        let t = &only.loss_trajectory;
        assert!(t.last().unwrap() < &t[0]);
        assert_eq!(only.params, task.encoder.params);
        task.mode = TrainMode::QvectorEndToEnd;
        let joint = train_recovery(&task, &[3], &cfg, &sel).unwrap();
        assert_ne!(joint.params, task.encoder.params);
        assert!(joint.loss_trajectory.last().unwrap() < &joint.loss_trajectory[0]);
    }

    #[test]
    fn config_validation() {
        assert!(OptimConfig::default().validate().is_ok());
        let bad = OptimConfig {
            history_size: 0,
            ..OptimConfig::default()
        };
        assert!(bad.validate().is_err());
        let parsed: OptimConfig =
            toml::from_str("epochs = 3\ngradient = \"finite_difference\"").unwrap();
        assert_eq!(parsed.epochs, 3);
        assert_eq!(parsed.gradient, GradientMethod::FiniteDifference);
        assert!(toml::from_str::<OptimConfig>("epoch = 3").is_err());
    }
}

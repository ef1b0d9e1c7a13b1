//! Sphere-constrained ascent on the penalized per-axis objective
//! `phi_k(w) = mu_b(w) - alpha * sum_{j<k} (w_j . w)^2`, and the sequential
//! fit of all `m` axes.
//!
//! Each step moves along the tangent component of the full gradient and
//! retracts to the sphere by normalization. A backtracking line search
//! (halving, sufficient-increase factor [`ARMIJO`]) accepts only steps that
//! do not decrease `phi`.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{QpadError, Result};
use crate::fast;
use crate::linalg::{axpy, center, centered_radius_bound, dot, norm, normalize};
use crate::model::{Engine, FitDescriptor, ProjectionModel, QpadConfig};
use crate::naive::{self, DEFAULT_NAIVE_CAP};
use crate::rng::{derive_seed, random_unit_vector, seeded};

pub const ARMIJO: f64 = 1e-4;
/// Line search gives up once the trial displacement falls below this.
pub const MIN_STEP: f64 = 1e-14;

/// Objective value and Euclidean (sub)gradient of `mu_b` at one direction.
#[derive(Debug, Clone, PartialEq)]
pub struct MuEval {
    pub mu: f64,
    pub grad: Vec<f64>,
    pub delta_star: f64,
    pub boundary_count: usize,
    pub b_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub phi: f64,
    /// Norm of the tangent-projected full gradient at this iterate.
    pub grad_norm: f64,
    /// Displacement `|w_new - w_old|` that produced this iterate (0 for the
    /// starting point).
    pub step: f64,
    pub mu: f64,
    pub delta_star: f64,
    pub boundary_count: usize,
    pub b_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    IterationBudget,
    LineSearchFailed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AxisFitTrace {
    /// Accepted iterates of the winning restart, starting point first.
    pub iterations: Vec<IterationRecord>,
    pub converged: bool,
    pub termination: Termination,
    pub restarts_used: usize,
    /// Which restart produced the returned direction.
    pub best_restart: usize,
    /// Absolute tangent-gradient tolerance used for this axis.
    pub grad_tol_abs: f64,
}

impl AxisFitTrace {
    pub fn final_phi(&self) -> f64 {
        self.iterations.last().map(|r| r.phi).unwrap_or(f64::NAN)
    }

    pub fn final_grad_norm(&self) -> f64 {
        self.iterations.last().map(|r| r.grad_norm).unwrap_or(f64::NAN)
    }

    /// `iter,phi,grad_norm,step`
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iter,phi,grad_norm,step\n");
        for (t, r) in self.iterations.iter().enumerate() {
            let _ = writeln!(s, "{t},{},{},{}", r.phi, r.grad_norm, r.step);
        }
        s
    }
}

/// Per-iteration selection diagnostics for all axes:
/// `axis,iter,delta_star,R,B,mu`.
pub fn axis_eval_csv(traces: &[AxisFitTrace]) -> String {
    let mut s = String::from("axis,iter,delta_star,R,B,mu\n");
    for (k, trace) in traces.iter().enumerate() {
        for (t, r) in trace.iterations.iter().enumerate() {
            let _ = writeln!(s, "{k},{t},{},{},{},{}", r.delta_star, r.boundary_count, r.b_count, r.mu);
        }
    }
    s
}

/// Penalty `alpha * sum (w_j . w)^2` and the gradient of its negation,
/// `-2 alpha sum (w_j . w) w_j`, which is added to the `mu_b` gradient.
pub fn penalty(w: &[f64], prev_axes: &[Vec<f64>], alpha: f64) -> (f64, Vec<f64>) {
    let mut value = 0.0;
    let mut grad = vec![0.0; w.len()];
    for axis in prev_axes {
        let d = dot(axis, w);
        value += d * d;
        axpy(&mut grad, -2.0 * alpha * d, axis);
    }
    (alpha * value, grad)
}

/// `(I - w w^T) g`
pub fn tangent_project(g: &[f64], w: &[f64]) -> Vec<f64> {
    let mut out = g.to_vec();
    axpy(&mut out, -dot(w, g), w);
    out
}

struct AxisProblem<'a> {
    x_c: &'a Dataset,
    prev_axes: &'a [Vec<f64>],
    b_percent: f64,
    alpha: f64,
    engine: Engine,
}

struct Point {
    w: Vec<f64>,
    phi: f64,
    tangent: Vec<f64>,
    grad_norm: f64,
    eval: MuEval,
}

impl AxisProblem<'_> {
    fn at(&self, w: Vec<f64>) -> Result<Point> {
        let eval = match self.engine {
            Engine::Fast => fast::evaluate(self.x_c, &w, self.b_percent)?,
            Engine::Naive => naive::evaluate(self.x_c, &w, self.b_percent)?,
        };
        let (pen, pen_grad) = penalty(&w, self.prev_axes, self.alpha);
        let mut g = eval.grad.clone();
        axpy(&mut g, 1.0, &pen_grad);
        let tangent = tangent_project(&g, &w);
        Ok(Point { phi: eval.mu - pen, grad_norm: norm(&tangent), tangent, w, eval })
    }

    fn record(p: &Point, step: f64) -> IterationRecord {
        IterationRecord {
            phi: p.phi,
            grad_norm: p.grad_norm,
            step,
            mu: p.eval.mu,
            delta_star: p.eval.delta_star,
            boundary_count: p.eval.boundary_count,
            b_count: p.eval.b_count,
        }
    }

    /// Ascent from `w0`. Returns the final direction, its trace records and
    /// how it stopped.
    fn ascend(
        &self,
        w0: Vec<f64>,
        max_iters: usize,
        tol: f64,
    ) -> Result<(Vec<f64>, Vec<IterationRecord>, Termination)> {
        let mut cur = self.at(w0)?;
        let mut records = vec![Self::record(&cur, 0.0)];
        // first trial moves roughly one radian
        let mut eta = 1.0 / cur.grad_norm.max(f64::MIN_POSITIVE);
        for _ in 0..max_iters {
            if cur.grad_norm <= tol {
                return Ok((cur.w, records, Termination::Converged));
            }
            eta *= 2.0;
            let accepted = loop {
                if eta * cur.grad_norm < MIN_STEP {
                    break None;
                }
                let mut cand = cur.w.clone();
                axpy(&mut cand, eta, &cur.tangent);
                normalize(&mut cand);
                let trial = self.at(cand)?;
                if trial.phi >= cur.phi + ARMIJO * eta * cur.grad_norm * cur.grad_norm {
                    break Some(trial);
                }
                eta *= 0.5;
            };
            let Some(next) = accepted else {
                return Ok((cur.w, records, Termination::LineSearchFailed));
            };
            let moved: f64 = next.w.iter().zip(&cur.w).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            records.push(Self::record(&next, moved));
            cur = next;
        }
        let term = if cur.grad_norm <= tol { Termination::Converged } else { Termination::IterationBudget };
        Ok((cur.w, records, term))
    }
}

/// Fits one axis against the already chosen `prev_axes`. Runs
/// `config.restarts_per_axis` ascents from seeded random starts and keeps the
/// one with the highest final objective (lowest restart index on ties).
pub fn optimize_axis(
    x_c: &Dataset,
    prev_axes: &[Vec<f64>],
    config: &QpadConfig,
    engine: Engine,
    seed: u64,
) -> Result<(Vec<f64>, AxisFitTrace)> {
    config.validate()?;
    let problem = AxisProblem { x_c, prev_axes, b_percent: config.b_percent, alpha: config.alpha, engine };
    let tol = config.grad_tol * centered_radius_bound(x_c);
    let runs: Vec<Result<_>> = (0..config.restarts_per_axis)
        .into_par_iter()
        .map(|r| {
            let mut rng = seeded(derive_seed(seed, &[r as u64]));
            let w0 = random_unit_vector(x_c.dim(), &mut rng);
            problem.ascend(w0, config.max_iters_per_axis, tol)
        })
        .collect();
    let mut best: Option<(usize, Vec<f64>, Vec<IterationRecord>, Termination)> = None;
    for (r, run) in runs.into_iter().enumerate() {
        let (w, recs, term) = run?;
        let phi = recs.last().map(|x| x.phi).unwrap_or(f64::NEG_INFINITY);
        let better = match &best {
            None => true,
            Some((_, _, b, _)) => phi > b.last().map(|x| x.phi).unwrap_or(f64::NEG_INFINITY),
        };
        if better {
            best = Some((r, w, recs, term));
        }
    }
    let (best_restart, mut w, iterations, termination) = best.expect("restarts_per_axis >= 1");
    normalize(&mut w);
    Ok((
        w,
        AxisFitTrace {
            iterations,
            converged: termination == Termination::Converged,
            termination,
            restarts_used: config.restarts_per_axis,
            best_restart,
            grad_tol_abs: tol,
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FitOptions {
    pub engine: Engine,
    pub naive_cap: usize,
    pub force_naive: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { engine: Engine::Fast, naive_cap: DEFAULT_NAIVE_CAP, force_naive: false }
    }
}

pub fn fit(ds: &Dataset, config: &QpadConfig, engine: Engine) -> Result<(ProjectionModel, Vec<AxisFitTrace>)> {
    fit_with(ds, config, &FitOptions { engine, ..FitOptions::default() })
}

/// Centers `ds`, then fits `config.m` axes in order, each penalized against
/// all earlier ones. Axis `k` draws its starts from a stream derived from
/// `(config.seed, k)`.
pub fn fit_with(ds: &Dataset, config: &QpadConfig, opts: &FitOptions) -> Result<(ProjectionModel, Vec<AxisFitTrace>)> {
    config.validate()?;
    if config.m > ds.dim() {
        return Err(QpadError::arg(format!(
            "target dimension m = {} exceeds data dimension n = {}",
            config.m,
            ds.dim()
        )));
    }
    if opts.engine == Engine::Naive && ds.len() > opts.naive_cap && !opts.force_naive {
        return Err(QpadError::NaiveCapExceeded { n: ds.len(), cap: opts.naive_cap });
    }
    // fail early on an empty selection rather than inside the first ascent
    naive::selected_pair_count(ds.len(), config.b_percent)?;
    let (x_c, mean) = center(ds);
    let mut axes: Vec<Vec<f64>> = Vec::with_capacity(config.m);
    let mut traces = Vec::with_capacity(config.m);
    for k in 0..config.m {
        let seed = derive_seed(config.seed, &[k as u64]);
        let (w, trace) = optimize_axis(&x_c, &axes, config, opts.engine, seed)?;
        axes.push(w);
        traces.push(trace);
    }
    let model = ProjectionModel::new(
        axes.concat(),
        mean,
        config.m,
        true,
        FitDescriptor::Qpad { config: config.clone(), engine: opts.engine },
    )?;
    Ok((model, traces))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn penalty_examples() {
        let w = vec![0.6, 0.8];
        assert_eq!(penalty(&w, &[], 3.0), (0.0, vec![0.0, 0.0]));
        let (v, g) = penalty(&w, &[vec![0.8, -0.6]], 3.0);
        assert!(v.abs() < 1e-15 && g.iter().all(|x| x.abs() < 1e-15));
        let (v, g) = penalty(&w, std::slice::from_ref(&w), 2.0);
        assert!((v - 2.0).abs() < 1e-15);
        assert!((g[0] + 4.0 * 0.6).abs() < 1e-15 && (g[1] + 4.0 * 0.8).abs() < 1e-15);
    }

    #[test]
    fn tangent_examples() {
        let w = [1.0, 0.0];
        assert_eq!(tangent_project(&[3.0, 4.0], &w), vec![0.0, 4.0]);
        assert_eq!(tangent_project(&[0.0, 4.0], &w), vec![0.0, 4.0]);
        assert_eq!(tangent_project(&[-2.5, 0.0], &w), vec![0.0, 0.0]);
        let w = [0.6, 0.8];
        let g = [1.0, -7.0];
        let t = tangent_project(&g, &w);
        assert!(dot(&t, &w).abs() <= 1e-12 * norm(&g));
    }

    fn line_data() -> Dataset {
        // points along (cos 0.7, sin 0.7) with tiny orthogonal jitter
        let (c, s) = (0.7f64.cos(), 0.7f64.sin());
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                let t = (i as f64 * 1.37).sin() * 5.0 + i as f64 * 0.1;
                let e = ((i * 7 % 5) as f64 - 2.0) * 1e-3;
                vec![t * c - e * s, t * s + e * c]
            })
            .collect();
        Dataset::from_rows(&rows).unwrap()
    }

    #[test]
    fn m_exceeding_n_rejected() {
        let err = fit(&line_data(), &QpadConfig::new(3), Engine::Fast).unwrap_err();
        assert!(matches!(err, QpadError::InvalidArgument(_)));
        assert!(fit(&line_data(), &QpadConfig::new(0), Engine::Fast).is_err());
    }

    #[test]
    fn naive_cap_enforced() {
        let opts = FitOptions { engine: Engine::Naive, naive_cap: 10, force_naive: false };
        let err = fit_with(&line_data(), &QpadConfig::new(1), &opts).unwrap_err();
        assert!(matches!(err, QpadError::NaiveCapExceeded { n: 40, cap: 10 }));
        let forced = FitOptions { force_naive: true, ..opts };
        assert!(fit_with(&line_data(), &QpadConfig::new(1), &forced).is_ok());
    }

    #[test]
    fn single_axis_is_optimize_axis_with_no_prior() {
        let ds = line_data();
        let config = QpadConfig { seed: 5, ..QpadConfig::new(1) };
        let (model, traces) = fit(&ds, &config, Engine::Fast).unwrap();
        let (x_c, _) = center(&ds);
        let (w, trace) = optimize_axis(&x_c, &[], &config, Engine::Fast, derive_seed(5, &[0])).unwrap();
        assert_eq!(model.direction(0), w.as_slice());
        assert_eq!(traces[0], trace);
    }

    #[test]
    fn accepted_steps_never_decrease_phi() {
        let ds = line_data();
        let config = QpadConfig { b_percent: 40.0, ..QpadConfig::new(2) };
        let (_, traces) = fit(&ds, &config, Engine::Fast).unwrap();
        for t in &traces {
            for pair in t.iterations.windows(2) {
                assert!(pair[1].phi >= pair[0].phi - 1e-12);
            }
            if t.converged {
                assert!(t.final_grad_norm() <= t.grad_tol_abs);
            }
        }
    }

    #[test]
    fn trace_csv_shape() {
        let (_, traces) = fit(&line_data(), &QpadConfig::new(1), Engine::Fast).unwrap();
        let csv = traces[0].to_csv();
        assert!(csv.starts_with("iter,phi,grad_norm,step\n"));
        assert_eq!(csv.lines().count(), traces[0].iterations.len() + 1);
        assert!(axis_eval_csv(&traces).starts_with("axis,iter,delta_star,R,B,mu\n"));
    }
}

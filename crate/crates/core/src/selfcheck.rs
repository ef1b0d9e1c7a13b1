//! Built-in consistency checks on seeded synthetic data: fast kernel against
//! the enumeration oracle, gradient against finite differences, and
//! monotone ascent of the optimizer.

use std::collections::BTreeSet;

use rand::Rng;

use crate::dataset::Dataset;
use crate::error::Result;
use crate::fast;
use crate::linalg::{center, project_scalar};
use crate::model::{Engine, QpadConfig};
use crate::naive;
use crate::optimizer::fit;
use crate::rng::{random_unit_vector, seeded};
use crate::synth;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SelfcheckOptions {
    /// Three random instances per check instead of the full set.
    pub quick: bool,
    /// Negates the fast gradient before comparison. A negative control: the
    /// gradient check must then fail.
    pub sabotage: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub instances: usize,
    pub detail: String,
}

struct Instance {
    x_c: Dataset,
    w: Vec<f64>,
    b_percent: f64,
}

fn instance(rng: &mut impl Rng, seed: u64, max_points: usize, ties: bool) -> Instance {
    let len = rng.random_range(10..=max_points);
    let dim = rng.random_range(2..=8);
    let raw = if ties { synth::with_duplicates(len, dim, seed) } else { synth::isotropic(len, dim, seed) };
    let (x_c, _) = center(&raw);
    let mut wr = seeded(seed ^ 0xabcd);
    Instance { x_c, w: random_unit_vector(dim, &mut wr), b_percent: rng.random_range(10.0..=100.0) }
}

/// Selected pairs oriented as (higher, lower) projection.
fn pair_set(x_c: &Dataset, w: &[f64], b: f64) -> Result<BTreeSet<(usize, usize)>> {
    let p = project_scalar(x_c, w)?;
    Ok(naive::mu_b_naive(x_c, w, b)?
        .selected_pairs
        .into_iter()
        .map(|(i, j)| if p[i] >= p[j] { (i, j) } else { (j, i) })
        .collect())
}

pub fn run(opts: SelfcheckOptions) -> Result<Vec<CheckResult>> {
    let count = if opts.quick { 3 } else { 60 };
    let mut rng = seeded(opts.seed);
    let mut results = Vec::new();

    // objective and threshold equivalence, including tie-heavy instances
    let mut worst = 0.0f64;
    let mut threshold_failures = 0;
    for t in 0..count {
        let inst = instance(&mut rng, opts.seed.wrapping_add(t as u64), 200, t % 2 == 1);
        let f = fast::mu_b_fast(&inst.x_c, &inst.w, inst.b_percent)?;
        let n = naive::mu_b_naive(&inst.x_c, &inst.w, inst.b_percent)?;
        worst = worst.max((f.mu - n.mu).abs() / n.mu.max(1.0));
        if f.delta_star != n.delta_star || f.boundary_count < 1 {
            threshold_failures += 1;
        }
    }
    results.push(CheckResult {
        name: "fast-vs-naive objective",
        passed: worst <= 1e-9,
        instances: count,
        detail: format!("max scaled difference {worst:.3e} (limit 1e-9)"),
    });
    results.push(CheckResult {
        name: "threshold order statistic",
        passed: threshold_failures == 0,
        instances: count,
        detail: format!("{threshold_failures} mismatches"),
    });

    // finite-difference gradient on tie-free data, skipping coordinates where
    // a selected pair enters, leaves or swaps order within +-h
    let h = 1e-6;
    let mut worst = 0.0f64;
    let mut compared = 0;
    for t in 0..count {
        let inst = instance(&mut rng, opts.seed.wrapping_add(1000 + t as u64), 60, false);
        let ev = fast::mu_b_fast(&inst.x_c, &inst.w, inst.b_percent)?;
        let mut g = fast::gradient_mu(&inst.x_c, &ev)?;
        if opts.sabotage {
            g.iter_mut().for_each(|v| *v = -*v);
        }
        let base = pair_set(&inst.x_c, &inst.w, inst.b_percent)?;
        for k in 0..inst.w.len() {
            let mut plus = inst.w.clone();
            plus[k] += h;
            let mut minus = inst.w.clone();
            minus[k] -= h;
            if pair_set(&inst.x_c, &plus, inst.b_percent)? != base
                || pair_set(&inst.x_c, &minus, inst.b_percent)? != base
            {
                continue;
            }
            let fd = (fast::mu_b_fast(&inst.x_c, &plus, inst.b_percent)?.mu
                - fast::mu_b_fast(&inst.x_c, &minus, inst.b_percent)?.mu)
                / (2.0 * h);
            worst = worst.max((fd - g[k]).abs());
            compared += 1;
        }
    }
    results.push(CheckResult {
        name: "finite-difference gradient",
        passed: compared > 0 && worst <= 1e-5,
        instances: count,
        detail: format!("{compared} coordinates compared, max error {worst:.3e} (limit 1e-5)"),
    });

    // monotone ascent and stationarity flags
    let mut violations = 0;
    let mut unconverged_flags = 0;
    let fits = if opts.quick { 1 } else { 4 };
    for t in 0..fits {
        let raw = synth::isotropic(80, 6, opts.seed.wrapping_add(2000 + t));
        let config =
            QpadConfig { m: 3, b_percent: 50.0, alpha: 10.0, seed: opts.seed.wrapping_add(t), ..QpadConfig::default() };
        let (_, traces) = fit(&raw, &config, Engine::Fast)?;
        for tr in &traces {
            violations += tr.iterations.windows(2).filter(|p| p[1].phi < p[0].phi - 1e-12).count();
            if tr.converged && tr.final_grad_norm() > tr.grad_tol_abs {
                unconverged_flags += 1;
            }
        }
    }
    results.push(CheckResult {
        name: "monotone ascent",
        passed: violations == 0 && unconverged_flags == 0,
        instances: fits as usize,
        detail: format!("{violations} decreasing steps, {unconverged_flags} false convergence flags"),
    });
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_run_passes() {
        let res = run(SelfcheckOptions { quick: true, ..Default::default() }).unwrap();
        assert!(res.iter().all(|r| r.passed), "{res:#?}");
    }

    #[test]
    fn sabotage_is_detected() {
        let res = run(SelfcheckOptions { quick: true, sabotage: true, seed: 0 }).unwrap();
        assert!(!res.iter().find(|r| r.name == "finite-difference gradient").unwrap().passed);
    }
}

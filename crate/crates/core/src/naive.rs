//! Reference evaluation of the quantile objective by full enumeration.
//!
//! Every pairwise projected distance is materialized and sorted; the mean of
//! the `B` smallest is the objective. This is O(N^2 log N) per evaluation and
//! exists to be obviously correct, so the fast kernel can be checked against
//! it.

use std::cmp::Ordering;

use crate::dataset::Dataset;
use crate::error::{QpadError, Result};
use crate::linalg::{dot, project_scalar};
use crate::model::{Engine, ProjectionModel, QpadConfig};
use crate::optimizer::{self, AxisFitTrace, MuEval};

/// Training sets larger than this are refused by the naive engine unless
/// explicitly forced.
pub const DEFAULT_NAIVE_CAP: usize = 2000;

/// Number of selected pairs, `floor(b_percent / 100 * N (N - 1) / 2)`.
/// Zero is an error.
pub fn selected_pair_count(n_points: usize, b_percent: f64) -> Result<usize> {
    if !(b_percent > 0.0 && b_percent <= 100.0) {
        return Err(QpadError::arg(format!("b_percent {b_percent} must lie in (0, 100]")));
    }
    let total = n_points.saturating_sub(1) as u128 * n_points as u128 / 2;
    // multiply before dividing so integral percentages stay exact
    let b = ((b_percent * total as f64) / 100.0).floor() as usize;
    if b == 0 {
        return Err(QpadError::arg(format!(
            "b = {b_percent}% of {total} pairs selects no pair; increase b or the number of points"
        )));
    }
    Ok(b.min(total as usize))
}

/// The `B` smallest pairwise distances of one projection.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSelection {
    pub b_count: usize,
    /// `(i, j)` with `i < j`, ordered by `(distance, i, j)`.
    pub selected_pairs: Vec<(usize, usize)>,
    pub mu: f64,
    /// Largest selected distance (the `B`-th smallest overall).
    pub delta_star: f64,
}

/// Selects the `B` smallest `|p_i - p_j|`. Ties are broken by `(i, j)`
/// lexicographically.
pub fn select_pairs(p: &[f64], b_percent: f64) -> Result<PairSelection> {
    let n = p.len();
    if n < 2 {
        return Err(QpadError::arg("need at least 2 projected values"));
    }
    let b_count = selected_pair_count(n, b_percent)?;
    let mut pairs: Vec<(f64, u32, u32)> = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            pairs.push(((p[i] - p[j]).abs(), i as u32, j as u32));
        }
    }
    pairs.sort_unstable_by(|a, b| {
        a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
    });
    pairs.truncate(b_count);
    let sum: f64 = pairs.iter().map(|t| t.0).sum();
    Ok(PairSelection {
        b_count,
        delta_star: pairs.last().map(|t| t.0).unwrap_or(0.0),
        mu: sum / b_count as f64,
        selected_pairs: pairs.iter().map(|t| (t.1 as usize, t.2 as usize)).collect(),
    })
}

pub fn mu_b_naive(x_c: &Dataset, w: &[f64], b_percent: f64) -> Result<PairSelection> {
    select_pairs(&project_scalar(x_c, w)?, b_percent)
}

/// `mu_b(w) - alpha * sum_j (w_j . w)^2`
pub fn objective_naive(x_c: &Dataset, w: &[f64], prev_axes: &[Vec<f64>], b_percent: f64, alpha: f64) -> Result<f64> {
    let mu = mu_b_naive(x_c, w, b_percent)?.mu;
    let penalty: f64 = prev_axes.iter().map(|a| dot(a, w).powi(2)).sum();
    Ok(mu - alpha * penalty)
}

/// Pair-by-pair subgradient of `mu_b` over the selected set:
/// `(1/B) sum sign(p_j - p_i) (x_j - x_i)`, with `p_j == p_i` treated as
/// positive for `i < j`.
pub fn gradient_naive(x_c: &Dataset, p: &[f64], sel: &PairSelection) -> Vec<f64> {
    let mut g = vec![0.0; x_c.dim()];
    for &(i, j) in &sel.selected_pairs {
        let (lo, hi) = if p[j] >= p[i] { (i, j) } else { (j, i) };
        for ((gk, a), b) in g.iter_mut().zip(x_c.row(hi)).zip(x_c.row(lo)) {
            *gk += a - b;
        }
    }
    let inv = 1.0 / sel.b_count as f64;
    g.iter_mut().for_each(|v| *v *= inv);
    g
}

/// Objective value, gradient and selection diagnostics by enumeration.
pub fn evaluate(x_c: &Dataset, w: &[f64], b_percent: f64) -> Result<MuEval> {
    let p = project_scalar(x_c, w)?;
    let sel = select_pairs(&p, b_percent)?;
    let delta = sel.delta_star;
    let boundary = sel.selected_pairs.iter().filter(|&&(i, j)| (p[i] - p[j]).abs() == delta).count();
    Ok(MuEval {
        mu: sel.mu,
        grad: gradient_naive(x_c, &p, &sel),
        delta_star: delta,
        boundary_count: boundary,
        b_count: sel.b_count,
    })
}

/// Fits with the naive engine. Refuses more than [`DEFAULT_NAIVE_CAP`]
/// points; use [`optimizer::fit_with`] with `force_naive` to override.
pub fn fit_naive(ds: &Dataset, config: &QpadConfig) -> Result<(ProjectionModel, Vec<AxisFitTrace>)> {
    optimizer::fit(ds, config, Engine::Naive)
}

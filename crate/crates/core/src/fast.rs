//! Exact O(N log N + N n) evaluation of the lower-tail quantile objective.
//!
//! With the projections sorted, `s_1 <= ... <= s_N`, every pairwise distance
//! is `s_j - s_i` for `i < j`, and for a fixed `i` the partners within a
//! threshold form a contiguous run starting at `i + 1`. Counting and summing
//! those runs with a monotone pointer and prefix sums is linear, so the
//! `B`-th smallest distance can be found by bisection on the threshold
//! without materializing any pair.
//!
//! Floating-point subtraction is monotone in each argument, so the computed
//! `s_j - s_i` are ordered exactly as the two-pointer scans assume, and they
//! are bit-identical to the `|p_i - p_j|` the enumeration oracle sorts.

use crate::dataset::Dataset;
use crate::error::{QpadError, Result};
use crate::linalg::{back_project, project_scalar};
use crate::naive::selected_pair_count;
use crate::optimizer::MuEval;

#[derive(Debug, Clone, PartialEq)]
pub struct SortedProjection {
    /// Projected values in non-decreasing order.
    pub s: Vec<f64>,
    /// `order[t]` is the original index of `s[t]`.
    pub order: Vec<usize>,
    /// `prefix[t] = s[0] + ... + s[t - 1]`, length `N + 1`.
    pub prefix: Vec<f64>,
}

impl SortedProjection {
    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn total_pairs(&self) -> usize {
        let n = self.len();
        n * n.saturating_sub(1) / 2
    }

    /// Sum of `s[from..to]`.
    fn range_sum(&self, from: usize, to: usize) -> f64 {
        self.prefix[to] - self.prefix[from]
    }
}

/// Stable argsort of `p` plus prefix sums. Prefix sums are accumulated with
/// Neumaier compensation.
pub fn sort_projection(p: &[f64]) -> SortedProjection {
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
    let s: Vec<f64> = order.iter().map(|&i| p[i]).collect();
    let mut prefix = Vec::with_capacity(s.len() + 1);
    prefix.push(0.0);
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for &v in &s {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
        prefix.push(sum + comp);
    }
    SortedProjection { s, order, prefix }
}

/// For each `i`, the exclusive end of the run `j > i` with `s_j - s_i`
/// satisfying `within`. Calls `visit(i, end)` in ascending `i`.
fn scan_runs(s: &[f64], within: impl Fn(f64) -> bool, mut visit: impl FnMut(usize, usize)) {
    let n = s.len();
    let mut end = 1;
    for i in 0..n {
        end = end.max(i + 1);
        while end < n && within(s[end] - s[i]) {
            end += 1;
        }
        visit(i, end);
    }
}

/// `#{(i, j) : i < j, s_j - s_i <= delta}` in one linear pass.
pub fn count_pairs_leq(sp: &SortedProjection, delta: f64) -> usize {
    let mut count = 0;
    scan_runs(&sp.s, |d| d <= delta, |i, end| count += end - i - 1);
    count
}

/// Count and sum of the pairwise distances strictly below `delta`.
pub fn sum_pairs_lt(sp: &SortedProjection, delta: f64) -> (usize, f64) {
    let (mut count, mut sum) = (0usize, 0.0f64);
    scan_runs(
        &sp.s,
        |d| d < delta,
        |i, end| {
            let k = end - i - 1;
            if k > 0 {
                count += k;
                sum += sp.range_sum(i + 1, end) - k as f64 * sp.s[i];
            }
        },
    );
    (count, sum)
}

/// The `B`-th smallest pairwise distance and how many pairs at exactly that
/// distance are needed to reach `B`.
///
/// Bisection runs over the bit patterns of non-negative doubles, which are
/// ordered like the values themselves. It keeps `count(lo) < B <= count(hi)`
/// and stops when `hi` is the successor of `lo`; because the count only
/// changes at attained distances, `hi` is then an attained distance. At most
/// 64 iterations.
pub fn select_threshold(sp: &SortedProjection, b_count: usize) -> Result<(f64, usize)> {
    let total = sp.total_pairs();
    if b_count == 0 || b_count > total {
        return Err(QpadError::arg(format!("selection size {b_count} outside [1, {total}]")));
    }
    let max_diff = sp.s[sp.len() - 1] - sp.s[0];
    let delta_star = if count_pairs_leq(sp, 0.0) >= b_count {
        0.0
    } else {
        let mut lo = 0.0f64.to_bits();
        let mut hi = max_diff.to_bits();
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if count_pairs_leq(sp, f64::from_bits(mid)) >= b_count {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        f64::from_bits(hi)
    };
    let (below, _) = sum_pairs_lt(sp, delta_star);
    debug_assert!(below < b_count && count_pairs_leq(sp, delta_star) >= b_count);
    Ok((delta_star, b_count - below))
}

/// Net endpoint counts in sorted order: each selected pair `(i, j)`, `i < j`,
/// adds `+1` at `j` and `-1` at `i`. All pairs below `delta_star` are taken,
/// then `boundary` pairs at exactly `delta_star`, by ascending `i` then `j`.
pub fn assemble_coefficients_sorted(sp: &SortedProjection, delta_star: f64, boundary: usize) -> Vec<i64> {
    let n = sp.len();
    let mut c = vec![0i64; n];
    // diff[t] accumulates range starts/ends of the +1 contributions
    let mut diff = vec![0i64; n + 1];
    let mut strict_end = vec![0usize; n];
    scan_runs(
        &sp.s,
        |d| d < delta_star,
        |i, end| {
            strict_end[i] = end;
            let k = (end - i - 1) as i64;
            if k > 0 {
                c[i] -= k;
                diff[i + 1] += 1;
                diff[end] -= 1;
            }
        },
    );
    let mut remaining = boundary;
    if remaining > 0 {
        scan_runs(
            &sp.s,
            |d| d <= delta_star,
            |i, end| {
                if remaining == 0 {
                    return;
                }
                let start = strict_end[i];
                let take = (end - start).min(remaining);
                if take > 0 {
                    c[i] -= take as i64;
                    diff[start] += 1;
                    diff[start + take] -= 1;
                    remaining -= take;
                }
            },
        );
    }
    let mut running = 0i64;
    for (ct, d) in c.iter_mut().zip(&diff) {
        running += d;
        *ct += running;
    }
    c
}

/// [`assemble_coefficients_sorted`] permuted back to original index order.
pub fn assemble_coefficients(sp: &SortedProjection, delta_star: f64, boundary: usize) -> Vec<i64> {
    let sorted = assemble_coefficients_sorted(sp, delta_star, boundary);
    let mut c = vec![0i64; sorted.len()];
    for (t, &orig) in sp.order.iter().enumerate() {
        c[orig] = sorted[t];
    }
    c
}

/// One evaluation of the objective on a single axis.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisEvaluation {
    pub mu: f64,
    /// The `B`-th smallest pairwise projected distance.
    pub delta_star: f64,
    /// Pairs taken at exactly `delta_star`.
    pub boundary_count: usize,
    /// Net endpoint counts in original index order; sums to zero.
    pub c: Vec<i64>,
    pub b_count: usize,
}

/// Objective and coefficients from already-computed projections.
pub fn evaluate_projection(p: &[f64], b_percent: f64) -> Result<AxisEvaluation> {
    if p.len() < 2 {
        return Err(QpadError::arg("need at least 2 projected values"));
    }
    let b_count = selected_pair_count(p.len(), b_percent)?;
    let sp = sort_projection(p);
    let (delta_star, boundary) = select_threshold(&sp, b_count)?;
    let (_, sum_below) = sum_pairs_lt(&sp, delta_star);
    let mu = (sum_below + boundary as f64 * delta_star) / b_count as f64;
    Ok(AxisEvaluation {
        mu,
        delta_star,
        boundary_count: boundary,
        c: assemble_coefficients(&sp, delta_star, boundary),
        b_count,
    })
}

pub fn mu_b_fast(x_c: &Dataset, w: &[f64], b_percent: f64) -> Result<AxisEvaluation> {
    evaluate_projection(&project_scalar(x_c, w)?, b_percent)
}

/// `X^T c / B`.
pub fn gradient_mu(x_c: &Dataset, eval: &AxisEvaluation) -> Result<Vec<f64>> {
    let inv = 1.0 / eval.b_count as f64;
    let weights: Vec<f64> = eval.c.iter().map(|&ci| ci as f64 * inv).collect();
    back_project(x_c, &weights)
}

pub fn evaluate(x_c: &Dataset, w: &[f64], b_percent: f64) -> Result<MuEval> {
    let ev = mu_b_fast(x_c, w, b_percent)?;
    Ok(MuEval {
        mu: ev.mu,
        grad: gradient_mu(x_c, &ev)?,
        delta_star: ev.delta_star,
        boundary_count: ev.boundary_count,
        b_count: ev.b_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sp(s: &[f64]) -> SortedProjection {
        sort_projection(s)
    }

    /// All pairwise diffs, sorted.
    fn brute_diffs(s: &[f64]) -> Vec<f64> {
        let mut d = Vec::new();
        for i in 0..s.len() {
            for j in i + 1..s.len() {
                d.push((s[i] - s[j]).abs());
            }
        }
        d.sort_by(f64::total_cmp);
        d
    }

    #[test]
    fn sort_examples() {
        let a = sp(&[3.0, 1.0, 2.0]);
        assert_eq!(a.s, vec![1.0, 2.0, 3.0]);
        assert_eq!(a.order, vec![1, 2, 0]);
        assert_eq!(a.prefix, vec![0.0, 1.0, 3.0, 6.0]);
        let b = sp(&[5.0, 5.0]);
        assert_eq!(b.order, vec![0, 1]);
    }

    #[test]
    fn count_examples() {
        assert_eq!(count_pairs_leq(&sp(&[0.0, 1.0, 3.0]), 1.0), 1);
        assert_eq!(count_pairs_leq(&sp(&[0.0, 1.0, 3.0]), 2.5), 2);
        assert_eq!(count_pairs_leq(&sp(&[0.0, 0.0, 5.0]), 0.0), 1);
        assert_eq!(count_pairs_leq(&sp(&[0.0, 1.0, 3.0]), 3.0), 3);
    }

    #[test]
    fn sum_examples() {
        assert_eq!(sum_pairs_lt(&sp(&[0.0, 1.0, 3.0]), 3.0), (2, 3.0));
        assert_eq!(sum_pairs_lt(&sp(&[0.0, 1.0, 3.0]), 0.0), (0, 0.0));
        assert_eq!(sum_pairs_lt(&sp(&[0.0, 0.0, 5.0]), 5.0), (1, 0.0));
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(select_threshold(&sp(&[0.0, 1.0, 3.0]), 2).unwrap(), (2.0, 1));
        assert_eq!(select_threshold(&sp(&[0.0, 0.0, 5.0]), 2).unwrap(), (5.0, 1));
        let s = [0.0, 1.0, 2.0, 3.0];
        let diffs = brute_diffs(&s);
        assert_eq!(diffs, vec![1.0, 1.0, 1.0, 2.0, 2.0, 3.0]);
        assert_eq!(select_threshold(&sp(&s), 3).unwrap(), (diffs[2], 3));
        assert!(select_threshold(&sp(&s), 0).is_err());
        assert!(select_threshold(&sp(&s), 7).is_err());
    }

    #[test]
    fn threshold_on_constant_projection() {
        let a = sp(&[2.0; 6]);
        assert_eq!(select_threshold(&a, 15).unwrap(), (0.0, 15));
        let ev = evaluate_projection(&[2.0; 6], 100.0).unwrap();
        assert_eq!(ev.mu, 0.0);
        assert_eq!(ev.c.iter().sum::<i64>(), 0);
        assert_eq!(ev.c, vec![-5, -3, -1, 1, 3, 5]);
    }

    #[test]
    fn one_dimensional_examples() {
        let ev = evaluate_projection(&[0.0, 1.0, 3.0], 100.0).unwrap();
        assert_eq!((ev.mu, ev.delta_star, ev.boundary_count), (2.0, 3.0, 1));
        let ev = evaluate_projection(&[0.0, 1.0, 3.0], 33.4).unwrap();
        assert_eq!((ev.mu, ev.delta_star, ev.boundary_count), (1.0, 1.0, 1));
        assert_eq!(ev.c, vec![-1, 1, 0]);
        let x = Dataset::from_rows(&[vec![0.0], vec![1.0], vec![3.0]]).unwrap();
        assert_eq!(gradient_mu(&x, &ev).unwrap(), vec![1.0]);
    }

    #[test]
    fn coefficient_examples() {
        let a = sp(&[0.0, 1.0, 3.0]);
        assert_eq!(assemble_coefficients_sorted(&a, 2.0, 1), vec![-1, 0, 1]);
        assert_eq!(assemble_coefficients_sorted(&a, 3.0, 1), vec![-2, 0, 2]);
        assert_eq!(assemble_coefficients_sorted(&sp(&[4.0, 9.0]), 5.0, 1), vec![-1, 1]);
    }

    #[test]
    fn zero_coefficients_give_zero_gradient() {
        let x = Dataset::from_rows(&[vec![0.0, 1.0], vec![2.0, 3.0]]).unwrap();
        let ev = AxisEvaluation { mu: 0.0, delta_star: 0.0, boundary_count: 0, c: vec![0, 0], b_count: 1 };
        assert_eq!(gradient_mu(&x, &ev).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn boundary_pairs_by_ascending_i_then_j() {
        // diffs equal to 1: (0,1), (1,2), (2,3); take two -> (0,1), (1,2)
        let a = sp(&[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(assemble_coefficients_sorted(&a, 1.0, 2), vec![-1, 0, 1, 0]);
    }

    #[test]
    fn tiny_distances_are_found_exactly() {
        let s = [0.0, 1e-300, 5e-300, 1.0, 1.0 + f64::EPSILON];
        let diffs = brute_diffs(&s);
        for b in 1..=diffs.len() {
            let (d, r) = select_threshold(&sp(&s), b).unwrap();
            assert_eq!(d, diffs[b - 1], "B = {b}");
            assert!(r >= 1);
        }
    }
}

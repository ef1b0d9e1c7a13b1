//! Dense vector helpers, centering and projection.
//!
//! Products over all rows are split into fixed-size row blocks; partial sums
//! are combined in block order, so results do not depend on the number of
//! worker threads.

use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{QpadError, Result};

/// Rows per block for parallel reductions.
pub const ROW_BLOCK: usize = 8192;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Scales `v` to unit length in place and returns the original norm.
pub fn normalize(v: &mut [f64]) -> f64 {
    let n = norm(v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// `a += scale * b`
pub fn axpy(a: &mut [f64], scale: f64, b: &[f64]) {
    a.iter_mut().zip(b).for_each(|(x, y)| *x += scale * y);
}

/// Subtracts the column means. Returns the centered data and the means.
pub fn center(ds: &Dataset) -> (Dataset, Vec<f64>) {
    let n = ds.dim();
    let mut mean = vec![0.0; n];
    for row in ds.rows() {
        axpy(&mut mean, 1.0, row);
    }
    let inv = 1.0 / ds.len() as f64;
    mean.iter_mut().for_each(|m| *m *= inv);
    let mut data = ds.as_slice().to_vec();
    for row in data.chunks_exact_mut(n) {
        axpy(row, -1.0, &mean);
    }
    let centered = Dataset::new_unchecked_len(data, ds.len(), n).expect("centering finite data stays finite");
    (centered, mean)
}

fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(QpadError::DimensionMismatch { expected, actual });
    }
    Ok(())
}

/// `p_i = <x_i, w>` for every row.
pub fn project_scalar(x: &Dataset, w: &[f64]) -> Result<Vec<f64>> {
    check_dim(x.dim(), w.len())?;
    let mut p = vec![0.0; x.len()];
    p.par_chunks_mut(ROW_BLOCK).zip(x.as_slice().par_chunks(ROW_BLOCK * x.dim())).for_each(|(out, rows)| {
        for (pi, row) in out.iter_mut().zip(rows.chunks_exact(x.dim())) {
            *pi = dot(row, w);
        }
    });
    Ok(p)
}

/// `X^T weights`, a length-`n` vector.
pub fn back_project(x: &Dataset, weights: &[f64]) -> Result<Vec<f64>> {
    check_dim(x.len(), weights.len())?;
    let n = x.dim();
    let partials: Vec<Vec<f64>> = x
        .as_slice()
        .par_chunks(ROW_BLOCK * n)
        .zip(weights.par_chunks(ROW_BLOCK))
        .map(|(rows, ws)| {
            let mut acc = vec![0.0; n];
            for (row, &wt) in rows.chunks_exact(n).zip(ws) {
                if wt != 0.0 {
                    axpy(&mut acc, wt, row);
                }
            }
            acc
        })
        .collect();
    let mut out = vec![0.0; n];
    for part in &partials {
        axpy(&mut out, 1.0, part);
    }
    Ok(out)
}

/// Largest pairwise Euclidean distance, by enumeration. O(N^2 n).
pub fn diameter(x: &Dataset) -> f64 {
    let mut best = 0.0f64;
    for i in 0..x.len() {
        let a = x.row(i);
        for j in i + 1..x.len() {
            let d2: f64 = a.iter().zip(x.row(j)).map(|(u, v)| (u - v) * (u - v)).sum();
            best = best.max(d2);
        }
    }
    best.sqrt()
}

/// Upper bound on the diameter of centered data, `2 max_i |x_i|`, within a
/// factor of two of the true diameter. O(N n).
pub fn centered_radius_bound(x_c: &Dataset) -> f64 {
    2.0 * x_c.rows().map(norm).fold(0.0, f64::max)
}

//! Seeded synthetic datasets for checks, benchmarks and examples.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::dataset::Dataset;
use crate::rng::seeded;

/// `len` points from `N(0, diag(scales^2))`.
pub fn gaussian(len: usize, scales: &[f64], seed: u64) -> Dataset {
    let mut rng = seeded(seed);
    let mut data = Vec::with_capacity(len * scales.len());
    for _ in 0..len {
        for &s in scales {
            let z: f64 = StandardNormal.sample(&mut rng);
            data.push(z * s);
        }
    }
    Dataset::new_unchecked_len(data, len, scales.len()).expect("gaussian samples are finite")
}

/// Isotropic unit-variance Gaussian cloud.
pub fn isotropic(len: usize, dim: usize, seed: u64) -> Dataset {
    gaussian(len, &vec![1.0; dim], seed)
}

/// Mixture of `clusters` isotropic Gaussians with standard deviation
/// `sigma`. Centers sit on scaled coordinate axes so that every pair of
/// centers is exactly `separation * sigma` apart; points are assigned to
/// clusters round-robin. Requires `clusters <= dim`.
pub fn gaussian_mixture(len: usize, dim: usize, clusters: usize, separation: f64, sigma: f64, seed: u64) -> Dataset {
    assert!(clusters >= 1 && clusters <= dim, "need 1 <= clusters <= dim");
    let mut rng = seeded(seed);
    let noise = Normal::new(0.0, sigma).expect("sigma must be finite and non-negative");
    let offset = separation * sigma / std::f64::consts::SQRT_2;
    let mut data = Vec::with_capacity(len * dim);
    for i in 0..len {
        let c = i % clusters;
        for d in 0..dim {
            let center = if d == c { offset } else { 0.0 };
            data.push(center + noise.sample(&mut rng));
        }
    }
    Dataset::new_unchecked_len(data, len, dim).expect("mixture samples are finite")
}

/// Gaussian data where each value is rounded to a coarse grid, forcing
/// repeated projections and tied pairwise distances.
pub fn with_duplicates(len: usize, dim: usize, seed: u64) -> Dataset {
    let mut rng = seeded(seed);
    let levels = rng.random_range(2..5) as f64;
    let base = isotropic(len, dim, seed ^ 0x5eed);
    let data = base.as_slice().iter().map(|v| (v * levels).round() / levels).collect();
    let mut ds = Dataset::new_unchecked_len(data, len, dim).expect("finite");
    // duplicate some whole rows too
    if len >= 4 {
        let mut raw = ds.into_vec();
        for i in (0..len).step_by(3).skip(1) {
            let src = rng.random_range(0..len);
            let row: Vec<f64> = raw[src * dim..(src + 1) * dim].to_vec();
            raw[i * dim..(i + 1) * dim].copy_from_slice(&row);
        }
        ds = Dataset::new_unchecked_len(raw, len, dim).expect("finite");
    }
    ds
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm;

    #[test]
    fn mixture_centers_are_separated() {
        let ds = gaussian_mixture(4000, 5, 4, 4.0, 1.0, 1);
        let mut centers = vec![vec![0.0; 5]; 4];
        for (i, row) in ds.rows().enumerate() {
            for (c, v) in centers[i % 4].iter_mut().zip(row) {
                *c += v / 1000.0;
            }
        }
        let d: Vec<f64> = centers[0].iter().zip(&centers[1]).map(|(a, b)| a - b).collect();
        assert!((norm(&d) - 4.0).abs() < 0.2, "{}", norm(&d));
    }

    #[test]
    fn generators_are_seeded() {
        assert_eq!(isotropic(10, 3, 4), isotropic(10, 3, 4));
        assert_ne!(isotropic(10, 3, 4), isotropic(10, 3, 5));
        assert_eq!(with_duplicates(30, 4, 2), with_duplicates(30, 4, 2));
    }
}

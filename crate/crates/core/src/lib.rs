//! Quantile-preserving linear dimension reduction.
//!
//! Each output axis `w_k` is a unit vector chosen to maximize the mean of the
//! smallest `b%` of pairwise distances between projected points, minus a soft
//! penalty `alpha * sum_{j<k} (w_j . w_k)^2` against earlier axes. Stretching
//! the smallest gaps keeps true nearest neighbors apart from impostors after
//! reduction.
//!
//! Two evaluators compute the same objective: [`naive`] enumerates and sorts
//! all pairs, [`fast`] selects the threshold with two-pointer scans in
//! `O(N log N + N n)`. [`optimizer`] fits the axes; [`eval`] measures
//! Recall@k against exact neighbors.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod fast;
pub mod linalg;
pub mod model;
pub mod naive;
pub mod optimizer;
pub mod rng;
pub mod selfcheck;
pub mod synth;

pub use dataset::{Dataset, Split, SplitSpec};
pub use error::{QpadError, Result};
pub use fast::AxisEvaluation;
pub use model::{Engine, FitDescriptor, ProjectionModel, QpadConfig, RpVariant};
pub use optimizer::{fit, fit_with, AxisFitTrace, FitOptions};

//! Exact k-NN ground truth, Recall@k, the random-projection baseline, and
//! the parameter sweep runner.

use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{QpadError, Result};
use crate::model::{Engine, FitDescriptor, ProjectionModel, QpadConfig, RpVariant};
use crate::optimizer::{fit_with, FitOptions};
use crate::rng::{derive_seed, seeded};

/// Per-query nearest base vectors, ascending by distance.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborTable {
    ids: Vec<usize>,
    distances: Vec<f64>,
    queries: usize,
    k: usize,
}

impl NeighborTable {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn query_count(&self) -> usize {
        self.queries
    }

    pub fn ids(&self, q: usize) -> &[usize] {
        &self.ids[q * self.k..(q + 1) * self.k]
    }

    pub fn distances(&self, q: usize) -> &[f64] {
        &self.distances[q * self.k..(q + 1) * self.k]
    }

    pub fn from_ids(rows: Vec<Vec<usize>>) -> Result<Self> {
        let k = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != k) {
            return Err(QpadError::arg("neighbor rows differ in length"));
        }
        let queries = rows.len();
        Ok(Self { ids: rows.concat(), distances: vec![0.0; queries * k], queries, k })
    }
}

/// Brute-force Euclidean k-NN of every query among `base`. Ties at equal
/// distance go to the lower base index.
pub fn exact_knn(base: &Dataset, queries: &Dataset, k: usize) -> Result<NeighborTable> {
    if base.dim() != queries.dim() {
        return Err(QpadError::DimensionMismatch { expected: base.dim(), actual: queries.dim() });
    }
    if k == 0 || k > base.len() {
        return Err(QpadError::arg(format!("k = {k} must lie in [1, {}] (base size)", base.len())));
    }
    let per_query: Vec<(Vec<usize>, Vec<f64>)> = (0..queries.len())
        .into_par_iter()
        .map(|q| {
            let qv = queries.row(q);
            let mut cand: Vec<(f64, usize)> = base
                .rows()
                .enumerate()
                .map(|(i, b)| {
                    let d2: f64 = qv.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                    (d2, i)
                })
                .collect();
            let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            if k < cand.len() {
                cand.select_nth_unstable_by(k - 1, cmp);
                cand.truncate(k);
            }
            cand.sort_unstable_by(cmp);
            cand.into_iter().map(|(d2, i)| (i, d2.sqrt())).unzip()
        })
        .collect();
    let mut ids = Vec::with_capacity(queries.len() * k);
    let mut distances = Vec::with_capacity(queries.len() * k);
    for (i, d) in per_query {
        ids.extend(i);
        distances.extend(d);
    }
    Ok(NeighborTable { ids, distances, queries: queries.len(), k })
}

/// Mean over queries of `|N_k(y) ∩ N'_k(y)| / k`, using the first `k`
/// columns of each table.
pub fn recall_at_k(truth: &NeighborTable, reduced: &NeighborTable, k: usize) -> Result<f64> {
    if truth.queries != reduced.queries {
        return Err(QpadError::arg(format!("tables cover {} and {} queries", truth.queries, reduced.queries)));
    }
    if k == 0 || k > truth.k || k > reduced.k {
        return Err(QpadError::arg(format!("k = {k} exceeds table widths {} / {}", truth.k, reduced.k)));
    }
    if truth.queries == 0 {
        return Err(QpadError::arg("no queries"));
    }
    let mut total = 0.0;
    for q in 0..truth.queries {
        let a = &truth.ids(q)[..k];
        let b = &reduced.ids(q)[..k];
        let hits = a.iter().filter(|id| b.contains(id)).count();
        total += hits as f64 / k as f64;
    }
    Ok(total / truth.queries as f64)
}

/// Johnson-Lindenstrauss style random projection with zero mean.
///
/// Gaussian entries are `N(0, 1) / sqrt(m)`; sparse entries are
/// `±sqrt(3/m)` with probability 1/6 each and 0 otherwise. Rows are not
/// normalized.
pub fn random_projection_fit(n: usize, m: usize, seed: u64, variant: RpVariant) -> Result<ProjectionModel> {
    if m == 0 || m > n {
        return Err(QpadError::arg(format!("need 1 <= m <= n, got m = {m}, n = {n}")));
    }
    let mut rng = seeded(seed);
    let scale = 1.0 / (m as f64).sqrt();
    let sparse = (3.0 / m as f64).sqrt();
    let directions = (0..m * n)
        .map(|_| match variant {
            RpVariant::Gaussian => {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * scale
            }
            RpVariant::Sparse => match rng.random_range(0..6u8) {
                0 => sparse,
                1 => -sparse,
                _ => 0.0,
            },
        })
        .collect();
    ProjectionModel::new(directions, vec![0.0; n], m, false, FitDescriptor::RandomProjection { variant, seed })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Qpad,
    RpGaussian,
    RpSparse,
}

impl Method {
    fn id(self) -> u64 {
        match self {
            Method::Qpad => 0,
            Method::RpGaussian => 1,
            Method::RpSparse => 2,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Qpad => "qpad",
            Method::RpGaussian => "rp-gaussian",
            Method::RpSparse => "rp-sparse",
        })
    }
}

impl FromStr for Method {
    type Err = QpadError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "qpad" => Ok(Method::Qpad),
            "rp" | "rp-gaussian" => Ok(Method::RpGaussian),
            "rp-sparse" => Ok(Method::RpSparse),
            other => Err(QpadError::arg(format!("unknown method {other:?} (qpad|rp-gaussian|rp-sparse)"))),
        }
    }
}

/// Target dimension for a retention ratio: `round(drr * n)`, at least 1.
pub fn target_dim(drr: f64, n: usize) -> Result<usize> {
    if !(drr > 0.0 && drr <= 1.0) {
        return Err(QpadError::arg(format!("DRR {drr} must lie in (0, 1]")));
    }
    Ok(((drr * n as f64).round() as usize).clamp(1, n))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecallRow {
    pub method: Method,
    pub drr: f64,
    pub k: usize,
    pub alpha: Option<f64>,
    pub b: Option<f64>,
    /// `Err` holds the failure message of a cell that could not be run.
    pub recall: std::result::Result<f64, String>,
    pub fit_seconds: f64,
    pub transform_seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RecallReport {
    pub rows: Vec<RecallRow>,
}

pub const REPORT_HEADER: &str = "method,drr,k,alpha,b,recall,fit_seconds,transform_seconds";

impl RecallReport {
    /// CSV with [`REPORT_HEADER`]. Without timings the two time columns are
    /// left empty so that repeated runs produce identical bytes.
    pub fn to_csv(&self, include_timings: bool) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut s = format!("{REPORT_HEADER}\n");
        for r in &self.rows {
            let recall = match &r.recall {
                Ok(v) => v.to_string(),
                Err(msg) => format!("error: {}", msg.replace([',', '\n'], ";")),
            };
            let (fit, tr) = if include_timings {
                (format!("{:.6}", r.fit_seconds), format!("{:.6}", r.transform_seconds))
            } else {
                (String::new(), String::new())
            };
            let _ = writeln!(s, "{},{},{},{},{},{recall},{fit},{tr}", r.method, r.drr, r.k, opt(r.alpha), opt(r.b));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WinnerTally {
    pub method: String,
    pub wins_first: usize,
    pub wins_second: usize,
}

pub fn tally_csv(tally: &[WinnerTally]) -> String {
    let mut s = String::from("method,wins_first,wins_second\n");
    for t in tally {
        let _ = writeln!(s, "{},{},{}", t.method, t.wins_first, t.wins_second);
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub drr: Vec<f64>,
    pub k: Vec<usize>,
    pub alpha: Vec<f64>,
    pub b: Vec<f64>,
}

impl SweepGrid {
    /// The full grid swept in the original experiments.
    pub fn reference() -> Self {
        Self {
            drr: vec![0.05, 0.1, 0.2, 0.4, 0.6],
            k: vec![1, 3, 6, 10, 15],
            alpha: vec![1.0, 6.0, 12.0, 18.0, 25.0, 35.0, 50.0, 10000.0],
            b: vec![60.0, 70.0, 80.0, 90.0, 100.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub grid: SweepGrid,
    pub methods: Vec<Method>,
    pub seed: u64,
    /// Template for QPAD fits; `m`, `alpha`, `b_percent` and `seed` are
    /// overwritten per cell.
    pub qpad: QpadConfig,
    pub fit_options: FitOptions,
    /// Fits per cell; reported times are the median.
    pub repeats: usize,
}

impl SweepConfig {
    pub fn new(grid: SweepGrid, methods: Vec<Method>, seed: u64) -> Self {
        Self {
            grid,
            methods,
            seed,
            qpad: QpadConfig::default(),
            fit_options: FitOptions { engine: Engine::Fast, ..FitOptions::default() },
            repeats: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub report: RecallReport,
    pub tally: Vec<WinnerTally>,
}

struct FitCell {
    method: Method,
    drr_idx: usize,
    alpha_idx: Option<usize>,
    b_idx: Option<usize>,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

/// Fits `model` `repeats` times via `make`, returning the last model and the
/// median fit time.
fn timed_fit(repeats: usize, mut make: impl FnMut() -> Result<ProjectionModel>) -> Result<(ProjectionModel, f64)> {
    let mut times = Vec::with_capacity(repeats);
    let mut model = None;
    for _ in 0..repeats.max(1) {
        let t0 = Instant::now();
        model = Some(make()?);
        times.push(t0.elapsed().as_secs_f64());
    }
    Ok((model.expect("at least one repeat"), median(times)))
}

/// Recall@k of a model for each requested k, with transform and search
/// against exact ground truth. Returns `(recalls, transform_seconds)`.
pub fn evaluate_model(
    model: &ProjectionModel,
    train: &Dataset,
    queries: &Dataset,
    truth: &NeighborTable,
    ks: &[usize],
) -> Result<(Vec<f64>, f64)> {
    let k_max = ks.iter().copied().max().unwrap_or(0);
    let t0 = Instant::now();
    let base_r = model.transform(train)?;
    let query_r = model.transform(queries)?;
    let transform_seconds = t0.elapsed().as_secs_f64();
    let reduced = exact_knn(&base_r, &query_r, k_max)?;
    let recalls = ks.iter().map(|&k| recall_at_k(truth, &reduced, k)).collect::<Result<Vec<_>>>()?;
    Ok((recalls, transform_seconds))
}

/// Runs every (method, DRR, alpha, b) fit on `train`, scores each k against
/// exact neighbors of `queries`, and tallies first/second places.
///
/// Cells run in parallel on the current rayon pool; each seeds from
/// `(seed, method, cell coordinates)`, so results do not depend on
/// scheduling. A failing cell yields error rows and the sweep continues.
pub fn run_sweep(train: &Dataset, queries: &Dataset, cfg: &SweepConfig) -> Result<SweepOutcome> {
    let grid = &cfg.grid;
    if grid.k.is_empty() || grid.drr.is_empty() || cfg.methods.is_empty() {
        return Err(QpadError::arg("sweep grid needs at least one DRR, k and method"));
    }
    for &d in &grid.drr {
        target_dim(d, train.dim())?;
    }
    let k_max = *grid.k.iter().max().unwrap();
    let truth = exact_knn(train, queries, k_max)?;

    let mut cells = Vec::new();
    for &method in &cfg.methods {
        for drr_idx in 0..grid.drr.len() {
            if method == Method::Qpad {
                for a in 0..grid.alpha.len() {
                    for b in 0..grid.b.len() {
                        cells.push(FitCell { method, drr_idx, alpha_idx: Some(a), b_idx: Some(b) });
                    }
                }
            } else {
                cells.push(FitCell { method, drr_idx, alpha_idx: None, b_idx: None });
            }
        }
    }

    let rows: Vec<Vec<RecallRow>> = cells
        .par_iter()
        .map(|cell| {
            let drr = grid.drr[cell.drr_idx];
            let alpha = cell.alpha_idx.map(|i| grid.alpha[i]);
            let b = cell.b_idx.map(|i| grid.b[i]);
            let coords = [
                cell.method.id(),
                cell.drr_idx as u64,
                cell.alpha_idx.map_or(u64::MAX, |i| i as u64),
                cell.b_idx.map_or(u64::MAX, |i| i as u64),
            ];
            let seed = derive_seed(cfg.seed, &coords);
            let result = (|| -> Result<(Vec<f64>, f64, f64)> {
                let m = target_dim(drr, train.dim())?;
                let (model, fit_s) = timed_fit(cfg.repeats, || match cell.method {
                    Method::Qpad => {
                        let config =
                            QpadConfig { m, alpha: alpha.unwrap(), b_percent: b.unwrap(), seed, ..cfg.qpad.clone() };
                        fit_with(train, &config, &cfg.fit_options).map(|(model, _)| model)
                    }
                    Method::RpGaussian => random_projection_fit(train.dim(), m, seed, RpVariant::Gaussian),
                    Method::RpSparse => random_projection_fit(train.dim(), m, seed, RpVariant::Sparse),
                })?;
                let (recalls, tr_s) = evaluate_model(&model, train, queries, &truth, &grid.k)?;
                Ok((recalls, fit_s, tr_s))
            })();
            grid.k
                .iter()
                .enumerate()
                .map(|(ki, &k)| {
                    let (recall, fit_seconds, transform_seconds) = match &result {
                        Ok((r, f, t)) => (Ok(r[ki]), *f, *t),
                        Err(e) => (Err(e.to_string()), 0.0, 0.0),
                    };
                    RecallRow { method: cell.method, drr, k, alpha, b, recall, fit_seconds, transform_seconds }
                })
                .collect()
        })
        .collect();
    let report = RecallReport { rows: rows.into_iter().flatten().collect() };
    let tally = tally_winners(&report, &cfg.methods);
    Ok(SweepOutcome { report, tally })
}

/// Counts first and second places. When QPAD is in the sweep each of its
/// `(DRR, k, alpha, b)` rows is compared against the baselines at the same
/// `(DRR, k)`; otherwise baselines are compared per `(DRR, k)`. Ties go to
/// the method listed first. Failed rows do not compete.
pub fn tally_winners(report: &RecallReport, methods: &[Method]) -> Vec<WinnerTally> {
    let mut tally: Vec<WinnerTally> =
        methods.iter().map(|m| WinnerTally { method: m.to_string(), wins_first: 0, wins_second: 0 }).collect();
    let rank_of = |m: Method| methods.iter().position(|&x| x == m).unwrap_or(usize::MAX);
    let same_cell = |a: &RecallRow, b: &RecallRow| a.drr == b.drr && a.k == b.k;
    let baselines: Vec<&RecallRow> = report.rows.iter().filter(|r| r.method != Method::Qpad).collect();

    let mut groups: Vec<Vec<&RecallRow>> = Vec::new();
    if methods.contains(&Method::Qpad) {
        for q in report.rows.iter().filter(|r| r.method == Method::Qpad) {
            let mut g = vec![q];
            g.extend(baselines.iter().copied().filter(|b| same_cell(b, q)));
            groups.push(g);
        }
    } else {
        for b in &baselines {
            if !groups.iter().any(|g| same_cell(g[0], b)) {
                groups.push(baselines.iter().copied().filter(|x| same_cell(x, b)).collect());
            }
        }
    }
    for group in groups {
        let mut ranked: Vec<(f64, usize)> =
            group.iter().filter_map(|r| r.recall.as_ref().ok().map(|&v| (v, rank_of(r.method)))).collect();
        ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        if let Some(&(_, first)) = ranked.first() {
            tally[first].wins_first += 1;
        }
        if let Some(&(_, second)) = ranked.get(1) {
            tally[second].wins_second += 1;
        }
    }
    tally
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(rows: &[Vec<f64>]) -> Dataset {
        Dataset::new_unchecked_len(rows.concat(), rows.len(), rows[0].len()).unwrap()
    }

    #[test]
    fn knn_examples() {
        let base = ds(&[vec![0.0], vec![1.0], vec![10.0]]);
        let t = exact_knn(&base, &ds(&[vec![0.4]]), 2).unwrap();
        assert_eq!(t.ids(0), &[0, 1]);
        let t = exact_knn(&base, &ds(&[vec![10.0]]), 1).unwrap();
        assert_eq!((t.ids(0), t.distances(0)), (&[2usize][..], &[0.0][..]));
        let t = exact_knn(&base, &ds(&[vec![6.0]]), 3).unwrap();
        assert_eq!(t.ids(0), &[2, 1, 0]);
        assert!(exact_knn(&base, &ds(&[vec![6.0]]), 4).is_err());
    }

    #[test]
    fn knn_ties_go_to_lower_index() {
        let base = ds(&[vec![1.0], vec![-1.0], vec![1.0], vec![3.0]]);
        let t = exact_knn(&base, &ds(&[vec![0.0]]), 2).unwrap();
        assert_eq!(t.ids(0), &[0, 1]);
    }

    #[test]
    fn recall_examples() {
        let a = NeighborTable::from_ids(vec![vec![1, 2], vec![3, 4]]).unwrap();
        assert_eq!(recall_at_k(&a, &a, 2).unwrap(), 1.0);
        let b = NeighborTable::from_ids(vec![vec![5, 6], vec![7, 8]]).unwrap();
        assert_eq!(recall_at_k(&a, &b, 2).unwrap(), 0.0);
        let c = NeighborTable::from_ids(vec![vec![2, 1], vec![4, 9]]).unwrap();
        assert_eq!(recall_at_k(&a, &c, 2).unwrap(), 0.75);
        let short = NeighborTable::from_ids(vec![vec![1, 2]]).unwrap();
        assert!(recall_at_k(&a, &short, 2).is_err());
    }

    #[test]
    fn rp_is_seeded_and_sparse_values_restricted() {
        let a = random_projection_fit(20, 5, 3, RpVariant::Gaussian).unwrap();
        let b = random_projection_fit(20, 5, 3, RpVariant::Gaussian).unwrap();
        assert_eq!(a, b);
        assert!(!a.unit_rows());
        let s = random_projection_fit(20, 5, 3, RpVariant::Sparse).unwrap();
        let v = (3.0f64 / 5.0).sqrt();
        assert!(s.directions().flatten().all(|&x| x == 0.0 || x == v || x == -v));
    }

    #[test]
    fn target_dim_rounding() {
        assert_eq!(target_dim(0.2, 64).unwrap(), 13);
        assert_eq!(target_dim(0.05, 10).unwrap(), 1);
        assert_eq!(target_dim(1.0, 7).unwrap(), 7);
        assert!(target_dim(0.0, 7).is_err());
        assert!(target_dim(1.5, 7).is_err());
    }

    #[test]
    fn report_csv_layout() {
        let report = RecallReport {
            rows: vec![RecallRow {
                method: Method::RpGaussian,
                drr: 0.2,
                k: 10,
                alpha: None,
                b: None,
                recall: Ok(0.5),
                fit_seconds: 1.25,
                transform_seconds: 0.5,
            }],
        };
        assert_eq!(
            report.to_csv(false),
            "method,drr,k,alpha,b,recall,fit_seconds,transform_seconds\nrp-gaussian,0.2,10,,,0.5,,\n"
        );
        assert!(report.to_csv(true).ends_with("0.5,1.250000,0.500000\n"));
    }
}

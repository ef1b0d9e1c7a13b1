//! Fitted projection models, their hyperparameters, and the `QPADv1` text
//! container.
//!
//! ```text
//! QPADv1
//! m 2
//! n 3
//! unit_rows true
//! fit qpad engine=fast b_percent=70 alpha=1 max_iters_per_axis=100 grad_tol=0.000001 seed=42 restarts_per_axis=3
//! mean 0.5 -1 2
//! row 1 0 0
//! row 0 1 0
//! ```
//!
//! Floats are written in Rust's shortest round-trip form, so a model read
//! back is bit-identical to the one written.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::dataset::Dataset;
use crate::error::{QpadError, Result};
use crate::linalg::{axpy, dot, norm};

pub const MAGIC: &str = "QPADv1";

/// Which evaluator drives the per-axis objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Engine {
    #[default]
    Fast,
    Naive,
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Engine::Fast => "fast",
            Engine::Naive => "naive",
        })
    }
}

impl FromStr for Engine {
    type Err = QpadError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fast" => Ok(Engine::Fast),
            "naive" => Ok(Engine::Naive),
            other => Err(QpadError::arg(format!("unknown engine {other:?} (fast|naive)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpadConfig {
    /// Target dimension.
    pub m: usize,
    /// Share of smallest pairwise projected distances averaged, in percent.
    pub b_percent: f64,
    /// Soft orthogonality penalty weight.
    pub alpha: f64,
    pub max_iters_per_axis: usize,
    /// Stop when the tangent gradient norm falls below `grad_tol` times the
    /// data diameter bound.
    pub grad_tol: f64,
    pub seed: u64,
    pub restarts_per_axis: usize,
}

impl QpadConfig {
    pub fn new(m: usize) -> Self {
        Self { m, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 1 {
            return Err(QpadError::arg("m must be >= 1"));
        }
        if !(self.b_percent > 0.0 && self.b_percent <= 100.0) {
            return Err(QpadError::arg(format!("b_percent {} must lie in (0, 100]", self.b_percent)));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(QpadError::arg(format!("alpha {} must be finite and >= 0", self.alpha)));
        }
        if self.max_iters_per_axis < 1 {
            return Err(QpadError::arg("max_iters_per_axis must be >= 1"));
        }
        if self.grad_tol.is_nan() || self.grad_tol < 0.0 {
            return Err(QpadError::arg("grad_tol must be >= 0"));
        }
        if self.restarts_per_axis < 1 {
            return Err(QpadError::arg("restarts_per_axis must be >= 1"));
        }
        Ok(())
    }
}

impl Default for QpadConfig {
    fn default() -> Self {
        Self {
            m: 1,
            b_percent: 70.0,
            alpha: 1.0,
            max_iters_per_axis: 100,
            grad_tol: 1e-6,
            seed: 0,
            restarts_per_axis: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RpVariant {
    Gaussian,
    Sparse,
}

impl fmt::Display for RpVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RpVariant::Gaussian => "gaussian",
            RpVariant::Sparse => "sparse",
        })
    }
}

impl FromStr for RpVariant {
    type Err = QpadError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(RpVariant::Gaussian),
            "sparse" => Ok(RpVariant::Sparse),
            other => Err(QpadError::arg(format!("unknown random projection variant {other:?} (gaussian|sparse)"))),
        }
    }
}

/// How a model was produced.
#[derive(Debug, Clone, PartialEq)]
pub enum FitDescriptor {
    Qpad { config: QpadConfig, engine: Engine },
    RandomProjection { variant: RpVariant, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionModel {
    directions: Vec<f64>,
    mean: Vec<f64>,
    m: usize,
    n: usize,
    unit_rows: bool,
    fit: FitDescriptor,
}

impl ProjectionModel {
    /// `directions` is row-major `m x n`. When `unit_rows` is set every row
    /// must have norm 1 within 1e-12.
    pub fn new(directions: Vec<f64>, mean: Vec<f64>, m: usize, unit_rows: bool, fit: FitDescriptor) -> Result<Self> {
        let n = mean.len();
        if m == 0 || n == 0 {
            return Err(QpadError::Model("m and n must be >= 1".into()));
        }
        if m > n {
            return Err(QpadError::Model(format!("m = {m} exceeds n = {n}")));
        }
        if directions.len() != m * n {
            return Err(QpadError::Model(format!(
                "{} direction values do not form {m} rows of length {n}",
                directions.len()
            )));
        }
        if !mean.iter().chain(&directions).all(|v| v.is_finite()) {
            return Err(QpadError::Model("non-finite mean or direction value".into()));
        }
        if unit_rows {
            for (k, row) in directions.chunks_exact(n).enumerate() {
                let len = norm(row);
                if (len - 1.0).abs() > 1e-12 {
                    return Err(QpadError::Model(format!("row {k} has norm {len}, expected 1")));
                }
            }
        }
        Ok(Self { directions, mean, m, n, unit_rows, fit })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn unit_rows(&self) -> bool {
        self.unit_rows
    }

    pub fn fit(&self) -> &FitDescriptor {
        &self.fit
    }

    pub fn direction(&self, k: usize) -> &[f64] {
        &self.directions[k * self.n..(k + 1) * self.n]
    }

    pub fn directions(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.directions.chunks_exact(self.n)
    }

    /// `M (x - mean)` for a single vector.
    pub fn transform_one(&self, x: &[f64], out: &mut [f64]) {
        let mut centered = x.to_vec();
        axpy(&mut centered, -1.0, &self.mean);
        for (o, w) in out.iter_mut().zip(self.directions()) {
            *o = dot(w, &centered);
        }
    }

    /// Maps every row through `x -> M (x - mean)`.
    pub fn transform(&self, ds: &Dataset) -> Result<Dataset> {
        if ds.dim() != self.n {
            return Err(QpadError::DimensionMismatch { expected: self.n, actual: ds.dim() });
        }
        let mut out = vec![0.0; ds.len() * self.m];
        for (row, dst) in ds.rows().zip(out.chunks_exact_mut(self.m)) {
            self.transform_one(row, dst);
        }
        Dataset::new_unchecked_len(out, ds.len(), self.m)
    }

    pub fn to_text(&self) -> String {
        let join = |vals: &[f64]| vals.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ");
        let mut s = format!(
            "{MAGIC}\nm {}\nn {}\nunit_rows {}\nfit {}\nmean {}\n",
            self.m,
            self.n,
            self.unit_rows,
            describe_fit(&self.fit),
            join(&self.mean)
        );
        for row in self.directions() {
            s.push_str("row ");
            s.push_str(&join(row));
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(MAGIC) {
            return Err(QpadError::Model(format!("missing {MAGIC} header")));
        }
        let mut field = |key: &str| -> Result<String> {
            let line = lines.next().ok_or_else(|| QpadError::Model(format!("missing `{key}` line")))?;
            line.strip_prefix(key)
                .and_then(|rest| rest.strip_prefix(' ').or(Some(rest).filter(|r| r.is_empty())))
                .map(str::to_owned)
                .ok_or_else(|| QpadError::Model(format!("expected `{key}` line, got {line:?}")))
        };
        let m: usize = parse_num(&field("m")?, "m")?;
        let n: usize = parse_num(&field("n")?, "n")?;
        let unit_rows: bool = parse_num(&field("unit_rows")?, "unit_rows")?;
        let fit = parse_fit(&field("fit")?, m)?;
        let mean = parse_floats(&field("mean")?, n, "mean")?;
        let mut directions = Vec::with_capacity(m * n);
        for k in 0..m {
            directions.extend(parse_floats(&field("row")?, n, &format!("row {k}"))?);
        }
        Self::new(directions, mean, m, unit_rows, fit)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| QpadError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| QpadError::io(path, e))?;
        Self::from_text(&text)
    }
}

fn parse_num<T: FromStr>(s: &str, what: &str) -> Result<T> {
    s.trim().parse().map_err(|_| QpadError::Model(format!("bad value {s:?} for {what}")))
}

fn parse_floats(s: &str, n: usize, what: &str) -> Result<Vec<f64>> {
    let vals = s.split_whitespace().map(|t| parse_num::<f64>(t, what)).collect::<Result<Vec<_>>>()?;
    if vals.len() != n {
        return Err(QpadError::Model(format!("{what}: {} values, expected {n}", vals.len())));
    }
    Ok(vals)
}

fn describe_fit(fit: &FitDescriptor) -> String {
    match fit {
        FitDescriptor::Qpad { config: c, engine } => format!(
            "qpad engine={engine} b_percent={} alpha={} max_iters_per_axis={} grad_tol={} seed={} restarts_per_axis={}",
            c.b_percent, c.alpha, c.max_iters_per_axis, c.grad_tol, c.seed, c.restarts_per_axis
        ),
        FitDescriptor::RandomProjection { variant, seed } => {
            format!("rp variant={variant} seed={seed}")
        }
    }
}

// `m` is carried by the model header rather than the descriptor.
fn parse_fit(s: &str, m: usize) -> Result<FitDescriptor> {
    let mut parts = s.split_whitespace();
    let kind = parts.next().unwrap_or_default();
    let kv: Vec<(&str, &str)> = parts.map(|p| p.split_once('=').unwrap_or((p, ""))).collect();
    let get = |key: &str| -> Result<&str> {
        kv.iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| *v)
            .ok_or_else(|| QpadError::Model(format!("fit descriptor lacks `{key}`")))
    };
    match kind {
        "qpad" => Ok(FitDescriptor::Qpad {
            engine: get("engine")?.parse()?,
            config: QpadConfig {
                m,
                b_percent: parse_num(get("b_percent")?, "b_percent")?,
                alpha: parse_num(get("alpha")?, "alpha")?,
                max_iters_per_axis: parse_num(get("max_iters_per_axis")?, "max_iters_per_axis")?,
                grad_tol: parse_num(get("grad_tol")?, "grad_tol")?,
                seed: parse_num(get("seed")?, "seed")?,
                restarts_per_axis: parse_num(get("restarts_per_axis")?, "restarts_per_axis")?,
            },
        }),
        "rp" => Ok(FitDescriptor::RandomProjection {
            variant: get("variant")?.parse()?,
            seed: parse_num(get("seed")?, "seed")?,
        }),
        other => Err(QpadError::Model(format!("unknown fit kind {other:?}"))),
    }
}

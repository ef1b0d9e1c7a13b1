//! Vector datasets: in-memory representation, on-disk formats, and the
//! train/query split used by the evaluation harness.
//!
//! The `.fvecs`, `.bvecs` and `.ivecs` formats are the TEXMEX corpus layout:
//! every record is a little-endian `i32` dimension header followed by that
//! many little-endian payload elements (`f32`, `u8` or `i32`). All values are
//! widened to `f64` on load.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;

use crate::error::{QpadError, Result};
use crate::rng::seeded;

/// Immutable `N x n` matrix of finite values, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    data: Vec<f64>,
    len: usize,
    dim: usize,
}

impl Dataset {
    /// Builds a dataset from row-major values, enforcing `N >= 2`, `n >= 1`
    /// and finiteness of every entry.
    pub fn new(data: Vec<f64>, len: usize, dim: usize) -> Result<Self> {
        let ds = Self::new_unchecked_len(data, len, dim)?;
        if len < 2 {
            return Err(QpadError::InvalidDataset(format!("need at least 2 vectors, got {len}")));
        }
        Ok(ds)
    }

    /// Like [`Dataset::new`] but allows fewer than two rows. Used for reduced
    /// outputs and single-query sets, which are never fitted on.
    pub fn new_unchecked_len(data: Vec<f64>, len: usize, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(QpadError::InvalidDataset("dimension must be >= 1".into()));
        }
        if data.len() != len * dim {
            return Err(QpadError::InvalidDataset(format!(
                "{} values do not form {len} rows of dimension {dim}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(QpadError::InvalidDataset(format!(
                "non-finite value {} at row {}, column {}",
                data[pos],
                pos / dim,
                pos % dim
            )));
        }
        Ok(Self { data, len, dim })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != dim) {
            return Err(QpadError::InvalidDataset(format!("row {i} has dimension {}, expected {dim}", r.len())));
        }
        if rows.is_empty() {
            return Err(QpadError::InvalidDataset("need at least 2 vectors, got 0".into()));
        }
        let data = rows.iter().flatten().copied().collect();
        Self::new(data, rows.len(), dim)
    }

    /// Number of vectors (N).
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Ambient dimension (n).
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Rows at the given indices, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            if i >= self.len {
                return Err(QpadError::arg(format!("row index {i} out of range for {} rows", self.len)));
            }
            data.extend_from_slice(self.row(i));
        }
        Self::new_unchecked_len(data, indices.len(), self.dim)
    }

    /// Keeps `count` randomly chosen columns (ascending column order), the
    /// choice being a function of `seed` only.
    pub fn select_columns(&self, count: usize, seed: u64) -> Result<Self> {
        if count == 0 || count > self.dim {
            return Err(QpadError::arg(format!("cannot select {count} columns out of {}", self.dim)));
        }
        let mut cols: Vec<usize> = (0..self.dim).collect();
        cols.shuffle(&mut seeded(seed));
        cols.truncate(count);
        cols.sort_unstable();
        let mut data = Vec::with_capacity(self.len * count);
        for r in self.rows() {
            data.extend(cols.iter().map(|&c| r[c]));
        }
        Self::new_unchecked_len(data, self.len, count)
    }
}

/// Held-out query selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSpec {
    pub query_count: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct Split {
    pub train: Dataset,
    pub queries: Dataset,
    /// Original row indices of `train`, ascending.
    pub train_indices: Vec<usize>,
    /// Original row indices of `queries`, ascending.
    pub query_indices: Vec<usize>,
}

/// Partitions `ds` into a training set and `spec.query_count` held-out
/// queries. Both sides keep their original relative row order.
pub fn split(ds: &Dataset, spec: SplitSpec) -> Result<Split> {
    let n = ds.len();
    if spec.query_count == 0 || spec.query_count + 1 >= n {
        return Err(QpadError::arg(format!(
            "query_count {} must satisfy 1 <= query_count < N - 1 = {}",
            spec.query_count,
            n.saturating_sub(1)
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut seeded(spec.seed));
    let mut query_indices = perm[..spec.query_count].to_vec();
    let mut train_indices = perm[spec.query_count..].to_vec();
    query_indices.sort_unstable();
    train_indices.sort_unstable();
    Ok(Split {
        train: ds.select_rows(&train_indices)?,
        queries: ds.select_rows(&query_indices)?,
        train_indices,
        query_indices,
    })
}

/// Scales each nonzero row to unit Euclidean norm. Zero rows pass through
/// unchanged; their count is returned alongside the result.
pub fn l2_normalize(ds: &Dataset) -> (Dataset, usize) {
    let mut zero_rows = 0;
    let mut data = ds.as_slice().to_vec();
    for row in data.chunks_exact_mut(ds.dim()) {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            zero_rows += 1;
        } else {
            row.iter_mut().for_each(|v| *v /= norm);
        }
    }
    let out = Dataset { data, len: ds.len(), dim: ds.dim() };
    (out, zero_rows)
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| QpadError::io(path, e))
}

/// Splits a TEXMEX-style byte buffer into records of `elem_size`-byte
/// payload elements. Returns `(dim, payloads)`.
fn parse_records(bytes: &[u8], elem_size: usize) -> Result<(usize, Vec<&[u8]>)> {
    let mut offset = 0usize;
    let mut dim: Option<usize> = None;
    let mut records = Vec::new();
    while offset < bytes.len() {
        if bytes.len() - offset < 4 {
            return Err(QpadError::Format {
                offset: offset as u64,
                message: format!("truncated record header: {} bytes remain, need 4", bytes.len() - offset),
            });
        }
        let header = i32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap());
        if header <= 0 {
            return Err(QpadError::Format {
                offset: offset as u64,
                message: format!("record dimension {header} must be positive"),
            });
        }
        let d = header as usize;
        match dim {
            None => dim = Some(d),
            Some(first) if first != d => {
                return Err(QpadError::Format {
                    offset: offset as u64,
                    message: format!("record dimension {d} differs from first record dimension {first}"),
                });
            }
            _ => {}
        }
        let start = offset + 4;
        let need = d * elem_size;
        if bytes.len() - start < need {
            return Err(QpadError::Format {
                offset: offset as u64,
                message: format!(
                    "truncated record: dimension {d} needs {need} payload bytes, {} remain",
                    bytes.len() - start
                ),
            });
        }
        records.push(&bytes[start..start + need]);
        offset = start + need;
    }
    Ok((dim.unwrap_or(0), records))
}

fn dataset_from_records(dim: usize, count: usize, data: Vec<f64>) -> Result<Dataset> {
    if count == 0 {
        return Err(QpadError::InvalidDataset("file contains no records; need at least 2 vectors".into()));
    }
    Dataset::new(data, count, dim)
}

pub fn parse_fvecs(bytes: &[u8]) -> Result<Dataset> {
    let (dim, records) = parse_records(bytes, 4)?;
    let data = records
        .iter()
        .flat_map(|r| r.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64))
        .collect();
    dataset_from_records(dim, records.len(), data)
}

pub fn parse_bvecs(bytes: &[u8]) -> Result<Dataset> {
    let (dim, records) = parse_records(bytes, 1)?;
    let data = records.iter().flat_map(|r| r.iter().map(|&b| b as f64)).collect();
    dataset_from_records(dim, records.len(), data)
}

pub fn parse_ivecs(bytes: &[u8]) -> Result<Vec<Vec<i32>>> {
    let (_, records) = parse_records(bytes, 4)?;
    Ok(records.iter().map(|r| r.chunks_exact(4).map(|c| i32::from_le_bytes(c.try_into().unwrap())).collect()).collect())
}

pub fn read_fvecs(path: impl AsRef<Path>) -> Result<Dataset> {
    parse_fvecs(&read_bytes(path.as_ref())?)
}

pub fn read_bvecs(path: impl AsRef<Path>) -> Result<Dataset> {
    parse_bvecs(&read_bytes(path.as_ref())?)
}

pub fn read_ivecs(path: impl AsRef<Path>) -> Result<Vec<Vec<i32>>> {
    parse_ivecs(&read_bytes(path.as_ref())?)
}

/// Encodes rows as `.fvecs`, narrowing each value to `f32`.
pub fn encode_fvecs(ds: &Dataset) -> Vec<u8> {
    let mut out = Vec::with_capacity(ds.len() * (4 + 4 * ds.dim()));
    for row in ds.rows() {
        out.extend_from_slice(&(ds.dim() as i32).to_le_bytes());
        for &v in row {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn write_fvecs(path: impl AsRef<Path>, ds: &Dataset) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_fvecs(ds)).map_err(|e| QpadError::io(path, e))
}

pub fn write_ivecs(path: impl AsRef<Path>, rows: &[Vec<i32>]) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for row in rows {
        out.extend_from_slice(&(row.len() as i32).to_le_bytes());
        for v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, out).map_err(|e| QpadError::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Delimiter {
    #[default]
    Comma,
    Whitespace,
}

/// Parses plain numeric delimited text. Blank lines are skipped; row and
/// column numbers in errors are 1-based and count the header line.
pub fn parse_csv(text: &str, has_header: bool, delimiter: Delimiter) -> Result<Dataset> {
    let mut data = Vec::new();
    let mut dim: Option<usize> = None;
    let mut count = 0;
    for (line_idx, line) in text.lines().enumerate() {
        let row = line_idx + 1;
        if has_header && line_idx == 0 {
            continue;
        }
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = match delimiter {
            Delimiter::Comma => line.split(',').map(str::trim).collect(),
            Delimiter::Whitespace => line.split_whitespace().collect(),
        };
        match dim {
            None => dim = Some(fields.len()),
            Some(d) if d != fields.len() => {
                return Err(QpadError::Parse {
                    row,
                    column: fields.len().min(d) + 1,
                    message: format!("ragged row: {} fields, expected {d}", fields.len()),
                });
            }
            _ => {}
        }
        for (col, field) in fields.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| QpadError::Parse {
                row,
                column: col + 1,
                message: format!("non-numeric field {field:?}"),
            })?;
            data.push(v);
        }
        count += 1;
    }
    let Some(dim) = dim else {
        return Err(QpadError::InvalidDataset("no data rows; need at least 2 vectors".into()));
    };
    Dataset::new(data, count, dim)
}

pub fn read_csv(path: impl AsRef<Path>, has_header: bool, delimiter: Delimiter) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| QpadError::io(path, e))?;
    parse_csv(&text, has_header, delimiter)
}

/// Writes rows as comma-separated text using the shortest round-trip
/// representation of each value.
pub fn write_csv(path: impl AsRef<Path>, ds: &Dataset) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| QpadError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| QpadError::io(path, e);
    for row in ds.rows() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Fvecs,
    Bvecs,
    Csv { has_header: bool, delimiter: Delimiter },
}

pub fn read_dataset(path: impl AsRef<Path>, format: Format) -> Result<Dataset> {
    match format {
        Format::Fvecs => read_fvecs(path),
        Format::Bvecs => read_bvecs(path),
        Format::Csv { has_header, delimiter } => read_csv(path, has_header, delimiter),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fvecs_bytes(records: &[(i32, &[f32])]) -> Vec<u8> {
        let mut out = Vec::new();
        for (d, vals) in records {
            out.extend_from_slice(&d.to_le_bytes());
            for v in *vals {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    #[test]
    fn fvecs_two_records() {
        let bytes = fvecs_bytes(&[(2, &[1.0, 2.0]), (2, &[3.0, 4.0])]);
        let ds = parse_fvecs(&bytes).unwrap();
        assert_eq!((ds.len(), ds.dim()), (2, 2));
        assert_eq!(ds.row(0), &[1.0, 2.0]);
        assert_eq!(ds.row(1), &[3.0, 4.0]);
        assert_eq!(encode_fvecs(&ds), bytes);
    }

    #[test]
    fn fvecs_empty_file_rejected() {
        assert!(matches!(parse_fvecs(&[]), Err(QpadError::InvalidDataset(_))));
    }

    #[test]
    fn fvecs_truncated_record() {
        let mut bytes = 3i32.to_le_bytes().to_vec();
        bytes.extend_from_slice(&[0u8; 8]);
        match parse_fvecs(&bytes) {
            Err(QpadError::Format { offset, message }) => {
                assert_eq!(offset, 0);
                assert!(message.contains("truncated"), "{message}");
            }
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn fvecs_inconsistent_dims_names_both() {
        let bytes = fvecs_bytes(&[(2, &[1.0, 2.0]), (3, &[3.0, 4.0, 5.0])]);
        match parse_fvecs(&bytes) {
            Err(QpadError::Format { offset, message }) => {
                assert_eq!(offset, 12);
                assert!(message.contains('3') && message.contains('2'), "{message}");
            }
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn fvecs_nonpositive_dim() {
        let bytes = fvecs_bytes(&[(0, &[])]);
        assert!(matches!(parse_fvecs(&bytes), Err(QpadError::Format { .. })));
        let bytes = fvecs_bytes(&[(-4, &[])]);
        assert!(matches!(parse_fvecs(&bytes), Err(QpadError::Format { .. })));
    }

    #[test]
    fn fvecs_rejects_nan() {
        let bytes = fvecs_bytes(&[(1, &[f32::NAN]), (1, &[1.0])]);
        assert!(matches!(parse_fvecs(&bytes), Err(QpadError::InvalidDataset(_))));
    }

    #[test]
    fn bvecs_widens_bytes() {
        let mut bytes = 2i32.to_le_bytes().to_vec();
        bytes.extend_from_slice(&[0x01, 0xFF]);
        bytes.extend_from_slice(&2i32.to_le_bytes());
        bytes.extend_from_slice(&[0x00, 0x10]);
        let ds = parse_bvecs(&bytes).unwrap();
        assert_eq!(ds.row(0), &[1.0, 255.0]);
        assert_eq!(ds.row(1), &[0.0, 16.0]);
    }

    #[test]
    fn ivecs_parses() {
        let mut bytes = 2i32.to_le_bytes().to_vec();
        bytes.extend_from_slice(&7i32.to_le_bytes());
        bytes.extend_from_slice(&(-1i32).to_le_bytes());
        assert_eq!(parse_ivecs(&bytes).unwrap(), vec![vec![7, -1]]);
    }

    #[test]
    fn csv_basic_and_whitespace() {
        let ds = parse_csv("1,2\n3,4", false, Delimiter::Comma).unwrap();
        assert_eq!(ds.as_slice(), &[1.0, 2.0, 3.0, 4.0]);
        let ds = parse_csv("a b\n1  2\n3\t4\n", true, Delimiter::Whitespace).unwrap();
        assert_eq!(ds.as_slice(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn csv_ragged_row() {
        match parse_csv("1,2\n3", false, Delimiter::Comma) {
            Err(QpadError::Parse { row, .. }) => assert_eq!(row, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn csv_non_numeric_field() {
        match parse_csv("1,2\n3,x", false, Delimiter::Comma) {
            Err(QpadError::Parse { row, column, .. }) => assert_eq!((row, column), (2, 2)),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn normalize_examples() {
        let ds = Dataset::from_rows(&[vec![3.0, 4.0], vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let (out, zeros) = l2_normalize(&ds);
        assert_eq!(zeros, 1);
        assert!((out.row(0)[0] - 0.6).abs() < 1e-15 && (out.row(0)[1] - 0.8).abs() < 1e-15);
        assert_eq!(out.row(1), &[0.0, 0.0]);
        assert_eq!(out.row(2), &[1.0, 0.0]);
    }

    #[test]
    fn split_cardinality_and_determinism() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let ds = Dataset::from_rows(&rows).unwrap();
        let spec = SplitSpec { query_count: 3, seed: 7 };
        let a = split(&ds, spec).unwrap();
        assert_eq!((a.train.len(), a.queries.len()), (7, 3));
        assert!(a.query_indices.iter().all(|i| !a.train_indices.contains(i)));
        let b = split(&ds, spec).unwrap();
        assert_eq!(a.query_indices, b.query_indices);
        assert_eq!(a.train_indices, b.train_indices);
    }

    #[test]
    fn split_rejects_too_many_queries() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let ds = Dataset::from_rows(&rows).unwrap();
        for q in [9, 10] {
            let spec = SplitSpec { query_count: q, seed: 7 };
            assert!(matches!(split(&ds, spec), Err(QpadError::InvalidArgument(_))));
        }
    }

    #[test]
    fn select_columns_is_seeded() {
        let rows: Vec<Vec<f64>> = (0..4).map(|i| (0..10).map(|j| (i * 10 + j) as f64).collect()).collect();
        let ds = Dataset::from_rows(&rows).unwrap();
        let a = ds.select_columns(4, 1).unwrap();
        let b = ds.select_columns(4, 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dim(), 4);
        assert!(ds.select_columns(11, 1).is_err());
    }
}

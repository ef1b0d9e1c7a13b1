use proptest::prelude::*;
use qpad::dataset::{
    encode_fvecs, l2_normalize, parse_fvecs, read_dataset, read_fvecs, read_ivecs, split, write_csv, write_fvecs,
    write_ivecs, Delimiter, Format,
};
use qpad::{synth, Dataset, QpadError, SplitSpec};

fn f32_dataset(rows: &[Vec<f32>]) -> Dataset {
    let rows: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect();
    Dataset::from_rows(&rows).unwrap()
}

#[test]
fn fvecs_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("base.fvecs");
    let ds = f32_dataset(&[vec![1.0, -2.5, 3.25], vec![0.0, 1e-3, 7.0], vec![4.0, 4.0, 4.0]]);
    write_fvecs(&path, &ds).unwrap();
    assert_eq!(read_fvecs(&path).unwrap(), ds);
    assert_eq!(std::fs::read(&path).unwrap(), encode_fvecs(&ds));
    assert_eq!(read_dataset(&path, Format::Fvecs).unwrap(), ds);
}

#[test]
fn csv_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.csv");
    let ds = synth::isotropic(20, 4, 3);
    write_csv(&path, &ds).unwrap();
    let back = read_dataset(&path, Format::Csv { has_header: false, delimiter: Delimiter::Comma }).unwrap();
    assert_eq!(back, ds);
}

#[test]
fn ivecs_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("gt.ivecs");
    let rows = vec![vec![3, 1, 4], vec![1, 5, 9]];
    write_ivecs(&path, &rows).unwrap();
    assert_eq!(read_ivecs(&path).unwrap(), rows);
}

#[test]
fn missing_file_names_the_path() {
    let err = read_fvecs("/nonexistent/dir/base.fvecs").unwrap_err();
    assert!(matches!(err, QpadError::Io { .. }));
    assert!(err.to_string().contains("/nonexistent/dir/base.fvecs"));
}

#[test]
fn split_is_seeded_and_disjoint() {
    let ds = synth::isotropic(50, 3, 1);
    let spec = SplitSpec { query_count: 10, seed: 4 };
    let a = split(&ds, spec).unwrap();
    let b = split(&ds, spec).unwrap();
    assert_eq!(a.query_indices, b.query_indices);
    assert_eq!(a.queries.len(), 10);
    assert_eq!(a.train.len(), 40);
    let mut all: Vec<usize> = a.train_indices.iter().chain(&a.query_indices).copied().collect();
    all.sort_unstable();
    assert_eq!(all, (0..50).collect::<Vec<_>>());
    for (r, &i) in a.queries.rows().zip(&a.query_indices) {
        assert_eq!(r, ds.row(i));
    }
    assert!(split(&ds, SplitSpec { query_count: 49, seed: 0 }).is_err());
    assert!(split(&ds, SplitSpec { query_count: 0, seed: 0 }).is_err());
}

proptest! {
    #[test]
    fn fvecs_bytes_are_stable(len in 2usize..20, dim in 1usize..10, seed in any::<u64>()) {
        let raw = synth::isotropic(len, dim, seed);
        let rows: Vec<Vec<f32>> = raw.rows().map(|r| r.iter().map(|&v| v as f32).collect()).collect();
        let mut bytes = Vec::new();
        for r in &rows {
            bytes.extend_from_slice(&(dim as i32).to_le_bytes());
            for v in r {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        let parsed = parse_fvecs(&bytes).unwrap();
        prop_assert_eq!(parsed.len(), len);
        prop_assert_eq!(encode_fvecs(&parsed), bytes);
    }

    #[test]
    fn l2_normalize_is_idempotent(len in 2usize..30, dim in 1usize..8, seed in any::<u64>()) {
        let ds = synth::with_duplicates(len, dim, seed);
        let (once, zeros) = l2_normalize(&ds);
        let (twice, zeros2) = l2_normalize(&once);
        prop_assert_eq!(zeros, zeros2);
        for (a, b) in once.as_slice().iter().zip(twice.as_slice()) {
            prop_assert!((a - b).abs() <= 1e-15);
        }
        for r in once.rows() {
            let n = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!(n == 0.0 || (n - 1.0).abs() <= 1e-12);
        }
    }
}

use std::path::Path;

use attrhar::attributes::{min_attributes, read_csv_rows, violations, MutationConfig, Violation};
use attrhar::{AttributeMatrix, RngState};

fn locomotion() -> AttributeMatrix {
    AttributeMatrix::read_csv(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/locomotion_attributes.csv")).unwrap()
}

#[test]
fn random_bits_are_fair() {
    let mut rng = RngState::new(31);
    let (mut ones, mut total) = (0usize, 0usize);
    for _ in 0..10_000 {
        let m = AttributeMatrix::random(2, 16, &mut rng).unwrap();
        ones += (0..2).map(|k| m.popcount(k)).sum::<usize>();
        total += 32;
    }
    let mean = ones as f64 / total as f64;
    assert!((mean - 0.5).abs() <= 0.02, "{mean}");
}

#[test]
fn one_expected_flip_per_mutation() {
    let mut rng = RngState::new(32);
    let parent = AttributeMatrix::random(5, 32, &mut rng).unwrap();
    let cfg = MutationConfig::per_bit(32);
    let mut flips = 0usize;
    for _ in 0..10_000 {
        let child = parent.mutate(&cfg, &mut rng).unwrap();
        flips += parent
            .rows()
            .iter()
            .flatten()
            .zip(child.rows().iter().flatten())
            .filter(|(a, b)| a != b)
            .count();
    }
    let mean = flips as f64 / 10_000.0;
    assert!((mean - 1.0).abs() <= 0.05, "{mean}");
}

#[test]
fn decoding_shifted_rows_recovers_the_class() {
    let eps = 1e-3;
    for m in [locomotion(), AttributeMatrix::random(12, 24, &mut RngState::new(3)).unwrap()] {
        let targets = m.targets_for_batch(&(0..m.classes()).collect::<Vec<_>>()).unwrap();
        for k in 0..m.classes() {
            let scores: Vec<f64> = targets.row(k).iter().map(|&a| if a == 1.0 { 1.0 - eps } else { eps }).collect();
            assert_eq!(m.decode_nearest(&scores).unwrap(), k);
        }
    }
}

#[test]
fn targets_are_row_lookups() {
    let m = locomotion();
    let t = m.targets_for_batch(&[2, 2]).unwrap();
    let walk: Vec<f64> = m.row(m.class_index("Walk").unwrap()).iter().map(|&b| b as f64).collect();
    assert_eq!(t.row(0), walk.as_slice());
    assert_eq!(t.row(1), walk.as_slice());
    assert_eq!(m.targets_for_batch(&[]).unwrap().shape(), &[0, 10]);
    assert!(m.targets_for_batch(&[5]).is_err());
}

#[test]
fn invariant_violations_are_reported() {
    assert!(AttributeMatrix::new(vec![vec![1, 0], vec![1, 0]]).is_err());
    assert!(AttributeMatrix::new(vec![vec![0, 0], vec![1, 0]]).is_err());
    assert!(AttributeMatrix::new(vec![vec![2, 0], vec![1, 0]]).is_err());
    assert_eq!(
        violations(&[vec![1, 0], vec![0, 0], vec![1, 0]]),
        vec![Violation::ZeroRow(1), Violation::DuplicateRows(0, 2)]
    );
    assert_eq!(min_attributes(5), 3);
    assert_eq!(min_attributes(8), 4);
    assert!(AttributeMatrix::random(5, 2, &mut RngState::new(0)).is_err());
}

#[test]
fn csv_round_trip_keeps_names() {
    let dir = tempfile::tempdir().unwrap();
    let m = locomotion();
    let path = dir.path().join("a.csv");
    m.write_csv(&path).unwrap();
    assert_eq!(AttributeMatrix::read_csv(&path).unwrap(), m);
    let (names, rows) = read_csv_rows(&path).unwrap();
    assert_eq!(names, vec!["Null", "Stand", "Walk", "Sit", "Lie"]);
    assert_eq!(rows.len(), 5);
}

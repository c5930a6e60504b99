use std::fs;
use std::path::Path;

use kdlab::logit_io::{self, Checksum, Dtype, Finding, Manifest, Split, HEADER_LEN, MAGIC, VERSION};
use kdlab::{Error, Matrix};
use proptest::prelude::*;

fn sample() -> Matrix {
    Matrix::from_rows(&[vec![1.5, -2.0, 0.25], vec![3.0, 1e-300, -7.125]]).unwrap()
}

fn write_pair(dir: &Path, m: &Matrix, labels: &[usize], dtype: Dtype) -> std::path::PathBuf {
    let path = dir.join("t.train.lgts");
    logit_io::write_labels(&dir.join("train.labels"), labels).unwrap();
    logit_io::write_logits(&path, m, &Manifest::new("t", "d", Split::Train, "train.labels"), dtype).unwrap();
    path
}

#[test]
fn layout_is_bit_exact() {
    let bytes = logit_io::encode(&sample(), Dtype::F64).unwrap();
    assert_eq!(bytes.len(), 4 + 4 + 8 + 4 + 1 + 48);
    assert_eq!(&bytes[..4], b"LGTS");
    assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
    assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 2);
    assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 3);
    assert_eq!(bytes[20], 1);
    assert_eq!(f64::from_le_bytes(bytes[21..29].try_into().unwrap()), 1.5);
    assert_eq!(f64::from_le_bytes(bytes[61..69].try_into().unwrap()), -7.125);

    let f32_bytes = logit_io::encode(&sample().map(|x| x as f32 as f64).unwrap(), Dtype::F32).unwrap();
    assert_eq!(f32_bytes.len(), HEADER_LEN + 24);
    assert_eq!(f32_bytes[20], 0);
}

#[test]
fn files_round_trip_with_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_pair(dir.path(), &sample(), &[2, 0], Dtype::F64);
    let (m, manifest, labels) = logit_io::read_logits_with_labels(&path).unwrap();
    assert_eq!(m, sample());
    assert_eq!(labels, [2, 0]);
    assert_eq!(manifest.teacher_id, "t");
    assert_eq!(manifest.checksum, Checksum(logit_io::fnv1a64(&fs::read(&path).unwrap()[HEADER_LEN..])));
    assert!(logit_io::manifest_path(&path).ends_with("t.train.lgts.json"));
    assert!(logit_io::validate(&path).is_clean());
}

#[test]
fn manifest_schema_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_pair(dir.path(), &sample(), &[2, 0], Dtype::F64);
    let json: serde_json::Value = serde_json::from_slice(&fs::read(logit_io::manifest_path(&path)).unwrap()).unwrap();
    let keys: Vec<&str> = json.as_object().unwrap().keys().map(String::as_str).collect();
    for key in ["teacher_id", "dataset_id", "split", "labels_path", "checksum"] {
        assert!(keys.contains(&key), "{key} missing from {keys:?}");
    }
    assert_eq!(json["split"], "train");
    let hex = json["checksum"].as_str().unwrap();
    assert_eq!(hex.len(), 16);
    assert!(hex.chars().all(|c| c.is_ascii_hexdigit() && !c.is_ascii_uppercase()));
}

#[test]
fn corrupt_payload_is_a_checksum_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_pair(dir.path(), &sample(), &[2, 0], Dtype::F64);
    let mut bytes = fs::read(&path).unwrap();
    bytes[HEADER_LEN + 3] ^= 0x01;
    fs::write(&path, bytes).unwrap();
    assert!(matches!(logit_io::read_logits(&path), Err(Error::ChecksumMismatch { .. })));
    let report = logit_io::validate(&path);
    assert!(report.findings.iter().any(|f| matches!(f, Finding::ChecksumMismatch { .. })));
}

#[test]
fn named_errors_for_structural_faults() {
    let good = logit_io::encode(&sample(), Dtype::F64).unwrap();

    let mut bad_magic = good.clone();
    bad_magic[0] = b'X';
    assert!(matches!(logit_io::decode(&bad_magic), Err(Error::BadMagic { .. })));

    let mut bad_version = good.clone();
    bad_version[4..8].copy_from_slice(&2u32.to_le_bytes());
    assert!(matches!(logit_io::decode(&bad_version), Err(Error::UnsupportedVersion(2))));

    let mut bad_dtype = good.clone();
    bad_dtype[20] = 9;
    assert!(matches!(logit_io::decode(&bad_dtype), Err(Error::BadDtype(9))));

    assert!(logit_io::decode(&good[..good.len() - 1]).is_err());
    assert!(logit_io::decode(&good[..10]).is_err());

    let mut nan = good.clone();
    nan[HEADER_LEN..HEADER_LEN + 8].copy_from_slice(&f64::NAN.to_le_bytes());
    assert!(matches!(logit_io::decode(&nan), Err(Error::NonFinite { .. })));

    assert_eq!(MAGIC, *b"LGTS");
    assert_eq!(VERSION, 1);
}

#[test]
fn every_single_byte_header_mutation_is_rejected() {
    let good = logit_io::encode(&sample(), Dtype::F64).unwrap();
    for pos in 0..HEADER_LEN {
        for delta in 1..=255u8 {
            let mut bytes = good.clone();
            bytes[pos] = bytes[pos].wrapping_add(delta);
            // a header that still decodes must describe a different payload layout
            if let Ok((m, _, _)) = logit_io::decode(&bytes) {
                panic!("mutation at byte {pos} (+{delta}) accepted as {}x{}", m.rows(), m.cols());
            }
        }
    }
}

#[test]
fn non_finite_values_never_reach_disk() {
    let dir = tempfile::tempdir().unwrap();
    assert!(Matrix::from_rows(&[vec![f64::INFINITY, 1.0]]).is_err());
    let too_big = Matrix::from_rows(&[vec![1e300, 1.0]]).unwrap();
    let path = dir.path().join("x.lgts");
    assert!(matches!(logit_io::write_matrix(&path, &too_big, Dtype::F32), Err(Error::NonFinite { .. })));
    assert!(!path.exists());
    assert!(matches!(logit_io::read_logits(&dir.path().join("missing.lgts")), Err(Error::Io { .. })));
}

#[test]
fn validation_itemizes_findings() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_pair(dir.path(), &sample(), &[2, 0], Dtype::F64);

    logit_io::write_labels(&dir.path().join("train.labels"), &[2, 0, 1]).unwrap();
    let r = logit_io::validate(&path);
    assert!(r.findings.iter().any(|f| matches!(f, Finding::LengthMismatch { .. })), "{r:?}");

    logit_io::write_labels(&dir.path().join("train.labels"), &[2, 3]).unwrap();
    let r = logit_io::validate(&path);
    assert!(r.findings.iter().any(|f| matches!(f, Finding::LabelOutOfRange { .. })), "{r:?}");

    fs::remove_file(dir.path().join("train.labels")).unwrap();
    let r = logit_io::validate(&path);
    assert!(r.findings.iter().any(|f| matches!(f, Finding::MissingFile { .. })), "{r:?}");

    let r = logit_io::validate(&dir.path().join("nothing.lgts"));
    assert!(!r.is_clean());
}

proptest! {
    #[test]
    fn f64_round_trip_is_bit_identical(rows in 1usize..20, cols in 2usize..12, seed in any::<u64>()) {
        let mut rng = kdlab::numerics::RngStream::new(seed);
        let data: Vec<f64> = (0..rows * cols).map(|_| rng.normal() * 10f64.powi((rng.uniform() * 40.0) as i32 - 20)).collect();
        let m = Matrix::new(rows, cols, data).unwrap();
        let (back, header, _) = logit_io::decode(&logit_io::encode(&m, Dtype::F64).unwrap()).unwrap();
        prop_assert_eq!(header.n_samples, rows as u64);
        for (a, b) in m.as_slice().iter().zip(back.as_slice()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn representable_f32_values_survive_widening(rows in 1usize..20, cols in 2usize..12, seed in any::<u64>()) {
        let mut rng = kdlab::numerics::RngStream::new(seed);
        let data: Vec<f64> = (0..rows * cols).map(|_| (rng.normal() * 100.0) as f32 as f64).collect();
        let m = Matrix::new(rows, cols, data).unwrap();
        let first = logit_io::encode(&m, Dtype::F32).unwrap();
        let (wide, header, _) = logit_io::decode(&first).unwrap();
        prop_assert_eq!(header.dtype, Dtype::F32);
        prop_assert_eq!(&wide, &m);
        prop_assert_eq!(logit_io::encode(&wide, Dtype::F32).unwrap(), first);
    }
}

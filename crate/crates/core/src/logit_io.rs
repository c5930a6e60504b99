//! The `LGTS` binary container for logit (or feature) matrices, the flat
//! labels file, and the JSON manifest that ties them together.
//!
//! File layout, all integers little-endian:
//!
//! ```text
//! offset size field
//! 0      4    magic      b"LGTS"
//! 4      4    version    u32 = 1
//! 8      8    n_samples  u64
//! 16     4    n_classes  u32
//! 20     1    dtype      u8 (0 = f32, 1 = f64)
//! 21     ...  payload    n_samples * n_classes values, row-major
//! ```
//!
//! The manifest lives next to the data file as `<file>.json`. Its checksum
//! is FNV-1a 64 over the payload bytes exactly as stored, written as 16
//! lowercase hex digits. Labels are a headerless sequence of `u32` values.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const MAGIC: [u8; 4] = *b"LGTS";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 21;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    #[default]
    F64,
}

impl Dtype {
    pub fn code(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Dtype::F32),
            1 => Ok(Dtype::F64),
            other => Err(Error::BadDtype(other)),
        }
    }

    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

/// FNV-1a, 64-bit.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes.iter().fold(OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(PRIME))
}

/// 64-bit payload checksum; serialized as 16 hex digits so JSON readers
/// without 64-bit integers keep it exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Checksum(pub u64);

impl fmt::Display for Checksum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl Serialize for Checksum {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Checksum {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        if s.len() != 16 {
            return Err(serde::de::Error::custom("checksum must be 16 hex digits"));
        }
        u64::from_str_radix(&s, 16).map(Checksum).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub teacher_id: String,
    pub dataset_id: String,
    pub split: Split,
    #[serde(default)]
    pub epoch: Option<u32>,
    /// Relative paths resolve against the manifest's directory.
    pub labels_path: String,
    #[serde(default)]
    pub checksum: Checksum,
}

impl Manifest {
    pub fn new(teacher_id: impl Into<String>, dataset_id: impl Into<String>, split: Split, labels_path: impl Into<String>) -> Self {
        Self {
            teacher_id: teacher_id.into(),
            dataset_id: dataset_id.into(),
            split,
            epoch: None,
            labels_path: labels_path.into(),
            checksum: Checksum::default(),
        }
    }

    pub fn resolve_labels(&self, data_path: &Path) -> PathBuf {
        let p = Path::new(&self.labels_path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            data_path.parent().unwrap_or(Path::new(".")).join(p)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub n_samples: u64,
    pub n_classes: u32,
    pub dtype: Dtype,
}

pub fn manifest_path(data_path: &Path) -> PathBuf {
    let mut s = data_path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Serializes a matrix into the container. f32 output narrows each value.
pub fn encode(matrix: &Matrix, dtype: Dtype) -> Result<Vec<u8>> {
    let n_classes = u32::try_from(matrix.cols())
        .map_err(|_| Error::InvalidInput(format!("{} columns exceed u32", matrix.cols())))?;
    let mut out = Vec::with_capacity(HEADER_LEN + matrix.as_slice().len() * dtype.size());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(matrix.rows() as u64).to_le_bytes());
    out.extend_from_slice(&n_classes.to_le_bytes());
    out.push(dtype.code());
    for (index, &v) in matrix.as_slice().iter().enumerate() {
        match dtype {
            Dtype::F64 => out.extend_from_slice(&v.to_le_bytes()),
            Dtype::F32 => {
                let narrow = v as f32;
                if !narrow.is_finite() {
                    return Err(Error::NonFinite { context: "f32 narrowing", index });
                }
                out.extend_from_slice(&narrow.to_le_bytes());
            }
        }
    }
    Ok(out)
}

/// Parses the container, returning the widened matrix, header and the
/// checksum of the stored payload.
pub fn decode(bytes: &[u8]) -> Result<(Matrix, Header, Checksum)> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Malformed(format!("{} bytes is shorter than the header", bytes.len())));
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(Error::BadMagic { expected: MAGIC, found: magic });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let n_samples = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let n_classes = u32::from_le_bytes(bytes[16..20].try_into().unwrap());
    let dtype = Dtype::from_code(bytes[20])?;
    let payload = &bytes[HEADER_LEN..];
    let expected = n_samples
        .checked_mul(n_classes as u64)
        .and_then(|n| n.checked_mul(dtype.size() as u64));
    if expected != Some(payload.len() as u64) {
        return Err(Error::ShapeMismatch(format!(
            "header declares {n_samples}x{n_classes} {dtype:?}, payload has {} bytes",
            payload.len()
        )));
    }
    if n_classes == 0 && n_samples > 0 {
        return Err(Error::Malformed("zero classes".into()));
    }
    let values: Vec<f64> = match dtype {
        Dtype::F64 => payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect(),
        Dtype::F32 => payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect(),
    };
    let matrix = Matrix::new(n_samples as usize, n_classes as usize, values)?;
    Ok((matrix, Header { n_samples, n_classes, dtype }, Checksum(fnv1a64(payload))))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes a bare container without manifest. Returns the payload checksum.
pub fn write_matrix(path: &Path, matrix: &Matrix, dtype: Dtype) -> Result<Checksum> {
    let bytes = encode(matrix, dtype)?;
    let checksum = Checksum(fnv1a64(&bytes[HEADER_LEN..]));
    write_file(path, &bytes)?;
    Ok(checksum)
}

pub fn read_matrix(path: &Path) -> Result<(Matrix, Header, Checksum)> {
    decode(&read_file(path)?)
}

/// Writes the container and its sibling manifest, filling in the checksum.
pub fn write_logits(path: &Path, matrix: &Matrix, manifest: &Manifest, dtype: Dtype) -> Result<Manifest> {
    let mut manifest = manifest.clone();
    manifest.checksum = write_matrix(path, matrix, dtype)?;
    write_manifest(&manifest_path(path), &manifest)?;
    Ok(manifest)
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    let mut json = serde_json::to_vec_pretty(manifest)?;
    json.push(b'\n');
    write_file(path, &json)
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    Ok(serde_json::from_slice(&read_file(path)?)?)
}

/// Reads a container plus manifest and checks the payload checksum.
pub fn read_logits(path: &Path) -> Result<(Matrix, Manifest)> {
    let manifest = read_manifest(&manifest_path(path))?;
    let (matrix, _, checksum) = read_matrix(path)?;
    if checksum != manifest.checksum {
        return Err(Error::ChecksumMismatch { expected: manifest.checksum.0, actual: checksum.0 });
    }
    Ok((matrix, manifest))
}

/// [`read_logits`] plus the labels file named in the manifest.
pub fn read_logits_with_labels(path: &Path) -> Result<(Matrix, Manifest, Vec<usize>)> {
    let (matrix, manifest) = read_logits(path)?;
    let labels = read_labels(&manifest.resolve_labels(path))?;
    if labels.len() != matrix.rows() {
        return Err(Error::ShapeMismatch(format!("{} labels for {} rows", labels.len(), matrix.rows())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= matrix.cols()) {
        return Err(Error::InvalidInput(format!("label {bad} out of range for {} classes", matrix.cols())));
    }
    Ok((matrix, manifest, labels))
}

pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut bytes = Vec::with_capacity(labels.len() * 4);
    for &l in labels {
        let l = u32::try_from(l).map_err(|_| Error::InvalidInput(format!("label {l} exceeds u32")))?;
        bytes.extend_from_slice(&l.to_le_bytes());
    }
    write_file(path, &bytes)
}

pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let bytes = read_file(path)?;
    if bytes.len() % 4 != 0 {
        return Err(Error::Malformed(format!("labels file length {} is not a multiple of 4", bytes.len())));
    }
    Ok(bytes.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize).collect())
}

/// One failed check from [`validate`].
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "check", rename_all = "snake_case")]
pub enum Finding {
    MissingFile { path: String },
    Unreadable { path: String, reason: String },
    ChecksumMismatch { manifest: String, payload: String },
    LengthMismatch { labels: usize, samples: u64 },
    LabelOutOfRange { index: usize, label: usize, n_classes: u32 },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }
}

/// Checks a container, its manifest and its labels file. Every problem
/// becomes a finding; nothing here returns an error.
pub fn validate(data_path: &Path) -> ValidationReport {
    let mut findings = Vec::new();
    let mpath = manifest_path(data_path);
    let manifest = if !mpath.exists() {
        findings.push(Finding::MissingFile { path: mpath.display().to_string() });
        None
    } else {
        match read_manifest(&mpath) {
            Ok(m) => Some(m),
            Err(e) => {
                findings.push(Finding::Unreadable { path: mpath.display().to_string(), reason: e.to_string() });
                None
            }
        }
    };
    let data = if !data_path.exists() {
        findings.push(Finding::MissingFile { path: data_path.display().to_string() });
        None
    } else {
        match read_matrix(data_path) {
            Ok(d) => Some(d),
            Err(e) => {
                findings.push(Finding::Unreadable { path: data_path.display().to_string(), reason: e.to_string() });
                None
            }
        }
    };
    if let (Some(m), Some((_, _, checksum))) = (&manifest, &data) {
        if m.checksum != *checksum {
            findings.push(Finding::ChecksumMismatch { manifest: m.checksum.to_string(), payload: checksum.to_string() });
        }
    }
    if let Some(m) = &manifest {
        let lpath = m.resolve_labels(data_path);
        if !lpath.exists() {
            findings.push(Finding::MissingFile { path: lpath.display().to_string() });
        } else {
            match read_labels(&lpath) {
                Ok(labels) => {
                    if let Some((_, header, _)) = &data {
                        if labels.len() as u64 != header.n_samples {
                            findings.push(Finding::LengthMismatch { labels: labels.len(), samples: header.n_samples });
                        }
                        for (index, &label) in labels.iter().enumerate() {
                            if label >= header.n_classes as usize {
                                findings.push(Finding::LabelOutOfRange { index, label, n_classes: header.n_classes });
                            }
                        }
                    }
                }
                Err(e) => findings.push(Finding::Unreadable { path: lpath.display().to_string(), reason: e.to_string() }),
            }
        }
    }
    ValidationReport { findings }
}

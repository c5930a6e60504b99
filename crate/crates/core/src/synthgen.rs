//! Synthetic fine-grained classification data: Gaussian subclasses
//! clustered tightly around well-separated superclass means.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logit_io::{self, Dtype};
use crate::numerics::{KahanSum, Matrix, RngStream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub n_super: usize,
    pub n_sub_per_super: usize,
    pub dim: usize,
    /// Norm of each superclass mean.
    pub coarse_spread: f64,
    /// Distance from a subclass mean to its superclass mean.
    pub fine_offset: f64,
    pub noise_sigma: f64,
    pub samples_per_class: usize,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            n_super: 5,
            n_sub_per_super: 4,
            dim: 16,
            coarse_spread: 6.0,
            fine_offset: 1.5,
            noise_sigma: 1.0,
            samples_per_class: 100,
            seed: 7,
        }
    }
}

/// Held-out share that turns the default 100 samples per class into 60/40.
pub const DEFAULT_TEST_FRACTION: f64 = 0.4;

impl DatasetSpec {
    pub fn n_classes(&self) -> usize {
        self.n_super * self.n_sub_per_super
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.coarse_spread, self.fine_offset, self.noise_sigma];
        if self.n_super == 0 || self.n_sub_per_super == 0 || self.n_classes() < 2 {
            return Err(Error::Config(format!(
                "need at least 2 classes, got {}x{}",
                self.n_super, self.n_sub_per_super
            )));
        }
        if self.dim == 0 || self.samples_per_class == 0 {
            return Err(Error::Config("dim and samples_per_class must be positive".into()));
        }
        if positive.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::Config("spread, offset and sigma must be positive".into()));
        }
        if self.fine_offset >= self.coarse_spread {
            return Err(Error::Config(format!(
                "fine_offset {} must be smaller than coarse_spread {}",
                self.fine_offset, self.coarse_spread
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassInfo {
    pub superclass: usize,
    pub subclass: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub n_classes: usize,
    pub classes: Vec<ClassInfo>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
            classes: self.classes.clone(),
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

/// Generated data plus the true class means, for Bayes-style oracles.
#[derive(Debug, Clone)]
pub struct Generated {
    pub dataset: Dataset,
    pub class_means: Matrix,
}

/// Samples a dataset. Classes are laid out superclass-major and the rows
/// are grouped by class.
pub fn generate(spec: &DatasetSpec) -> Result<Dataset> {
    generate_with_means(spec).map(|g| g.dataset)
}

pub fn generate_with_means(spec: &DatasetSpec) -> Result<Generated> {
    spec.validate()?;
    let mut rng = RngStream::with_stream(spec.seed, 0);
    let n_classes = spec.n_classes();
    let mut means = Vec::with_capacity(n_classes * spec.dim);
    let mut classes = Vec::with_capacity(n_classes);
    for s in 0..spec.n_super {
        let center: Vec<f64> = rng.unit_vector(spec.dim).into_iter().map(|x| x * spec.coarse_spread).collect();
        for k in 0..spec.n_sub_per_super {
            let dir = rng.unit_vector(spec.dim);
            means.extend(center.iter().zip(&dir).map(|(c, d)| c + spec.fine_offset * d));
            classes.push(ClassInfo { superclass: s, subclass: k });
        }
    }
    let class_means = Matrix::new(n_classes, spec.dim, means)?;
    let n = n_classes * spec.samples_per_class;
    let mut features = Vec::with_capacity(n * spec.dim);
    let mut labels = Vec::with_capacity(n);
    for c in 0..n_classes {
        for _ in 0..spec.samples_per_class {
            features.extend(class_means.row(c).iter().map(|m| m + spec.noise_sigma * rng.normal()));
            labels.push(c);
        }
    }
    Ok(Generated {
        dataset: Dataset { features: Matrix::new(n, spec.dim, features)?, labels, n_classes, classes },
        class_means,
    })
}

/// Stratified split. Each class sends `round(count * test_fraction)` rows
/// to the test side; both sides keep the original row order.
pub fn split(dataset: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!("test_fraction {test_fraction} not in (0, 1)")));
    }
    let mut rng = RngStream::with_stream(seed, 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); dataset.n_classes];
    for (i, &l) in dataset.labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (class, mut rows) in by_class.into_iter().enumerate() {
        let n_test = (rows.len() as f64 * test_fraction).round() as usize;
        if n_test == 0 || n_test == rows.len() {
            return Err(Error::InvalidArgument(format!(
                "test_fraction {test_fraction} leaves class {class} empty on one side ({} samples)",
                rows.len()
            )));
        }
        rng.shuffle(&mut rows);
        test.extend_from_slice(&rows[..n_test]);
        train.extend_from_slice(&rows[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((dataset.subset(&train), dataset.subset(&test)))
}

/// Per-feature affine standardization fitted on one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Matrix) -> Result<Self> {
        if x.rows() == 0 {
            return Err(Error::EmptyInput("standardizer fit"));
        }
        let n = x.rows() as f64;
        let mut mean = Vec::with_capacity(x.cols());
        let mut std = Vec::with_capacity(x.cols());
        for j in 0..x.cols() {
            let m = (0..x.rows()).map(|i| x.get(i, j)).collect::<KahanSum>().total() / n;
            let var = (0..x.rows()).map(|i| (x.get(i, j) - m).powi(2)).collect::<KahanSum>().total() / n;
            mean.push(m);
            // constant columns pass through centred
            std.push(if var > 0.0 { var.sqrt() } else { 1.0 });
        }
        Ok(Self { mean, std })
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.mean.len() {
            return Err(Error::ShapeMismatch(format!("standardizer fitted on {} features, got {}", self.mean.len(), x.cols())));
        }
        let mut out = x.clone();
        for i in 0..out.rows() {
            for (j, v) in out.row_mut(i).iter_mut().enumerate() {
                *v = (*v - self.mean[j]) / self.std[j];
            }
        }
        Ok(out)
    }
}

/// Train/test pair after standardization with train statistics.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: Dataset,
    pub test: Dataset,
    pub standardizer: Standardizer,
}

pub fn prepare(train: Dataset, test: Dataset) -> Result<Prepared> {
    let standardizer = Standardizer::fit(&train.features)?;
    let train = Dataset { features: standardizer.apply(&train.features)?, ..train };
    let test = Dataset { features: standardizer.apply(&test.features)?, ..test };
    Ok(Prepared { train, test, standardizer })
}

/// Generate, split and standardize in one step.
pub fn generate_prepared(spec: &DatasetSpec, test_fraction: f64) -> Result<Prepared> {
    let data = generate(spec)?;
    let (train, test) = split(&data, test_fraction, spec.seed)?;
    prepare(train, test)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DatasetSidecar {
    n_classes: usize,
    classes: Vec<ClassInfo>,
    #[serde(default)]
    spec: Option<DatasetSpec>,
    features_checksum: logit_io::Checksum,
}

/// Writes `<stem>.lgts` (features), `<stem>.labels` and `<stem>.json`
/// into `dir`.
pub fn save_dataset(dir: &Path, stem: &str, dataset: &Dataset, spec: Option<&DatasetSpec>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let checksum = logit_io::write_matrix(&dir.join(format!("{stem}.lgts")), &dataset.features, Dtype::F64)?;
    logit_io::write_labels(&dir.join(format!("{stem}.labels")), &dataset.labels)?;
    let sidecar = DatasetSidecar {
        n_classes: dataset.n_classes,
        classes: dataset.classes.clone(),
        spec: spec.cloned(),
        features_checksum: checksum,
    };
    let path = dir.join(format!("{stem}.json"));
    let mut json = serde_json::to_vec_pretty(&sidecar)?;
    json.push(b'\n');
    fs::write(&path, json).map_err(|e| Error::io(&path, e))
}

pub fn load_dataset(dir: &Path, stem: &str) -> Result<(Dataset, Option<DatasetSpec>)> {
    let path = dir.join(format!("{stem}.json"));
    let sidecar: DatasetSidecar = serde_json::from_slice(&fs::read(&path).map_err(|e| Error::io(&path, e))?)?;
    let (features, _, checksum) = logit_io::read_matrix(&dir.join(format!("{stem}.lgts")))?;
    if checksum != sidecar.features_checksum {
        return Err(Error::ChecksumMismatch { expected: sidecar.features_checksum.0, actual: checksum.0 });
    }
    let labels = logit_io::read_labels(&dir.join(format!("{stem}.labels")))?;
    if labels.len() != features.rows() {
        return Err(Error::ShapeMismatch(format!("{} labels for {} rows", labels.len(), features.rows())));
    }
    if labels.iter().any(|&l| l >= sidecar.n_classes) {
        return Err(Error::InvalidInput("label out of range".into()));
    }
    Ok((Dataset { features, labels, n_classes: sidecar.n_classes, classes: sidecar.classes }, sidecar.spec))
}

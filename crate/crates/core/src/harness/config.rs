use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kd::{Activation, Hyper, Strategy};
use crate::metrics::{EpochMode, DEFAULT_SSP_K};
use crate::synthgen::{DatasetSpec, DEFAULT_TEST_FRACTION};

/// Where the target dataset comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    Synthetic(DatasetSpec),
    /// A directory written by `gen-data`: `train.*` and `test.*`.
    External { dir: PathBuf },
}

/// Hidden widths and activation of an MLP; input and output sizes come
/// from the dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelRecipe {
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
}

impl ModelRecipe {
    pub fn layer_sizes(&self, input: usize, classes: usize) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.hidden.len() + 2);
        sizes.push(input);
        sizes.extend_from_slice(&self.hidden);
        sizes.push(classes);
        sizes
    }
}

fn default_teacher_epochs() -> usize {
    60
}

fn default_teacher_lr() -> f64 {
    0.05
}

fn default_batch() -> usize {
    32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TeacherSource {
    /// Train an MLP on the target data with plain cross-entropy.
    Train {
        hidden: Vec<usize>,
        #[serde(default)]
        activation: Activation,
        #[serde(default = "default_teacher_epochs")]
        epochs: usize,
        #[serde(default = "default_teacher_lr")]
        lr: f64,
        #[serde(default = "default_batch")]
        batch_size: usize,
        #[serde(default)]
        strategy: Strategy,
        #[serde(default)]
        seed: u64,
    },
    /// Another pool member with its top logit raised by `margin`.
    Overconfident { base: String, margin: f64 },
    /// Logits exported elsewhere, in `LGTS` files with manifests.
    External { train_logits: PathBuf, test_logits: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherEntry {
    pub id: String,
    #[serde(flatten)]
    pub source: TeacherSource,
}

fn default_test_fraction() -> f64 {
    DEFAULT_TEST_FRACTION
}

fn default_ssp_k() -> usize {
    DEFAULT_SSP_K
}

fn default_true() -> bool {
    true
}

fn default_topk() -> usize {
    5
}

fn default_topk_samples() -> usize {
    3
}

/// One distillation experiment: dataset, teacher pool, student recipe,
/// loss/strategy settings and hyperparameters, plus the seed list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Dataset id used to group correlations across reports.
    pub name: String,
    pub dataset: DatasetSource,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    pub teachers: Vec<TeacherEntry>,
    pub student: ModelRecipe,
    /// Student hyperparameters; `seed` is replaced by each entry of `seeds`.
    #[serde(default)]
    pub hyper: Hyper,
    /// Unset means `static`, or `online` under AUG-KD.
    #[serde(default)]
    pub metric_mode: Option<EpochMode>,
    #[serde(default = "default_ssp_k")]
    pub ssp_k: usize,
    pub seeds: Vec<u64>,
    /// Also train a cross-entropy-only student per seed.
    #[serde(default = "default_true")]
    pub baseline: bool,
    #[serde(default = "default_topk")]
    pub topk: usize,
    /// How many training samples get a top-k logit listing per teacher.
    #[serde(default = "default_topk_samples")]
    pub topk_samples: usize,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Loads a config file; relative paths inside resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let DatasetSource::External { dir } = &mut self.dataset {
            fix(dir);
        }
        for t in &mut self.teachers {
            if let TeacherSource::External { train_logits, test_logits } = &mut t.source {
                fix(train_logits);
                fix(test_logits);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::Config("config needs a name".into()));
        }
        if self.teachers.is_empty() {
            return Err(Error::Config("teacher pool is empty".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config(format!("test_fraction {} not in (0, 1)", self.test_fraction)));
        }
        if self.hyper.beta <= 0.0 {
            return Err(Error::Config("distillation needs beta > 0 (the CE baseline is trained separately)".into()));
        }
        self.hyper.validate()?;
        if self.ssp_k < 2 || self.topk == 0 {
            return Err(Error::Config("ssp_k must be >= 2 and topk >= 1".into()));
        }
        let mut seen_seeds = BTreeSet::new();
        if self.seeds.iter().any(|s| !seen_seeds.insert(*s)) {
            return Err(Error::Config("duplicate seed".into()));
        }
        let mut ids = BTreeSet::new();
        for t in &self.teachers {
            if t.id.is_empty() || t.id.contains(['/', '\\', ',']) {
                return Err(Error::Config(format!("invalid teacher id `{}`", t.id)));
            }
            if !ids.insert(t.id.as_str()) {
                return Err(Error::Config(format!("duplicate teacher id `{}`", t.id)));
            }
        }
        if let DatasetSource::Synthetic(spec) = &self.dataset {
            spec.validate()?;
        }
        if let DatasetSource::External { dir } = &self.dataset {
            if !dir.is_dir() {
                return Err(Error::Config(format!("dataset directory {} does not exist", dir.display())));
            }
        }
        for t in &self.teachers {
            match &t.source {
                TeacherSource::Train { epochs, lr, batch_size, strategy, .. } => {
                    if *epochs == 0 || *batch_size == 0 || !(lr.is_finite() && *lr > 0.0) {
                        return Err(Error::Config(format!("teacher `{}`: epochs, batch_size and lr must be positive", t.id)));
                    }
                    if *strategy == Strategy::AugKd {
                        return Err(Error::Config(format!("teacher `{}`: teachers train with fz or ft", t.id)));
                    }
                }
                TeacherSource::Overconfident { base, margin } => {
                    if !(*margin >= 0.0 && margin.is_finite()) {
                        return Err(Error::Config(format!("teacher `{}`: margin must be >= 0", t.id)));
                    }
                    let base_entry = self.teachers.iter().find(|b| &b.id == base);
                    match base_entry.map(|b| &b.source) {
                        None => return Err(Error::Config(format!("teacher `{}`: unknown base `{base}`", t.id))),
                        Some(TeacherSource::Overconfident { .. }) => {
                            return Err(Error::Config(format!("teacher `{}`: base `{base}` must not itself be derived", t.id)))
                        }
                        Some(_) => {}
                    }
                }
                TeacherSource::External { train_logits, test_logits } => {
                    for p in [train_logits, test_logits] {
                        if !p.is_file() {
                            return Err(Error::Config(format!("teacher `{}`: {} does not exist", t.id, p.display())));
                        }
                    }
                    if self.hyper.strategy == Strategy::AugKd {
                        return Err(Error::Config(format!("teacher `{}`: precomputed logits cannot drive AUG-KD", t.id)));
                    }
                    if !matches!(self.dataset, DatasetSource::External { .. }) {
                        return Err(Error::Config(format!(
                            "teacher `{}`: external logits need the matching external dataset",
                            t.id
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn effective_mode(&self) -> EpochMode {
        match (self.metric_mode, self.hyper.strategy) {
            (Some(mode), _) => mode,
            (None, Strategy::AugKd) => EpochMode::Online,
            (None, _) => EpochMode::Static,
        }
    }

    /// SHA-256 over the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// The desk-scale default: 20-class synthetic data, a pool of trained
    /// MLPs of increasing width and two training lengths, a width-8
    /// student.
    pub fn desk_default() -> Self {
        let train = |hidden: usize, epochs: usize| TeacherSource::Train {
            hidden: vec![hidden],
            activation: Activation::Relu,
            epochs,
            lr: default_teacher_lr(),
            batch_size: default_batch(),
            strategy: Strategy::Ft,
            seed: 1,
        };
        Self {
            name: "synthetic-fg".into(),
            dataset: DatasetSource::Synthetic(DatasetSpec::default()),
            test_fraction: DEFAULT_TEST_FRACTION,
            teachers: vec![
                TeacherEntry { id: "w008".into(), source: train(8, 60) },
                TeacherEntry { id: "w032".into(), source: train(32, 60) },
                TeacherEntry { id: "w128".into(), source: train(128, 60) },
                TeacherEntry { id: "w512".into(), source: train(512, 60) },
                TeacherEntry { id: "w032-short".into(), source: train(32, 5) },
                TeacherEntry { id: "w512-short".into(), source: train(512, 5) },
            ],
            student: ModelRecipe { hidden: vec![8], activation: Activation::Relu },
            hyper: Hyper::default(),
            metric_mode: None,
            ssp_k: DEFAULT_SSP_K,
            seeds: vec![1, 2, 3, 4, 5],
            baseline: true,
            topk: default_topk(),
            topk_samples: default_topk_samples(),
        }
    }
}

//! The `geodiag-bundle/1` on-disk format.
//!
//! A bundle is a directory holding `meta.json`, `features.bin`, `labels.bin`
//! and, optionally, `logits.bin`. Binary payloads are headerless little-endian
//! arrays in row-major order: binary32 for features and logits, u32 for labels.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT_ID: &str = "geodiag-bundle/1";

const META_FILE: &str = "meta.json";
const FEATURES_FILE: &str = "features.bin";
const LABELS_FILE: &str = "labels.bin";
const LOGITS_FILE: &str = "logits.bin";

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,
}

impl SourceMeta {
    pub fn synthetic(layer: &str, dataset: &str, split: &str) -> Self {
        SourceMeta {
            model: Some("synthetic".into()),
            layer: Some(layer.into()),
            dataset: Some(dataset.into()),
            split: Some(split.into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BundleMeta {
    format: String,
    num_samples: usize,
    feature_dim: usize,
    num_classes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    class_names: Option<Vec<String>>,
    has_logits: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    logit_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source: Option<SourceMeta>,
    /// Producer-specific keys (e.g. the extractor's transform record), kept verbatim.
    #[serde(flatten)]
    extra: BTreeMap<String, serde_json::Value>,
}

/// Labeled feature matrix with optional logits.
///
/// Features are kept in binary32, exactly as stored on disk, so a read/write
/// cycle is bit-exact. Analyses convert to `f64` through [`FeatureBundle::features_f64`].
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBundle {
    pub features: DMatrix<f32>,
    pub labels: Vec<u32>,
    pub num_classes: usize,
    pub logits: Option<DMatrix<f32>>,
    pub class_names: Option<Vec<String>>,
    pub source: Option<SourceMeta>,
    pub extra_meta: BTreeMap<String, serde_json::Value>,
}

impl FeatureBundle {
    /// Builds and validates a bundle.
    pub fn new(
        features: DMatrix<f32>,
        labels: Vec<u32>,
        num_classes: usize,
        logits: Option<DMatrix<f32>>,
    ) -> Result<Self> {
        let bundle = FeatureBundle {
            features,
            labels,
            num_classes,
            logits,
            class_names: None,
            source: None,
            extra_meta: BTreeMap::new(),
        };
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn with_source(mut self, source: SourceMeta) -> Self {
        self.source = Some(source);
        self
    }

    pub fn num_samples(&self) -> usize {
        self.features.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn features_f64(&self) -> DMatrix<f64> {
        self.features.map(f64::from)
    }

    pub fn logits_f64(&self) -> Option<DMatrix<f64>> {
        self.logits.as_ref().map(|l| l.map(f64::from))
    }

    /// Number of samples per class, indexed by class id.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }

    /// Row indices of every class, in ascending row order.
    pub fn class_rows(&self) -> Vec<Vec<usize>> {
        let mut rows = vec![Vec::new(); self.num_classes];
        for (i, &l) in self.labels.iter().enumerate() {
            rows[l as usize].push(i);
        }
        rows
    }

    /// Copies the given rows (features, labels, logits) into a new bundle.
    /// Metadata is carried over unchanged.
    pub fn select_rows(&self, rows: &[usize]) -> Result<FeatureBundle> {
        let n = self.feature_dim();
        let features = DMatrix::from_fn(rows.len(), n, |i, j| self.features[(rows[i], j)]);
        let logits = self
            .logits
            .as_ref()
            .map(|l| DMatrix::from_fn(rows.len(), l.ncols(), |i, j| l[(rows[i], j)]));
        let labels = rows.iter().map(|&r| self.labels[r]).collect();
        let mut out = FeatureBundle::new(features, labels, self.num_classes, logits)?;
        out.class_names = self.class_names.clone();
        out.source = self.source.clone();
        out.extra_meta = self.extra_meta.clone();
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.features.nrows();
        if self.labels.len() != m {
            return Err(Error::Meta(format!(
                "{} labels for {} feature rows",
                self.labels.len(),
                m
            )));
        }
        if self.num_classes == 0 {
            return Err(Error::Meta("num_classes must be positive".into()));
        }
        if let Some(names) = &self.class_names {
            if names.len() != self.num_classes {
                return Err(Error::Meta(format!(
                    "{} class names for {} classes",
                    names.len(),
                    self.num_classes
                )));
            }
        }
        check_finite(&self.features, "features")?;
        for (row, &label) in self.labels.iter().enumerate() {
            if label as usize >= self.num_classes {
                return Err(Error::LabelOutOfRange {
                    row,
                    label,
                    num_classes: self.num_classes,
                });
            }
        }
        if let Some(class) = self.class_counts().iter().position(|&c| c == 0) {
            return Err(Error::EmptyClass(class));
        }
        if let Some(logits) = &self.logits {
            if logits.nrows() != m {
                return Err(Error::Meta(format!(
                    "logits have {} rows, features have {}",
                    logits.nrows(),
                    m
                )));
            }
            check_finite(logits, "logits")?;
        }
        Ok(())
    }
}

fn check_finite(mat: &DMatrix<f32>, what: &'static str) -> Result<()> {
    // Row-major scan so the reported position is the first one on disk.
    for row in 0..mat.nrows() {
        for col in 0..mat.ncols() {
            if !mat[(row, col)].is_finite() {
                return Err(Error::NonFinite { what, row, col });
            }
        }
    }
    Ok(())
}

fn read_payload(dir: &Path, file: &str, what: &'static str, expected: u64) -> Result<Vec<u8>> {
    let path = dir.join(file);
    if !path.is_file() {
        return Err(Error::MissingFile(path));
    }
    let bytes = fs::read(&path)?;
    let found = bytes.len() as u64;
    if found < expected {
        return Err(Error::Truncated {
            what,
            expected,
            found,
        });
    }
    if found > expected {
        return Err(Error::SizeMismatch {
            what,
            expected,
            found,
        });
    }
    Ok(bytes)
}

fn decode_f32_rows(bytes: &[u8], rows: usize, cols: usize) -> DMatrix<f32> {
    let values: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    DMatrix::from_row_slice(rows, cols, &values)
}

fn encode_f32_rows(mat: &DMatrix<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(mat.len() * 4);
    for row in 0..mat.nrows() {
        for col in 0..mat.ncols() {
            out.extend_from_slice(&mat[(row, col)].to_le_bytes());
        }
    }
    out
}

pub fn read_bundle(dir: impl AsRef<Path>) -> Result<FeatureBundle> {
    let dir = dir.as_ref();
    let meta_path = dir.join(META_FILE);
    if !meta_path.is_file() {
        return Err(Error::MissingFile(meta_path));
    }
    let meta: BundleMeta = serde_json::from_slice(&fs::read(&meta_path)?)?;
    if meta.format != FORMAT_ID {
        return Err(Error::Meta(format!("unsupported format {:?}", meta.format)));
    }
    let (m, n) = (meta.num_samples, meta.feature_dim);

    let feature_bytes = read_payload(dir, FEATURES_FILE, "features", (m * n * 4) as u64)?;
    let features = decode_f32_rows(&feature_bytes, m, n);

    let label_bytes = read_payload(dir, LABELS_FILE, "labels", (m * 4) as u64)?;
    let labels: Vec<u32> = label_bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();

    let logits = if meta.has_logits {
        let k = meta
            .logit_dim
            .ok_or_else(|| Error::Meta("has_logits set without logit_dim".into()))?;
        let bytes = read_payload(dir, LOGITS_FILE, "logits", (m * k * 4) as u64)?;
        Some(decode_f32_rows(&bytes, m, k))
    } else {
        None
    };

    let bundle = FeatureBundle {
        features,
        labels,
        num_classes: meta.num_classes,
        logits,
        class_names: meta.class_names,
        source: meta.source,
        extra_meta: meta.extra,
    };
    bundle.validate()?;
    Ok(bundle)
}

pub fn write_bundle(bundle: &FeatureBundle, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let meta = BundleMeta {
        format: FORMAT_ID.to_string(),
        num_samples: bundle.num_samples(),
        feature_dim: bundle.feature_dim(),
        num_classes: bundle.num_classes,
        class_names: bundle.class_names.clone(),
        has_logits: bundle.logits.is_some(),
        logit_dim: bundle.logits.as_ref().map(|l| l.ncols()),
        source: bundle.source.clone(),
        extra: bundle.extra_meta.clone(),
    };
    let mut meta_json = serde_json::to_vec_pretty(&meta)?;
    meta_json.push(b'\n');
    fs::write(dir.join(META_FILE), meta_json)?;
    fs::write(dir.join(FEATURES_FILE), encode_f32_rows(&bundle.features))?;
    let labels: Vec<u8> = bundle.labels.iter().flat_map(|l| l.to_le_bytes()).collect();
    fs::write(dir.join(LABELS_FILE), labels)?;
    let logits_path = dir.join(LOGITS_FILE);
    match &bundle.logits {
        Some(logits) => fs::write(logits_path, encode_f32_rows(logits))?,
        None if logits_path.exists() => fs::remove_file(logits_path)?,
        None => {}
    }
    Ok(())
}

//! Feature-vector datasets and their JSONL manifests.
//!
//! A manifest is one JSON object per line,
//! `{"id": "...", "label": 3, "features": [0.1, ...]}`, next to a header
//! sidecar (`<stem>.header.json`) recording the feature dimension and the
//! label space sizes.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{ClassId, LabelSpace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Synthetic,
    Ingested,
}

/// Labeled feature vectors stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDataset {
    feature_dim: usize,
    features: Vec<f64>,
    labels: Vec<ClassId>,
    ids: Vec<String>,
    provenance: Provenance,
}

impl FeatureDataset {
    pub fn new(feature_dim: usize, provenance: Provenance) -> Self {
        Self {
            feature_dim,
            features: Vec::new(),
            labels: Vec::new(),
            ids: Vec::new(),
            provenance,
        }
    }

    pub fn push(&mut self, id: impl Into<String>, label: ClassId, features: &[f64]) -> Result<()> {
        if features.len() != self.feature_dim {
            return Err(Error::data(format!(
                "sample has {} features, dataset dimension is {}",
                features.len(),
                self.feature_dim
            )));
        }
        if features.iter().any(|x| !x.is_finite()) {
            return Err(Error::data("non-finite feature value"));
        }
        self.features.extend_from_slice(features);
        self.labels.push(label);
        self.ids.push(id.into());
        Ok(())
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self, i: usize) -> &[f64] {
        &self.features[i * self.feature_dim..(i + 1) * self.feature_dim]
    }

    pub fn label(&self, i: usize) -> ClassId {
        self.labels[i]
    }

    pub fn labels(&self) -> &[ClassId] {
        &self.labels
    }

    pub fn id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    /// Row-major feature matrix.
    pub fn feature_matrix(&self) -> &[f64] {
        &self.features
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, ClassId, &[f64])> + '_ {
        (0..self.len()).map(move |i| (self.id(i), self.label(i), self.features(i)))
    }

    /// Indices of samples with the given label, in storage order.
    pub fn indices_of(&self, class: ClassId) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &y)| y == class)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn select(&self, indices: &[usize]) -> FeatureDataset {
        let mut out = FeatureDataset::new(self.feature_dim, self.provenance);
        for &i in indices {
            out.features.extend_from_slice(self.features(i));
            out.labels.push(self.labels[i]);
            out.ids.push(self.ids[i].clone());
        }
        out
    }

    /// Appends `other`, rewriting each label through `relabel`.
    pub fn extend_relabelled(
        &mut self,
        other: &FeatureDataset,
        relabel: impl Fn(ClassId) -> ClassId,
    ) -> Result<()> {
        if other.feature_dim != self.feature_dim {
            return Err(Error::data(format!(
                "feature dimension mismatch: {} vs {}",
                self.feature_dim, other.feature_dim
            )));
        }
        self.features.extend_from_slice(&other.features);
        self.labels.extend(other.labels.iter().map(|&y| relabel(y)));
        self.ids.extend(other.ids.iter().cloned());
        Ok(())
    }

    pub fn check_labels(&self, num_classes: usize) -> Result<()> {
        match self.labels.iter().find(|&&y| y >= num_classes) {
            Some(y) => Err(Error::data(format!(
                "label {y} is not a valid class (expected < {num_classes})"
            ))),
            None => Ok(()),
        }
    }

    pub fn check_in_space(&self, space: &LabelSpace) -> Result<()> {
        self.check_labels(space.num_classes())
    }

    /// Writes the manifest and its header sidecar.
    pub fn write_manifest(&self, path: &Path, space: &LabelSpace) -> Result<()> {
        self.check_in_space(space)?;
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for (id, label, features) in self.iter() {
            let rec = RecordRef { id, label, features };
            serde_json::to_writer(&mut w, &rec).map_err(|e| Error::io(path, e.into()))?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        let header = ManifestHeader {
            feature_dim: self.feature_dim,
            num_target: space.num_target(),
            num_auxiliary: space.num_auxiliary(),
            num_samples: self.len(),
            provenance: self.provenance,
        };
        write_json(&header_path(path), &header)
    }

    /// Reads a manifest; uses the sidecar header when present.
    pub fn read_manifest(path: &Path) -> Result<(FeatureDataset, Option<ManifestHeader>)> {
        let header_file = header_path(path);
        let header: Option<ManifestHeader> = if header_file.exists() {
            Some(read_json(&header_file)?)
        } else {
            None
        };
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut ds: Option<FeatureDataset> = header
            .as_ref()
            .map(|h| FeatureDataset::new(h.feature_dim, h.provenance));
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: Record = serde_json::from_str(&line).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                message: e.to_string(),
            })?;
            let ds = ds.get_or_insert_with(|| {
                FeatureDataset::new(rec.features.len(), Provenance::Ingested)
            });
            ds.push(rec.id, rec.label, &rec.features).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                message: e.to_string(),
            })?;
        }
        let ds = ds.ok_or_else(|| Error::data(format!("{}: empty manifest", path.display())))?;
        if let Some(h) = &header {
            if h.num_samples != ds.len() {
                return Err(Error::data(format!(
                    "{}: header declares {} samples, manifest has {}",
                    path.display(),
                    h.num_samples,
                    ds.len()
                )));
            }
            ds.check_labels(h.num_target + h.num_auxiliary)?;
        }
        Ok((ds, header))
    }
}

#[derive(Serialize)]
struct RecordRef<'a> {
    id: &'a str,
    label: ClassId,
    features: &'a [f64],
}

#[derive(Deserialize)]
struct Record {
    id: String,
    label: ClassId,
    features: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub feature_dim: usize,
    pub num_target: usize,
    pub num_auxiliary: usize,
    pub num_samples: usize,
    pub provenance: Provenance,
}

/// `dir/train.jsonl` → `dir/train.header.json`.
pub fn header_path(manifest: &Path) -> PathBuf {
    let stem = manifest
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    manifest.with_file_name(format!("{stem}.header.json"))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::io(path, e.into()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_wrong_dim() {
        let mut ds = FeatureDataset::new(2, Provenance::Synthetic);
        assert!(ds.push("a", 0, &[1.0]).is_err());
        assert!(ds.push("a", 0, &[1.0, f64::NAN]).is_err());
        ds.push("a", 0, &[1.0, 2.0]).unwrap();
        assert_eq!(ds.features(0), &[1.0, 2.0]);
    }

    #[test]
    fn header_path_naming() {
        assert_eq!(
            header_path(Path::new("/x/train.jsonl")),
            PathBuf::from("/x/train.header.json")
        );
    }

    #[test]
    fn header_mismatch_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let mut ds = FeatureDataset::new(1, Provenance::Synthetic);
        ds.push("a", 1, &[0.5]).unwrap();
        ds.write_manifest(&path, &LabelSpace::targets_only(2).unwrap()).unwrap();
        let mut h: ManifestHeader = read_json(&header_path(&path)).unwrap();
        h.num_target = 1;
        write_json(&header_path(&path), &h).unwrap();
        assert!(FeatureDataset::read_manifest(&path).is_err());
    }

    #[test]
    fn manifest_without_header_is_ingested() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("raw.jsonl");
        std::fs::write(
            &path,
            "{\"id\":\"a\",\"label\":0,\"features\":[1,2]}\n\n{\"id\":\"b\",\"label\":1,\"features\":[3,4]}\n",
        )
        .unwrap();
        let (ds, header) = FeatureDataset::read_manifest(&path).unwrap();
        assert!(header.is_none());
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.provenance(), Provenance::Ingested);
        assert_eq!(ds.features(1), &[3.0, 4.0]);
    }

    #[test]
    fn ragged_manifest_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("raw.jsonl");
        std::fs::write(
            &path,
            "{\"id\":\"a\",\"label\":0,\"features\":[1,2]}\n{\"id\":\"b\",\"label\":1,\"features\":[3]}\n",
        )
        .unwrap();
        match FeatureDataset::read_manifest(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn manifest_round_trip_is_bit_exact(
            rows in prop::collection::vec((0usize..3, prop::collection::vec(-1e6f64..1e6, 3)), 1..20)
        ) {
            let mut ds = FeatureDataset::new(3, Provenance::Synthetic);
            for (i, (y, f)) in rows.iter().enumerate() {
                ds.push(format!("s{i}"), *y, f).unwrap();
            }
            let space = LabelSpace::new(2, vec![(2, 1)]).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("m.jsonl");
            ds.write_manifest(&path, &space).unwrap();
            let (back, header) = FeatureDataset::read_manifest(&path).unwrap();
            prop_assert_eq!(back, ds);
            let h = header.unwrap();
            prop_assert_eq!((h.feature_dim, h.num_target, h.num_auxiliary), (3, 2, 1));
        }
    }
}

//! Label spaces and class statistics.
//!
//! Class ids are 0-based: `0..L` are target classes and `L..L+K` are
//! auxiliary classes, each queried from exactly one target class.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ClassId = usize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "LabelSpaceRepr", into = "LabelSpaceRepr")]
pub struct LabelSpace {
    num_target: usize,
    /// `neighbor_of[k]` is the target class auxiliary class `L + k` was queried from.
    neighbor_of: Vec<ClassId>,
    class_names: BTreeMap<ClassId, String>,
}

#[derive(Serialize, Deserialize)]
struct LabelSpaceRepr {
    num_target: usize,
    num_auxiliary: usize,
    neighbor_of: BTreeMap<ClassId, ClassId>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    class_names: BTreeMap<ClassId, String>,
}

impl TryFrom<LabelSpaceRepr> for LabelSpace {
    type Error = Error;

    fn try_from(r: LabelSpaceRepr) -> Result<Self> {
        if r.neighbor_of.len() != r.num_auxiliary {
            return Err(Error::data(format!(
                "num_auxiliary is {} but neighbor_of has {} entries",
                r.num_auxiliary,
                r.neighbor_of.len()
            )));
        }
        let space = LabelSpace::new(r.num_target, r.neighbor_of.into_iter().collect())?;
        space.with_names(r.class_names)
    }
}

impl From<LabelSpace> for LabelSpaceRepr {
    fn from(s: LabelSpace) -> Self {
        LabelSpaceRepr {
            num_target: s.num_target,
            num_auxiliary: s.neighbor_of.len(),
            neighbor_of: s
                .neighbor_of
                .iter()
                .enumerate()
                .map(|(k, &t)| (s.num_target + k, t))
                .collect(),
            class_names: s.class_names,
        }
    }
}

impl LabelSpace {
    /// Validates `(aux id, target id)` pairs. Aux ids must be exactly
    /// `L..L+K` in any order.
    pub fn new(num_target: usize, neighbor_pairs: Vec<(ClassId, ClassId)>) -> Result<Self> {
        if num_target == 0 {
            return Err(Error::data("label space needs at least one target class"));
        }
        let k = neighbor_pairs.len();
        let mut neighbor_of: Vec<Option<ClassId>> = vec![None; k];
        for (aux, target) in neighbor_pairs {
            if target >= num_target {
                return Err(Error::data(format!(
                    "auxiliary class {aux} points at target {target}, but only {num_target} target classes exist"
                )));
            }
            if aux < num_target || aux >= num_target + k {
                return Err(Error::data(format!(
                    "auxiliary id {aux} outside contiguous range {num_target}..{}",
                    num_target + k
                )));
            }
            let slot = &mut neighbor_of[aux - num_target];
            if slot.is_some() {
                return Err(Error::data(format!("duplicate auxiliary id {aux}")));
            }
            *slot = Some(target);
        }
        Ok(Self {
            num_target,
            neighbor_of: neighbor_of.into_iter().map(|t| t.unwrap()).collect(),
            class_names: BTreeMap::new(),
        })
    }

    /// Baseline space with no auxiliary classes.
    pub fn targets_only(num_target: usize) -> Result<Self> {
        Self::new(num_target, Vec::new())
    }

    pub fn with_names(mut self, names: BTreeMap<ClassId, String>) -> Result<Self> {
        if let Some(&bad) = names.keys().find(|&&id| id >= self.num_classes()) {
            return Err(Error::data(format!("class name given for unknown class {bad}")));
        }
        self.class_names = names;
        Ok(self)
    }

    pub fn num_target(&self) -> usize {
        self.num_target
    }

    pub fn num_auxiliary(&self) -> usize {
        self.neighbor_of.len()
    }

    pub fn num_classes(&self) -> usize {
        self.num_target + self.neighbor_of.len()
    }

    pub fn is_auxiliary(&self, class: ClassId) -> bool {
        class >= self.num_target && class < self.num_classes()
    }

    /// Target class an auxiliary class was queried from.
    pub fn neighbor_of(&self, aux: ClassId) -> Option<ClassId> {
        aux.checked_sub(self.num_target)
            .and_then(|k| self.neighbor_of.get(k))
            .copied()
    }

    /// True when one class is auxiliary and was queried from the other.
    /// Symmetric by construction.
    pub fn are_neighbors(&self, a: ClassId, b: ClassId) -> bool {
        self.neighbor_of(a) == Some(b) || self.neighbor_of(b) == Some(a)
    }

    /// Auxiliary classes queried from `target`, in id order.
    pub fn auxiliaries_of(&self, target: ClassId) -> Vec<ClassId> {
        self.neighbor_of
            .iter()
            .enumerate()
            .filter(|(_, &t)| t == target)
            .map(|(k, _)| self.num_target + k)
            .collect()
    }

    pub fn neighbor_pairs(&self) -> Vec<(ClassId, ClassId)> {
        self.neighbor_of
            .iter()
            .enumerate()
            .map(|(k, &t)| (self.num_target + k, t))
            .collect()
    }

    pub fn class_name(&self, class: ClassId) -> Option<&str> {
        self.class_names.get(&class).map(String::as_str)
    }

    pub fn class_names(&self) -> &BTreeMap<ClassId, String> {
        &self.class_names
    }

    pub fn contains(&self, class: ClassId) -> bool {
        class < self.num_classes()
    }
}

/// Per-class training sample counts. Every count is at least one because
/// the balanced losses take `log n_y`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<u64>", into = "Vec<u64>")]
pub struct ClassStats {
    counts: Vec<u64>,
}

impl TryFrom<Vec<u64>> for ClassStats {
    type Error = Error;

    fn try_from(counts: Vec<u64>) -> Result<Self> {
        Self::new(counts)
    }
}

impl From<ClassStats> for Vec<u64> {
    fn from(s: ClassStats) -> Self {
        s.counts
    }
}

impl ClassStats {
    pub fn new(counts: Vec<u64>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::data("class statistics need at least one class"));
        }
        if let Some(c) = counts.iter().position(|&n| n == 0) {
            return Err(Error::data(format!("class {c} has zero training samples")));
        }
        Ok(Self { counts })
    }

    /// Counts labels in `0..num_classes`.
    pub fn from_labels(labels: impl IntoIterator<Item = ClassId>, num_classes: usize) -> Result<Self> {
        Self::new(tally(labels, num_classes)?)
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn log_counts(&self) -> Vec<f64> {
        self.counts.iter().map(|&n| (n as f64).ln()).collect()
    }

    pub fn imbalance_factor(&self) -> f64 {
        imbalance_factor(&self.counts).expect("validated non-empty")
    }
}

/// Label histogram that tolerates zero-count classes.
pub fn tally(labels: impl IntoIterator<Item = ClassId>, num_classes: usize) -> Result<Vec<u64>> {
    let mut counts = vec![0u64; num_classes];
    for y in labels {
        *counts
            .get_mut(y)
            .ok_or_else(|| Error::data(format!("label {y} outside 0..{num_classes}")))? += 1;
    }
    Ok(counts)
}

/// `max(counts) / min(counts)`.
pub fn imbalance_factor(counts: &[u64]) -> Result<f64> {
    let max = counts.iter().copied().max().ok_or_else(|| Error::data("empty counts"))?;
    let min = counts.iter().copied().min().unwrap();
    if min == 0 {
        return Err(Error::data("imbalance factor undefined with a zero count"));
    }
    Ok(max as f64 / min as f64)
}

//! Per-epoch auxiliary sampling.
//!
//! A plan decides once, per run, which auxiliary categories are attached to
//! each expanded target (the head / medium / tail ratio), and each epoch
//! redraws at most `per_class_cap` samples per attached category without
//! replacement.

use std::collections::BTreeMap;

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::config::{AuxRatio, ExpandSet, RunConfig};
use crate::dataset::FeatureDataset;
use crate::error::{Error, Result};
use crate::labels::{ClassId, ClassStats, LabelSpace};
use crate::metrics::{assign_splits, split_totals, Split};
use crate::rng::{tag, SeedStream};

/// `(1, ⌈N_h/N_m⌉, ⌈N_h/N_t⌉)`.
pub fn derive_ratio(totals: [u64; 3]) -> Result<[u64; 3]> {
    let [h, m, t] = totals;
    if h == 0 || m == 0 || t == 0 {
        return Err(Error::data(format!(
            "split totals must all be >= 1, got ({h}, {m}, {t})"
        )));
    }
    Ok([1, h.div_ceil(m), h.div_ceil(t)])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxSamplingPlan {
    pub per_class_cap: usize,
    /// Head / medium / tail multipliers.
    pub ratio: [f64; 3],
    pub expanded_targets: BTreeMap<ClassId, Split>,
    pub num_target: usize,
    /// Attached auxiliary classes (ids of the input space), in compact order:
    /// attached[i] trains as class `num_target + i`.
    pub attached: Vec<ClassId>,
    /// Auxiliary classes left out by the ratio or because they have no samples.
    pub dropped: Vec<ClassId>,
    #[serde(skip)]
    members: Vec<Vec<usize>>,
}

/// One epoch's auxiliary draw.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpochSample {
    /// Sample indices into the auxiliary dataset, ascending.
    pub indices: Vec<usize>,
    /// Drawn samples per attached class (compact order).
    pub counts: Vec<u64>,
}

impl EpochSample {
    /// FNV-1a digest of the drawn indices, for logging.
    pub fn digest(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for &i in &self.indices {
            for b in (i as u64).to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }
}

/// Number of auxiliary categories attached to a target whose split has
/// multiplier `r`, given `k` categories at the largest multiplier.
pub fn attached_count(k: usize, r: f64, r_max: f64) -> usize {
    if r_max <= 0.0 || r <= 0.0 {
        return 0;
    }
    let exact = k as f64 * r / r_max;
    // tolerate representation error before taking the ceiling
    (exact - 1e-9).ceil().max(0.0) as usize
}

impl AuxSamplingPlan {
    /// `target_stats` holds the `L` target training counts; `aux` carries
    /// labels in `L..L+K` of `space`.
    pub fn build(
        space: &LabelSpace,
        target_stats: &ClassStats,
        aux: &FeatureDataset,
        cfg: &RunConfig,
        seeds: SeedStream,
    ) -> Result<Self> {
        let l = space.num_target();
        if target_stats.len() != l {
            return Err(Error::data(format!(
                "target statistics cover {} classes, label space has {l} targets",
                target_stats.len()
            )));
        }
        if cfg.per_class_cap == 0 {
            return Err(Error::config("per_class_cap must be >= 1"));
        }
        aux.check_in_space(space)?;
        if let Some(bad) = aux.labels().iter().find(|&&y| y < l) {
            return Err(Error::data(format!("auxiliary dataset contains target label {bad}")));
        }
        let splits = assign_splits(target_stats);
        let ratio = match cfg.aux_ratio {
            AuxRatio::Fixed { head, medium, tail } => [head, medium, tail],
            AuxRatio::Formula => {
                let totals = split_totals(target_stats, &splits);
                if totals[0] == 0 {
                    return Err(Error::config(
                        "formula ratio needs at least one head class; pass an explicit h:m:t ratio",
                    ));
                }
                // an empty split's entry never applies
                let fill = |n: u64| if n == 0 { 1 } else { n };
                let r = derive_ratio([totals[0], fill(totals[1]), fill(totals[2])])?;
                [r[0] as f64, r[1] as f64, r[2] as f64]
            }
        };
        let r_max = ratio.iter().cloned().fold(0.0, f64::max);

        let mut available = vec![Vec::new(); space.num_auxiliary()];
        for (i, &y) in aux.labels().iter().enumerate() {
            available[y - l].push(i);
        }

        let mut expanded_targets = BTreeMap::new();
        let mut chosen = vec![false; space.num_auxiliary()];
        for t in 0..l {
            let split = splits.get(t).unwrap();
            let expand = match cfg.expand {
                ExpandSet::All => true,
                ExpandSet::MediumTail => split != Split::Many,
            };
            if !expand {
                continue;
            }
            expanded_targets.insert(t, split);
            let mut pool: Vec<ClassId> = space
                .auxiliaries_of(t)
                .into_iter()
                .filter(|&a| !available[a - l].is_empty())
                .collect();
            pool.shuffle(&mut seeds.derive(&[tag::AUX_SELECT, t as u64]));
            let n = attached_count(cfg.aux_per_target, ratio[split.index()], r_max).min(pool.len());
            for &a in &pool[..n] {
                chosen[a - l] = true;
            }
        }
        let mut attached = Vec::new();
        let mut dropped = Vec::new();
        let mut members = Vec::new();
        for (k, &c) in chosen.iter().enumerate() {
            if c {
                attached.push(l + k);
                members.push(std::mem::take(&mut available[k]));
            } else {
                dropped.push(l + k);
            }
        }
        Ok(Self {
            per_class_cap: cfg.per_class_cap,
            ratio,
            expanded_targets,
            num_target: l,
            attached,
            dropped,
            members,
        })
    }

    pub fn num_attached(&self) -> usize {
        self.attached.len()
    }

    /// Label space over `L` targets plus the attached auxiliary classes.
    pub fn compact_space(&self, space: &LabelSpace) -> Result<LabelSpace> {
        let pairs = self
            .attached
            .iter()
            .enumerate()
            .map(|(i, &a)| (self.num_target + i, space.neighbor_of(a).unwrap()))
            .collect();
        let mut names = BTreeMap::new();
        for (&id, name) in space.class_names() {
            if id < self.num_target {
                names.insert(id, name.clone());
            } else if let Some(c) = self.compact_label(id) {
                names.insert(c, name.clone());
            }
        }
        LabelSpace::new(self.num_target, pairs)?.with_names(names)
    }

    /// Training id of an attached auxiliary class.
    pub fn compact_label(&self, aux: ClassId) -> Option<ClassId> {
        self.attached
            .binary_search(&aux)
            .ok()
            .map(|i| self.num_target + i)
    }

    /// Draws `min(available, cap)` samples per attached class from a stream
    /// keyed by `(seed, epoch, class)`.
    pub fn sample_epoch(&self, seeds: SeedStream, epoch: usize) -> EpochSample {
        let cap = self.per_class_cap;
        let per_class = crate::par::map_range(self.attached.len(), |i| {
            let pool = &self.members[i];
            if pool.len() <= cap {
                return pool.clone();
            }
            let mut rng = seeds.derive(&[tag::AUX_EPOCH, epoch as u64, self.attached[i] as u64]);
            let mut picked: Vec<usize> = index::sample(&mut rng, pool.len(), cap)
                .into_iter()
                .map(|j| pool[j])
                .collect();
            picked.sort_unstable();
            picked
        });
        let counts = per_class.iter().map(|p| p.len() as u64).collect();
        let mut indices: Vec<usize> = per_class.into_iter().flatten().collect();
        indices.sort_unstable();
        EpochSample { indices, counts }
    }
}

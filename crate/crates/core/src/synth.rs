//! Synthetic long-tail data.
//!
//! Count profiles give per-class training counts; the hierarchy generator
//! draws superclass centers, fine-class centers around them and samples
//! around those; the auxiliary generator places "neighbor" classes around
//! chosen target classes.

use rand::Rng;
use rand_distr::{Distribution, Pareto, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{FeatureDataset, Provenance};
use crate::error::{Error, Result};
use crate::labels::{ClassId, ClassStats, LabelSpace};
use crate::rng::{tag, SeedStream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProfileKind {
    /// Sorted draws from a Pareto(α) law, mapped log-linearly onto
    /// `[min_count, max_count]`.
    Pareto { alpha: f64, min_count: u64 },
    /// `max_count · ratio^(y / (C − 1))`, so the last class gets
    /// `max_count · ratio`.
    Exponential { ratio: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountProfile {
    pub kind: ProfileKind,
    pub num_classes: usize,
    pub max_count: u64,
}

impl CountProfile {
    pub fn exponential(num_classes: usize, max_count: u64, ratio: f64) -> Self {
        Self {
            kind: ProfileKind::Exponential { ratio },
            num_classes,
            max_count,
        }
    }
}

/// Per-class counts, non-increasing in class id, every count at least one.
pub fn make_counts(profile: &CountProfile, seed: u64) -> Result<ClassStats> {
    let n = profile.num_classes;
    if n == 0 {
        return Err(Error::config("count profile needs at least one class"));
    }
    if profile.max_count == 0 {
        return Err(Error::config("max_count must be >= 1"));
    }
    let max = profile.max_count as f64;
    let counts: Vec<u64> = match profile.kind {
        ProfileKind::Exponential { ratio } => {
            if !(ratio > 0.0 && ratio <= 1.0) {
                return Err(Error::config(format!(
                    "exponential imbalance ratio must be in (0, 1], got {ratio}"
                )));
            }
            (0..n)
                .map(|y| {
                    let t = if n == 1 { 0.0 } else { y as f64 / (n - 1) as f64 };
                    (max * ratio.powf(t)).round().max(1.0) as u64
                })
                .collect()
        }
        ProfileKind::Pareto { alpha, min_count } => {
            if !(alpha.is_finite() && alpha > 0.0) {
                return Err(Error::config(format!("pareto alpha must be > 0, got {alpha}")));
            }
            if min_count == 0 || min_count > profile.max_count {
                return Err(Error::config("pareto profile needs 1 <= min_count <= max_count"));
            }
            let law = Pareto::new(1.0, alpha).map_err(|e| Error::config(e.to_string()))?;
            let mut rng = SeedStream::new(seed).derive(&[tag::COUNTS]);
            let mut draws: Vec<f64> = (0..n).map(|_| law.sample(&mut rng).ln()).collect();
            draws.sort_by(|a, b| b.total_cmp(a));
            let (hi, lo) = (draws[0], draws[n - 1]);
            let (log_max, log_min) = (max.ln(), (min_count as f64).ln());
            draws
                .iter()
                .map(|&d| {
                    let t = if hi > lo { (d - lo) / (hi - lo) } else { 1.0 };
                    (log_min + t * (log_max - log_min)).exp().round().max(1.0) as u64
                })
                .collect()
        }
    };
    ClassStats::new(counts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HierarchySpec {
    pub num_superclasses: usize,
    pub num_classes: usize,
    pub feature_dim: usize,
    /// Expected distance of a superclass center from the origin.
    pub superclass_spread: f64,
    /// Expected distance of a fine-class center from its superclass center.
    pub intra_spread: f64,
    /// Per-coordinate standard deviation of samples around their class center.
    pub sample_spread: f64,
    /// When set, fine-class offsets of a superclass lie in a random
    /// subspace of this rank shared by all its fine classes.
    #[serde(default)]
    pub fine_rank: Option<usize>,
}

impl Default for HierarchySpec {
    fn default() -> Self {
        Self {
            num_superclasses: 10,
            num_classes: 100,
            feature_dim: 64,
            superclass_spread: 10.0,
            intra_spread: 2.0,
            sample_spread: 1.0,
            fine_rank: None,
        }
    }
}

impl HierarchySpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_superclasses == 0 || self.num_superclasses > self.num_classes {
            return Err(Error::config(format!(
                "need 1 <= superclasses <= classes, got {} superclasses for {} classes",
                self.num_superclasses, self.num_classes
            )));
        }
        if self.feature_dim == 0 {
            return Err(Error::config("feature_dim must be >= 1"));
        }
        if !(self.superclass_spread > self.intra_spread
            && self.intra_spread > self.sample_spread
            && self.sample_spread > 0.0)
        {
            return Err(Error::config(
                "spreads must satisfy superclass > intra > sample > 0",
            ));
        }
        if let Some(r) = self.fine_rank {
            if r == 0 || r > self.feature_dim {
                return Err(Error::config(format!(
                    "fine_rank must be in 1..={}, got {r}",
                    self.feature_dim
                )));
            }
        }
        Ok(())
    }

    /// Round-robin assignment: class `y` belongs to superclass `y mod S`,
    /// so every superclass mixes frequent and rare classes.
    pub fn superclass_of(&self, class: ClassId) -> usize {
        class % self.num_superclasses
    }
}

/// Generated hierarchy with train and balanced test splits.
#[derive(Debug, Clone)]
pub struct SyntheticHierarchy {
    pub train: FeatureDataset,
    pub test: FeatureDataset,
    pub superclass_of: Vec<usize>,
    pub class_centers: Vec<Vec<f64>>,
    /// Per-superclass subspace bases when `fine_rank` is set.
    pub superclass_bases: Option<Vec<Vec<Vec<f64>>>>,
}

/// Center displacements are scaled so that `spread` is the expected norm
/// of the displacement, independent of the feature dimension.
fn displaced_center<R: Rng>(center: &[f64], spread: f64, rng: &mut R) -> Vec<f64> {
    let per_coord = spread / (center.len() as f64).sqrt();
    gaussian_around(center, per_coord, rng)
}

/// `center + sum_k coef[k] * basis[k] / sqrt(dim)`; with standard normal
/// basis entries the offset norm matches the norm of `coef`.
fn subspace_point(center: &[f64], basis: &[Vec<f64>], coef: &[f64]) -> Vec<f64> {
    let scale = 1.0 / (center.len() as f64).sqrt();
    let mut out = center.to_vec();
    for (b, &c) in basis.iter().zip(coef) {
        for (o, &v) in out.iter_mut().zip(b) {
            *o += c * v * scale;
        }
    }
    out
}

fn gaussian_around<R: Rng>(center: &[f64], spread: f64, rng: &mut R) -> Vec<f64> {
    center
        .iter()
        .map(|&c| {
            let z: f64 = StandardNormal.sample(rng);
            c + spread * z
        })
        .collect()
}

pub fn make_hierarchy(
    spec: &HierarchySpec,
    counts: &ClassStats,
    test_per_class: usize,
    seed: u64,
) -> Result<SyntheticHierarchy> {
    spec.validate()?;
    if counts.len() != spec.num_classes {
        return Err(Error::data(format!(
            "{} class counts for {} classes",
            counts.len(),
            spec.num_classes
        )));
    }
    let seeds = SeedStream::new(seed);
    let dim = spec.feature_dim;
    let origin = vec![0.0; dim];
    let super_centers: Vec<Vec<f64>> = (0..spec.num_superclasses)
        .map(|s| {
            displaced_center(
                &origin,
                spec.superclass_spread,
                &mut seeds.derive(&[tag::SUPER_CENTERS, s as u64]),
            )
        })
        .collect();
    let superclass_of: Vec<usize> = (0..spec.num_classes).map(|y| spec.superclass_of(y)).collect();
    let bases: Option<Vec<Vec<Vec<f64>>>> = spec.fine_rank.map(|r| {
        (0..spec.num_superclasses)
            .map(|s| {
                let mut rng = seeds.derive(&[tag::FINE_BASIS, s as u64]);
                (0..r).map(|_| gaussian_around(&origin, 1.0, &mut rng)).collect()
            })
            .collect()
    });
    let class_centers: Vec<Vec<f64>> = (0..spec.num_classes)
        .map(|y| {
            let parent = &super_centers[superclass_of[y]];
            let mut rng = seeds.derive(&[tag::FINE_CENTERS, y as u64]);
            match &bases {
                None => displaced_center(parent, spec.intra_spread, &mut rng),
                Some(bases) => {
                    let basis = &bases[superclass_of[y]];
                    let coef = displaced_center(&vec![0.0; basis.len()], spec.intra_spread, &mut rng);
                    subspace_point(parent, basis, &coef)
                }
            }
        })
        .collect();

    let draw = |stream: u64, per_class: &(dyn Fn(usize) -> usize + Sync)| {
        crate::par::map_range(spec.num_classes, |y| {
            let mut rng = seeds.derive(&[stream, y as u64]);
            (0..per_class(y))
                .map(|_| gaussian_around(&class_centers[y], spec.sample_spread, &mut rng))
                .collect::<Vec<_>>()
        })
    };
    let train_rows = draw(tag::TRAIN_SAMPLES, &|y| counts.counts()[y] as usize);
    let test_rows = draw(tag::TEST_SAMPLES, &|_| test_per_class);

    let mut train = FeatureDataset::new(dim, Provenance::Synthetic);
    for (y, rows) in train_rows.iter().enumerate() {
        for (i, f) in rows.iter().enumerate() {
            train.push(format!("train-{y}-{i}"), y, f)?;
        }
    }
    let mut test = FeatureDataset::new(dim, Provenance::Synthetic);
    for (y, rows) in test_rows.iter().enumerate() {
        for (i, f) in rows.iter().enumerate() {
            test.push(format!("test-{y}-{i}"), y, f)?;
        }
    }
    Ok(SyntheticHierarchy {
        train,
        test,
        superclass_of,
        class_centers,
        superclass_bases: bases,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuxSpec {
    pub per_target: usize,
    pub samples_per_aux: usize,
    /// Expected norm of the displacement from the target's class mean.
    pub offset: f64,
    pub sample_spread: f64,
}

impl Default for AuxSpec {
    fn default() -> Self {
        Self {
            per_target: 5,
            samples_per_aux: 100,
            offset: 3.0,
            sample_spread: 1.0,
        }
    }
}

/// Adds `per_target` neighbor classes around each class in `targets`,
/// appended after the existing classes of `space`. Neighbors are centered
/// on the target's empirical class mean in `base`. Returns the auxiliary
/// samples (labelled in the extended space) and the extended space.
pub fn make_auxiliary(
    base: &FeatureDataset,
    space: &LabelSpace,
    targets: &[ClassId],
    aux: &AuxSpec,
    seed: u64,
) -> Result<(FeatureDataset, LabelSpace)> {
    let dim = base.feature_dim();
    let anchor = |t: ClassId| -> Result<Vec<f64>> {
        let rows = base.indices_of(t);
        if rows.is_empty() {
            return Err(Error::data(format!("target class {t} has no samples")));
        }
        let mut mean = vec![0.0; dim];
        for &i in &rows {
            for (m, x) in mean.iter_mut().zip(base.features(i)) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= rows.len() as f64);
        Ok(mean)
    };
    append_neighbors(dim, space, targets, aux, seed, &anchor, &|_, center, rng| {
        displaced_center(center, aux.offset, rng)
    })
}

/// Like [`make_auxiliary`], but neighbors are placed around the true
/// class centers of a generated hierarchy. When the hierarchy has
/// superclass subspaces, neighbors are displaced within the subspace of
/// their target's superclass, so they share its fine-grained structure.
pub fn make_auxiliary_in(
    hierarchy: &SyntheticHierarchy,
    space: &LabelSpace,
    targets: &[ClassId],
    aux: &AuxSpec,
    seed: u64,
) -> Result<(FeatureDataset, LabelSpace)> {
    let dim = hierarchy.train.feature_dim();
    let anchor = |t: ClassId| -> Result<Vec<f64>> {
        hierarchy
            .class_centers
            .get(t)
            .cloned()
            .ok_or_else(|| Error::data(format!("target class {t} is not in the hierarchy")))
    };
    append_neighbors(dim, space, targets, aux, seed, &anchor, &|t, center, rng| {
        match &hierarchy.superclass_bases {
            None => displaced_center(center, aux.offset, rng),
            Some(bases) => {
                let basis = &bases[hierarchy.superclass_of[t]];
                let coef = displaced_center(&vec![0.0; basis.len()], aux.offset, rng);
                subspace_point(center, basis, &coef)
            }
        }
    })
}

type Displace<'a> = dyn Fn(ClassId, &[f64], &mut rand_chacha::ChaCha8Rng) -> Vec<f64> + Sync + 'a;

fn append_neighbors(
    dim: usize,
    space: &LabelSpace,
    targets: &[ClassId],
    aux: &AuxSpec,
    seed: u64,
    anchor: &dyn Fn(ClassId) -> Result<Vec<f64>>,
    displace: &Displace<'_>,
) -> Result<(FeatureDataset, LabelSpace)> {
    if aux.per_target == 0 {
        return Err(Error::config("per_target must be >= 1"));
    }
    if !(aux.offset.is_finite() && aux.offset >= 0.0 && aux.sample_spread > 0.0) {
        return Err(Error::config("offset must be >= 0 and sample_spread > 0"));
    }
    let l = space.num_target();
    let seeds = SeedStream::new(seed);
    let mut pairs = space.neighbor_pairs();
    let mut next = space.num_classes();
    let mut jobs = Vec::new();
    for &t in targets {
        if t >= l {
            return Err(Error::data(format!("{t} is not a target class")));
        }
        let center = anchor(t)?;
        for _ in 0..aux.per_target {
            pairs.push((next, t));
            jobs.push((next, t, center.clone()));
            next += 1;
        }
    }
    let sampled = crate::par::map(&jobs, |(id, t, anchor)| {
        let center = displace(*t, anchor, &mut seeds.derive(&[tag::AUX_CENTERS, *id as u64]));
        let mut rng = seeds.derive(&[tag::AUX_SAMPLES, *id as u64]);
        (0..aux.samples_per_aux)
            .map(|_| gaussian_around(&center, aux.sample_spread, &mut rng))
            .collect::<Vec<_>>()
    });
    let mut out = FeatureDataset::new(dim, Provenance::Synthetic);
    for ((id, _, _), rows) in jobs.iter().zip(&sampled) {
        for (i, f) in rows.iter().enumerate() {
            out.push(format!("aux-{id}-{i}"), *id, f)?;
        }
    }
    let mut names = space.class_names().clone();
    for &(id, t) in &pairs[space.num_auxiliary()..] {
        names.insert(id, format!("neighbor {} of {}", id, t));
    }
    let space = LabelSpace::new(l, pairs)?.with_names(names)?;
    Ok((out, space))
}

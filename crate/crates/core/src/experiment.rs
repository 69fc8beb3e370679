//! Experiment drivers: the granularity pilot sweep, the synthetic
//! long-tail benchmark with auxiliary neighbor classes, and ablation sweeps.
//!
//! Grid points and seeds are independent and run through [`crate::par`];
//! each point is deterministic given its seed.

use serde::{Deserialize, Serialize};

use crate::config::{AuxRatio, ClassifierMode, ExpandSet, HiddenConfig, RunConfig};
use crate::dataset::FeatureDataset;
use crate::error::{Error, Result};
use crate::labels::{ClassId, LabelSpace};
use crate::metrics::{assign_splits, evaluate, EvalReport, Split, SplitAssignment};
use crate::model::{train, Activation};
use crate::rng::SeedStream;
use crate::synth::{make_auxiliary_in, make_counts, make_hierarchy, AuxSpec, CountProfile, HierarchySpec};

/// Seed of repetition `rep` under a base seed.
pub fn repetition_seed(base: u64, rep: usize) -> u64 {
    SeedStream::new(base).child(&[rep as u64]).seed()
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PilotConfig {
    pub num_classes: usize,
    pub feature_dim: usize,
    pub superclasses: Vec<usize>,
    pub imbalance_ratios: Vec<f64>,
    pub repetitions: usize,
    pub seed: u64,
    pub max_count: u64,
    pub test_per_class: usize,
    pub superclass_spread: f64,
    pub intra_spread: f64,
    pub sample_spread: f64,
    pub fine_rank: Option<usize>,
    pub train: RunConfig,
}

impl Default for PilotConfig {
    fn default() -> Self {
        Self {
            num_classes: 100,
            feature_dim: 64,
            superclasses: vec![5, 25],
            imbalance_ratios: vec![1.0, 0.01],
            repetitions: 5,
            seed: 0,
            max_count: 500,
            test_per_class: 50,
            superclass_spread: 10.0,
            intra_spread: 2.0,
            sample_spread: 1.0,
            fine_rank: Some(8),
            train: RunConfig {
                hidden: Some(HiddenConfig { units: 32, activation: Activation::Relu }),
                ..RunConfig::default()
            },
        }
    }
}

impl PilotConfig {
    fn hierarchy(&self, superclasses: usize) -> HierarchySpec {
        HierarchySpec {
            num_superclasses: superclasses,
            num_classes: self.num_classes,
            feature_dim: self.feature_dim,
            superclass_spread: self.superclass_spread,
            intra_spread: self.intra_spread,
            sample_spread: self.sample_spread,
            fine_rank: self.fine_rank,
        }
    }

    /// Head and tail groups are fixed by class position using the most
    /// imbalanced profile of the grid, so balanced rows compare the same
    /// classes as imbalanced ones.
    pub fn reference_splits(&self) -> Result<SplitAssignment> {
        let severest = self
            .imbalance_ratios
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        let counts = make_counts(&CountProfile::exponential(self.num_classes, self.max_count, severest), self.seed)?;
        Ok(assign_splits(&counts))
    }

    pub fn validate(&self) -> Result<()> {
        if self.superclasses.is_empty() || self.imbalance_ratios.is_empty() || self.repetitions == 0 {
            return Err(Error::config("pilot grid is empty"));
        }
        for &s in &self.superclasses {
            self.hierarchy(s).validate()?;
        }
        for &r in &self.imbalance_ratios {
            if !(r > 0.0 && r <= 1.0) {
                return Err(Error::config(format!("imbalance ratio {r} outside (0, 1]")));
            }
        }
        if self.test_per_class == 0 {
            return Err(Error::config("test_per_class must be >= 1"));
        }
        self.train.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotPoint {
    pub superclasses: usize,
    pub imbalance_ratio: f64,
    pub repetition: usize,
    pub seed: u64,
    pub many_acc: f64,
    pub few_acc: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotRow {
    pub superclasses: usize,
    pub imbalance_ratio: f64,
    pub repetitions: usize,
    pub mean_gap: f64,
    pub std_gap: f64,
    pub mean_many: f64,
    pub mean_few: f64,
    pub gaps: Vec<f64>,
}

/// One pilot grid point for one repetition: generate, train with the
/// balanced softmax, evaluate the head-tail gap.
pub fn pilot_point(cfg: &PilotConfig, superclasses: usize, ratio: f64, rep: usize) -> Result<PilotPoint> {
    let seed = repetition_seed(cfg.seed, rep);
    let counts = make_counts(&CountProfile::exponential(cfg.num_classes, cfg.max_count, ratio), seed)?;
    let data = make_hierarchy(&cfg.hierarchy(superclasses), &counts, cfg.test_per_class, seed)?;
    let space = LabelSpace::targets_only(cfg.num_classes)?;
    let run = RunConfig {
        seed,
        classifier: ClassifierMode::Masked,
        ..cfg.train.clone()
    };
    let outcome = train(&data.train, None, &space, &run)?;
    let splits = cfg.reference_splits()?;
    let report = evaluate(&outcome.state, &data.test, &splits, true)?;
    let (many, few) = report
        .many_acc
        .zip(report.few_acc)
        .ok_or_else(|| Error::config("pilot needs both many-shot and few-shot classes in the reference profile"))?;
    Ok(PilotPoint {
        superclasses,
        imbalance_ratio: ratio,
        repetition: rep,
        seed,
        many_acc: many,
        few_acc: few,
        gap: many - few,
    })
}

/// Runs the whole grid; rows are ordered by superclass count then ratio.
pub fn run_pilot(cfg: &PilotConfig) -> Result<(Vec<PilotRow>, Vec<PilotPoint>)> {
    cfg.validate()?;
    let mut jobs = Vec::new();
    for &s in &cfg.superclasses {
        for &r in &cfg.imbalance_ratios {
            for rep in 0..cfg.repetitions {
                jobs.push((s, r, rep));
            }
        }
    }
    let points: Vec<PilotPoint> = crate::par::map(&jobs, |&(s, r, rep)| pilot_point(cfg, s, r, rep))
        .into_iter()
        .collect::<Result<_>>()?;
    let rows = points
        .chunks(cfg.repetitions)
        .map(|chunk| {
            let gaps: Vec<f64> = chunk.iter().map(|p| p.gap).collect();
            let (mean_gap, std_gap) = mean_std(&gaps);
            let many: Vec<f64> = chunk.iter().map(|p| p.many_acc).collect();
            let few: Vec<f64> = chunk.iter().map(|p| p.few_acc).collect();
            PilotRow {
                superclasses: chunk[0].superclasses,
                imbalance_ratio: chunk[0].imbalance_ratio,
                repetitions: chunk.len(),
                mean_gap,
                std_gap,
                mean_many: mean_std(&many).0,
                mean_few: mean_std(&few).0,
                gaps,
            }
        })
        .collect();
    Ok((rows, points))
}

/// Synthetic target long-tail benchmark with a pool of neighbor classes
/// around every target class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub num_classes: usize,
    pub superclasses: usize,
    pub feature_dim: usize,
    pub superclass_spread: f64,
    pub intra_spread: f64,
    pub sample_spread: f64,
    pub fine_rank: Option<usize>,
    pub max_count: u64,
    pub imbalance_ratio: f64,
    pub test_per_class: usize,
    /// Neighbor pool per target; the run config picks how many to attach.
    pub aux_pool: usize,
    pub samples_per_aux: usize,
    pub aux_offset: f64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            num_classes: 100,
            superclasses: 10,
            feature_dim: 64,
            superclass_spread: 10.0,
            intra_spread: 2.0,
            sample_spread: 1.0,
            fine_rank: Some(8),
            max_count: 500,
            imbalance_ratio: 0.01,
            test_per_class: 50,
            aux_pool: 5,
            samples_per_aux: 100,
            aux_offset: 3.0,
        }
    }
}

impl BenchmarkConfig {
    /// Training recipe used for the benchmark comparisons: a 64-unit relu
    /// bottleneck, every target expanded, one auxiliary pool per split.
    pub fn recommended_run() -> RunConfig {
        RunConfig {
            hidden: Some(HiddenConfig { units: 64, activation: Activation::Relu }),
            expand: ExpandSet::All,
            aux_ratio: AuxRatio::Fixed { head: 1.0, medium: 1.0, tail: 1.0 },
            ..RunConfig::default()
        }
    }

    pub fn hierarchy(&self) -> HierarchySpec {
        HierarchySpec {
            num_superclasses: self.superclasses,
            num_classes: self.num_classes,
            feature_dim: self.feature_dim,
            superclass_spread: self.superclass_spread,
            intra_spread: self.intra_spread,
            sample_spread: self.sample_spread,
            fine_rank: self.fine_rank,
        }
    }

    pub fn aux_spec(&self) -> AuxSpec {
        AuxSpec {
            per_target: self.aux_pool,
            samples_per_aux: self.samples_per_aux,
            offset: self.aux_offset,
            sample_spread: self.sample_spread,
        }
    }
}

/// Generated benchmark data for one seed.
#[derive(Debug, Clone)]
pub struct BenchmarkData {
    pub train: FeatureDataset,
    pub test: FeatureDataset,
    pub aux: FeatureDataset,
    /// Targets plus the full neighbor pool.
    pub space: LabelSpace,
    pub splits: SplitAssignment,
    pub seed: u64,
}

pub fn make_benchmark(cfg: &BenchmarkConfig, seed: u64) -> Result<BenchmarkData> {
    let counts = make_counts(
        &CountProfile::exponential(cfg.num_classes, cfg.max_count, cfg.imbalance_ratio),
        seed,
    )?;
    let h = make_hierarchy(&cfg.hierarchy(), &counts, cfg.test_per_class, seed)?;
    let targets: Vec<ClassId> = (0..cfg.num_classes).collect();
    let base = LabelSpace::targets_only(cfg.num_classes)?;
    let (aux, space) = make_auxiliary_in(&h, &base, &targets, &cfg.aux_spec(), seed)?;
    Ok(BenchmarkData {
        train: h.train,
        test: h.test,
        aux,
        space,
        splits: assign_splits(&counts),
        seed,
    })
}

/// Trains and evaluates one method on prepared data. Without auxiliary
/// data this is the balanced-softmax baseline.
pub fn run_method(data: &BenchmarkData, run: &RunConfig, with_aux: bool) -> Result<EvalReport> {
    let run = RunConfig {
        seed: data.seed,
        ..run.clone()
    };
    let (aux, space) = if with_aux {
        (Some(&data.aux), data.space.clone())
    } else {
        (None, LabelSpace::targets_only(data.space.num_target())?)
    };
    let outcome = train(&data.train, aux, &space, &run)?;
    let mut report = evaluate(&outcome.state, &data.test, &data.splits, true)?;
    report.seed = Some(data.seed);
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    AuxCount,
    PerClassCap,
    Ratio,
    LambdaS,
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "aux_count" => Ok(SweepAxis::AuxCount),
            "per_class_cap" | "cap" => Ok(SweepAxis::PerClassCap),
            "ratio" => Ok(SweepAxis::Ratio),
            "lambda_s" => Ok(SweepAxis::LambdaS),
            other => Err(Error::config(format!(
                "unknown sweep axis {other:?} (expected aux_count, per_class_cap, ratio or lambda_s)"
            ))),
        }
    }
}

impl SweepAxis {
    /// Default values swept on each axis.
    pub fn default_values(self) -> Vec<String> {
        let v: &[&str] = match self {
            SweepAxis::AuxCount => &["1", "3", "5", "7", "8"],
            SweepAxis::PerClassCap => &["10", "30", "50", "100", "150"],
            SweepAxis::Ratio => &["1:1:3", "0:1:3", "1:1:1", "1:0.5:1"],
            SweepAxis::LambdaS => &["0", "0.1", "0.5", "1"],
        };
        v.iter().map(|s| s.to_string()).collect()
    }

    /// Applies `value` to a run config.
    pub fn apply(self, run: &RunConfig, value: &str) -> Result<RunConfig> {
        let bad = || Error::config(format!("bad value {value:?} for sweep axis {self:?}"));
        let mut run = run.clone();
        match self {
            SweepAxis::AuxCount => run.aux_per_target = value.parse().map_err(|_| bad())?,
            SweepAxis::PerClassCap => run.per_class_cap = value.parse().map_err(|_| bad())?,
            SweepAxis::Ratio => run.aux_ratio = AuxRatio::parse(value)?,
            SweepAxis::LambdaS => run.lambda_s = value.parse().map_err(|_| bad())?,
        }
        run.validate()?;
        Ok(run)
    }

    /// Benchmark settings the axis needs (pool size, samples per class).
    pub fn prepare(self, bench: &BenchmarkConfig, values: &[String]) -> Result<BenchmarkConfig> {
        let mut bench = bench.clone();
        match self {
            SweepAxis::AuxCount => {
                let max = values
                    .iter()
                    .map(|v| v.parse::<usize>().map_err(|_| Error::config(format!("bad aux count {v:?}"))))
                    .collect::<Result<Vec<_>>>()?
                    .into_iter()
                    .max()
                    .unwrap_or(0);
                bench.aux_pool = bench.aux_pool.max(max);
            }
            SweepAxis::PerClassCap => {
                let max = values
                    .iter()
                    .map(|v| v.parse::<usize>().map_err(|_| Error::config(format!("bad cap {v:?}"))))
                    .collect::<Result<Vec<_>>>()?
                    .into_iter()
                    .max()
                    .unwrap_or(0);
                bench.samples_per_aux = bench.samples_per_aux.max(max);
            }
            SweepAxis::Ratio | SweepAxis::LambdaS => {}
        }
        Ok(bench)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub value: String,
    pub seed: u64,
    pub overall_acc: f64,
    pub many_acc: Option<f64>,
    pub med_acc: Option<f64>,
    pub few_acc: Option<f64>,
    pub head_tail_gap: Option<f64>,
}

/// One row per `value × repetition`, plus a baseline row (value
/// `baseline`) per repetition.
pub fn run_sweep(
    bench: &BenchmarkConfig,
    run: &RunConfig,
    axis: SweepAxis,
    values: &[String],
    repetitions: usize,
    base_seed: u64,
) -> Result<Vec<SweepRow>> {
    if values.is_empty() || repetitions == 0 {
        return Err(Error::config("sweep needs at least one value and one repetition"));
    }
    let bench = axis.prepare(bench, values)?;
    let runs: Vec<RunConfig> = values
        .iter()
        .map(|v| axis.apply(run, v))
        .collect::<Result<_>>()?;
    let datasets: Vec<BenchmarkData> = crate::par::map_range(repetitions, |rep| {
        make_benchmark(&bench, repetition_seed(base_seed, rep))
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let mut jobs: Vec<(usize, Option<usize>)> = Vec::new();
    for rep in 0..repetitions {
        jobs.push((rep, None));
        for v in 0..values.len() {
            jobs.push((rep, Some(v)));
        }
    }
    let reports = crate::par::map(&jobs, |&(rep, v)| match v {
        None => run_method(&datasets[rep], run, false),
        Some(v) => run_method(&datasets[rep], &runs[v], true),
    });
    jobs.iter()
        .zip(reports)
        .map(|(&(rep, v), r)| {
            let r = r?;
            Ok(SweepRow {
                axis,
                value: v.map_or_else(|| "baseline".to_string(), |v| values[v].clone()),
                seed: datasets[rep].seed,
                overall_acc: r.overall_acc,
                many_acc: r.many_acc,
                med_acc: r.med_acc,
                few_acc: r.few_acc,
                head_tail_gap: r.head_tail_gap,
            })
        })
        .collect()
}

/// Mean accuracy of `split` across reports that have it.
pub fn mean_split_acc(reports: &[EvalReport], split: Split) -> Option<f64> {
    let v: Vec<f64> = reports.iter().filter_map(|r| r.split_acc(split)).collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

//! Shared oracles for the integration and acceptance tests: central finite
//! differences and random loss/model instances.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use tailext::config::AuxRatio;
use tailext::dataset::{FeatureDataset, Provenance};
use tailext::losses::{LossGrad, LossKind, Objective};
use tailext::model::{dataset_gradient, Activation, HiddenLayer, Layer, Standardizer};
use tailext::{ClassStats, ClassifierState, LabelSpace};

pub const FD_STEP: f64 = 1e-5;
pub const FD_REL_TOL: f64 = 1e-4;
/// Below this magnitude a component is compared absolutely at
/// `FD_REL_TOL * FD_FLOOR`; round-off in the difference quotient is about
/// 1e-11 at this step size.
pub const FD_FLOOR: f64 = 1e-3;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn rel_close(analytic: f64, numeric: f64) -> bool {
    (analytic - numeric).abs() <= FD_REL_TOL * analytic.abs().max(numeric.abs()).max(FD_FLOOR)
}

pub fn central_diff(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + FD_STEP;
            let up = f(&probe);
            probe[i] = x[i] - FD_STEP;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

/// Compares an analytic gradient against central differences; returns the
/// first offending component.
pub fn compare(analytic: &[f64], numeric: &[f64]) -> Result<(), String> {
    for (i, (a, n)) in analytic.iter().zip(numeric).enumerate() {
        if !rel_close(*a, *n) {
            return Err(format!("component {i}: analytic {a:e} vs numeric {n:e}"));
        }
    }
    Ok(())
}

/// A random loss instance with `L + K <= 10`.
#[derive(Debug, Clone)]
pub struct LossInstance {
    pub z: Vec<f64>,
    pub y: usize,
    pub stats: ClassStats,
    pub space: LabelSpace,
    pub lambda_s: f64,
}

pub fn random_space(rng: &mut ChaCha8Rng, max_classes: usize) -> LabelSpace {
    let l = rng.random_range(2..=max_classes.min(6));
    let k = rng.random_range(0..=max_classes - l);
    let pairs = (0..k).map(|i| (l + i, rng.random_range(0..l))).collect();
    LabelSpace::new(l, pairs).unwrap()
}

pub fn random_counts(rng: &mut ChaCha8Rng, n: usize) -> ClassStats {
    ClassStats::new((0..n).map(|_| rng.random_range(1..=2000)).collect()).unwrap()
}

pub fn random_instance(rng: &mut ChaCha8Rng) -> LossInstance {
    let space = random_space(rng, 10);
    let n = space.num_classes();
    let stats = random_counts(rng, n);
    let z = (0..n).map(|_| 3.0 * normal(rng)).collect();
    let y = rng.random_range(0..n);
    let lambda_s = rng.random_range(0.0..=1.0);
    LossInstance {
        z,
        y,
        stats,
        space,
        lambda_s,
    }
}

/// Checks d loss / d logits of `loss` at `inst.z`.
pub fn check_logit_gradient(inst: &LossInstance, loss: impl Fn(&[f64]) -> LossGrad) -> Result<(), String> {
    let analytic = loss(&inst.z).grad;
    let numeric = central_diff(|z| loss(z).loss, &inst.z);
    compare(&analytic, &numeric)
}

/// A small model (`C <= 8`, optional tanh hidden layer) with random
/// parameters everywhere, plus a dataset over its label space.
pub fn random_model(rng: &mut ChaCha8Rng, space: LabelSpace, hidden: bool) -> (ClassifierState, FeatureDataset) {
    let dim = rng.random_range(1..=8);
    let n_classes = space.num_classes();
    let mut state = if hidden {
        let units = rng.random_range(2..=6);
        let mut s = ClassifierState::linear(space, dim);
        let mut layer = Layer::zeros(units, dim);
        layer.weights.mapv_inplace(|_| 0.7 * normal(rng));
        layer.bias.mapv_inplace(|_| 0.3 * normal(rng));
        s.hidden = Some(HiddenLayer {
            layer,
            activation: Activation::Tanh,
        });
        s.output = Layer::zeros(n_classes, units);
        s
    } else {
        ClassifierState::linear(space, dim)
    };
    state.output.weights.mapv_inplace(|_| 0.7 * normal(rng));
    state.output.bias.mapv_inplace(|_| 0.3 * normal(rng));
    state.standardizer = Some(Standardizer {
        mean: (0..dim).map(|_| normal(rng)).collect(),
        scale: (0..dim).map(|_| rng.random_range(0.5..2.0)).collect(),
    });
    let mut data = FeatureDataset::new(dim, Provenance::Synthetic);
    for i in 0..rng.random_range(1..=6) {
        let f: Vec<f64> = (0..dim).map(|_| 1.5 * normal(rng)).collect();
        data.push(format!("s{i}"), rng.random_range(0..n_classes), &f).unwrap();
    }
    (state, data)
}

fn param_slices(state: &mut ClassifierState) -> Vec<&mut [f64]> {
    let mut out = Vec::new();
    if let Some(h) = state.hidden.as_mut() {
        out.push(h.layer.weights.as_slice_mut().unwrap());
        out.push(h.layer.bias.as_slice_mut().unwrap());
    }
    out.push(state.output.weights.as_slice_mut().unwrap());
    out.push(state.output.bias.as_slice_mut().unwrap());
    out
}

/// Checks the end-to-end parameter gradient of the mean loss over `data`.
pub fn check_parameter_gradient(state: &ClassifierState, kind: LossKind, stats: &ClassStats, data: &FeatureDataset) -> Result<(), String> {
    let space = state.space.clone();
    let objective = Objective::new(kind, stats, &space).map_err(|e| e.to_string())?;
    let (_, grads) = dataset_gradient(state, &objective, data).map_err(|e| e.to_string())?;
    let mut analytic: Vec<f64> = Vec::new();
    if let Some(h) = &grads.hidden {
        analytic.extend(h.weights.iter());
        analytic.extend(h.bias.iter());
    }
    analytic.extend(grads.output.weights.iter());
    analytic.extend(grads.output.bias.iter());

    let mut probe = state.clone();
    let sizes: Vec<usize> = param_slices(&mut probe).iter().map(|s| s.len()).collect();
    let loss_at = |p: &ClassifierState| dataset_gradient(p, &objective, data).unwrap().0;
    let mut numeric = Vec::with_capacity(analytic.len());
    for (block, &len) in sizes.iter().enumerate() {
        for i in 0..len {
            let orig = param_slices(&mut probe)[block][i];
            param_slices(&mut probe)[block][i] = orig + FD_STEP;
            let up = loss_at(&probe);
            param_slices(&mut probe)[block][i] = orig - FD_STEP;
            let down = loss_at(&probe);
            param_slices(&mut probe)[block][i] = orig;
            numeric.push((up - down) / (2.0 * FD_STEP));
        }
    }
    compare(&analytic, &numeric)
}

/// The three losses under test, configured for `inst`.
pub fn loss_kinds(inst: &LossInstance) -> [(&'static str, LossKind); 3] {
    [
        ("bal_ce", LossKind::BalancedSoftmax),
        ("bal_ce_merged", LossKind::BalancedSoftmax),
        ("ns_ce", LossKind::NeighborSilencing { lambda_s: inst.lambda_s }),
    ]
}

pub fn fixed_ratio(head: f64, medium: f64, tail: f64) -> AuxRatio {
    AuxRatio::Fixed { head, medium, tail }
}

pub mod golden;

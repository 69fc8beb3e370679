use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{ClassifierState, Layer, ParamGrads, Standardizer};
use crate::config::{ClassifierMode, OptimizerConfig, RunConfig};
use crate::dataset::FeatureDataset;
use crate::error::{Error, Result};
use crate::labels::{ClassId, ClassStats, LabelSpace};
use crate::losses::{LossKind, Objective};
use crate::rng::{tag, SeedStream};
use crate::sampling::AuxSamplingPlan;

/// Rows per gradient work unit. Partial gradients are summed in chunk
/// order, so results do not depend on the number of threads.
const GRAD_CHUNK: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub num_samples: usize,
    pub aux_samples: usize,
    /// Digest of the auxiliary indices drawn this epoch (hex).
    pub aux_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub loss: LossKind,
    pub num_classes: usize,
    pub plan: Option<AuxSamplingPlan>,
    pub epochs: Vec<EpochLog>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub probe_epochs: Vec<EpochLog>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Trained state over the training label space (targets plus attached
    /// auxiliary classes). With [`ClassifierMode::LinearProbe`] this is the
    /// re-fitted target-only classifier.
    pub state: ClassifierState,
    pub log: TrainLog,
}

impl TrainOutcome {
    /// Target-only classifier used for evaluation.
    pub fn target_classifier(&self) -> ClassifierState {
        self.state.masked()
    }
}

/// A training set assembled from a target dataset and an optional
/// auxiliary dataset, addressed by `(source, index)`.
pub(crate) struct MixedBatchSource<'a> {
    target: &'a FeatureDataset,
    aux: Option<&'a FeatureDataset>,
    /// (is_aux, index, training label)
    rows: Vec<(bool, usize, ClassId)>,
}

impl<'a> MixedBatchSource<'a> {
    fn new(target: &'a FeatureDataset, aux: Option<&'a FeatureDataset>) -> Self {
        let rows = (0..target.len()).map(|i| (false, i, target.label(i))).collect();
        Self { target, aux, rows }
    }

    fn push_aux(&mut self, index: usize, label: ClassId) {
        self.rows.push((true, index, label));
    }

    fn features(&self, row: usize) -> &[f64] {
        let (is_aux, i, _) = self.rows[row];
        if is_aux {
            self.aux.expect("aux rows need an aux dataset").features(i)
        } else {
            self.target.features(i)
        }
    }

    fn label(&self, row: usize) -> ClassId {
        self.rows[row].2
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }
}

#[allow(clippy::large_enum_variant)]
enum Optimizer {
    Sgd {
        momentum: f64,
        velocity: ParamGrads,
    },
    AdamW {
        beta1: f64,
        beta2: f64,
        eps: f64,
        m: ParamGrads,
        v: ParamGrads,
        step: i32,
    },
}

fn layers_mut(p: &mut ParamGrads) -> Vec<&mut Layer> {
    let mut out = vec![&mut p.output];
    if let Some(h) = p.hidden.as_mut() {
        out.push(h);
    }
    out
}

fn state_layers_mut(s: &mut ClassifierState) -> Vec<&mut Layer> {
    let mut out = vec![&mut s.output];
    if let Some(h) = s.hidden.as_mut() {
        out.push(&mut h.layer);
    }
    out
}

fn layers(p: &ParamGrads) -> Vec<&Layer> {
    let mut out = vec![&p.output];
    if let Some(h) = p.hidden.as_ref() {
        out.push(h);
    }
    out
}

impl Optimizer {
    fn new(cfg: OptimizerConfig, state: &ClassifierState) -> Self {
        match cfg {
            OptimizerConfig::Sgd { momentum } => Optimizer::Sgd {
                momentum,
                velocity: ParamGrads::zeros_like(state),
            },
            OptimizerConfig::AdamW { beta1, beta2, eps } => Optimizer::AdamW {
                beta1,
                beta2,
                eps,
                m: ParamGrads::zeros_like(state),
                v: ParamGrads::zeros_like(state),
                step: 0,
            },
        }
    }

    /// Applies one update. Layer index 0 is the output layer, 1 the hidden
    /// layer; `train_hidden = false` leaves the hidden layer untouched.
    fn step(&mut self, state: &mut ClassifierState, grad: &ParamGrads, lr: f64, wd: f64, train_hidden: bool) {
        let n_layers = if train_hidden { 2 } else { 1 };
        match self {
            Optimizer::Sgd { momentum, velocity } => {
                let mu = *momentum;
                let params = state_layers_mut(state);
                let vels = layers_mut(velocity);
                let grads = layers(grad);
                for ((p, v), g) in params.into_iter().zip(vels).zip(grads).take(n_layers) {
                    // L2 on weights only
                    ndarray::Zip::from(&mut v.weights)
                        .and(&p.weights)
                        .and(&g.weights)
                        .for_each(|v, &w, &g| *v = mu * *v + g + wd * w);
                    ndarray::Zip::from(&mut v.bias)
                        .and(&g.bias)
                        .for_each(|v, &g| *v = mu * *v + g);
                    p.weights.scaled_add(-lr, &v.weights);
                    p.bias.scaled_add(-lr, &v.bias);
                }
            }
            Optimizer::AdamW {
                beta1,
                beta2,
                eps,
                m,
                v,
                step,
            } => {
                *step += 1;
                let (b1, b2, eps) = (*beta1, *beta2, *eps);
                let c1 = 1.0 - b1.powi(*step);
                let c2 = 1.0 - b2.powi(*step);
                let params = state_layers_mut(state);
                let ms = layers_mut(m);
                let vs = layers_mut(v);
                let grads = layers(grad);
                for (((p, m), v), g) in params.into_iter().zip(ms).zip(vs).zip(grads).take(n_layers) {
                    let upd = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64, decay: bool| {
                        *m = b1 * *m + (1.0 - b1) * g;
                        *v = b2 * *v + (1.0 - b2) * g * g;
                        let mhat = *m / c1;
                        let vhat = *v / c2;
                        if decay {
                            *p -= lr * wd * *p;
                        }
                        *p -= lr * mhat / (vhat.sqrt() + eps);
                    };
                    ndarray::Zip::from(&mut p.weights)
                        .and(&mut m.weights)
                        .and(&mut v.weights)
                        .and(&g.weights)
                        .for_each(|p, m, v, &g| upd(p, m, v, g, true));
                    ndarray::Zip::from(&mut p.bias)
                        .and(&mut m.bias)
                        .and(&mut v.bias)
                        .and(&g.bias)
                        .for_each(|p, m, v, &g| upd(p, m, v, g, false));
                }
            }
        }
    }
}

/// Summed loss and parameter gradient over `rows` of `source`.
fn chunk_gradient(
    state: &ClassifierState,
    objective: &Objective<'_>,
    source: &MixedBatchSource<'_>,
    rows: &[usize],
    train_hidden: bool,
) -> Result<(f64, ParamGrads)> {
    let dim = state.feature_dim;
    let mut x = Array2::<f64>::zeros((rows.len(), dim));
    for (r, &row) in rows.iter().enumerate() {
        x.row_mut(r)
            .as_slice_mut()
            .unwrap()
            .copy_from_slice(source.features(row));
    }
    let acts = state.forward_cached(x.view())?;
    let mut dlogits = Array2::<f64>::zeros(acts.logits.raw_dim());
    let mut loss = 0.0;
    for (r, &row) in rows.iter().enumerate() {
        let z = acts.logits.row(r);
        let mut g = dlogits.row_mut(r);
        loss += objective.eval_into(z.as_slice().unwrap(), source.label(row), g.as_slice_mut().unwrap())?;
    }
    Ok((loss, state.backward(&acts, &dlogits, !train_hidden)))
}

/// Mean loss and mean parameter gradient over a batch. Exposed for
/// gradient checks.
pub(crate) fn batch_gradient(
    state: &ClassifierState,
    objective: &Objective<'_>,
    source: &MixedBatchSource<'_>,
    rows: &[usize],
    train_hidden: bool,
) -> Result<(f64, ParamGrads)> {
    let parts = crate::par::map_chunks(rows, GRAD_CHUNK, |chunk| {
        chunk_gradient(state, objective, source, chunk, train_hidden)
    });
    let mut loss = 0.0;
    let mut total = ParamGrads::zeros_like(state);
    for part in parts {
        let (l, g) = part?;
        loss += l;
        total.add_scaled(&g, 1.0);
    }
    let n = rows.len() as f64;
    total.output.weights /= n;
    total.output.bias /= n;
    if let Some(h) = total.hidden.as_mut() {
        h.weights /= n;
        h.bias /= n;
    }
    Ok((loss / n, total))
}

struct EpochRunner<'c> {
    cfg: &'c RunConfig,
    seeds: SeedStream,
    optimizer: Optimizer,
    train_hidden: bool,
    shuffle_tag: u64,
}

impl EpochRunner<'_> {
    fn run(
        &mut self,
        state: &mut ClassifierState,
        objective: &Objective<'_>,
        source: &MixedBatchSource<'_>,
        epoch: usize,
    ) -> Result<f64> {
        let mut order: Vec<usize> = (0..source.len()).collect();
        order.shuffle(&mut self.seeds.derive(&[self.shuffle_tag, epoch as u64]));
        let mut loss_sum = 0.0;
        for batch in order.chunks(self.cfg.batch_size) {
            let (loss, grad) = batch_gradient(state, objective, source, batch, self.train_hidden)?;
            loss_sum += loss * batch.len() as f64;
            self.optimizer.step(
                state,
                &grad,
                self.cfg.learning_rate,
                self.cfg.weight_decay,
                self.train_hidden,
            );
        }
        Ok(loss_sum / source.len() as f64)
    }
}

fn initial_state(
    space: LabelSpace,
    target: &FeatureDataset,
    cfg: &RunConfig,
    seeds: SeedStream,
) -> ClassifierState {
    let dim = target.feature_dim();
    let mut state = match cfg.hidden {
        Some(h) => ClassifierState::with_hidden(space, dim, h.units, h.activation, &mut seeds.derive(&[tag::INIT])),
        None => ClassifierState::linear(space, dim),
    };
    if cfg.standardize {
        state.standardizer = Some(Standardizer::fit(target.feature_matrix(), dim));
    }
    state
}

/// Trains on the target dataset mixed with per-epoch auxiliary draws.
///
/// With auxiliary classes the objective is the neighbor-silencing loss at
/// `cfg.lambda_s`; without them it is the balanced softmax. Class counts
/// are those of the mixed set actually seen in each epoch.
pub fn train(
    target: &FeatureDataset,
    aux: Option<&FeatureDataset>,
    space: &LabelSpace,
    cfg: &RunConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if target.is_empty() {
        return Err(Error::data("empty target dataset"));
    }
    let l = space.num_target();
    target.check_labels(l)?;
    let target_stats = ClassStats::from_labels(target.labels().iter().copied(), l)?;
    let seeds = SeedStream::new(cfg.seed);

    let aux = aux.filter(|a| !a.is_empty());
    if let Some(a) = aux {
        if a.feature_dim() != target.feature_dim() {
            return Err(Error::data(format!(
                "auxiliary features have dimension {}, target features {}",
                a.feature_dim(),
                target.feature_dim()
            )));
        }
    }
    let plan = match aux {
        Some(a) if space.num_auxiliary() > 0 => {
            Some(AuxSamplingPlan::build(space, &target_stats, a, cfg, seeds)?)
        }
        _ => None,
    };
    let plan = plan.filter(|p| p.num_attached() > 0);
    let train_space = match &plan {
        Some(p) => p.compact_space(space)?,
        None => LabelSpace::targets_only(l)?.with_names(
            space
                .class_names()
                .iter()
                .filter(|(&id, _)| id < l)
                .map(|(&id, n)| (id, n.clone()))
                .collect(),
        )?,
    };
    let loss = if plan.is_some() {
        LossKind::NeighborSilencing {
            lambda_s: cfg.lambda_s,
        }
    } else {
        LossKind::BalancedSoftmax
    };

    let mut state = initial_state(train_space.clone(), target, cfg, seeds);
    let mut runner = EpochRunner {
        cfg,
        seeds,
        optimizer: Optimizer::new(cfg.optimizer, &state),
        train_hidden: true,
        shuffle_tag: tag::SHUFFLE,
    };
    let mut epochs = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut source = MixedBatchSource::new(target, aux);
        let mut counts = target_stats.counts().to_vec();
        let mut aux_samples = 0;
        let mut digest = String::new();
        if let (Some(p), Some(a)) = (&plan, aux) {
            let draw = p.sample_epoch(seeds, epoch);
            for &i in &draw.indices {
                let label = p.compact_label(a.label(i)).expect("drawn from attached class");
                source.push_aux(i, label);
            }
            counts.extend(&draw.counts);
            aux_samples = draw.indices.len();
            digest = format!("{:016x}", draw.digest());
        }
        let stats = ClassStats::new(counts)?;
        let objective = Objective::new(loss, &stats, &train_space)?;
        let mean_loss = runner.run(&mut state, &objective, &source, epoch)?;
        if !mean_loss.is_finite() {
            return Err(Error::data(format!(
                "training diverged at epoch {epoch}; lower the learning rate"
            )));
        }
        epochs.push(EpochLog {
            epoch,
            mean_loss,
            num_samples: source.len(),
            aux_samples,
            aux_digest: digest,
        });
    }

    let mut log = TrainLog {
        loss,
        num_classes: train_space.num_classes(),
        plan,
        epochs,
        probe_epochs: Vec::new(),
    };
    if let ClassifierMode::LinearProbe { epochs } = cfg.classifier {
        let (probed, probe_log) = linear_probe(&state, target, cfg, epochs)?;
        state = probed;
        log.probe_epochs = probe_log;
    }
    Ok(TrainOutcome { state, log })
}

/// Discards the classifier rows and re-fits a target-only classifier with
/// the balanced softmax, keeping any hidden layer frozen.
pub fn linear_probe(
    trained: &ClassifierState,
    target: &FeatureDataset,
    cfg: &RunConfig,
    epochs: usize,
) -> Result<(ClassifierState, Vec<EpochLog>)> {
    let mut state = trained.masked();
    let l = state.num_classes();
    state.output = Layer::zeros(l, state.output.inputs());
    target.check_labels(l)?;
    let stats = ClassStats::from_labels(target.labels().iter().copied(), l)?;
    let space = state.space.clone();
    let objective = Objective::new(LossKind::BalancedSoftmax, &stats, &space)?;
    let source = MixedBatchSource::new(target, None);
    let mut runner = EpochRunner {
        cfg,
        seeds: SeedStream::new(cfg.seed),
        optimizer: Optimizer::new(cfg.optimizer, &state),
        train_hidden: false,
        shuffle_tag: tag::PROBE,
    };
    let mut logs = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let mean_loss = runner.run(&mut state, &objective, &source, epoch)?;
        logs.push(EpochLog {
            epoch,
            mean_loss,
            num_samples: source.len(),
            aux_samples: 0,
            aux_digest: String::new(),
        });
    }
    Ok((state, logs))
}

/// Mean loss and parameter gradient of `objective` on a plain dataset.
pub fn dataset_gradient(
    state: &ClassifierState,
    objective: &Objective<'_>,
    data: &FeatureDataset,
) -> Result<(f64, ParamGrads)> {
    let source = MixedBatchSource::new(data, None);
    let rows: Vec<usize> = (0..data.len()).collect();
    batch_gradient(state, objective, &source, &rows, true)
}

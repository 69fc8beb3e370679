//! Linear and one-hidden-layer classifiers over feature vectors.
//!
//! Output rows are aligned with label-space class ids. Masking keeps the
//! first `L` rows (target classes) and drops the auxiliary ones without
//! touching the stored weights of the source state.

mod train;

pub use train::{dataset_gradient, linear_probe, train, EpochLog, TrainLog, TrainOutcome};

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{ClassId, LabelSpace};

/// Format version written into checkpoints.
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation output.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

/// Affine map `out × in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    pub fn zeros(outputs: usize, inputs: usize) -> Self {
        Self {
            weights: Array2::zeros((outputs, inputs)),
            bias: Array1::zeros(outputs),
        }
    }

    /// Glorot-style uniform weights, zero bias.
    pub fn uniform<R: Rng>(outputs: usize, inputs: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weights = Array2::from_shape_fn((outputs, inputs), |_| rng.random_range(-limit..limit));
        Self {
            weights,
            bias: Array1::zeros(outputs),
        }
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    /// `x · Wᵀ + b` for a batch of rows.
    fn forward(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = x.dot(&self.weights.t());
        if !out.is_standard_layout() {
            out = out.as_standard_layout().into_owned();
        }
        out += &self.bias;
        out
    }

    fn add_scaled(&mut self, other: &Layer, scale: f64) {
        self.weights.scaled_add(scale, &other.weights);
        self.bias.scaled_add(scale, &other.bias);
    }

    fn num_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiddenLayer {
    pub layer: Layer,
    pub activation: Activation,
}

/// Per-feature affine standardization fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Fits mean and inverse standard deviation per column of a row-major
    /// matrix. Constant columns get scale 1.
    pub fn fit(features: &[f64], dim: usize) -> Self {
        let n = (features.len() / dim.max(1)).max(1) as f64;
        let mut mean = vec![0.0; dim];
        for row in features.chunks(dim) {
            for (m, x) in mean.iter_mut().zip(row) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for row in features.chunks(dim) {
            for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let scale = var
            .iter()
            .map(|v| {
                let sd = (v / n).sqrt();
                if sd > 1e-12 {
                    1.0 / sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    fn apply_rows(&self, x: &mut Array2<f64>) {
        for mut row in x.rows_mut() {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.scale) {
                *v = (*v - m) * s;
            }
        }
    }
}

/// Gradient (or update) with the same shape as the trainable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub output: Layer,
    pub hidden: Option<Layer>,
}

impl ParamGrads {
    pub fn zeros_like(state: &ClassifierState) -> Self {
        Self {
            output: Layer::zeros(state.output.outputs(), state.output.inputs()),
            hidden: state
                .hidden
                .as_ref()
                .map(|h| Layer::zeros(h.layer.outputs(), h.layer.inputs())),
        }
    }

    pub fn add_scaled(&mut self, other: &ParamGrads, scale: f64) {
        self.output.add_scaled(&other.output, scale);
        if let (Some(a), Some(b)) = (self.hidden.as_mut(), other.hidden.as_ref()) {
            a.add_scaled(b, scale);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierState {
    pub version: u32,
    pub space: LabelSpace,
    pub feature_dim: usize,
    pub standardizer: Option<Standardizer>,
    pub hidden: Option<HiddenLayer>,
    pub output: Layer,
}

/// Intermediate activations of a batch forward pass.
pub(crate) struct Activations {
    input: Array2<f64>,
    hidden: Option<Array2<f64>>,
    pub logits: Array2<f64>,
}

impl ClassifierState {
    /// Zero-initialized linear classifier over every class in `space`.
    pub fn linear(space: LabelSpace, feature_dim: usize) -> Self {
        let classes = space.num_classes();
        Self {
            version: CHECKPOINT_VERSION,
            space,
            feature_dim,
            standardizer: None,
            hidden: None,
            output: Layer::zeros(classes, feature_dim),
        }
    }

    /// One hidden layer with seeded uniform init and a zero output layer.
    pub fn with_hidden<R: Rng>(
        space: LabelSpace,
        feature_dim: usize,
        units: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let classes = space.num_classes();
        Self {
            version: CHECKPOINT_VERSION,
            space,
            feature_dim,
            standardizer: None,
            hidden: Some(HiddenLayer {
                layer: Layer::uniform(units, feature_dim, rng),
                activation,
            }),
            output: Layer::zeros(classes, units),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.output.outputs()
    }

    pub fn num_params(&self) -> usize {
        self.output.num_params() + self.hidden.as_ref().map_or(0, |h| h.layer.num_params())
    }

    /// Logits for a single feature vector.
    pub fn forward(&self, features: &[f64]) -> Result<Vec<f64>> {
        let x = ArrayView2::from_shape((1, features.len()), features)
            .map_err(|e| Error::data(e.to_string()))?;
        Ok(self.forward_batch(x)?.row(0).to_vec())
    }

    /// Logits for a batch of rows.
    pub fn forward_batch(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        Ok(self.forward_cached(x)?.logits)
    }

    pub(crate) fn forward_cached(&self, x: ArrayView2<'_, f64>) -> Result<Activations> {
        if x.ncols() != self.feature_dim {
            return Err(Error::data(format!(
                "feature dimension {} does not match classifier input {}",
                x.ncols(),
                self.feature_dim
            )));
        }
        let mut input = x.to_owned();
        if let Some(std) = &self.standardizer {
            std.apply_rows(&mut input);
        }
        let hidden = self.hidden.as_ref().map(|h| {
            let mut a = h.layer.forward(input.view());
            a.mapv_inplace(|v| h.activation.apply(v));
            a
        });
        let logits = match &hidden {
            Some(a) => self.output.forward(a.view()),
            None => self.output.forward(input.view()),
        };
        Ok(Activations {
            input,
            hidden,
            logits,
        })
    }

    /// Parameter gradients given `dlogits` (batch × classes), summed over rows.
    pub(crate) fn backward(&self, acts: &Activations, dlogits: &Array2<f64>, frozen_hidden: bool) -> ParamGrads {
        let top_input = acts.hidden.as_ref().unwrap_or(&acts.input);
        let output = Layer {
            weights: dlogits.t().dot(top_input),
            bias: dlogits.sum_axis(Axis(0)),
        };
        let hidden = match (&self.hidden, &acts.hidden) {
            (Some(h), Some(a)) => {
                if frozen_hidden {
                    Some(Layer::zeros(h.layer.outputs(), h.layer.inputs()))
                } else {
                    let mut dpre = dlogits.dot(&self.output.weights);
                    ndarray::Zip::from(&mut dpre)
                        .and(a)
                        .for_each(|d, &y| *d *= h.activation.derivative_from_output(y));
                    Some(Layer {
                        weights: dpre.t().dot(&acts.input),
                        bias: dpre.sum_axis(Axis(0)),
                    })
                }
            }
            _ => None,
        };
        ParamGrads { output, hidden }
    }

    pub fn apply_update(&mut self, update: &ParamGrads, scale: f64) {
        self.output.add_scaled(&update.output, scale);
        if let (Some(h), Some(u)) = (self.hidden.as_mut(), update.hidden.as_ref()) {
            h.layer.add_scaled(u, scale);
        }
    }

    /// Arg-max class; ties go to the lowest id.
    pub fn predict(&self, features: &[f64]) -> Result<ClassId> {
        Ok(argmax(&self.forward(features)?))
    }

    /// Predictions for a row-major feature matrix.
    pub fn predict_batch(&self, features: &[f64]) -> Result<Vec<ClassId>> {
        if self.feature_dim == 0 || !features.len().is_multiple_of(self.feature_dim) {
            return Err(Error::data("feature matrix is not a multiple of the feature dimension"));
        }
        let rows = features.len() / self.feature_dim;
        let chunk = 256 * self.feature_dim;
        let parts = crate::par::map_chunks(features, chunk, |part| -> Result<Vec<ClassId>> {
            let x = ArrayView2::from_shape((part.len() / self.feature_dim, self.feature_dim), part)
                .map_err(|e| Error::data(e.to_string()))?;
            let z = self.forward_batch(x)?;
            Ok(z.rows().into_iter().map(|r| argmax(r.as_slice().unwrap())).collect())
        });
        let mut out = Vec::with_capacity(rows);
        for p in parts {
            out.extend(p?);
        }
        Ok(out)
    }

    /// Keeps the target-class rows only. The returned state's label space
    /// has no auxiliary classes.
    pub fn masked(&self) -> ClassifierState {
        let l = self.space.num_target();
        let names = self
            .space
            .class_names()
            .iter()
            .filter(|(&id, _)| id < l)
            .map(|(&id, n)| (id, n.clone()))
            .collect();
        let space = LabelSpace::targets_only(l)
            .and_then(|s| s.with_names(names))
            .expect("target prefix of a valid space is valid");
        ClassifierState {
            version: self.version,
            space,
            feature_dim: self.feature_dim,
            standardizer: self.standardizer.clone(),
            hidden: self.hidden.clone(),
            output: Layer {
                weights: self.output.weights.slice(s![..l, ..]).to_owned(),
                bias: self.output.bias.slice(s![..l]).to_owned(),
            },
        }
    }

    pub fn is_masked(&self) -> bool {
        self.space.num_auxiliary() == 0
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        crate::dataset::write_json(path, self)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let state: ClassifierState = crate::dataset::read_json(path)?;
        if state.version != CHECKPOINT_VERSION {
            return Err(Error::data(format!(
                "checkpoint version {} is not supported (expected {CHECKPOINT_VERSION})",
                state.version
            )));
        }
        state.validate()?;
        Ok(state)
    }

    fn validate(&self) -> Result<()> {
        let in_dim = match &self.hidden {
            Some(h) => {
                if h.layer.inputs() != self.feature_dim || h.layer.bias.len() != h.layer.outputs() {
                    return Err(Error::data("hidden layer shape mismatch"));
                }
                h.layer.outputs()
            }
            None => self.feature_dim,
        };
        if self.output.outputs() != self.space.num_classes()
            || self.output.inputs() != in_dim
            || self.output.bias.len() != self.output.outputs()
        {
            return Err(Error::data("output layer shape does not match label space"));
        }
        if let Some(s) = &self.standardizer {
            if s.mean.len() != self.feature_dim || s.scale.len() != self.feature_dim {
                return Err(Error::data("standardizer shape mismatch"));
            }
        }
        Ok(())
    }
}

/// Free-function form of [`ClassifierState::masked`].
pub fn mask_classifier(state: &ClassifierState) -> ClassifierState {
    state.masked()
}

pub fn argmax(values: &[f64]) -> ClassId {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

//! Run configuration shared by training, sampling and curation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Activation;

/// Auxiliary-category ratio across head / medium / tail targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum AuxRatio {
    /// `1 : ⌈N_h/N_m⌉ : ⌈N_h/N_t⌉` from the sample totals of each split.
    Formula,
    Fixed { head: f64, medium: f64, tail: f64 },
}

impl AuxRatio {
    /// The `1:1:3` ablation preset.
    pub const PRESET_113: AuxRatio = AuxRatio::Fixed {
        head: 1.0,
        medium: 1.0,
        tail: 3.0,
    };

    /// Parses `h:m:t` or `formula`.
    pub fn parse(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("formula") {
            return Ok(AuxRatio::Formula);
        }
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::config(format!("ratio must look like h:m:t, got {s:?}")));
        }
        let mut v = [0.0; 3];
        for (slot, p) in v.iter_mut().zip(&parts) {
            *slot = p
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::config(format!("bad ratio component {p:?} in {s:?}")))?;
        }
        let r = AuxRatio::Fixed {
            head: v[0],
            medium: v[1],
            tail: v[2],
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if let AuxRatio::Fixed { head, medium, tail } = *self {
            if [head, medium, tail].iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::config("ratio entries must be finite and >= 0"));
            }
        }
        Ok(())
    }
}

impl std::fmt::Display for AuxRatio {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AuxRatio::Formula => write!(f, "formula"),
            AuxRatio::Fixed { head, medium, tail } => write!(f, "{head}:{medium}:{tail}"),
        }
    }
}

/// Which target splits receive auxiliary categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpandSet {
    MediumTail,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerConfig {
    Sgd { momentum: f64 },
    AdamW { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerConfig {
    pub const SGD_DEFAULT: OptimizerConfig = OptimizerConfig::Sgd { momentum: 0.9 };
    pub const ADAMW_DEFAULT: OptimizerConfig = OptimizerConfig::AdamW {
        beta1: 0.9,
        beta2: 0.95,
        eps: 1e-8,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HiddenConfig {
    pub units: usize,
    pub activation: Activation,
}

/// How the final target classifier is obtained after training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ClassifierMode {
    /// Keep the target rows of the jointly trained classifier.
    Masked,
    /// Discard the classifier and re-fit it on target data only, keeping
    /// any hidden layer frozen.
    LinearProbe { epochs: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub lambda_s: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub per_class_cap: usize,
    pub aux_ratio: AuxRatio,
    /// Auxiliary categories per expanded target at the largest ratio entry.
    pub aux_per_target: usize,
    pub expand: ExpandSet,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub optimizer: OptimizerConfig,
    pub hidden: Option<HiddenConfig>,
    pub standardize: bool,
    pub classifier: ClassifierMode,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            lambda_s: 0.1,
            gamma1: 0.7,
            gamma2: 0.98,
            per_class_cap: 50,
            aux_ratio: AuxRatio::Formula,
            aux_per_target: 5,
            expand: ExpandSet::MediumTail,
            epochs: 30,
            batch_size: 128,
            learning_rate: 0.05,
            weight_decay: 0.0,
            optimizer: OptimizerConfig::SGD_DEFAULT,
            hidden: None,
            standardize: true,
            classifier: ClassifierMode::Masked,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.lambda_s.is_finite() || self.lambda_s < 0.0 {
            return Err(Error::config(format!("lambda_s must be >= 0, got {}", self.lambda_s)));
        }
        if !(0.0 <= self.gamma1 && self.gamma1 < self.gamma2 && self.gamma2 <= 1.0) {
            return Err(Error::config(format!(
                "need 0 <= gamma1 < gamma2 <= 1, got gamma1={} gamma2={}",
                self.gamma1, self.gamma2
            )));
        }
        if self.per_class_cap == 0 {
            return Err(Error::config("per_class_cap must be >= 1"));
        }
        self.aux_ratio.validate()?;
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be >= 1"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::config("learning_rate must be > 0"));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::config("weight_decay must be >= 0"));
        }
        match self.optimizer {
            OptimizerConfig::Sgd { momentum } if !(0.0..1.0).contains(&momentum) => {
                return Err(Error::config("momentum must be in [0, 1)"));
            }
            OptimizerConfig::AdamW { beta1, beta2, eps }
                if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0) =>
            {
                return Err(Error::config("AdamW betas must be in [0, 1) and eps > 0"));
            }
            _ => {}
        }
        if let Some(h) = self.hidden {
            if h.units == 0 {
                return Err(Error::config("hidden layer needs at least one unit"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_settings() {
        let c = RunConfig::default();
        assert_eq!((c.lambda_s, c.gamma1, c.gamma2, c.per_class_cap), (0.1, 0.7, 0.98, 50));
        assert_eq!(c.aux_per_target, 5);
        c.validate().unwrap();
    }

    #[test]
    fn ratio_parsing() {
        assert_eq!(AuxRatio::parse("1:1:3").unwrap(), AuxRatio::PRESET_113);
        assert_eq!(
            AuxRatio::parse("1:0.5:1").unwrap(),
            AuxRatio::Fixed { head: 1.0, medium: 0.5, tail: 1.0 }
        );
        assert_eq!(AuxRatio::parse("formula").unwrap(), AuxRatio::Formula);
        assert!(AuxRatio::parse("1:2").is_err());
        assert!(AuxRatio::parse("1:-1:2").is_err());
        assert!(AuxRatio::parse("a:b:c").is_err());
    }

    #[test]
    fn rejects_bad_gammas() {
        let c = RunConfig { gamma1: 0.9, gamma2: 0.8, ..RunConfig::default() };
        assert!(c.validate().is_err());
        let c = RunConfig { per_class_cap: 0, ..RunConfig::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn partial_json_uses_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"seed": 9, "epochs": 3}"#).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.lambda_s, 0.1);
        assert!(serde_json::from_str::<RunConfig>(r#"{"sede": 9}"#).is_err());
    }
}

//! Long-tail classification with open-set neighbor category extrapolation.
//!
//! The crate covers the balanced and neighbor-silencing losses, a small
//! trainable classifier over feature vectors with classifier masking, the
//! auxiliary-category curation pipeline (LLM query, leak filter, caption and
//! prototype-similarity filters), per-epoch auxiliary sampling, split-aware
//! metrics, and a synthetic hierarchy generator for controlled studies.

pub mod config;
pub mod curation;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod labels;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod par;
pub mod rng;
pub mod sampling;
pub mod synth;

pub use config::RunConfig;
pub use dataset::{FeatureDataset, Provenance};
pub use error::{Error, Result};
pub use labels::{ClassId, ClassStats, LabelSpace};
pub use model::ClassifierState;

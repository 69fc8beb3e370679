//! Resolved settings: defaults, then the JSON config file, then flags.

use std::path::Path;

use serde::{Deserialize, Serialize};
use tailext::config::AuxRatio;
use tailext::curation::CurationConfig;
use tailext::experiment::{BenchmarkConfig, PilotConfig};
use tailext::{Error, Result, RunConfig};

use crate::cli::Overrides;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub mask_aux: bool,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self { mask_aux: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub run: RunConfig,
    /// Training recipe for `sweep`; run-level flags apply here too.
    pub benchmark_run: RunConfig,
    pub pilot: PilotConfig,
    pub benchmark: BenchmarkConfig,
    pub curation: CurationConfig,
    pub eval: EvalSettings,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            run: RunConfig::default(),
            benchmark_run: BenchmarkConfig::recommended_run(),
            pilot: PilotConfig::default(),
            benchmark: BenchmarkConfig::default(),
            curation: CurationConfig::default(),
            eval: EvalSettings::default(),
        }
    }
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(seed) = o.seed {
            self.pilot.seed = seed;
        }
        for run in [&mut self.run, &mut self.benchmark_run] {
            if let Some(seed) = o.seed {
                run.seed = seed;
            }
            if let Some(l) = o.lambda_s {
                run.lambda_s = l;
            }
            if let Some(c) = o.cap {
                run.per_class_cap = c;
            }
            if let Some(r) = &o.ratio {
                run.aux_ratio = AuxRatio::parse(r)?;
            }
            if let Some(g) = o.gamma1 {
                run.gamma1 = g;
            }
            if let Some(g) = o.gamma2 {
                run.gamma2 = g;
            }
        }
        if let Some(g) = o.gamma1 {
            self.curation.gamma1 = g;
        }
        if let Some(g) = o.gamma2 {
            self.curation.gamma2 = g;
        }
        if let Some(m) = o.mask_aux() {
            self.eval.mask_aux = m;
        }
        if let Some(j) = o.jobs {
            self.curation.concurrency = j;
        }
        self.run.validate()?;
        self.benchmark_run.validate()?;
        self.pilot.validate()?;
        if !(0.0 <= self.curation.gamma1 && self.curation.gamma1 < self.curation.gamma2 && self.curation.gamma2 <= 1.0) {
            return Err(Error::config("need 0 <= gamma1 < gamma2 <= 1"));
        }
        Ok(())
    }

    pub fn resolve(o: &Overrides) -> Result<Self> {
        let mut s = Self::load(o.config.as_deref())?;
        s.apply(o)?;
        Ok(s)
    }
}

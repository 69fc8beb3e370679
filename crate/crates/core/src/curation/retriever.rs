//! Candidate retrieval.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::normalize_name;
use crate::error::{Error, Result};

/// One retrieved record for a queried class name, features attached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedRecord {
    #[serde(rename = "class")]
    pub class_name: String,
    pub image_ref: String,
    pub caption: String,
    pub features: Vec<f64>,
}

pub trait Retriever: Send + Sync {
    fn retrieve(&self, class_name: &str) -> Result<Vec<RetrievedRecord>>;
}

/// Serves records from a JSONL corpus, one
/// `{"class", "image_ref", "caption", "features"}` object per line.
#[derive(Debug, Default)]
pub struct FixtureRetriever {
    by_class: HashMap<String, Vec<RetrievedRecord>>,
}

impl FixtureRetriever {
    pub fn new(records: Vec<RetrievedRecord>) -> Self {
        let mut by_class: HashMap<String, Vec<RetrievedRecord>> = HashMap::new();
        for r in records {
            by_class.entry(normalize_name(&r.class_name)).or_default().push(r);
        }
        Self { by_class }
    }

    pub fn from_jsonl(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut records = Vec::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: RetrievedRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
                path: PathBuf::from(path),
                line: n + 1,
                message: e.to_string(),
            })?;
            records.push(rec);
        }
        Ok(Self::new(records))
    }

    pub fn len(&self) -> usize {
        self.by_class.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.by_class.is_empty()
    }
}

impl Retriever for FixtureRetriever {
    fn retrieve(&self, class_name: &str) -> Result<Vec<RetrievedRecord>> {
        Ok(self
            .by_class
            .get(&normalize_name(class_name))
            .cloned()
            .unwrap_or_default())
    }
}

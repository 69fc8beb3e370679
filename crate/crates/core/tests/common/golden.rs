//! Runs the curation pipeline over the fixture corpus and compares every
//! verdict with the audited outcomes in `golden.json`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::Deserialize;
use tailext::config::ExpandSet;
use tailext::curation::{curate, normalize_name, CurationConfig, FixtureClient, FixtureRetriever, Rejection};
use tailext::dataset::{read_json, FeatureDataset};
use tailext::LabelSpace;

#[derive(Deserialize)]
struct Golden {
    gamma1: f64,
    gamma2: f64,
    kept: Vec<String>,
    records: Vec<AuditedRecord>,
}

#[derive(Deserialize)]
struct AuditedRecord {
    image_ref: String,
    target: usize,
    proposed_class: String,
    outcome: String,
}

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/curation")
}

/// Summary of a successful comparison.
#[derive(Debug)]
pub struct GoldenSummary {
    pub candidates: usize,
    pub kept: usize,
    pub rejected: BTreeMap<String, usize>,
}

fn label(r: Option<Rejection>) -> &'static str {
    match r {
        None => "kept",
        Some(Rejection::Caption) => "caption",
        Some(Rejection::SimilarityLow) => "similarity_low",
        Some(Rejection::SimilarityHigh) => "similarity_high",
    }
}

pub fn check_curation_golden(dir: &Path) -> Result<GoldenSummary, String> {
    let e = |x: tailext::Error| x.to_string();
    let golden: Golden = read_json(&dir.join("golden.json")).map_err(e)?;
    let (train, _) = FeatureDataset::read_manifest(&dir.join("targets.jsonl")).map_err(e)?;
    let raw: BTreeMap<String, String> = read_json(&dir.join("target_names.json")).map_err(e)?;
    let names: BTreeMap<usize, String> = raw.into_iter().map(|(k, v)| (k.parse().unwrap(), v)).collect();
    let space = LabelSpace::targets_only(names.len()).map_err(e)?.with_names(names.clone()).map_err(e)?;
    let client = FixtureClient::from_dir(&dir.join("llm")).map_err(e)?;
    let retriever = FixtureRetriever::from_jsonl(&dir.join("corpus.jsonl")).map_err(e)?;
    let cfg = CurationConfig {
        gamma1: golden.gamma1,
        gamma2: golden.gamma2,
        expand: ExpandSet::All,
        ..CurationConfig::default()
    };
    let out = curate(&space, &train, &names, &client, &retriever, &cfg).map_err(e)?;

    let mut actual: BTreeMap<String, &'static str> = BTreeMap::new();
    for (_, verdicts) in &out.verdicts {
        for (c, r, _) in verdicts {
            if actual.insert(c.image_ref.clone(), label(*r)).is_some() {
                return Err(format!("{} judged twice", c.image_ref));
            }
        }
    }
    let mut rejected = BTreeMap::new();
    for rec in &golden.records {
        let got = actual.get(&rec.image_ref).copied().unwrap_or("leak");
        if got != rec.outcome {
            return Err(format!("{}: expected {}, got {got}", rec.image_ref, rec.outcome));
        }
        if got == "leak" {
            let report = &out.report.classes[rec.target];
            if !report.leaked.iter().any(|n| normalize_name(n) == normalize_name(&rec.proposed_class)) {
                return Err(format!("{} was not reported as leaked for target {}", rec.proposed_class, rec.target));
            }
        }
        if got != "kept" {
            *rejected.entry(got.to_string()).or_insert(0) += 1;
        }
    }
    if actual.len() + rejected.get("leak").copied().unwrap_or(0) != golden.records.len() {
        return Err("pipeline judged records outside the corpus".into());
    }
    let kept: BTreeSet<String> = out.aux.iter().map(|(id, _, _)| id.to_string()).collect();
    let expected: BTreeSet<String> = golden.kept.iter().cloned().collect();
    if kept != expected {
        return Err(format!(
            "kept set differs: missing {:?}, unexpected {:?}",
            expected.difference(&kept).collect::<Vec<_>>(),
            kept.difference(&expected).collect::<Vec<_>>()
        ));
    }
    // kept samples are labelled with an auxiliary class of their own target
    for (id, label, _) in out.aux.iter() {
        let rec = golden.records.iter().find(|r| r.image_ref == id).unwrap();
        if out.space.neighbor_of(label) != Some(rec.target) {
            return Err(format!("{id} attached to the wrong target"));
        }
        if out.space.class_name(label).map(normalize_name) != Some(normalize_name(&rec.proposed_class)) {
            return Err(format!("{id} carries the wrong auxiliary class name"));
        }
    }
    Ok(GoldenSummary {
        candidates: golden.records.len(),
        kept: kept.len(),
        rejected,
    })
}

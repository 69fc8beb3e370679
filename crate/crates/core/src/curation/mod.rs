//! Auxiliary-category curation.
//!
//! For each target class to expand: prompt an LLM for neighbor categories,
//! drop names that collide with target classes, retrieve candidates for the
//! remaining names, then keep a candidate only if its caption mentions the
//! proposed name and its cosine similarity to the target prototype lies
//! strictly inside `(γ1, γ2)`.

mod llm;
mod prompt;
mod retriever;

pub use llm::{
    parse_chat_body, parse_neighbor_list, query_neighbors, FixtureClient, LlmClient, ENV_LLM_KEY,
    ENV_LLM_MODEL, ENV_LLM_URL,
};
#[cfg(feature = "http")]
pub use llm::HttpClient;
pub use prompt::build_prompt;
pub use retriever::{FixtureRetriever, RetrievedRecord, Retriever};

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::config::ExpandSet;
use crate::dataset::{FeatureDataset, Provenance};
use crate::error::{Error, Result};
use crate::labels::{ClassId, ClassStats, LabelSpace};
use crate::metrics::{assign_splits, Split};

/// Case-folded, trimmed, internal whitespace collapsed to single spaces.
pub fn normalize_name(s: &str) -> String {
    s.split_whitespace()
        .map(|w| w.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Removes names equal (after normalization) to a target class name.
pub fn filter_leaks(names: &[String], target_names: &BTreeSet<String>) -> Vec<String> {
    let targets: BTreeSet<String> = target_names.iter().map(|n| normalize_name(n)).collect();
    names
        .iter()
        .filter(|n| !targets.contains(&normalize_name(n)))
        .cloned()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub image_ref: String,
    pub caption: String,
    pub features: Vec<f64>,
    pub proposed_class: String,
    pub source_target: ClassId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prototype {
    pub class: ClassId,
    pub vector: Vec<f64>,
}

/// Mean training feature of `class`.
pub fn compute_prototype(dataset: &FeatureDataset, class: ClassId) -> Result<Prototype> {
    let rows = dataset.indices_of(class);
    if rows.is_empty() {
        return Err(Error::data(format!("class {class} has no samples for a prototype")));
    }
    let mut sum = vec![0.0; dataset.feature_dim()];
    for &i in &rows {
        for (s, x) in sum.iter_mut().zip(dataset.features(i)) {
            *s += x;
        }
    }
    let n = rows.len() as f64;
    Ok(Prototype {
        class,
        vector: sum.into_iter().map(|s| s / n).collect(),
    })
}

/// `dot(a, b) / (‖a‖ ‖b‖)`.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::data(format!(
            "cannot compare vectors of dimension {} and {}",
            a.len(),
            b.len()
        )));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::data("cosine similarity of a zero vector"));
    }
    Ok(dot / (na * nb))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptionMatch {
    /// Normalized substring containment.
    #[default]
    Substring,
    /// The name must appear as a run of whole words.
    Token,
}

impl CaptionMatch {
    pub fn matches(self, caption: &str, name: &str) -> bool {
        let name = normalize_name(name);
        if name.is_empty() {
            return false;
        }
        match self {
            CaptionMatch::Substring => normalize_name(caption).contains(&name),
            CaptionMatch::Token => {
                let words = |s: &str| {
                    s.chars()
                        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
                        .collect::<String>()
                };
                let hay = format!(" {} ", normalize_name(&words(caption)));
                let needle = format!(" {} ", normalize_name(&words(&name)));
                hay.contains(&needle)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rejection {
    /// Caption does not mention the proposed class.
    Caption,
    /// Cosine similarity at or below γ1.
    SimilarityLow,
    /// Cosine similarity at or above γ2.
    SimilarityHigh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub index: usize,
    pub cosine: Option<f64>,
    pub rejection: Option<Rejection>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FilterOutcome {
    pub kept: Vec<Candidate>,
    pub rejected: Vec<(Candidate, Rejection)>,
    /// One verdict per input candidate, in input order.
    pub verdicts: Vec<Verdict>,
}

/// Applies the caption rule, then the similarity keep band
/// `γ1 < cos(p, f) < γ2` against the prototype of each candidate's source
/// target.
pub fn filter_candidates(
    candidates: Vec<Candidate>,
    prototypes: &BTreeMap<ClassId, Prototype>,
    gamma1: f64,
    gamma2: f64,
    caption_match: CaptionMatch,
) -> Result<FilterOutcome> {
    if !(0.0 <= gamma1 && gamma1 < gamma2 && gamma2 <= 1.0) {
        return Err(Error::config(format!(
            "need 0 <= gamma1 < gamma2 <= 1, got {gamma1}, {gamma2}"
        )));
    }
    let mut out = FilterOutcome::default();
    for (index, c) in candidates.into_iter().enumerate() {
        let proto = prototypes.get(&c.source_target).ok_or_else(|| {
            Error::data(format!("no prototype for target class {}", c.source_target))
        })?;
        if !caption_match.matches(&c.caption, &c.proposed_class) {
            out.verdicts.push(Verdict {
                index,
                cosine: None,
                rejection: Some(Rejection::Caption),
            });
            out.rejected.push((c, Rejection::Caption));
            continue;
        }
        let cos = cosine(&proto.vector, &c.features)?;
        let rejection = if cos <= gamma1 {
            Some(Rejection::SimilarityLow)
        } else if cos >= gamma2 {
            Some(Rejection::SimilarityHigh)
        } else {
            None
        };
        out.verdicts.push(Verdict {
            index,
            cosine: Some(cos),
            rejection,
        });
        match rejection {
            Some(r) => out.rejected.push((c, r)),
            None => out.kept.push(c),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CurationConfig {
    pub neighbors_per_class: usize,
    pub gamma1: f64,
    pub gamma2: f64,
    pub expand: ExpandSet,
    pub caption_match: CaptionMatch,
    pub max_retries: usize,
    pub concurrency: usize,
}

impl Default for CurationConfig {
    fn default() -> Self {
        Self {
            neighbors_per_class: 5,
            gamma1: 0.7,
            gamma2: 0.98,
            expand: ExpandSet::MediumTail,
            caption_match: CaptionMatch::Substring,
            max_retries: 2,
            concurrency: 8,
        }
    }
}

/// Per-target stage counts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub target: ClassId,
    pub name: String,
    pub split: Option<Split>,
    pub queried: Vec<String>,
    /// Proposed names dropped because they equal a target class name.
    pub leaked: Vec<String>,
    pub after_leak_filter: usize,
    pub duplicates_skipped: usize,
    pub retrieved: usize,
    pub rejected_caption: usize,
    pub rejected_similarity_low: usize,
    pub rejected_similarity_high: usize,
    pub kept: usize,
    /// Auxiliary class ids created for this target with their names.
    pub aux_classes: BTreeMap<ClassId, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CurationReport {
    pub classes: Vec<ClassReport>,
    pub num_auxiliary_classes: usize,
    pub num_auxiliary_samples: usize,
    pub warnings: Vec<String>,
}

/// A retrieved candidate with its rejection reason (if any) and prototype
/// cosine (absent when the caption check already failed).
pub type Judged = (Candidate, Option<Rejection>, Option<f64>);

pub struct CurationOutput {
    pub aux: FeatureDataset,
    pub space: LabelSpace,
    pub report: CurationReport,
    /// Verdicts for every retrieved candidate, grouped by target.
    pub verdicts: Vec<(ClassId, Vec<Judged>)>,
}

struct TargetResult {
    report: ClassReport,
    /// (proposed name, candidate verdicts)
    per_name: Vec<(String, FilterOutcome, Vec<Candidate>)>,
}

#[allow(clippy::too_many_arguments)]
fn curate_target(
    target: ClassId,
    name: &str,
    split: Option<Split>,
    target_names: &BTreeSet<String>,
    proto: &Prototype,
    client: &dyn LlmClient,
    retriever: &dyn Retriever,
    cfg: &CurationConfig,
) -> Result<TargetResult> {
    let mut report = ClassReport {
        target,
        name: name.to_string(),
        split,
        ..ClassReport::default()
    };
    let names = query_neighbors(client, name, cfg.neighbors_per_class, cfg.max_retries)?;
    report.queried = names.clone();
    let kept_names = filter_leaks(&names, target_names);
    report.leaked = names.into_iter().filter(|n| !kept_names.contains(n)).collect();
    let names = kept_names;
    report.after_leak_filter = names.len();
    let mut per_name = Vec::new();
    let protos: BTreeMap<ClassId, Prototype> = [(target, proto.clone())].into_iter().collect();
    for n in names {
        let records = retriever.retrieve(&n)?;
        report.retrieved += records.len();
        let cands: Vec<Candidate> = records
            .into_iter()
            .map(|r| Candidate {
                image_ref: r.image_ref,
                caption: r.caption,
                features: r.features,
                proposed_class: n.clone(),
                source_target: target,
            })
            .collect();
        let outcome = filter_candidates(cands.clone(), &protos, cfg.gamma1, cfg.gamma2, cfg.caption_match)?;
        per_name.push((n, outcome, cands));
    }
    Ok(TargetResult { report, per_name })
}

/// Runs the full pipeline for the targets selected by `cfg.expand`.
/// `target_names` maps every target class id to its name.
pub fn curate(
    space: &LabelSpace,
    dataset: &FeatureDataset,
    target_names: &BTreeMap<ClassId, String>,
    client: &dyn LlmClient,
    retriever: &dyn Retriever,
    cfg: &CurationConfig,
) -> Result<CurationOutput> {
    if !(0.0 <= cfg.gamma1 && cfg.gamma1 < cfg.gamma2 && cfg.gamma2 <= 1.0) {
        return Err(Error::config("need 0 <= gamma1 < gamma2 <= 1"));
    }
    let l = space.num_target();
    dataset.check_labels(l)?;
    for t in 0..l {
        if !target_names.contains_key(&t) {
            return Err(Error::data(format!("target class {t} has no name")));
        }
    }
    let counts = crate::labels::tally(dataset.labels().iter().copied(), l)?;
    let splits = ClassStats::new(counts.clone()).ok().map(|s| assign_splits(&s));
    let split_of = |t: ClassId| -> Option<Split> {
        splits
            .as_ref()
            .and_then(|s| s.get(t))
            .or_else(|| (counts[t] > 0).then(|| Split::of_count(counts[t])))
    };
    let expanded: Vec<ClassId> = (0..l)
        .filter(|&t| counts[t] > 0)
        .filter(|&t| match cfg.expand {
            ExpandSet::All => true,
            ExpandSet::MediumTail => split_of(t) != Some(Split::Many),
        })
        .collect();
    let name_set: BTreeSet<String> = target_names.values().map(|n| normalize_name(n)).collect();
    let prototypes: Vec<Prototype> = expanded
        .iter()
        .map(|&t| compute_prototype(dataset, t))
        .collect::<Result<_>>()?;

    // bounded fan-out; results are reassembled in target order
    let width = cfg.concurrency.max(1);
    let mut results: Vec<Result<TargetResult>> = Vec::with_capacity(expanded.len());
    for (targets, protos) in expanded.chunks(width).zip(prototypes.chunks(width)) {
        let batch: Vec<Result<TargetResult>> = std::thread::scope(|scope| {
            let handles: Vec<_> = targets
                .iter()
                .zip(protos)
                .map(|(&t, p)| {
                    let name = &target_names[&t];
                    let names = &name_set;
                    let split = split_of(t);
                    scope.spawn(move || curate_target(t, name, split, names, p, client, retriever, cfg))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("curation worker panicked")).collect()
        });
        results.extend(batch);
    }

    let mut report = CurationReport::default();
    let mut pairs = space.neighbor_pairs();
    let mut names = space.class_names().clone();
    let mut next = space.num_classes();
    let mut seen_aux: BTreeSet<String> = BTreeSet::new();
    let mut aux = FeatureDataset::new(dataset.feature_dim(), Provenance::Ingested);
    let mut verdicts = Vec::new();
    for res in results {
        let TargetResult {
            report: mut report_entry,
            per_name,
        } = res?;
        let mut target_verdicts = Vec::new();
        for (aux_name, outcome, cands) in per_name {
            let dup = !seen_aux.insert(aux_name.clone());
            for (c, v) in cands.into_iter().zip(&outcome.verdicts) {
                target_verdicts.push((c, v.rejection, v.cosine));
            }
            if dup {
                report_entry.duplicates_skipped += 1;
                continue;
            }
            for (_, r) in &outcome.rejected {
                match r {
                    Rejection::Caption => report_entry.rejected_caption += 1,
                    Rejection::SimilarityLow => report_entry.rejected_similarity_low += 1,
                    Rejection::SimilarityHigh => report_entry.rejected_similarity_high += 1,
                }
            }
            if outcome.kept.is_empty() {
                continue;
            }
            let id = next;
            next += 1;
            pairs.push((id, report_entry.target));
            names.insert(id, aux_name.clone());
            report_entry.aux_classes.insert(id, aux_name.clone());
            report_entry.kept += outcome.kept.len();
            for c in &outcome.kept {
                aux.push(c.image_ref.clone(), id, &c.features)?;
            }
        }
        if report_entry.kept == 0 {
            report.warnings.push(format!(
                "target {} ({}) produced no auxiliary samples",
                report_entry.target, report_entry.name
            ));
        }
        verdicts.push((report_entry.target, target_verdicts));
        report.classes.push(report_entry);
    }
    report.num_auxiliary_classes = next - space.num_classes();
    report.num_auxiliary_samples = aux.len();
    if aux.is_empty() {
        report.warnings.push("no auxiliary samples survived curation".into());
    }
    let space = LabelSpace::new(l, pairs)?.with_names(names)?;
    Ok(CurationOutput {
        aux,
        space,
        report,
        verdicts,
    })
}

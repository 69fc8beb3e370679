use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use tailext::curation::{curate, FixtureClient, FixtureRetriever, LlmClient, Rejection};
use tailext::dataset::{read_json, FeatureDataset};
use tailext::experiment::{make_benchmark, run_pilot, run_sweep, SweepAxis};
use tailext::labels::tally;
use tailext::metrics::{assign_splits, evaluate, EvalReport};
use tailext::model::train;
use tailext::{ClassId, ClassStats, ClassifierState, Error, LabelSpace, Result};

use crate::cli::{CurateArgs, EvalArgs, Overrides, ReportArgs, SweepArgs, TrainArgs};
use crate::output::{write_csv, OutDir};
use crate::settings::Settings;

const DEFAULT_LLM_MODEL: &str = "gpt-4o";

fn out_dir(o: &Overrides) -> Result<OutDir> {
    let path = o
        .out
        .as_deref()
        .ok_or_else(|| Error::config("--out is required for this command"))?;
    OutDir::create(path)
}

fn input(name: &str, path: &Path) -> (String, String) {
    (name.to_string(), path.display().to_string())
}

fn target_count(ds: &FeatureDataset, declared: Option<usize>) -> Result<usize> {
    let seen = ds.labels().iter().max().map_or(0, |&m| m + 1);
    match declared {
        Some(l) if l < seen => Err(Error::data(format!(
            "manifest declares {l} target classes but contains label {}",
            seen - 1
        ))),
        Some(l) => Ok(l),
        None => Ok(seen),
    }
}

pub fn synth(o: &Overrides, s: &Settings) -> Result<()> {
    let out = out_dir(o)?;
    let data = make_benchmark(&s.benchmark, s.run.seed)?;
    let l = data.space.num_target();
    let targets = LabelSpace::targets_only(l)?;
    data.train.write_manifest(&out.join("train.jsonl"), &targets)?;
    data.test.write_manifest(&out.join("test.jsonl"), &targets)?;
    data.aux.write_manifest(&out.join("aux.jsonl"), &data.space)?;
    out.json("space.json", &data.space)?;
    out.json("target_counts.json", &tally(data.train.labels().iter().copied(), l)?)?;
    let names: BTreeMap<ClassId, String> = (0..l).map(|y| (y, format!("class {y}"))).collect();
    out.json("target_names.json", &names)?;
    out.manifest("synth", s.run.seed, &[], &(&s.benchmark, &s.run))?;
    println!(
        "wrote {} train, {} test and {} auxiliary samples ({} target, {} auxiliary classes) to {}",
        data.train.len(),
        data.test.len(),
        data.aux.len(),
        l,
        data.space.num_auxiliary(),
        out.path().display()
    );
    Ok(())
}

#[derive(Serialize)]
struct PilotCsvRow {
    superclasses: usize,
    imbalance_ratio: f64,
    repetitions: usize,
    mean_gap: f64,
    std_gap: f64,
    mean_many: f64,
    mean_few: f64,
}

pub fn pilot(o: &Overrides, s: &Settings) -> Result<()> {
    let out = out_dir(o)?;
    let (rows, points) = run_pilot(&s.pilot)?;
    let csv_rows: Vec<PilotCsvRow> = rows
        .iter()
        .map(|r| PilotCsvRow {
            superclasses: r.superclasses,
            imbalance_ratio: r.imbalance_ratio,
            repetitions: r.repetitions,
            mean_gap: r.mean_gap,
            std_gap: r.std_gap,
            mean_many: r.mean_many,
            mean_few: r.mean_few,
        })
        .collect();
    out.csv("pilot.csv", &csv_rows)?;
    out.csv("pilot_points.csv", &points)?;
    out.json("pilot.json", &serde_json::json!({ "rows": rows, "points": points }))?;
    out.manifest("pilot", s.pilot.seed, &[], &s.pilot)?;
    for r in &rows {
        println!(
            "superclasses {:>3} | imbalance {:<6} | gap {:.1} ± {:.1} (many {:.1}, few {:.1})",
            r.superclasses, r.imbalance_ratio, r.mean_gap, r.std_gap, r.mean_many, r.mean_few
        );
    }
    Ok(())
}

pub fn train_cmd(o: &Overrides, s: &Settings, args: &TrainArgs) -> Result<()> {
    let out = out_dir(o)?;
    let (target, header) = FeatureDataset::read_manifest(&args.train)?;
    let l = target_count(&target, header.map(|h| h.num_target))?;
    let mut inputs = vec![input("train", &args.train)];
    let (aux, space) = match &args.aux {
        Some(aux_path) => {
            let space_path = args
                .space
                .as_deref()
                .ok_or_else(|| Error::config("--aux needs --space"))?;
            let space: LabelSpace = read_json(space_path)?;
            if space.num_target() != l {
                return Err(Error::data(format!(
                    "label space has {} target classes, manifest has {l}",
                    space.num_target()
                )));
            }
            let (aux, _) = FeatureDataset::read_manifest(aux_path)?;
            inputs.push(input("aux", aux_path));
            inputs.push(input("space", space_path));
            (Some(aux), space)
        }
        None => (None, LabelSpace::targets_only(l)?),
    };
    let outcome = train(&target, aux.as_ref(), &space, &s.run)?;
    outcome.state.save(&out.join("checkpoint.json"))?;
    out.json("train_log.json", &outcome.log)?;
    out.json("target_counts.json", &tally(target.labels().iter().copied(), l)?)?;
    out.manifest("train", s.run.seed, &inputs, &s.run)?;
    if let Some(last) = outcome.log.epochs.last() {
        println!(
            "trained {} epochs over {} classes, final mean loss {:.4}",
            outcome.log.epochs.len(),
            outcome.log.num_classes,
            last.mean_loss
        );
    }
    Ok(())
}

pub fn eval(o: &Overrides, s: &Settings, args: &EvalArgs) -> Result<()> {
    let out = out_dir(o)?;
    let state = ClassifierState::load(&args.checkpoint)?;
    let (test, _) = FeatureDataset::read_manifest(&args.test)?;
    let counts_path = args.counts.clone().unwrap_or_else(|| {
        args.checkpoint
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join("target_counts.json")
    });
    let counts: Vec<u64> = read_json(&counts_path)?;
    if counts.len() != state.space.num_target() {
        return Err(Error::data(format!(
            "{} class counts for a checkpoint with {} target classes",
            counts.len(),
            state.space.num_target()
        )));
    }
    let splits = assign_splits(&ClassStats::new(counts)?);
    let mut report = evaluate(&state, &test, &splits, s.eval.mask_aux)?;
    report.config = Some(serde_json::to_value(&s.eval).map_err(|e| Error::data(e.to_string()))?);
    out.json("report.json", &report)?;
    out.manifest(
        "eval",
        s.run.seed,
        &[
            input("checkpoint", &args.checkpoint),
            input("test", &args.test),
            input("counts", &counts_path),
        ],
        &s.eval,
    )?;
    println!("{}", report.summary_line());
    Ok(())
}

pub fn sweep(o: &Overrides, s: &Settings, args: &SweepArgs) -> Result<()> {
    let out = out_dir(o)?;
    let axis: SweepAxis = args.axis.parse()?;
    let values = if args.values.is_empty() {
        axis.default_values()
    } else {
        args.values.clone()
    };
    let rows = run_sweep(&s.benchmark, &s.benchmark_run, axis, &values, args.repetitions, s.benchmark_run.seed)?;
    out.csv("sweep.csv", &rows)?;
    out.json("sweep.json", &rows)?;
    out.manifest(
        "sweep",
        s.benchmark_run.seed,
        &[],
        &serde_json::json!({
            "axis": axis,
            "values": values,
            "repetitions": args.repetitions,
            "benchmark": s.benchmark,
            "run": s.benchmark_run,
        }),
    )?;
    for v in std::iter::once("baseline".to_string()).chain(values) {
        let sel: Vec<_> = rows.iter().filter(|r| r.value == v).collect();
        let n = sel.len() as f64;
        let mean = |f: &dyn Fn(&&tailext::experiment::SweepRow) -> Option<f64>| {
            let xs: Vec<f64> = sel.iter().filter_map(f).collect();
            (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
        };
        let fmt = |x: Option<f64>| x.map_or("-".to_string(), |x| format!("{x:.1}"));
        println!(
            "{:<10} overall {:.1} | many {} | medium {} | few {}",
            v,
            sel.iter().map(|r| r.overall_acc).sum::<f64>() / n,
            fmt(mean(&|r| r.many_acc)),
            fmt(mean(&|r| r.med_acc)),
            fmt(mean(&|r| r.few_acc)),
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct ReportRow {
    source: String,
    overall_acc: f64,
    many_acc: Option<f64>,
    med_acc: Option<f64>,
    few_acc: Option<f64>,
    head_tail_gap: Option<f64>,
    masked: bool,
    num_samples: usize,
}

pub fn report(o: &Overrides, args: &ReportArgs) -> Result<()> {
    let mut rows = Vec::new();
    for p in &args.inputs {
        let file: PathBuf = if p.is_dir() { p.join("report.json") } else { p.clone() };
        let r: EvalReport = read_json(&file)?;
        if o.out.is_some() {
            println!("{:<40} {}", p.display(), r.summary_line());
        }
        rows.push(ReportRow {
            source: p.display().to_string(),
            overall_acc: r.overall_acc,
            many_acc: r.many_acc,
            med_acc: r.med_acc,
            few_acc: r.few_acc,
            head_tail_gap: r.head_tail_gap,
            masked: r.masked,
            num_samples: r.num_samples,
        });
    }
    if o.out.is_some() {
        let out = out_dir(o)?;
        out.csv("report.csv", &rows)?;
        let inputs: Vec<_> = args.inputs.iter().map(|p| input("report", p)).collect();
        out.manifest("report", 0, &inputs, &serde_json::Value::Null)?;
    } else {
        let mut w = csv::Writer::from_writer(std::io::stdout());
        for r in &rows {
            w.serialize(r).map_err(|e| Error::data(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::data(e.to_string()))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct VerdictRow<'a> {
    target: ClassId,
    proposed_class: &'a str,
    image_ref: &'a str,
    cosine: Option<f64>,
    rejection: Option<Rejection>,
}

fn llm_client(o: &Overrides) -> Result<Box<dyn LlmClient>> {
    if let Some(dir) = &o.llm_fixture {
        return Ok(Box::new(FixtureClient::from_dir(dir)?));
    }
    #[cfg(feature = "http")]
    {
        Ok(Box::new(tailext::curation::HttpClient::from_env(DEFAULT_LLM_MODEL)?))
    }
    #[cfg(not(feature = "http"))]
    {
        let _ = DEFAULT_LLM_MODEL;
        Err(Error::config("built without HTTP support; pass --llm-fixture"))
    }
}

pub fn curate_cmd(o: &Overrides, s: &Settings, args: &CurateArgs) -> Result<()> {
    let out = out_dir(o)?;
    let (target, header) = FeatureDataset::read_manifest(&args.train)?;
    let l = target_count(&target, header.map(|h| h.num_target))?;
    let raw: BTreeMap<String, String> = read_json(&args.names)?;
    let names = raw
        .into_iter()
        .map(|(k, v)| {
            k.parse::<ClassId>()
                .map(|id| (id, v))
                .map_err(|_| Error::data(format!("{}: bad class id {k:?}", args.names.display())))
        })
        .collect::<Result<BTreeMap<_, _>>>()?;
    let space = LabelSpace::targets_only(l)?.with_names(names.clone())?;
    let client = llm_client(o)?;
    let retriever = FixtureRetriever::from_jsonl(&args.corpus)?;
    let result = curate(&space, &target, &names, client.as_ref(), &retriever, &s.curation)?;
    result.aux.write_manifest(&out.join("aux.jsonl"), &result.space)?;
    out.json("space.json", &result.space)?;
    out.json("curation_report.json", &result.report)?;
    let verdicts: Vec<VerdictRow> = result
        .verdicts
        .iter()
        .flat_map(|(t, vs)| {
            vs.iter().map(move |(c, r, cos)| VerdictRow {
                target: *t,
                proposed_class: &c.proposed_class,
                image_ref: &c.image_ref,
                cosine: *cos,
                rejection: *r,
            })
        })
        .collect();
    write_csv(&out.join("verdicts.csv"), &verdicts)?;
    let mut inputs = vec![
        input("train", &args.train),
        input("names", &args.names),
        input("corpus", &args.corpus),
    ];
    if let Some(dir) = &o.llm_fixture {
        inputs.push(input("llm_fixture", dir));
    }
    out.manifest("curate", s.run.seed, &inputs, &s.curation)?;
    for w in &result.report.warnings {
        log::warn!("{w}");
    }
    println!(
        "kept {} samples in {} auxiliary classes",
        result.report.num_auxiliary_samples, result.report.num_auxiliary_classes
    );
    Ok(())
}

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::BufReader;
use std::path::Path;

use anyhow::{bail, Context, Result};
use fracnet_core::hgnn::{evaluate, history_csv, train, Checkpoint, Sample, TrainOutcome};
use fracnet_core::ingest::{read_dataset, split_dataset, write_dataset};
use fracnet_core::metrics::{average_reports, macro_report, report_csv_row, REPORT_CSV_HEADER};
use fracnet_core::mfdfa::{compute_hfs, fmt_f64};
use fracnet_core::synth::gen_records;
use fracnet_core::{
    Aspect, ClassSpec, Error, EvalReport, FractalSeries, GeneratorSpec, HaeRecord, Labels,
    SplitAssignment, Variant,
};
use rayon::prelude::*;
use serde_json::json;

use crate::args::{AnalyzeArgs, EvalArgs, Kind, PipelineArgs, SplitArg, SynthArgs, TrainArgs};
use crate::echo::{
    csv_with_config, path_string, AnalysisConfig, AnalyzeConfig, EvalConfig, SynthConfig,
    TrainConfig,
};

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    Error::Config(msg.into()).into()
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn load_records(path: &Path) -> Result<Vec<HaeRecord>> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let ds = read_dataset(BufReader::new(file))
        .with_context(|| format!("cannot parse {}", path.display()))?;
    if ds.records.is_empty() {
        bail!("no records in {}", path.display());
    }
    Ok(ds.records)
}

fn json_pretty<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialise");
    s.push('\n');
    s
}

// ---------------------------------------------------------------- synth

fn labels_for(aspect: Aspect, level: usize) -> Labels {
    let mut l = Labels::new(1, 1, 1);
    let level = level as u8;
    match aspect {
        Aspect::Severity => l.severity = level,
        Aspect::Possibility => l.possibility = level,
        Aspect::Risk => l.risk = level,
    }
    l
}

fn synth_classes(args: &SynthArgs) -> Result<(Vec<GeneratorSpec>, Vec<usize>)> {
    if args.preset.is_some() {
        let k = args.aspect.num_classes();
        let gens = (0..k)
            .map(|i| GeneratorSpec::Fgn {
                n: args.n,
                hurst: 0.2 + 0.6 * i as f64 / (k - 1) as f64,
            })
            .collect();
        if args.total < k {
            return Err(config_err(format!("--total must be at least {k}")));
        }
        return Ok((gens, args.aspect.reference_counts(args.total)));
    }
    let gens: Vec<GeneratorSpec> = match args.kind {
        Kind::Fgn => {
            if args.hurst.is_empty() {
                return Err(config_err("--kind fgn needs at least one --hurst"));
            }
            for &h in &args.hurst {
                if !(h > 0.0 && h < 1.0) {
                    return Err(config_err(format!(
                        "--hurst {h} outside the open interval (0, 1)"
                    )));
                }
            }
            args.hurst
                .iter()
                .map(|&hurst| GeneratorSpec::Fgn { n: args.n, hurst })
                .collect()
        }
        Kind::WhiteNoise => vec![GeneratorSpec::WhiteNoise { n: args.n }],
        Kind::Cascade => {
            if args.p.is_empty() {
                return Err(config_err("--kind cascade needs at least one --p"));
            }
            for &p in &args.p {
                if !(p > 0.0 && p < 1.0) {
                    return Err(config_err(format!(
                        "--p {p} outside the open interval (0, 1)"
                    )));
                }
            }
            args.p
                .iter()
                .map(|&p| GeneratorSpec::BinomialCascade {
                    levels: args.levels,
                    p,
                })
                .collect()
        }
    };
    if args.count == 0 {
        return Err(config_err("--count must be positive"));
    }
    let counts = vec![args.count; gens.len()];
    Ok((gens, counts))
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    let (gens, counts) = synth_classes(args)?;
    if gens.len() > args.aspect.num_classes() {
        return Err(config_err(format!(
            "{} classes requested but {} has only {} levels",
            gens.len(),
            args.aspect.name(),
            args.aspect.num_classes()
        )));
    }
    let classes: Vec<ClassSpec> = gens
        .into_iter()
        .enumerate()
        .map(|(i, generator)| ClassSpec {
            generator,
            labels: labels_for(args.aspect, i + 1),
        })
        .collect();
    let records = gen_records(&classes, &counts, args.seed)?;
    let config = SynthConfig {
        command: "synth",
        classes,
        counts,
        aspect: args.aspect,
        seed: args.seed,
    };
    let mut buf = Vec::new();
    write_dataset(&mut buf, Some(&serde_json::to_value(&config)?), &records)?;
    fs::write(&args.out, buf).with_context(|| format!("cannot write {}", args.out.display()))?;
    println!(
        "wrote {} records (seed {}) to {}",
        records.len(),
        args.seed,
        args.out.display()
    );
    Ok(())
}

// -------------------------------------------------------------- analyze

fn analyse_all(
    records: &[HaeRecord],
    analysis: &AnalysisConfig,
) -> Vec<fracnet_core::Result<FractalSeries>> {
    records
        .par_iter()
        .map(|r| compute_hfs(&r.hts(analysis.axis)?, &analysis.dfa))
        .collect()
}

fn analysis_config(args: &crate::args::DfaArgs) -> Result<AnalysisConfig> {
    let dfa = args.dfa_config()?;
    Ok(AnalysisConfig {
        dfa,
        axis: args.axis(),
    })
}

fn run_analyze(input: &Path, out: &Path, analysis: AnalysisConfig) -> Result<()> {
    let records = load_records(input)?;
    let config = AnalyzeConfig {
        command: "analyze",
        input: path_string(input),
        analysis,
    };
    let results = analyse_all(&records, &config.analysis);
    let mut body = String::new();
    let mut h2 = Vec::new();
    let mut failed = Vec::new();
    for (r, res) in records.iter().zip(&results) {
        match res {
            Ok(hfs) => {
                body.push_str(&format!("# record: {}\n", r.id));
                body.push_str(&hfs.to_csv());
                if let Some(h) = hfs.h_at(2.0) {
                    h2.push(h);
                }
            }
            Err(e) => {
                body.push_str(&format!("# error: {}: {e}\n", r.id));
                failed.push(r.id.as_str());
            }
        }
    }
    let ok = records.len() - failed.len();
    let mean_h2 = (!h2.is_empty()).then(|| h2.iter().sum::<f64>() / h2.len() as f64);
    body.push_str(&format!(
        "# summary: records={} analysed={ok} failed={} mean_h2={}\n",
        records.len(),
        failed.len(),
        mean_h2.map_or("none".to_string(), fmt_f64)
    ));
    write_file(out, &csv_with_config(&config, &body))?;
    match mean_h2 {
        Some(m) => println!(
            "analysed {ok}/{} records; mean H(2) = {m:.4}",
            records.len()
        ),
        None => println!("analysed {ok}/{} records", records.len()),
    }
    if !failed.is_empty() {
        eprintln!("failed records: {}", failed.join(", "));
    }
    if ok == 0 {
        bail!("all {} records failed analysis", records.len());
    }
    Ok(())
}

pub fn analyze(args: &AnalyzeArgs) -> Result<()> {
    run_analyze(&args.input, &args.out, analysis_config(&args.dfa)?)
}

// ---------------------------------------------------------------- train

fn samples_by_id(
    records: &[HaeRecord],
    analysis: &AnalysisConfig,
    aspect: Aspect,
    num_classes: usize,
) -> Result<HashMap<String, Sample>> {
    let results = analyse_all(records, analysis);
    let mut failed = Vec::new();
    let mut map = HashMap::with_capacity(records.len());
    for (r, res) in records.iter().zip(results) {
        match res {
            Ok(hfs) => {
                let label = aspect.class_index(&r.labels);
                if label >= num_classes {
                    return Err(config_err(format!(
                        "record {} has {} level {} but the model has {num_classes} classes",
                        r.id,
                        aspect.name(),
                        label + 1
                    )));
                }
                map.insert(r.id.clone(), Sample { hfs: hfs.h, label });
            }
            Err(e) => failed.push(format!("{} ({e})", r.id)),
        }
    }
    if !failed.is_empty() {
        bail!(
            "analysis failed for {} records: {}",
            failed.len(),
            failed.join(", ")
        );
    }
    Ok(map)
}

fn pick(map: &HashMap<String, Sample>, ids: &[String]) -> Vec<Sample> {
    ids.iter().map(|id| map[id].clone()).collect()
}

fn model_name(variant: Variant) -> &'static str {
    match variant {
        Variant::Standard => "hgnn-standard",
        Variant::Hmf => "hgnn-hmf",
    }
}

struct SplitSamples {
    train: Vec<Sample>,
    validation: Vec<Sample>,
    test: Vec<Sample>,
}

fn report(params: &fracnet_core::HgnnParams, samples: &[Sample]) -> Result<EvalReport> {
    Ok(macro_report(&evaluate(params, samples)?))
}

fn run_train(args: &TrainArgs, command: &str) -> Result<()> {
    let analysis = analysis_config(&args.dfa)?;
    let schedule = args.schedule.schedule();
    schedule.validate()?;
    if args.repeat == 0 {
        return Err(config_err("--repeat must be positive"));
    }
    let base_model = args.model.config(args.aspect, args.seed);
    base_model.validate()?;
    let config = TrainConfig {
        command: command.to_string(),
        input: path_string(&args.input),
        aspect: args.aspect,
        seed: args.seed,
        repeat: args.repeat,
        analysis,
        model: base_model.clone(),
        schedule: schedule.clone(),
    };
    let records = load_records(&args.input)?;
    let split = split_dataset(&records, args.seed)?;
    let map = samples_by_id(
        &records,
        &config.analysis,
        args.aspect,
        base_model.num_classes,
    )?;
    let data = SplitSamples {
        train: pick(&map, &split.train),
        validation: pick(&map, &split.validation),
        test: pick(&map, &split.test),
    };
    let input_len = data.train[0].hfs.len();
    base_model.validate_input(input_len)?;

    let mut outcomes: Vec<TrainOutcome> = Vec::with_capacity(args.repeat);
    let mut reports: [Vec<EvalReport>; 3] = Default::default();
    for r in 0..args.repeat {
        let model = fracnet_core::HgnnConfig {
            seed: args.seed.wrapping_add(r as u64),
            ..base_model.clone()
        };
        let outcome = train(&data.train, &data.validation, &model, &schedule)?;
        reports[0].push(report(&outcome.params, &data.train)?);
        reports[1].push(report(&outcome.params, &data.validation)?);
        reports[2].push(report(&outcome.params, &data.test)?);
        outcomes.push(outcome);
    }
    let [train_r, val_r, test_r] = reports.map(|v| average_reports(&v));
    let (train_r, val_r, test_r) = (train_r?, val_r?, test_r?);

    fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("cannot create {}", args.out_dir.display()))?;
    let first = &outcomes[0];
    let ck = Checkpoint::new(&first.params, input_len, serde_json::to_value(&config)?);
    let mut buf = Vec::new();
    ck.save(&mut buf)?;
    fs::write(args.out_dir.join("checkpoint.json"), buf).context("cannot write checkpoint")?;
    write_file(
        &args.out_dir.join("history.csv"),
        &csv_with_config(&config, &history_csv(&first.history)),
    )?;
    let model = model_name(config.analysis.dfa.variant);
    let aspect = args.aspect.name();
    let mut csv = format!("{REPORT_CSV_HEADER}\n");
    for (name, r) in [
        ("train", &train_r),
        ("validation", &val_r),
        ("test", &test_r),
    ] {
        csv.push_str(&report_csv_row(model, aspect, name, r));
        csv.push('\n');
    }
    write_file(
        &args.out_dir.join("report.csv"),
        &csv_with_config(&config, &csv),
    )?;
    let best_epochs: Vec<usize> = outcomes.iter().map(|o| o.best_epoch).collect();
    let doc = json!({
        "config": config,
        "model": model,
        "aspect": aspect,
        "split_sizes": {"train": split.train.len(), "validation": split.validation.len(), "test": split.test.len()},
        "best_epochs": best_epochs,
        "train": train_r,
        "validation": val_r,
        "test": test_r,
    });
    write_file(&args.out_dir.join("report.json"), &json_pretty(&doc))?;
    println!(
        "{model} {aspect}: test macro P={:.4} R={:.4} F1={:.4} over {} repetition(s); best epoch {}",
        test_r.macro_avg.precision, test_r.macro_avg.recall, test_r.macro_avg.f1, args.repeat, first.best_epoch
    );
    Ok(())
}

pub fn train_cmd(args: &TrainArgs) -> Result<()> {
    run_train(args, "train")
}

// ----------------------------------------------------------------- eval

fn select_split(records: &[HaeRecord], split: SplitArg, seed: u64) -> Result<Vec<&HaeRecord>> {
    if split == SplitArg::All {
        return Ok(records.iter().collect());
    }
    let SplitAssignment {
        train,
        test,
        validation,
        ..
    } = split_dataset(records, seed)?;
    let ids = match split {
        SplitArg::Train => train,
        SplitArg::Test => test,
        SplitArg::Validation => validation,
        SplitArg::All => unreachable!(),
    };
    let index: HashMap<&str, &HaeRecord> = records.iter().map(|r| (r.id.as_str(), r)).collect();
    Ok(ids.iter().map(|id| index[id.as_str()]).collect())
}

fn run_eval(args: &EvalArgs, echo_checkpoint: &str) -> Result<(EvalReport, String)> {
    let file = File::open(&args.checkpoint)
        .with_context(|| format!("cannot open {}", args.checkpoint.display()))?;
    let ck = Checkpoint::load(BufReader::new(file)).context("cannot read checkpoint")?;
    let params = ck.to_params()?;
    let trained: TrainConfig = serde_json::from_value(ck.meta.clone())
        .map_err(|e| config_err(format!("checkpoint metadata is not a training config: {e}")))?;
    if let Some(a) = args.aspect {
        if a != trained.aspect {
            return Err(config_err(format!(
                "checkpoint was trained for {}, not {}",
                trained.aspect.name(),
                a.name()
            )));
        }
    }
    let records = load_records(&args.input)?;
    let chosen: Vec<HaeRecord> = select_split(&records, args.split, trained.seed)?
        .into_iter()
        .cloned()
        .collect();
    let map = samples_by_id(
        &chosen,
        &trained.analysis,
        trained.aspect,
        params.config.num_classes,
    )?;
    let samples: Vec<Sample> = chosen.iter().map(|r| map[&r.id].clone()).collect();
    if samples[0].hfs.len() != ck.input_len {
        return Err(config_err(format!(
            "features have {} values but the model expects {}",
            samples[0].hfs.len(),
            ck.input_len
        )));
    }
    let report = report(&params, &samples)?;
    let model = model_name(trained.analysis.dfa.variant);
    let config = EvalConfig {
        command: "eval",
        checkpoint: echo_checkpoint.to_string(),
        input: path_string(&args.input),
        split: args.split.name(),
        trained_with: trained.clone(),
    };
    println!(
        "{model} {} on {} ({} records)",
        trained.aspect.name(),
        args.split.name(),
        samples.len()
    );
    println!("level,precision,recall,f1");
    for (i, c) in report.per_class.iter().enumerate() {
        println!("{},{:.4},{:.4},{:.4}", i + 1, c.precision, c.recall, c.f1);
    }
    println!(
        "macro,{:.4},{:.4},{:.4}",
        report.macro_avg.precision, report.macro_avg.recall, report.macro_avg.f1
    );
    let row = report_csv_row(model, trained.aspect.name(), args.split.name(), &report);
    if let Some(out) = &args.out {
        let doc = json!({"config": config, "model": model, "report": report});
        write_file(out, &json_pretty(&doc))?;
    }
    if let Some(csv) = &args.csv {
        write_file(
            csv,
            &csv_with_config(&config, &format!("{REPORT_CSV_HEADER}\n{row}\n")),
        )?;
    }
    Ok((report, row))
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    run_eval(args, &path_string(&args.checkpoint)).map(|_| ())
}

// ------------------------------------------------------------- pipeline

pub fn pipeline(args: &PipelineArgs) -> Result<()> {
    let t = &args.train;
    fs::create_dir_all(&t.out_dir)
        .with_context(|| format!("cannot create {}", t.out_dir.display()))?;
    run_analyze(
        &t.input,
        &t.out_dir.join("hfs.csv"),
        analysis_config(&t.dfa)?,
    )?;
    run_train(t, "pipeline")?;
    let eval_args = EvalArgs {
        checkpoint: t.out_dir.join("checkpoint.json"),
        input: t.input.clone(),
        split: SplitArg::Test,
        aspect: Some(t.aspect),
        out: Some(t.out_dir.join("eval.json")),
        csv: Some(t.out_dir.join("eval.csv")),
    };
    run_eval(&eval_args, "checkpoint.json")?;
    Ok(())
}

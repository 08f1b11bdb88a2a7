//! Command-line front end. Data goes to files or stdout, diagnostics to
//! stderr; verbosity comes from the `LLP_LOG` environment variable.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};

use crate::bags::{
    assign_census_proportions, assign_political_proportions, form_sub_bags_featurized, Strategy,
    DEFAULT_COLLAPSE_THRESHOLD,
};
use crate::corpus::{Corpus, RegionTable, DEFAULT_MAX_TERMS, DEFAULT_MIN_DOC_COUNT};
use crate::error::{LlpError, Result};
use crate::inference::{conditional, estimate_joint, estimate_marginal, marginal, BoundarySlice, DEFAULT_PAIR_ALPHA, DEFAULT_SINGLE_ALPHA};
use crate::io::{self, FeaturizedDocument};
use crate::model::{ModelKind, ModelParameters};
use crate::pipeline::{coefficient_trajectory, run_range, PipelineConfig};
use crate::ridge::{ridge_cost, train_ridge, RidgeConfig, DEFAULT_LAMBDA};
use crate::synth::{generate, GeneratorSpec};
use crate::wlr::{train_wlr, WlrConfig};

#[derive(Debug, Parser)]
#[command(name = "llp", version, about = "Learning from label proportions for geo-tagged text")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a vocabulary and featurize a document file.
    Ingest(IngestArgs),
    /// Train one attribute model on a window of featurized documents.
    Train(TrainArgs),
    /// Per-document probabilities from a trained model.
    Predict(PredictArgs),
    /// Marginal or joint/conditional estimates per boundary.
    Estimate(EstimateArgs),
    /// Daily retraining over a date range.
    Pipeline(PipelineArgs),
    /// Generate a synthetic corpus with ground truth and population files.
    Synth(SynthArgs),
    /// Mean absolute error of estimates against a reference.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// JSON-lines documents.
    #[arg(long)]
    pub docs: PathBuf,
    /// CSV `region_id,parent_id`.
    #[arg(long)]
    pub regions: PathBuf,
    /// Output directory for `vocab.txt` and `features.jsonl`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MAX_TERMS)]
    pub max_terms: usize,
    #[arg(long, default_value_t = DEFAULT_MIN_DOC_COUNT)]
    pub min_doc_count: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Featurized documents from `ingest`.
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    /// Attribute name; also the census column for census-labelled training.
    #[arg(long)]
    pub attribute: String,
    #[arg(long, default_value = "wlr")]
    pub model: ModelKind,
    /// Political proportions from polls and lean; census proportions when absent.
    #[arg(long)]
    pub strategy: Option<Strategy>,
    #[arg(long)]
    pub census: Option<PathBuf>,
    #[arg(long)]
    pub polls: Option<PathBuf>,
    #[arg(long)]
    pub pvi: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub max_iterations: usize,
    /// Last day of the training window; the latest document date when absent.
    #[arg(long)]
    pub day: Option<NaiveDate>,
    /// Days before `--day` included in training.
    #[arg(long, default_value_t = 7)]
    pub window: u32,
    #[arg(long, default_value_t = DEFAULT_COLLAPSE_THRESHOLD)]
    pub collapse_threshold: usize,
    /// Model JSON output.
    #[arg(long)]
    pub out: PathBuf,
    /// CSV `iteration,cost,gradient_norm` for WLR training.
    #[arg(long)]
    pub training_log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    /// CSV output; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// One model for a marginal, two for a joint and conditional.
    #[arg(long = "model", required = true, num_args = 1..=2)]
    pub models: Vec<PathBuf>,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    /// Restrict to one parent unit; every parent plus the national total when absent.
    #[arg(long)]
    pub boundary: Option<String>,
    /// Restrict to documents of this day; the whole file when absent.
    #[arg(long)]
    pub day: Option<NaiveDate>,
    /// Soft-vote share; 0.75 for pairs, 1.0 for single attributes.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, default_value = crate::bags::NATIONAL)]
    pub national: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// TOML pipeline configuration.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub docs: PathBuf,
    #[arg(long)]
    pub regions: PathBuf,
    #[arg(long)]
    pub census: Option<PathBuf>,
    #[arg(long)]
    pub polls: Option<PathBuf>,
    #[arg(long)]
    pub pvi: Option<PathBuf>,
    #[arg(long)]
    pub start: NaiveDate,
    #[arg(long)]
    pub end: NaiveDate,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the smoothed trajectory of this term.
    #[arg(long, requires = "trajectory_attribute")]
    pub trajectory_term: Option<String>,
    #[arg(long, requires = "trajectory_term")]
    pub trajectory_attribute: Option<String>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// TOML generator spec.
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Attribute whose polls and lean are written.
    #[arg(long)]
    pub political: Option<String>,
    /// Number of parent units that also get daily state polls.
    #[arg(long, default_value_t = 0)]
    pub polled_parents: usize,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// CSV `window,category,value`.
    #[arg(long)]
    pub estimates: PathBuf,
    /// CSV `window,category,value`.
    #[arg(long)]
    pub reference: PathBuf,
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| LlpError::io(dir, e))?;
            }
            Box::new(std::io::BufWriter::new(std::fs::File::create(p).map_err(|e| LlpError::io(p, e))?))
        }
        None => Box::new(std::io::stdout().lock()),
    })
}

fn regions_of(docs: &[FeaturizedDocument]) -> RegionTable {
    docs.iter().map(|d| (d.region.clone(), d.parent.clone())).collect()
}

fn load_featurized(path: &Path, vocab: &crate::corpus::Vocabulary) -> Result<Vec<FeaturizedDocument>> {
    let docs = io::read_featurized(path)?;
    for (i, d) in docs.iter().enumerate() {
        if d.features.dimension() != vocab.dimension() {
            return Err(LlpError::parse(
                path,
                i + 1,
                format!("dimension {} does not match vocabulary dimension {}", d.features.dimension(), vocab.dimension()),
            ));
        }
    }
    Ok(docs)
}

fn cmd_ingest(args: &IngestArgs) -> Result<()> {
    let docs = io::read_documents(&args.docs)?;
    let regions = io::read_region_table(&args.regions)?;
    let corpus = Corpus::new(docs, regions)?;
    let all: Vec<usize> = (0..corpus.len()).collect();
    let vocab = corpus.build_vocabulary(&all, args.max_terms, args.min_doc_count)?;
    let featurized = all
        .iter()
        .map(|&i| {
            let d = &corpus.documents()[i];
            Ok(FeaturizedDocument {
                id: d.id.clone(),
                date: d.date,
                region: d.region.clone(),
                parent: corpus.regions().parent(&d.region)?.to_string(),
                features: corpus.featurize(i, &vocab),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    io::write_vocabulary(&args.out.join("vocab.txt"), &vocab)?;
    io::write_featurized(&args.out.join("features.jsonl"), &featurized)?;
    println!("documents,{}", featurized.len());
    println!("terms,{}", vocab.len());
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let vocab = io::read_vocabulary(&args.vocab)?;
    let docs = load_featurized(&args.features, &vocab)?;
    let population = io::read_population(args.census.as_deref(), args.polls.as_deref(), args.pvi.as_deref())?;
    let day = args.day.unwrap_or_else(|| docs.iter().map(|d| d.date).max().expect("non-empty"));
    let start = day
        .checked_sub_days(chrono::Days::new(args.window.into()))
        .ok_or_else(|| LlpError::Invalid("window underflows the calendar".into()))?;
    let window: Vec<&FeaturizedDocument> = docs.iter().filter(|d| d.date >= start && d.date <= day).collect();
    if window.is_empty() {
        return Err(LlpError::NoDocuments { start, end: day });
    }
    let sub_bags = form_sub_bags_featurized(
        window.iter().map(|d| (d.region.as_str(), d.features.clone())),
        &regions_of(&docs),
        day,
        args.collapse_threshold,
    )?;
    let bags = match args.strategy {
        None => assign_census_proportions(&sub_bags, population.census.attribute(&args.attribute)?)?,
        Some(strategy) => assign_political_proportions(
            &sub_bags,
            strategy,
            day,
            population.national_poll(day),
            &population.state_polls(day),
            &population.pvi,
        )?,
    };
    let (model, cost, iterations) = match args.model {
        ModelKind::Ridge => {
            let cfg = RidgeConfig {
                lambda: args.lambda,
                ..Default::default()
            };
            let model = train_ridge(&bags, &cfg)?;
            let cost = ridge_cost(&model, &bags, args.lambda)?;
            (model, cost, 0)
        }
        ModelKind::Wlr => {
            let cfg = WlrConfig {
                lambda: args.lambda,
                init_seed: args.seed,
                max_iterations: args.max_iterations,
                ..Default::default()
            };
            let fit = train_wlr(&bags, &cfg)?;
            if let Some(path) = &args.training_log {
                io::write_training_log(output(Some(path))?, &fit.history)?;
            }
            (fit.model, fit.cost, fit.iterations)
        }
    };
    let model = model.with_attribute(&args.attribute).with_window(start, day).with_vocabulary(&vocab)?;
    io::write_model(&args.out, &model)?;
    eprintln!(
        "trained {} ({}) on {} documents in {} bags: cost {cost:.6}, {iterations} iterations",
        args.attribute,
        args.model,
        window.len(),
        bags.len()
    );
    Ok(())
}

fn cmd_predict(args: &PredictArgs) -> Result<()> {
    let vocab = io::read_vocabulary(&args.vocab)?;
    let model = io::read_model(&args.model)?;
    model.check_vocabulary(&vocab)?;
    let docs = load_featurized(&args.features, &vocab)?;
    let mut w = csv::Writer::from_writer(output(args.out.as_deref())?);
    w.write_record(["id", "date", "region", "probability", "label"])?;
    for d in &docs {
        let p = model.predict(&d.features)?;
        w.write_record([d.id.clone(), d.date.to_string(), d.region.clone(), p.to_string(), u8::from(p > 0.5).to_string()])?;
    }
    w.flush().map_err(|e| LlpError::io("<predictions>", e))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn cmd_estimate(args: &EstimateArgs) -> Result<()> {
    let vocab = io::read_vocabulary(&args.vocab)?;
    let models = args.models.iter().map(|p| io::read_model(p)).collect::<Result<Vec<ModelParameters>>>()?;
    for m in &models {
        m.check_vocabulary(&vocab)?;
    }
    let docs = load_featurized(&args.features, &vocab)?;
    let mut groups: BTreeMap<(NaiveDate, String), Vec<&FeaturizedDocument>> = BTreeMap::new();
    for d in docs.iter().filter(|d| args.day.is_none_or(|day| d.date == day)) {
        if args.boundary.as_ref().is_none_or(|b| *b == d.parent) {
            groups.entry((d.date, d.parent.clone())).or_default().push(d);
        }
        if args.boundary.is_none() || args.boundary.as_deref() == Some(args.national.as_str()) {
            groups.entry((d.date, args.national.clone())).or_default().push(d);
        }
    }
    if groups.is_empty() {
        return Err(LlpError::Empty("no documents match the requested boundary and day".into()));
    }
    let name = |m: &ModelParameters, i: usize| {
        if m.attribute.is_empty() {
            format!("model{i}")
        } else {
            m.attribute.clone()
        }
    };
    let mut w = csv::Writer::from_writer(output(args.out.as_deref())?);
    match models.as_slice() {
        [a] => {
            let alpha = args.alpha.unwrap_or(DEFAULT_SINGLE_ALPHA);
            w.write_record(["date", "boundary", "attribute", "n_documents", "hard", "soft", "marginal"])?;
            for ((day, boundary), members) in &groups {
                let slice = slice_of(boundary, *day, members)?;
                let e = estimate_marginal(&slice, a, alpha)?;
                w.write_record([
                    day.to_string(),
                    boundary.clone(),
                    name(a, 0),
                    e.n_documents.to_string(),
                    e.hard.to_string(),
                    e.soft.to_string(),
                    e.blended.to_string(),
                ])?;
            }
        }
        [a, b] => {
            let alpha = args.alpha.unwrap_or(DEFAULT_PAIR_ALPHA);
            w.write_record([
                "date", "boundary", "attribute_a", "attribute_b", "n_documents", "hard", "soft", "joint", "marginal_b",
                "conditional",
            ])?;
            for ((day, boundary), members) in &groups {
                let slice = slice_of(boundary, *day, members)?;
                let e = estimate_joint(&slice, a, b, alpha)?;
                let mb = marginal(&slice, b, alpha)?;
                let cond = match conditional(e.blended, mb) {
                    Ok(c) => Some(c),
                    Err(err) => {
                        log::warn!("{day} {boundary}: {err}");
                        None
                    }
                };
                w.write_record([
                    day.to_string(),
                    boundary.clone(),
                    name(a, 0),
                    name(b, 1),
                    e.n_documents.to_string(),
                    e.hard.to_string(),
                    e.soft.to_string(),
                    e.blended.to_string(),
                    mb.to_string(),
                    fmt_opt(cond),
                ])?;
            }
        }
        _ => unreachable!("clap enforces one or two models"),
    }
    w.flush().map_err(|e| LlpError::io("<estimates>", e))
}

fn slice_of(boundary: &str, day: NaiveDate, docs: &[&FeaturizedDocument]) -> Result<BoundarySlice> {
    BoundarySlice::new(
        boundary,
        day,
        docs.iter().map(|d| d.id.clone()).collect(),
        docs.iter().map(|d| d.features.clone()).collect(),
    )
}

fn cmd_pipeline(args: &PipelineArgs) -> Result<()> {
    let config: PipelineConfig = io::read_toml(&args.config)?;
    config.validate()?;
    let corpus = Corpus::new(io::read_documents(&args.docs)?, io::read_region_table(&args.regions)?)?;
    let population = io::read_population(args.census.as_deref(), args.polls.as_deref(), args.pvi.as_deref())?;
    let out = run_range(args.start, args.end, &corpus, &population, &config)?;

    for run in &out.runs {
        for (attr, model) in &run.models {
            io::write_model(&args.out.join("models").join(run.day.to_string()).join(format!("{attr}.json")), model)?;
        }
    }
    let estimates: Vec<_> = out.runs.iter().flat_map(|r| r.estimates.iter().cloned()).collect();
    io::write_estimates(output(Some(&args.out.join("estimates.csv")))?, &estimates)?;

    let mut w = csv::Writer::from_writer(output(Some(&args.out.join("smoothed.csv")))?);
    w.write_record(["date", "boundary", "attribute_a", "attribute_b", "blended"])?;
    for series in &out.smoothed {
        for (day, v) in &series.points {
            w.write_record([
                day.to_string(),
                series.boundary_id.clone(),
                series.attribute_a.clone(),
                series.attribute_b.clone().unwrap_or_default(),
                v.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| LlpError::io("smoothed.csv", e))?;

    let mut w = csv::Writer::from_writer(output(Some(&args.out.join("diagnostics.csv")))?);
    w.write_record(["date", "attribute", "status", "bag_count", "cost", "iterations"])?;
    for run in &out.runs {
        for (attr, d) in &run.diagnostics {
            w.write_record([
                run.day.to_string(),
                attr.clone(),
                "ok".to_string(),
                d.bag_count.to_string(),
                d.cost.to_string(),
                d.iterations.to_string(),
            ])?;
        }
    }
    for (day, err) in &out.failures {
        w.write_record([day.to_string(), String::new(), format!("failed: {err}"), String::new(), String::new(), String::new()])?;
    }
    w.flush().map_err(|e| LlpError::io("diagnostics.csv", e))?;

    if let (Some(term), Some(attr)) = (&args.trajectory_term, &args.trajectory_attribute) {
        let series = coefficient_trajectory(&out.runs, term, attr, config.smoothing.coefficient_window)?;
        io::write_trajectory(output(Some(&args.out.join("trajectory.csv")))?, attr, term, &series)?;
    }
    println!("days,{}", out.runs.len());
    println!("failed,{}", out.failures.len());
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let spec: GeneratorSpec = io::read_toml(&args.spec)?;
    let (docs, truth) = generate(&spec)?;
    let regions = spec.regions();
    let population = truth.population_data(&docs, &regions, args.political.as_deref(), args.polled_parents)?;
    io::write_documents(&args.out.join("docs.jsonl"), &docs)?;
    io::write_region_table(&args.out.join("regions.csv"), &regions)?;
    io::write_population(&args.out, &population)?;
    let mut w = csv::Writer::from_writer(output(Some(&args.out.join("truth.csv")))?);
    w.write_record(std::iter::once("id").chain(truth.attributes.iter().map(String::as_str)))?;
    for (id, labels) in &truth.labels {
        w.write_record(std::iter::once(id.clone()).chain(labels.iter().map(|&y| u8::from(y).to_string())))?;
    }
    w.flush().map_err(|e| LlpError::io("truth.csv", e))?;
    println!("documents,{}", docs.len());
    println!("regions,{}", regions.len());
    Ok(())
}

/// `(window, category, estimate, reference)`.
pub type EvalRow = (String, String, f64, f64);

/// Per-row absolute errors and their mean, matched on `(window, category)`.
pub fn evaluate(estimates: &[io::ReferenceRow], reference: &[io::ReferenceRow]) -> Result<(Vec<EvalRow>, f64)> {
    let index = |rows: &[io::ReferenceRow]| -> Result<BTreeMap<(String, String), f64>> {
        let mut m = BTreeMap::new();
        for r in rows {
            if m.insert((r.window.clone(), r.category.clone()), r.value).is_some() {
                return Err(LlpError::Invalid(format!("duplicate row for ({}, {})", r.window, r.category)));
            }
        }
        Ok(m)
    };
    let est = index(estimates)?;
    let refs = index(reference)?;
    let est_keys: BTreeSet<_> = est.keys().collect();
    let ref_keys: BTreeSet<_> = refs.keys().collect();
    if est_keys != ref_keys {
        let listed: Vec<String> = est_keys
            .symmetric_difference(&ref_keys)
            .map(|(w, c)| format!("({w}, {c})"))
            .collect();
        return Err(LlpError::Invalid(format!("categories do not match: {}", listed.join(", "))));
    }
    if est.is_empty() {
        return Err(LlpError::Empty("nothing to evaluate".into()));
    }
    let rows: Vec<_> = est
        .iter()
        .map(|((w, c), v)| (w.clone(), c.clone(), *v, refs[&(w.clone(), c.clone())]))
        .collect();
    let mae = rows.iter().map(|r| (r.2 - r.3).abs()).sum::<f64>() / rows.len() as f64;
    Ok((rows, mae))
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let (rows, mae) = evaluate(&io::read_reference(&args.estimates)?, &io::read_reference(&args.reference)?)?;
    let mut w = csv::Writer::from_writer(std::io::stdout().lock());
    w.write_record(["window", "category", "estimate", "reference", "abs_error"])?;
    for (window, category, e, r) in &rows {
        w.write_record([window.clone(), category.clone(), e.to_string(), r.to_string(), (e - r).abs().to_string()])?;
    }
    w.write_record(["*", "MAE", "", "", &mae.to_string()])?;
    w.flush().map_err(|e| LlpError::io("<stdout>", e))
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Ingest(a) => cmd_ingest(a),
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Pipeline(a) => cmd_pipeline(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Eval(a) => cmd_eval(a),
    }
}

/// Parses arguments, runs the command and maps errors to a failing exit code.
pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("LLP_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

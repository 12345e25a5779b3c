//! `robeval perturb | infer | score | report`.
//!
//! Each stage reads its inputs from files and writes its outputs into the
//! output directory:
//!
//! | stage   | writes                                   |
//! |---------|------------------------------------------|
//! | perturb | `expanded.jsonl`                         |
//! | infer   | `predictions.jsonl`, `cache.jsonl`, `failures.json` on partial runs |
//! | score   | `scores.jsonl`                           |
//! | report  | `report.json`, `report.csv`, `report.md`, `curve.csv` |
//!
//! Later stages read `expanded.jsonl` from the output directory when it
//! exists, else the configured dataset, unless `--dataset` is given.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;
use robeval_core::report::{correlation_curve, VariantFilter};
use serde::Serialize;

use crate::cache::Cache;
use crate::config::{CurveSpec, RunConfig};
use crate::error::{Error, Result};
use crate::inference::{run_inference, Client, Failure, ModelConfig};
use crate::io::{self, Meta};
use crate::pipeline;
use crate::render::{self, Format};

pub const EXPANDED_FILE: &str = "expanded.jsonl";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const CACHE_FILE: &str = "cache.jsonl";
pub const PARAPHRASE_CACHE_FILE: &str = "paraphrase-cache.jsonl";
pub const FAILURES_FILE: &str = "failures.json";
pub const SCORES_FILE: &str = "scores.jsonl";
pub const CURVE_FILE: &str = "curve.csv";

#[derive(Debug, Parser)]
#[command(name = "robeval", version, about = "Robustness evaluation: perturb, infer, score, report")]
pub struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Output directory (overrides the config; default `robeval-out`).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// More log output; repeat for more.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Add perturbed variants to every group.
    Perturb(PerturbArgs),
    /// Collect model completions for every instance.
    Infer(InferArgs),
    /// Score predictions against references.
    Score(ScoreArgs),
    /// Aggregate scores into report rows.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct PerturbArgs {
    /// Input dataset (default: the configured dataset).
    #[arg(long, value_name = "PATH")]
    pub dataset: Option<PathBuf>,
    /// Superficial variants per group.
    #[arg(long, value_name = "N")]
    pub superficial: Option<usize>,
    /// Paraphrase sidecar file, or `provider`.
    #[arg(long, value_name = "SOURCE")]
    pub paraphrases: Option<String>,
    /// Distraction variants per group.
    #[arg(long, value_name = "N")]
    pub distraction: Option<usize>,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    /// Dataset to run (default: `expanded.jsonl` in the output directory).
    #[arg(long, value_name = "PATH")]
    pub dataset: Option<PathBuf>,
    /// Completion endpoint URL.
    #[arg(long, value_name = "URL")]
    pub endpoint: Option<String>,
    /// Model name sent to the endpoint.
    #[arg(long, value_name = "NAME")]
    pub model: Option<String>,
    /// Name of the environment variable holding the bearer token.
    #[arg(long, value_name = "VAR")]
    pub auth_env: Option<String>,
    /// Response cache file (default: `cache.jsonl` in the output directory).
    #[arg(long, value_name = "PATH")]
    pub cache: Option<PathBuf>,
    /// Concurrent requests.
    #[arg(long, value_name = "N")]
    pub parallel: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Dataset the predictions belong to (default: `expanded.jsonl` in the output directory).
    #[arg(long, value_name = "PATH")]
    pub dataset: Option<PathBuf>,
    /// Predictions file (default: `predictions.jsonl` in the output directory).
    #[arg(long, value_name = "PATH")]
    pub predictions: Option<PathBuf>,
    /// Model to score when the predictions file holds several.
    #[arg(long, value_name = "NAME")]
    pub model: Option<String>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Dataset the scores belong to (default: `expanded.jsonl` in the output directory).
    #[arg(long, value_name = "PATH")]
    pub dataset: Option<PathBuf>,
    /// Scores file (default: `scores.jsonl` in the output directory).
    #[arg(long, value_name = "PATH")]
    pub scores: Option<PathBuf>,
    /// Emit only these rows (repeatable): all, superficial, paraphrase, distraction.
    #[arg(long, value_name = "FILTER")]
    pub filter: Vec<VariantFilter>,
    /// Also write the NCoH / reverse-PDR comparison table.
    #[arg(long, num_args = 2, value_names = ["SCORE_O", "STEP"])]
    pub curve: Option<Vec<f64>>,
    /// Bootstrap replicates.
    #[arg(long, value_name = "B")]
    pub replicates: Option<usize>,
    /// Model label for the rows.
    #[arg(long, value_name = "NAME")]
    pub model: Option<String>,
}

/// How a stage ended when it did not fail outright.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Complete,
    /// Some groups could not be processed; a failure manifest was written.
    Partial,
}

#[derive(Debug, Serialize)]
struct FailureManifest<'a> {
    #[serde(rename = "_meta")]
    meta: &'a Meta,
    stage: &'static str,
    incomplete_groups: Vec<String>,
    failures: &'a [Failure],
}

struct Context {
    config: RunConfig,
    out: PathBuf,
}

impl Context {
    fn meta(&self, kind: &str) -> Meta {
        let mut m = Meta::new(kind);
        m.config_hash = Some(self.config.hash());
        m.seed = Some(self.config.seed);
        m
    }

    fn out_file(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// `--dataset`, else `expanded.jsonl` in the output directory, else the configured dataset.
    fn stage_dataset(&self, flag: Option<&Path>) -> Result<PathBuf> {
        if let Some(p) = flag {
            return Ok(p.into());
        }
        let expanded = self.out_file(EXPANDED_FILE);
        if expanded.exists() {
            return Ok(expanded);
        }
        self.config
            .dataset
            .clone()
            .ok_or_else(|| Error::Config("no dataset: pass --dataset or set \"dataset\" in the config".into()))
    }
}

pub fn run(cli: Cli) -> Result<Status> {
    let mut config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.out = Some(out.clone());
    }
    apply_stage_flags(&mut config, &cli.command)?;
    let out = config.out_dir();
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let ctx = Context { config, out };
    match &cli.command {
        Command::Perturb(a) => cmd_perturb(&ctx, a),
        Command::Infer(a) => cmd_infer(&ctx, a),
        Command::Score(a) => cmd_score(&ctx, a),
        Command::Report(a) => cmd_report(&ctx, a),
    }
}

/// Fold stage flags into the config so the hash in output meta reflects them.
fn apply_stage_flags(config: &mut RunConfig, command: &Command) -> Result<()> {
    match command {
        Command::Perturb(a) => {
            if let Some(d) = &a.dataset {
                config.dataset = Some(d.clone());
            }
            if let Some(n) = a.superficial {
                let sc = config
                    .perturb
                    .superficial
                    .get_or_insert_with(|| serde_json::from_str(r#"{"count": 0}"#).expect("valid default"));
                sc.count = n;
            }
            if let Some(src) = &a.paraphrases {
                config.perturb.paraphrase = Some(robeval_core::perturb::ParaphraseConfig { source: src.clone() });
            }
            if let Some(n) = a.distraction {
                let dc = config
                    .perturb
                    .distraction
                    .get_or_insert_with(|| serde_json::from_str("{}").expect("valid default"));
                dc.count = n;
            }
        }
        Command::Infer(a) => {
            let existing = config.infer.model.take();
            let mut model = match (existing, &a.endpoint, &a.model) {
                (Some(m), _, _) => m,
                (None, Some(url), Some(name)) => ModelConfig::new(url.clone(), name.clone()),
                (None, _, _) => {
                    return Err(Error::Config(
                        "no model: set infer.model in the config or pass --endpoint and --model".into(),
                    ))
                }
            };
            if let Some(url) = &a.endpoint {
                model.endpoint_url = url.clone();
            }
            if let Some(name) = &a.model {
                model.model_name = name.clone();
            }
            if let Some(var) = &a.auth_env {
                model.auth_token_env = Some(var.clone());
            }
            if let Some(n) = a.parallel {
                model.max_parallel_requests = n;
            }
            config.infer.model = Some(model);
            if let Some(c) = &a.cache {
                config.infer.cache = Some(c.clone());
            }
        }
        Command::Score(_) => {}
        Command::Report(a) => {
            if !a.filter.is_empty() {
                config.report.filters = Some(a.filter.clone());
            }
            if let Some(v) = &a.curve {
                config.report.curve = Some(CurveSpec { score_o: v[0], step: v[1] });
            }
            if let Some(b) = a.replicates {
                config.report.bootstrap.replicates = b;
            }
            if let Some(m) = &a.model {
                config.report.model = Some(m.clone());
            }
        }
    }
    Ok(())
}

fn cmd_perturb(ctx: &Context, _args: &PerturbArgs) -> Result<Status> {
    let path = ctx
        .config
        .dataset
        .clone()
        .ok_or_else(|| Error::Config("no dataset: pass --dataset or set \"dataset\" in the config".into()))?;
    let dataset = io::load_dataset(&path)?;
    let cache = ctx.out_file(PARAPHRASE_CACHE_FILE);
    let (expanded, summary) = pipeline::perturb(&dataset, &ctx.config, Some(&cache))?;
    let target = ctx.out_file(EXPANDED_FILE);
    io::write_dataset_with_meta(&expanded, &target, ctx.meta("dataset"))?;
    println!("{summary}");
    info!("wrote {}", target.display());
    Ok(Status::Complete)
}

fn cmd_infer(ctx: &Context, args: &InferArgs) -> Result<Status> {
    let model = ctx.config.infer.model.clone().expect("set by apply_stage_flags");
    model.validate_for_evaluation()?;
    let dataset = io::load_dataset(&ctx.stage_dataset(args.dataset.as_deref())?)?;
    let templates = ctx.config.templates()?;
    // Check every prompt renders before touching the network.
    for instance in dataset.instances() {
        templates.render(instance)?;
    }
    let client = Client::new(model)?;
    let cache_path = ctx.config.infer.cache.clone().unwrap_or_else(|| ctx.out_file(CACHE_FILE));
    let mut cache = Cache::open(&cache_path)?;
    let outcome = run_inference(&dataset, &client, &templates, &mut cache)?;

    let mut meta = ctx.meta("predictions");
    meta.dataset = Some(dataset.name().into());
    meta.model = Some(client.config().model_name.clone());
    io::write_jsonl(&ctx.out_file(PREDICTIONS_FILE), Some(&meta), &outcome.predictions)?;

    let cached = if outcome.requests == 0 { "all cached".to_owned() } else { format!("{} cached", outcome.cache_hits) };
    println!(
        "{} predictions, {} requests ({cached}), {} retries",
        outcome.predictions.len(),
        outcome.requests,
        outcome.retries
    );

    let manifest_path = ctx.out_file(FAILURES_FILE);
    if outcome.is_complete() {
        if manifest_path.exists() {
            fs::remove_file(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        }
        return Ok(Status::Complete);
    }
    let incomplete = outcome.incomplete_groups();
    let manifest = FailureManifest {
        meta: &ctx.meta("failures"),
        stage: "infer",
        incomplete_groups: incomplete.clone(),
        failures: &outcome.failures,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    fs::write(&manifest_path, text).map_err(|e| Error::io(&manifest_path, e))?;
    eprintln!(
        "{} instance(s) failed in {} group(s): {}; see {}",
        outcome.failures.len(),
        incomplete.len(),
        incomplete.join(", "),
        manifest_path.display()
    );
    Ok(Status::Partial)
}

fn cmd_score(ctx: &Context, args: &ScoreArgs) -> Result<Status> {
    let dataset = io::load_dataset(&ctx.stage_dataset(args.dataset.as_deref())?)?;
    let pred_path = args.predictions.clone().unwrap_or_else(|| ctx.out_file(PREDICTIONS_FILE));
    let preds = io::read_predictions(&pred_path)?;
    let preds: Vec<_> = preds.records.into_iter().map(|(_, p)| p).collect();
    let (model, index) = pipeline::index_predictions(&preds, args.model.as_deref())?;
    let groups = pipeline::score(&dataset, &index, &ctx.config)?;
    let records = pipeline::score_records(&groups);

    let mut meta = ctx.meta("scores");
    meta.dataset = Some(dataset.name().into());
    meta.model = Some(model);
    io::write_jsonl(&ctx.out_file(SCORES_FILE), Some(&meta), &records)?;
    println!("scored {} groups ({} instances)", groups.len(), records.len());
    Ok(Status::Complete)
}

fn cmd_report(ctx: &Context, args: &ReportArgs) -> Result<Status> {
    let dataset = io::load_dataset(&ctx.stage_dataset(args.dataset.as_deref())?)?;
    let scores_path = args.scores.clone().unwrap_or_else(|| ctx.out_file(SCORES_FILE));
    let scores = io::read_scores(&scores_path)?;
    let model = ctx
        .config
        .report
        .model
        .clone()
        .or_else(|| scores.meta.as_ref().and_then(|m| m.model.clone()))
        .or_else(|| ctx.config.infer.model.as_ref().map(|m| m.model_name.clone()))
        .ok_or_else(|| Error::Config("no model label: pass --model".into()))?;
    let records: Vec<_> = scores.records.into_iter().map(|(_, r)| r).collect();
    let groups = pipeline::group_scores_from_records(&dataset, &records)?;
    let rows = pipeline::report_rows(
        &model,
        dataset.name(),
        &groups,
        ctx.config.report.filters.as_deref(),
        &ctx.config.bootstrap(),
    )?;

    let mut meta = ctx.meta("report");
    meta.dataset = Some(dataset.name().into());
    meta.model = Some(model);
    for format in Format::ALL {
        let path = ctx.out_file(&format!("report.{}", format.extension()));
        render::write_report(&rows, format, Some(&meta), &path)?;
    }
    print!("{}", render::report_to_markdown(&rows, None));

    if let Some(spec) = ctx.config.report.curve {
        let curve = correlation_curve(spec.score_o, spec.step)?;
        let path = ctx.out_file(CURVE_FILE);
        let text = render::curve_to_csv(&curve, Some(&ctx.meta("curve")));
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        println!("curve: {} rows, pearson_r={}", curve.points.len(), curve.pearson_r);
    }
    Ok(Status::Complete)
}

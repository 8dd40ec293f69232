//! `stylekit` command line: one subcommand per pipeline stage.
//!
//! Exit codes: 0 success, 1 runtime error (machine-readable JSON on stderr),
//! 2 usage error. A JSON config file supplies defaults; flags override its
//! fields one-to-one. Declared outputs are written atomically.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::data::{self, load_pairs, ParallelPair, Split};
use crate::downstream::{av_similarities, discriminate, roc_auc, AvInstance, DiscriminationInstance};
use crate::error::{Error, Result};
use crate::genkit::{build_pair_prompt, build_topic_prompt, filter_c4_sentences, AttributeSets, FilterConfig};
use crate::genkit::provider::PAIR_GENERATION_PARAMS;
use crate::quality::{aggregate_annotations, content_similarity, diversity, fluency_summary, krippendorff_alpha, AlphaMetric, AnnotationRecord};
use crate::registry::FeatureRegistry;
use crate::sampler::{ablation_preset, sample_triplets, validate_triplets, AblationPreset, SamplerConfig};
use crate::stel::{build_stel_tasks, probe_mse, score_stel, StelMode};
use crate::trainer::{materialize_triplets, save_history, save_model, train, EncoderModel, TrainConfig};

#[derive(Parser)]
#[command(name = "stylekit", version, about = "contrastive style-triplet pipeline")]
pub struct Cli {
    /// JSON config file; flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Seed propagated to every stochastic stage.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Reject unknown JSONL fields (lenient mode preserves them).
    #[arg(long, global = true, default_value_t = true,
          action = clap::ArgAction::Set, num_args = 0..=1, default_missing_value = "true")]
    pub strict: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Emit topic-extraction or pair-generation prompts as JSONL.
    GeneratePrompts(GeneratePromptsArgs),
    /// Sample contrastive triplets from train pairs.
    Sample(SampleArgs),
    /// Train the affine style encoder on triplets over base vectors.
    Train(TrainArgs),
    /// Build and score STEL / STEL-or-Content instances.
    Stel(StelArgs),
    /// Authorship verification: cosine similarities + ROC-AUC.
    Av(AvArgs),
    /// Style-transfer output discrimination.
    Discriminate(DiscriminateArgs),
    /// Dataset-quality report (content similarity, diversity, fluency, annotations).
    Metrics(MetricsArgs),
    /// MSE between two per-feature score tables.
    ProbeMse(ProbeMseArgs),
}

#[derive(Args)]
pub struct GeneratePromptsArgs {
    /// "topic" or "pair".
    #[arg(long)]
    pub mode: String,
    /// Line-per-document text file (topic mode).
    #[arg(long)]
    pub c4: Option<PathBuf>,
    /// One extracted topic per line (pair mode).
    #[arg(long)]
    pub topics: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub per_feature: usize,
    #[arg(long)]
    pub registry: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub per_feature: Option<usize>,
    #[arg(long)]
    pub paraphrase_fraction: Option<f64>,
    /// Ablation preset: in_domain, out_of_domain, out_of_distribution.
    #[arg(long)]
    pub ablate: Option<String>,
    /// Extra feature slugs to exclude.
    #[arg(long)]
    pub exclude: Vec<String>,
    /// "positive_side_only" or "both_sides".
    #[arg(long)]
    pub polarity: Option<String>,
    /// Which split tag to sample from: train, test, or all.
    #[arg(long, default_value = "train")]
    pub split: String,
    #[arg(long)]
    pub registry: Option<PathBuf>,
}

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub triplets: PathBuf,
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub history: Option<PathBuf>,
    #[arg(long)]
    pub margin: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub val_fraction: Option<f64>,
    /// Output dimension of the projection (default: input dimension).
    #[arg(long)]
    pub d_out: Option<usize>,
    /// Scale of the uniform random init.
    #[arg(long, default_value_t = 0.1)]
    pub init_scale: f64,
}

#[derive(Args)]
pub struct StelArgs {
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub report: PathBuf,
    /// "stel" or "stel_or_content".
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Per-feature instance cap (default: all ordered pairs).
    #[arg(long)]
    pub cap: Option<usize>,
    #[arg(long)]
    pub registry: Option<PathBuf>,
}

#[derive(Args)]
pub struct AvArgs {
    #[arg(long)]
    pub instances: PathBuf,
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args)]
pub struct DiscriminateArgs {
    #[arg(long)]
    pub instances: PathBuf,
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args)]
pub struct MetricsArgs {
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long)]
    pub embeddings: PathBuf,
    /// JSONL of {feature_id, score} fluency classifier outputs.
    #[arg(long)]
    pub fluency: Option<PathBuf>,
    /// Feature slugs excluded from the fluency mean.
    #[arg(long, default_value = "fluent-construction")]
    pub fluency_exclude: Vec<String>,
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub registry: Option<PathBuf>,
}

#[derive(Args)]
pub struct ProbeMseArgs {
    /// JSON report or plain {feature: score} map.
    #[arg(long)]
    pub scores_a: PathBuf,
    #[arg(long)]
    pub scores_b: PathBuf,
}

/// Optional defaults loaded from `--config`; flags win.
#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub seed: Option<u64>,
    pub sampler: Option<SamplerConfig>,
    pub train: Option<TrainConfig>,
    pub stel: Option<StelSection>,
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct StelSection {
    pub mode: Option<String>,
    pub cap: Option<usize>,
}

fn load_config(path: &Option<PathBuf>) -> Result<PipelineConfig> {
    match path {
        None => Ok(PipelineConfig::default()),
        Some(p) => {
            let text =
                std::fs::read_to_string(p).map_err(|e| Error::io(p.display().to_string(), e))?;
            serde_json::from_str(&text).map_err(|e| Error::Parse {
                path: p.display().to_string(),
                line: 0,
                message: e.to_string(),
            })
        }
    }
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

/// Provenance header included in every report.
fn provenance(config: &Option<PathBuf>, inputs: &[&Path]) -> Result<serde_json::Value> {
    let config_hash = match config {
        Some(p) => sha256_file(p)?,
        None => format!("{:x}", Sha256::digest(b"{}")),
    };
    let mut input_hashes = BTreeMap::new();
    for input in inputs {
        input_hashes.insert(input.display().to_string(), sha256_file(input)?);
    }
    Ok(json!({
        "tool_version": env!("CARGO_PKG_VERSION"),
        "config_hash": config_hash,
        "input_hashes": input_hashes,
    }))
}

fn write_report(path: &Path, report: &serde_json::Value) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(report).map_err(|e| Error::Other(e.to_string()))?;
    bytes.push(b'\n');
    data::write_atomic(path, &bytes)
}

fn load_registry(path: &Option<PathBuf>) -> Result<FeatureRegistry> {
    match path {
        Some(p) => FeatureRegistry::load(p),
        None => Ok(FeatureRegistry::builtin()),
    }
}

fn filter_split(pairs: Vec<ParallelPair>, which: &str) -> Result<Vec<ParallelPair>> {
    match which {
        "all" => Ok(pairs),
        "train" => Ok(pairs.into_iter().filter(|p| p.split == Split::Train).collect()),
        "test" => Ok(pairs.into_iter().filter(|p| p.split == Split::Test).collect()),
        other => Err(Error::InvalidConfig(format!("unknown split `{other}`"))),
    }
}

fn load_embeddings(path: &Path) -> Result<crate::data::EmbeddingSet> {
    let records: Vec<crate::data::Embedding> = data::read_jsonl(path)?;
    crate::data::EmbeddingSet::from_records(records)
}

pub fn run(cli: Cli) -> Result<()> {
    let config = load_config(&cli.config)?;
    let seed = cli.seed.or(config.seed).unwrap_or(0);
    match &cli.command {
        Command::GeneratePrompts(args) => cmd_generate_prompts(&cli, args, seed),
        Command::Sample(args) => cmd_sample(&cli, &config, args, seed),
        Command::Train(args) => cmd_train(&cli, &config, args, seed),
        Command::Stel(args) => cmd_stel(&cli, &config, args, seed),
        Command::Av(args) => cmd_av(&cli, args),
        Command::Discriminate(args) => cmd_discriminate(&cli, args),
        Command::Metrics(args) => cmd_metrics(&cli, args),
        Command::ProbeMse(args) => cmd_probe_mse(args),
    }
}

fn cmd_generate_prompts(cli: &Cli, args: &GeneratePromptsArgs, seed: u64) -> Result<()> {
    let registry = load_registry(&args.registry)?;
    match args.mode.as_str() {
        "topic" => {
            let c4 = args.c4.as_ref().ok_or_else(|| {
                Error::InvalidConfig("topic mode requires --c4".into())
            })?;
            let text = std::fs::read_to_string(c4)
                .map_err(|e| Error::io(c4.display().to_string(), e))?;
            let filter = FilterConfig::default();
            let mut records = Vec::new();
            for document in text.lines().filter(|l| !l.trim().is_empty()) {
                for sentence in filter_c4_sentences(document, &filter) {
                    records.push(json!({
                        "sentence": sentence,
                        "prompt": build_topic_prompt(&sentence)?,
                    }));
                }
            }
            data::write_jsonl(&args.out, &records)?;
            println!("{}", json!({"mode": "topic", "n_prompts": records.len()}));
        }
        "pair" => {
            let topics_path = args.topics.as_ref().ok_or_else(|| {
                Error::InvalidConfig("pair mode requires --topics".into())
            })?;
            let topics: Vec<String> = std::fs::read_to_string(topics_path)
                .map_err(|e| Error::io(topics_path.display().to_string(), e))?
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(|l| l.trim().to_string())
                .collect();
            if topics.is_empty() {
                return Err(Error::InvalidConfig("topics file is empty".into()));
            }
            let sets = AttributeSets::default();
            let mut records = Vec::new();
            for feature in registry.features() {
                for i in 0..args.per_feature {
                    let topic = &topics[i % topics.len()];
                    let attrs = sets.sample(topic, seed.wrapping_add(i as u64));
                    let prompt = build_pair_prompt(feature, &attrs, seed.wrapping_add(i as u64));
                    records.push(json!({
                        "feature_id": feature.id,
                        "attributes": attrs,
                        "prompt": prompt,
                        "temperature": PAIR_GENERATION_PARAMS.temperature,
                        "top_p": PAIR_GENERATION_PARAMS.top_p,
                    }));
                }
            }
            data::write_jsonl(&args.out, &records)?;
            println!("{}", json!({"mode": "pair", "n_prompts": records.len()}));
        }
        other => {
            return Err(Error::InvalidConfig(format!(
                "unknown prompt mode `{other}` (expected topic|pair)"
            )))
        }
    }
    let _ = cli;
    Ok(())
}

fn cmd_sample(cli: &Cli, config: &PipelineConfig, args: &SampleArgs, seed: u64) -> Result<()> {
    let registry = load_registry(&args.registry)?;
    let pairs = load_pairs(&args.pairs, &registry, cli.strict)?;
    let pairs = filter_split(pairs, &args.split)?;
    let base = config.sampler.clone().unwrap_or_default();
    let mut exclude: BTreeSet<String> = base.exclude_features.clone();
    if let Some(preset) = &args.ablate {
        exclude.extend(ablation_preset(preset.parse::<AblationPreset>()?));
    }
    exclude.extend(args.exclude.iter().cloned());
    let polarity = match args.polarity.as_deref() {
        None => base.polarity,
        Some("positive_side_only") => crate::sampler::Polarity::PositiveSideOnly,
        Some("both_sides") => crate::sampler::Polarity::BothSides,
        Some(other) => {
            return Err(Error::InvalidConfig(format!("unknown polarity `{other}`")))
        }
    };
    let sampler_config = SamplerConfig {
        per_feature_count: args.per_feature.unwrap_or(base.per_feature_count),
        paraphrase_fraction: args.paraphrase_fraction.unwrap_or(base.paraphrase_fraction),
        polarity,
        exclude_features: exclude,
        seed,
    };
    let triplets = sample_triplets(&pairs, &sampler_config, &registry)?;
    let report = validate_triplets(&triplets, &pairs)?;
    data::write_jsonl(&args.out, &triplets)?;
    println!(
        "{}",
        json!({
            "n_triplets": triplets.len(),
            "violations": report.violations.len(),
            "paraphrase_fraction_observed": report.paraphrase_fraction_observed,
        })
    );
    Ok(())
}

fn cmd_train(cli: &Cli, config: &PipelineConfig, args: &TrainArgs, seed: u64) -> Result<()> {
    let triplets: Vec<crate::data::Triplet> = data::read_jsonl(&args.triplets)?;
    let embeddings = load_embeddings(&args.embeddings)?;
    let vectors = materialize_triplets(&triplets, &embeddings)?;
    let base = config.train.clone().unwrap_or_default();
    let train_config = TrainConfig {
        margin: args.margin.unwrap_or(base.margin),
        learning_rate: args.lr.unwrap_or(base.learning_rate),
        batch_size: args.batch.unwrap_or(base.batch_size),
        val_fraction: args.val_fraction.unwrap_or(base.val_fraction),
        patience_epochs: args.patience.unwrap_or(base.patience_epochs),
        max_epochs: args.max_epochs.unwrap_or(base.max_epochs),
        seed,
    };
    let d_in = embeddings.dim().ok_or_else(|| Error::InvalidConfig("empty embeddings".into()))?;
    let d_out = args.d_out.unwrap_or(d_in);
    let init = EncoderModel::random(d_in, d_out, seed, args.init_scale);
    let (model, history) = train(&vectors, &train_config, &init)?;
    save_model(&model, &args.out)?;
    let history_path = args
        .history
        .clone()
        .unwrap_or_else(|| args.out.with_extension("history.jsonl"));
    save_history(&history, &history_path)?;
    let best = history.iter().map(|h| h.val_loss).fold(f64::INFINITY, f64::min);
    println!(
        "{}",
        json!({
            "epochs_run": history.len(),
            "best_val_loss": best,
            "model": args.out.display().to_string(),
        })
    );
    let _ = cli;
    Ok(())
}

fn cmd_stel(cli: &Cli, config: &PipelineConfig, args: &StelArgs, seed: u64) -> Result<()> {
    let registry = load_registry(&args.registry)?;
    let pairs = load_pairs(&args.pairs, &registry, cli.strict)?;
    let pairs = filter_split(pairs, &args.split)?;
    let section = config.stel.clone().unwrap_or_default();
    let mode: StelMode = args
        .mode
        .clone()
        .or(section.mode)
        .unwrap_or_else(|| "stel".to_string())
        .parse()?;
    let cap = args.cap.or(section.cap);
    let instances = build_stel_tasks(&pairs, mode, seed, cap)?;
    let embeddings = load_embeddings(&args.embeddings)?;
    let scores = score_stel(&instances, &embeddings)?;
    let report = json!({
        "provenance": provenance(&cli.config, &[args.pairs.as_path(), args.embeddings.as_path()])?,
        "mode": mode,
        "overall_accuracy": scores.overall_accuracy,
        "per_feature_accuracy": scores.per_feature_accuracy,
        "n": scores.n,
        "includes_side_swapped_instances": true,
    });
    write_report(&args.report, &report)?;
    println!("{}", json!({"overall_accuracy": scores.overall_accuracy, "n": scores.n}));
    Ok(())
}

fn cmd_av(cli: &Cli, args: &AvArgs) -> Result<()> {
    let instances: Vec<AvInstance> = data::read_jsonl(&args.instances)?;
    let embeddings = load_embeddings(&args.embeddings)?;
    let scored = av_similarities(&instances, &embeddings)?;
    let auc = roc_auc(&scored)?;
    let report = json!({
        "provenance": provenance(&cli.config, &[args.instances.as_path(), args.embeddings.as_path()])?,
        "roc_auc": auc,
        "n": scored.len(),
    });
    if let Some(path) = &args.report {
        write_report(path, &report)?;
    }
    println!("{}", json!({"roc_auc": auc, "n": scored.len()}));
    Ok(())
}

fn cmd_discriminate(cli: &Cli, args: &DiscriminateArgs) -> Result<()> {
    let instances: Vec<DiscriminationInstance> = data::read_jsonl(&args.instances)?;
    let embeddings = load_embeddings(&args.embeddings)?;
    let result = discriminate(&instances, &embeddings)?;
    let report = json!({
        "provenance": provenance(&cli.config, &[args.instances.as_path(), args.embeddings.as_path()])?,
        "accuracy": result.accuracy,
        "n": result.n,
        "choices": result.choices,
    });
    if let Some(path) = &args.report {
        write_report(path, &report)?;
    }
    println!("{}", json!({"accuracy": result.accuracy, "n": result.n}));
    Ok(())
}

#[derive(Deserialize)]
struct FluencyRecord {
    feature_id: String,
    score: f64,
}

fn cmd_metrics(cli: &Cli, args: &MetricsArgs) -> Result<()> {
    let registry = load_registry(&args.registry)?;
    let pairs = load_pairs(&args.pairs, &registry, cli.strict)?;
    let embeddings = load_embeddings(&args.embeddings)?;
    let similarity = content_similarity(&pairs, &embeddings)?;
    // Diversity over every sentence embedding in the pair set.
    let mut vectors = Vec::new();
    for pair in &pairs {
        for side in [crate::data::Side::Positive, crate::data::Side::Negative] {
            vectors.push(
                embeddings
                    .get(&crate::data::SideRef::new(&pair.pair_id, side).key())?
                    .to_vec(),
            );
        }
    }
    let diversity_score = diversity(&vectors)?;
    let mut report = json!({
        "provenance": provenance(&cli.config, &[args.pairs.as_path(), args.embeddings.as_path()])?,
        "content_similarity": similarity,
        "diversity": diversity_score,
        "n_pairs": pairs.len(),
    });
    if let Some(fluency_path) = &args.fluency {
        let records: Vec<FluencyRecord> = data::read_jsonl(fluency_path)?;
        let scores: Vec<(String, f64)> =
            records.into_iter().map(|r| (r.feature_id, r.score)).collect();
        let exclude: BTreeSet<String> = args.fluency_exclude.iter().cloned().collect();
        report["fluency"] = json!(fluency_summary(&scores, &exclude)?);
    }
    if let Some(annotation_path) = &args.annotations {
        let records: Vec<AnnotationRecord> = data::read_jsonl(annotation_path)?;
        let aggregated = aggregate_annotations(&records)?;
        report["annotations"] = json!({
            "overall_accuracy": aggregated.overall_accuracy,
            "mean_majority_size": aggregated.mean_majority_size,
            "krippendorff_alpha_interval": krippendorff_alpha(&records, AlphaMetric::Interval)?,
            "krippendorff_alpha_nominal": krippendorff_alpha(&records, AlphaMetric::Nominal)?,
        });
    }
    if let Some(path) = &args.report {
        write_report(path, &report)?;
    }
    println!("{report}");
    Ok(())
}

fn read_score_table(path: &Path) -> Result<BTreeMap<String, f64>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: 0,
        message: e.to_string(),
    })?;
    let table = value.get("per_feature_accuracy").unwrap_or(&value);
    serde_json::from_value(table.clone()).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: 0,
        message: format!("expected a {{feature: score}} map: {e}"),
    })
}

fn cmd_probe_mse(args: &ProbeMseArgs) -> Result<()> {
    let a = read_score_table(&args.scores_a)?;
    let b = read_score_table(&args.scores_b)?;
    let mse = probe_mse(&a, &b)?;
    println!("{}", json!({"mse": mse, "n_features": a.len()}));
    Ok(())
}

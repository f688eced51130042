//! Command-line front end: one subcommand per pipeline stage, a shared JSON
//! configuration file, and flags that override it.
//!
//! Exit codes: 0 success, 1 user error (bad flags, config or input files),
//! 2 runtime failure. Errors are printed to stderr as one JSON object.

use std::collections::{BTreeMap, HashMap};
use std::ffi::OsString;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::aggregation::{assign_all, CandidateOrdering, SenseGroup};
use crate::annotation::{self, AnnotationTask, LabelStore, Session};
use crate::corpus::{
    parse_axolotl_tsv, parse_flat_lexicon, read_split, split_stats, write_split, ColumnMap, DatasetSplit, Language,
    ParseOptions, Source, SplitName,
};
use crate::curation::{
    assemble_training_set, build_contamination_index, contamination_filter, filter_usage_sentences, AbbreviationGuard,
    Recipe,
};
use crate::formats::{
    read_generations, read_predictions, read_vectors, write_generations, write_predictions, GenerationRow, Prediction,
};
use crate::harness::{
    compare_systems, error_report, load_gold, read_report, render_report, score_predictions, GoldItem,
    LexicalTokenEmbedder, Metric, ReportFormat, ScoreOptions, TokenEmbedder, TokenEmbeddingTable,
};
use crate::inference::{EndpointConfig, GenerationConfig, InferenceClient, ResponseCache};
use crate::prompting::{
    default_prompt, export_finetune_dataset, export_trainer_config, PromptTemplate, TrainerOverrides,
};
use crate::text::TargetMatcher;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CliError {
    Usage(String),
    Config { key: String, message: String },
    Input(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Runtime(_) => 2,
            _ => 1,
        }
    }

    pub fn to_json(&self) -> Value {
        match self {
            CliError::Usage(m) => json!({"error": "usage_error", "message": m}),
            CliError::Config { key, message } => json!({"error": "config_error", "key": key, "message": message}),
            CliError::Input(m) => json!({"error": "input_error", "message": m}),
            CliError::Runtime(m) => json!({"error": "runtime_error", "message": m}),
        }
    }
}

fn input_err(e: impl Display) -> CliError {
    CliError::Input(e.to_string())
}

fn runtime_err(e: impl Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn config_err(key: &str, message: impl Display) -> CliError {
    CliError::Config {
        key: key.to_owned(),
        message: message.to_string(),
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub raw: Option<PathBuf>,
    pub prepared: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub heldout: Vec<PathBuf>,
    pub abbreviations: Option<PathBuf>,
    pub training_set: Option<PathBuf>,
    pub removal_report: Option<PathBuf>,
    pub finetune: Option<PathBuf>,
    pub trainer_config: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub gold: Option<PathBuf>,
    pub cache: Option<PathBuf>,
    pub generations: Option<PathBuf>,
    pub vectors: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub analysis: Option<PathBuf>,
    pub tasks: Option<PathBuf>,
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnotationConfig {
    pub sample_n: usize,
    pub seed: u64,
    pub model_tag: String,
    pub host: String,
    pub port: u16,
}

impl Default for AnnotationConfig {
    fn default() -> Self {
        AnnotationConfig {
            sample_n: 0,
            seed: 0,
            model_tag: "system".into(),
            host: "127.0.0.1".into(),
            port: 8765,
        }
    }
}

/// Contents of the `--config` file. Every field is optional.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub language: Option<String>,
    pub paths: PathsConfig,
    pub recipe: Option<Recipe>,
    pub generation_endpoint: Option<EndpointConfig>,
    pub embedding_endpoint: Option<EndpointConfig>,
    pub generation: GenerationConfig,
    /// Replaces the built-in question for the language; must contain `<target>`.
    pub prompt_template: Option<String>,
    pub prompt_joiner: Option<String>,
    pub ordering: CandidateOrdering,
    pub stem_min: usize,
    pub annotation: AnnotationConfig,
    pub trainer: TrainerOverrides,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            language: None,
            paths: PathsConfig::default(),
            recipe: None,
            generation_endpoint: None,
            embedding_endpoint: None,
            generation: GenerationConfig::default(),
            prompt_template: None,
            prompt_joiner: None,
            ordering: CandidateOrdering::default(),
            stem_min: 4,
            annotation: AnnotationConfig::default(),
            trainer: TrainerOverrides::default(),
        }
    }
}

impl PipelineConfig {
    /// Parses a config file; errors carry the dotted path of the offending key.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let body = std::fs::read_to_string(path)
            .map_err(|e| config_err("--config", format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&body)
    }

    pub fn from_json(body: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(body);
        let cfg: PipelineConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let key = e.path().to_string();
            let key = if key == "." { "<root>".to_owned() } else { key };
            config_err(&key, e.inner())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if let Some(l) = &self.language {
            Language::new(l.clone()).map_err(|e| config_err("language", e))?;
        }
        self.generation.validate().map_err(|e| config_err("generation", e))?;
        for (key, ep) in [
            ("generation_endpoint", &self.generation_endpoint),
            ("embedding_endpoint", &self.embedding_endpoint),
        ] {
            if let Some(ep) = ep {
                ep.validate().map_err(|e| config_err(key, e))?;
            }
        }
        if let Some(t) = &self.prompt_template {
            if t.matches(crate::prompting::TARGET_PLACEHOLDER).count() != 1 {
                return Err(config_err(
                    "prompt_template",
                    "template must contain <target> exactly once",
                ));
            }
        }
        crate::prompting::TrainerConfig::merged(&self.trainer).map_err(|e| config_err("trainer", e))?;
        Ok(())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "sensegloss",
    version,
    about = "Generate, aggregate and score definitions of novel word senses"
)]
pub struct Cli {
    /// JSON configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Print the resolved plan and exit without writing anything.
    #[arg(long, global = true)]
    pub dry_run: bool,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a shared-task TSV or lexicon JSON-lines file into a canonical split.
    Prepare(PrepareArgs),
    /// Build a training set from shared-task data and/or a lexicon.
    Curate(CurateArgs),
    /// Write prompt/definition pairs for fine-tuning.
    ExportFinetune(ExportFinetuneArgs),
    /// Write the adapter training configuration.
    ExportConfig(ExportConfigArgs),
    /// Generate one definition per usage through an inference endpoint.
    Generate(GenerateArgs),
    /// Pick one unique label per sense from generated definitions.
    Aggregate(AggregateArgs),
    /// Score predictions against gold definitions.
    Score(ScoreArgs),
    /// Welch t-test between two score reports.
    Compare(CompareArgs),
    /// Circularity, length and annotated-error summary.
    Analyze(AnalyzeArgs),
    /// Manual annotation: sample tasks or run the annotation service.
    #[command(subcommand)]
    Annotate(AnnotateCommand),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InputFormat {
    Axolotl,
    Lexicon,
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "axolotl")]
    pub format: InputFormat,
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long)]
    pub language: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Skip malformed rows instead of failing.
    #[arg(long)]
    pub lenient: bool,
}

#[derive(Debug, Args)]
pub struct CurateArgs {
    #[arg(long)]
    pub recipe: Option<Recipe>,
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Dev/test splits whose words must not appear in the output.
    #[arg(long)]
    pub heldout: Vec<PathBuf>,
    #[arg(long)]
    pub abbreviations: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Keep lexicon usages whole instead of trimming them to target sentences.
    #[arg(long)]
    pub no_sentence_filter: bool,
}

#[derive(Debug, Args)]
pub struct ExportFinetuneArgs {
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub template: Option<String>,
}

#[derive(Debug, Args)]
pub struct ExportConfigArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct EndpointFlags {
    #[arg(long)]
    pub base_url: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub timeout: Option<f64>,
    #[arg(long)]
    pub max_retries: Option<u32>,
    #[arg(long)]
    pub max_in_flight: Option<usize>,
    #[arg(long)]
    pub cache: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Only usages of senses flagged as novel.
    #[arg(long)]
    pub novel_only: bool,
    #[arg(long)]
    pub template: Option<String>,
    #[command(flatten)]
    pub endpoint: EndpointFlags,
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    #[arg(long)]
    pub generations: Option<PathBuf>,
    /// Precomputed sentence embeddings (JSON-lines); the endpoint is used otherwise.
    #[arg(long)]
    pub vectors: Option<PathBuf>,
    #[arg(long)]
    pub ordering: Option<CandidateOrdering>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub endpoint: EndpointFlags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TokenEmbedderChoice {
    Endpoint,
    Lexical,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub pred: Option<PathBuf>,
    #[arg(long)]
    pub gold: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub format: Option<ReportFormat>,
    #[arg(long)]
    pub system: Option<String>,
    /// Token embeddings for BERTScore; defaults to the endpoint when one is configured.
    #[arg(long, value_enum)]
    pub token_embedder: Option<TokenEmbedderChoice>,
    #[command(flatten)]
    pub endpoint: EndpointFlags,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    #[arg(long, default_value = "bertscore_f1")]
    pub metric: Metric,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub pred: Option<PathBuf>,
    #[arg(long)]
    pub gold: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum AnnotateCommand {
    /// Draw annotation tasks from a predictions file.
    Sample(AnnotateSampleArgs),
    /// Run the annotation REST service.
    Serve(AnnotateServeArgs),
}

#[derive(Debug, Args)]
pub struct SamplingFlags {
    #[arg(long)]
    pub pred: Option<PathBuf>,
    #[arg(long)]
    pub gold: Option<PathBuf>,
    /// 0 samples every prediction.
    #[arg(long)]
    pub sample_n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub model_tag: Option<String>,
}

#[derive(Debug, Args)]
pub struct AnnotateSampleArgs {
    #[command(flatten)]
    pub sampling: SamplingFlags,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnnotateServeArgs {
    /// Task files (JSON-lines); tasks are sampled from --pred otherwise.
    #[arg(long)]
    pub tasks: Vec<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub host: Option<String>,
    #[arg(long)]
    pub port: Option<u16>,
    #[command(flatten)]
    pub sampling: SamplingFlags,
}

struct Ctx {
    cfg: PipelineConfig,
    dry_run: bool,
}

/// Resolved inputs, outputs and settings of one command.
#[derive(Debug, Default, Serialize)]
struct Plan {
    command: &'static str,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
    settings: BTreeMap<String, Value>,
}

impl Plan {
    fn new(command: &'static str) -> Self {
        Plan {
            command,
            ..Default::default()
        }
    }

    fn input(&mut self, name: &str, path: &Path) -> &mut Self {
        self.inputs.insert(name.to_owned(), path.display().to_string());
        self
    }

    fn output(&mut self, name: &str, path: &Path) -> &mut Self {
        self.outputs.insert(name.to_owned(), path.display().to_string());
        self
    }

    fn setting(&mut self, name: &str, value: impl Serialize) -> &mut Self {
        self.settings.insert(
            name.to_owned(),
            serde_json::to_value(value).expect("setting serializes"),
        );
        self
    }
}

impl Ctx {
    /// Prints the plan when dry-running; returns true if the command should stop.
    fn stop_after(&self, plan: &Plan) -> bool {
        if self.dry_run {
            println!(
                "{}",
                serde_json::to_string_pretty(&json!({"dry_run": true, "plan": plan})).expect("plan serializes")
            );
        }
        self.dry_run
    }

    fn stem_min(&self) -> usize {
        self.cfg.stem_min
    }
}

/// Flag value if given, else the config value; missing is a config error
/// naming `key`.
fn required(flag: Option<&PathBuf>, cfg: Option<&PathBuf>, key: &str, flag_name: &str) -> Result<PathBuf, CliError> {
    flag.or(cfg).cloned().ok_or_else(|| {
        config_err(
            key,
            format!("required setting is missing (set {key} in the config or pass {flag_name})"),
        )
    })
}

fn existing(path: PathBuf, key: &str) -> Result<PathBuf, CliError> {
    if path.exists() {
        Ok(path)
    } else {
        Err(config_err(
            key,
            format!("input file does not exist: {}", path.display()),
        ))
    }
}

fn required_input(
    flag: Option<&PathBuf>,
    cfg: Option<&PathBuf>,
    key: &str,
    flag_name: &str,
) -> Result<PathBuf, CliError> {
    existing(required(flag, cfg, key, flag_name)?, key)
}

fn write_text(path: &Path, body: &str) -> Result<(), CliError> {
    std::fs::write(path, body).map_err(|e| runtime_err(format!("{}: {e}", path.display())))
}

fn print_summary(value: Value) {
    println!("{}", serde_json::to_string(&value).expect("summary serializes"));
}

fn parse_split_name(s: &str) -> Result<SplitName, CliError> {
    s.parse::<SplitName>().map_err(|e| CliError::Usage(e.to_string()))
}

fn language(flag: Option<&String>, ctx: &Ctx) -> Result<Language, CliError> {
    let code = flag.or(ctx.cfg.language.as_ref()).ok_or_else(|| {
        config_err(
            "language",
            "required setting is missing (set language or pass --language)",
        )
    })?;
    Language::new(code.clone()).map_err(|e| config_err("language", e))
}

fn template_for(language: &Language, flag: Option<&String>, ctx: &Ctx) -> Result<PromptTemplate, CliError> {
    let mut template = match flag.or(ctx.cfg.prompt_template.as_ref()) {
        Some(t) => PromptTemplate::new(language.clone(), t.clone()).map_err(|e| config_err("prompt_template", e))?,
        None => default_prompt(language).map_err(|e| config_err("language", e))?,
    };
    if let Some(j) = &ctx.cfg.prompt_joiner {
        template = template.with_joiner(j.clone());
    }
    Ok(template)
}

fn endpoint(cfg: Option<&EndpointConfig>, flags: &EndpointFlags, key: &str) -> Result<EndpointConfig, CliError> {
    let mut ep = match (cfg, &flags.base_url) {
        (Some(c), _) => c.clone(),
        (None, Some(url)) => EndpointConfig::new(url.clone(), "default"),
        (None, None) => {
            return Err(config_err(
                key,
                format!("required setting is missing (set {key} in the config or pass --base-url)"),
            ))
        }
    };
    if let Some(v) = &flags.base_url {
        ep.base_url = v.clone();
    }
    if let Some(v) = &flags.model {
        ep.model_name = v.clone();
    }
    if let Some(v) = flags.timeout {
        ep.timeout_secs = v;
    }
    if let Some(v) = flags.max_retries {
        ep.max_retries = v;
    }
    if let Some(v) = flags.max_in_flight {
        ep.max_in_flight = v;
    }
    ep.validate().map_err(|e| config_err(key, e))?;
    Ok(ep)
}

fn open_cache(flags: &EndpointFlags, ctx: &Ctx) -> Result<Arc<ResponseCache>, CliError> {
    match flags.cache.as_ref().or(ctx.cfg.paths.cache.as_ref()) {
        Some(p) => ResponseCache::open(p)
            .map(Arc::new)
            .map_err(|e| config_err("paths.cache", e)),
        None => Ok(Arc::new(ResponseCache::in_memory())),
    }
}

fn runtime() -> Result<tokio::runtime::Runtime, CliError> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(runtime_err)
}

fn read_gold(path: &Path) -> Result<Vec<GoldItem>, CliError> {
    let split = read_split(path, SplitName::Test, ParseOptions::default()).map_err(input_err)?;
    let (gold, warnings) = load_gold(&split);
    warnings.iter().for_each(|w| log::warn!("{w}"));
    Ok(gold)
}

fn read_preds(path: &Path) -> Result<Vec<Prediction>, CliError> {
    let (preds, warnings) = read_predictions(path).map_err(input_err)?;
    warnings.iter().for_each(|w| log::warn!("{w}"));
    Ok(preds)
}

fn cmd_prepare(ctx: &Ctx, a: PrepareArgs) -> Result<(), CliError> {
    let input = required_input(a.input.as_ref(), ctx.cfg.paths.raw.as_ref(), "paths.raw", "--input")?;
    let out = required(
        a.out.as_ref(),
        ctx.cfg.paths.prepared.as_ref(),
        "paths.prepared",
        "--out",
    )?;
    let name = parse_split_name(&a.split)?;
    let lang = language(a.language.as_ref(), ctx)?;
    let mut plan = Plan::new("prepare");
    plan.input("input", &input)
        .output("split", &out)
        .setting("format", format!("{:?}", a.format).to_lowercase())
        .setting("split", name.as_str())
        .setting("language", lang.code());
    if ctx.stop_after(&plan) {
        return Ok(());
    }
    let opts = ParseOptions { lenient: a.lenient };
    let split = match a.format {
        InputFormat::Axolotl => parse_axolotl_tsv(&input, lang, &ColumnMap::default(), name, opts),
        InputFormat::Lexicon => parse_flat_lexicon(&input, lang, name, opts),
    }
    .map_err(input_err)?;
    for w in write_split(&split, &out).map_err(runtime_err)? {
        log::warn!("{w}");
    }
    print_summary(json!({"command": "prepare", "stats": split_stats(&split)}));
    Ok(())
}

fn cmd_curate(ctx: &Ctx, a: CurateArgs) -> Result<(), CliError> {
    let recipe = a
        .recipe
        .or(ctx.cfg.recipe)
        .ok_or_else(|| config_err("recipe", "required setting is missing (set recipe or pass --recipe)"))?;
    let paths = &ctx.cfg.paths;
    let needs_train = matches!(recipe, Recipe::A | Recipe::APlusD);
    let needs_lexicon = matches!(recipe, Recipe::D | Recipe::APlusD);
    let train = needs_train
        .then(|| required_input(a.train.as_ref(), paths.train.as_ref(), "paths.train", "--train"))
        .transpose()?;
    let lexicon = needs_lexicon
        .then(|| required_input(a.lexicon.as_ref(), paths.lexicon.as_ref(), "paths.lexicon", "--lexicon"))
        .transpose()?;
    let heldout: Vec<PathBuf> = if a.heldout.is_empty() {
        paths.heldout.clone()
    } else {
        a.heldout.clone()
    };
    let heldout = heldout
        .into_iter()
        .map(|p| existing(p, "paths.heldout"))
        .collect::<Result<Vec<_>, _>>()?;
    let abbreviations = a
        .abbreviations
        .as_ref()
        .or(paths.abbreviations.as_ref())
        .map(|p| existing(p.clone(), "paths.abbreviations"))
        .transpose()?;
    let out = required(
        a.out.as_ref(),
        paths.training_set.as_ref(),
        "paths.training_set",
        "--out",
    )?;
    let report = a.report.as_ref().or(paths.removal_report.as_ref()).cloned();

    let mut plan = Plan::new("curate");
    plan.setting("recipe", recipe.as_str())
        .setting("sentence_filter", !a.no_sentence_filter);
    if let Some(p) = &train {
        plan.input("train", p);
    }
    if let Some(p) = &lexicon {
        plan.input("lexicon", p);
    }
    for (i, p) in heldout.iter().enumerate() {
        plan.input(&format!("heldout[{i}]"), p);
    }
    plan.output("training_set", &out);
    if let Some(p) = &report {
        plan.output("removal_report", p);
    }
    if ctx.stop_after(&plan) {
        return Ok(());
    }

    let read = |p: &Path, name| read_split(p, name, ParseOptions::default()).map_err(input_err);
    let train = train.map(|p| read(&p, SplitName::TrainA)).transpose()?;
    let mut lexicon = lexicon.map(|p| read(&p, SplitName::TrainAd)).transpose()?;
    let mut filter_warnings = 0;
    if let (Some(lex), false) = (lexicon.as_mut(), a.no_sentence_filter) {
        let guard = match &abbreviations {
            Some(p) => AbbreviationGuard::from_file(p).map_err(input_err)?,
            None => AbbreviationGuard::for_language(&lex.language),
        };
        for r in lex.records.iter_mut().filter(|r| r.source == Source::Dbnary) {
            let sel = filter_usage_sentences(r, &TargetMatcher::new(&r.word, ctx.stem_min()), &guard);
            filter_warnings += usize::from(sel.warning.is_some());
            *r = sel.record;
        }
    }
    let assembled = assemble_training_set(train.as_ref(), lexicon.as_ref(), recipe).map_err(input_err)?;
    let heldout_splits = heldout
        .iter()
        .map(|p| read(p, SplitName::Test))
        .collect::<Result<Vec<DatasetSplit>, _>>()?;
    if heldout_splits.is_empty() {
        log::warn!("no held-out splits given; contamination filter has nothing to remove");
    }
    let index = build_contamination_index(heldout_splits.iter());
    let (filtered, removal) = contamination_filter(&assembled, &index);
    for w in write_split(&filtered, &out).map_err(runtime_err)? {
        log::warn!("{w}");
    }
    if let Some(p) = &report {
        let mut body = serde_json::to_string_pretty(&removal).expect("report serializes");
        body.push('\n');
        write_text(p, &body)?;
    }
    print_summary(json!({
        "command": "curate",
        "recipe": recipe.as_str(),
        "stats": split_stats(&filtered),
        "removed_words": removal.words(),
        "removed_records": removal.records(),
        "usages_kept_whole": filter_warnings,
    }));
    Ok(())
}

fn cmd_export_finetune(ctx: &Ctx, a: ExportFinetuneArgs) -> Result<(), CliError> {
    let split_path = required_input(
        a.split.as_ref(),
        ctx.cfg.paths.training_set.as_ref(),
        "paths.training_set",
        "--split",
    )?;
    let out = required(
        a.out.as_ref(),
        ctx.cfg.paths.finetune.as_ref(),
        "paths.finetune",
        "--out",
    )?;
    let mut plan = Plan::new("export-finetune");
    plan.input("split", &split_path).output("finetune", &out);
    if ctx.stop_after(&plan) {
        return Ok(());
    }
    let split = read_split(&split_path, SplitName::TrainAd, ParseOptions::default()).map_err(input_err)?;
    let template = template_for(&split.language, a.template.as_ref(), ctx)?;
    let count = export_finetune_dataset(&split, &template, &out).map_err(runtime_err)?;
    print_summary(json!({"command": "export-finetune", "written": count.written, "skipped": count.skipped}));
    Ok(())
}

fn cmd_export_config(ctx: &Ctx, a: ExportConfigArgs) -> Result<(), CliError> {
    let out = required(
        a.out.as_ref(),
        ctx.cfg.paths.trainer_config.as_ref(),
        "paths.trainer_config",
        "--out",
    )?;
    let mut plan = Plan::new("export-config");
    plan.output("trainer_config", &out)
        .setting("overrides", &ctx.cfg.trainer);
    if ctx.stop_after(&plan) {
        return Ok(());
    }
    let cfg = export_trainer_config(&ctx.cfg.trainer, &out).map_err(|e| match e {
        crate::prompting::PromptError::InvalidConfig(m) => config_err("trainer", m),
        other => runtime_err(other),
    })?;
    print_summary(json!({"command": "export-config", "config": cfg}));
    Ok(())
}

fn cmd_generate(ctx: &Ctx, a: GenerateArgs) -> Result<(), CliError> {
    let split_path = required_input(a.split.as_ref(), ctx.cfg.paths.test.as_ref(), "paths.test", "--split")?;
    let out = required(
        a.out.as_ref(),
        ctx.cfg.paths.generations.as_ref(),
        "paths.generations",
        "--out",
    )?;
    let ep = endpoint(ctx.cfg.generation_endpoint.as_ref(), &a.endpoint, "generation_endpoint")?;
    let mut plan = Plan::new("generate");
    plan.input("split", &split_path)
        .output("generations", &out)
        .setting("endpoint", &ep)
        .setting("generation", &ctx.cfg.generation)
        .setting("novel_only", a.novel_only);
    if let Some(c) = a.endpoint.cache.as_ref().or(ctx.cfg.paths.cache.as_ref()) {
        plan.output("cache", c);
    }
    if ctx.stop_after(&plan) {
        return Ok(());
    }

    let split = read_split(&split_path, SplitName::Test, ParseOptions::default()).map_err(input_err)?;
    let template = template_for(&split.language, a.template.as_ref(), ctx)?;
    let mut keys: Vec<(String, String, usize)> = Vec::new();
    let mut prompts = Vec::new();
    let mut seen: HashMap<(&str, &str), usize> = HashMap::new();
    for r in split.records.iter().filter(|r| !a.novel_only || r.is_novel_sense) {
        let n = seen.entry((r.word.as_str(), r.sense_id.as_str())).or_insert(0);
        keys.push((r.word.clone(), r.sense_id.clone(), *n));
        *n += 1;
        prompts.push(crate::prompting::build_prompt(r, &template).map_err(input_err)?);
    }
    if prompts.is_empty() {
        return Err(CliError::Input(format!(
            "{}: no usages to generate for",
            split_path.display()
        )));
    }
    let client =
        InferenceClient::new(ep, open_cache(&a.endpoint, ctx)?).map_err(|e| config_err("generation_endpoint", e))?;
    let results = runtime()?
        .block_on(client.generate_definitions(&prompts, &ctx.cfg.generation))
        .map_err(runtime_err)?;
    let mut failures = 0;
    let rows: Vec<GenerationRow> = keys
        .into_iter()
        .zip(results)
        .map(|((word, sense_id, usage_index), r)| {
            let definition = match r {
                Ok(text) => Some(text),
                Err(e) => {
                    failures += 1;
                    log::warn!("{word}/{sense_id} usage {usage_index}: generation failed: {e}");
                    None
                }
            };
            GenerationRow {
                word,
                sense_id,
                usage_index,
                definition,
            }
        })
        .collect();
    write_generations(&rows, &out).map_err(runtime_err)?;
    let stats = client.stats();
    print_summary(json!({
        "command": "generate",
        "usages": rows.len(),
        "failed": failures,
        "http_requests": stats.http_requests,
        "cache_hits": stats.cache_hits,
    }));
    if failures == rows.len() {
        return Err(CliError::Runtime("every generation failed".into()));
    }
    Ok(())
}

fn cmd_aggregate(ctx: &Ctx, a: AggregateArgs) -> Result<(), CliError> {
    let generations = required_input(
        a.generations.as_ref(),
        ctx.cfg.paths.generations.as_ref(),
        "paths.generations",
        "--generations",
    )?;
    let vectors = a
        .vectors
        .as_ref()
        .or(ctx.cfg.paths.vectors.as_ref())
        .map(|p| existing(p.clone(), "paths.vectors"))
        .transpose()?;
    let ep = match vectors {
        Some(_) => None,
        None => Some(endpoint(
            ctx.cfg.embedding_endpoint.as_ref(),
            &a.endpoint,
            "embedding_endpoint",
        )?),
    };
    let ordering = a.ordering.unwrap_or(ctx.cfg.ordering);
    let out = required(
        a.out.as_ref(),
        ctx.cfg.paths.predictions.as_ref(),
        "paths.predictions",
        "--out",
    )?;
    let mut plan = Plan::new("aggregate");
    plan.input("generations", &generations)
        .output("predictions", &out)
        .setting("ordering", ordering);
    match (&vectors, &ep) {
        (Some(v), _) => {
            plan.input("vectors", v);
        }
        (None, Some(ep)) => {
            plan.setting("embedding_endpoint", ep);
        }
        (None, None) => unreachable!(),
    }
    if ctx.stop_after(&plan) {
        return Ok(());
    }

    let rows = read_generations(&generations).map_err(input_err)?;
    let mut order: Vec<(String, String)> = Vec::new();
    let mut by_sense: HashMap<(String, String), Vec<Option<String>>> = HashMap::new();
    for r in rows {
        let key = (r.word, r.sense_id);
        if !by_sense.contains_key(&key) {
            order.push(key.clone());
        }
        by_sense.entry(key).or_default().push(r.definition);
    }
    let mut texts: Vec<String> = by_sense
        .values()
        .flatten()
        .flatten()
        .map(|t| t.trim().to_owned())
        .filter(|t| !t.is_empty())
        .collect();
    texts.sort();
    texts.dedup();
    let table = match (&vectors, ep) {
        (Some(p), _) => read_vectors(p).map_err(input_err)?,
        (None, Some(ep)) if !texts.is_empty() => {
            let client = InferenceClient::new(ep, open_cache(&a.endpoint, ctx)?)
                .map_err(|e| config_err("embedding_endpoint", e))?;
            let vs = runtime()?.block_on(client.embed_texts(&texts)).map_err(runtime_err)?;
            texts.iter().cloned().zip(vs).collect()
        }
        _ => HashMap::new(),
    };
    let groups = order
        .iter()
        .map(|k| SenseGroup::from_generations(&k.0, &k.1, &by_sense[k], |t| table.get(t).cloned()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(input_err)?;
    let (mut assignments, warnings) = assign_all(groups, ordering).map_err(input_err)?;
    warnings.iter().for_each(|w| log::warn!("{w}"));
    assignments.sort_by(|x, y| (&x.word, &x.sense_id).cmp(&(&y.word, &y.sense_id)));
    let preds: Vec<Prediction> = assignments
        .iter()
        .map(|s| Prediction {
            word: s.word.clone(),
            sense_id: s.sense_id.clone(),
            definition: s.label.clone(),
        })
        .collect();
    write_predictions(&preds, &out).map_err(runtime_err)?;
    print_summary(json!({
        "command": "aggregate",
        "senses": order.len(),
        "labeled": preds.len(),
        "fallbacks": assignments.iter().filter(|s| s.fallback).count(),
        "warnings": warnings.len(),
    }));
    Ok(())
}

fn cmd_score(ctx: &Ctx, a: ScoreArgs) -> Result<(), CliError> {
    let pred = required_input(
        a.pred.as_ref(),
        ctx.cfg.paths.predictions.as_ref(),
        "paths.predictions",
        "--pred",
    )?;
    let gold_cfg = ctx.cfg.paths.gold.as_ref().or(ctx.cfg.paths.test.as_ref());
    let gold = required_input(a.gold.as_ref(), gold_cfg, "paths.gold", "--gold")?;
    let out = required(a.out.as_ref(), ctx.cfg.paths.report.as_ref(), "paths.report", "--out")?;
    let format = a.format.unwrap_or_else(|| ReportFormat::from_path(&out));
    let configured = ctx.cfg.embedding_endpoint.is_some() || a.endpoint.base_url.is_some();
    let choice = a.token_embedder.unwrap_or(if configured {
        TokenEmbedderChoice::Endpoint
    } else {
        TokenEmbedderChoice::Lexical
    });
    let ep = match choice {
        TokenEmbedderChoice::Endpoint => Some(endpoint(
            ctx.cfg.embedding_endpoint.as_ref(),
            &a.endpoint,
            "embedding_endpoint",
        )?),
        TokenEmbedderChoice::Lexical => None,
    };
    let mut plan = Plan::new("score");
    plan.input("predictions", &pred)
        .input("gold", &gold)
        .output("report", &out)
        .setting("format", format)
        .setting("token_embedder", format!("{choice:?}").to_lowercase());
    if ctx.stop_after(&plan) {
        return Ok(());
    }

    let preds = read_preds(&pred)?;
    let gold_items = read_gold(&gold)?;
    let lexical = LexicalTokenEmbedder::default();
    let mut table = TokenEmbeddingTable::default();
    let embedder: &dyn TokenEmbedder = match ep {
        None => &lexical,
        Some(ep) => {
            let mut texts: Vec<String> = gold_items
                .iter()
                .map(|g| g.definition.clone())
                .chain(preds.iter().map(|p| p.definition.clone()))
                .filter(|t| !t.trim().is_empty())
                .collect();
            texts.sort();
            texts.dedup();
            let client = InferenceClient::new(ep, open_cache(&a.endpoint, ctx)?)
                .map_err(|e| config_err("embedding_endpoint", e))?;
            let results = runtime()?.block_on(client.embed_tokens_many(&texts));
            for (t, r) in texts.into_iter().zip(results) {
                match r {
                    Ok(e) => table.insert(t, e),
                    Err(e) => log::warn!("token embeddings for {t:?} failed: {e}"),
                }
            }
            &table
        }
    };
    let mut report = score_predictions(
        &preds,
        &gold_items,
        embedder,
        ScoreOptions {
            stem_min: ctx.stem_min(),
        },
    );
    report.system = a.system.clone();
    write_text(&out, &render_report(&report, format))?;
    print_summary(json!({
        "command": "score",
        "aggregates": report.aggregates,
        "coverage": report.coverage,
        "warnings": report.warnings.len(),
    }));
    Ok(())
}

fn cmd_compare(ctx: &Ctx, a: CompareArgs) -> Result<(), CliError> {
    let ra = existing(a.a.clone(), "--a")?;
    let rb = existing(a.b.clone(), "--b")?;
    let mut plan = Plan::new("compare");
    plan.input("a", &ra).input("b", &rb).setting("metric", a.metric);
    if let Some(o) = &a.out {
        plan.output("result", o);
    }
    if ctx.stop_after(&plan) {
        return Ok(());
    }
    let ra = read_report(&ra).map_err(input_err)?;
    let rb = read_report(&rb).map_err(input_err)?;
    let (t, warnings) = compare_systems(&ra, &rb, a.metric).map_err(input_err)?;
    let result = json!({"command": "compare", "metric": a.metric, "ttest": t, "warnings": warnings});
    if let Some(o) = &a.out {
        write_text(
            o,
            &(serde_json::to_string_pretty(&result).expect("result serializes") + "\n"),
        )?;
    }
    print_summary(result);
    Ok(())
}

fn cmd_analyze(ctx: &Ctx, a: AnalyzeArgs) -> Result<(), CliError> {
    let pred = required_input(
        a.pred.as_ref(),
        ctx.cfg.paths.predictions.as_ref(),
        "paths.predictions",
        "--pred",
    )?;
    let gold_cfg = ctx.cfg.paths.gold.as_ref().or(ctx.cfg.paths.test.as_ref());
    let gold = required_input(a.gold.as_ref(), gold_cfg, "paths.gold", "--gold")?;
    // a configured label file may not exist before annotation starts
    let labels = match (&a.labels, &ctx.cfg.paths.labels) {
        (Some(p), _) => Some(existing(p.clone(), "paths.labels")?),
        (None, Some(p)) if p.exists() => Some(p.clone()),
        (None, Some(p)) => {
            log::warn!(
                "label file {} does not exist yet; fluency and adequacy are reported as absent",
                p.display()
            );
            None
        }
        (None, None) => None,
    };
    let out = a.out.as_ref().or(ctx.cfg.paths.analysis.as_ref()).cloned();
    let mut plan = Plan::new("analyze");
    plan.input("predictions", &pred)
        .input("gold", &gold)
        .setting("stem_min", ctx.stem_min());
    if let Some(l) = &labels {
        plan.input("labels", l);
    }
    if let Some(o) = &out {
        plan.output("analysis", o);
    }
    if ctx.stop_after(&plan) {
        return Ok(());
    }
    let preds = read_preds(&pred)?;
    let gold_items = read_gold(&gold)?;
    let label_list = labels
        .as_ref()
        .map(|p| LabelStore::open(p).map(|s| s.effective()))
        .transpose()
        .map_err(input_err)?;
    let summary = error_report(&preds, &gold_items, ctx.stem_min(), label_list.as_deref());
    let body = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
    if let Some(o) = &out {
        write_text(o, &body)?;
    }
    print_summary(json!({"command": "analyze", "summary": summary}));
    Ok(())
}

struct Sampling {
    pred: PathBuf,
    gold: Option<PathBuf>,
    n: usize,
    seed: u64,
    tag: String,
}

fn sample_from(ctx: &Ctx, s: &SamplingFlags) -> Result<(Plan, Sampling), CliError> {
    let pred = required_input(
        s.pred.as_ref(),
        ctx.cfg.paths.predictions.as_ref(),
        "paths.predictions",
        "--pred",
    )?;
    let gold_cfg = ctx.cfg.paths.gold.as_ref().or(ctx.cfg.paths.test.as_ref());
    let gold = s
        .gold
        .as_ref()
        .or(gold_cfg)
        .map(|p| existing(p.clone(), "paths.gold"))
        .transpose()?;
    let n = s.sample_n.unwrap_or(ctx.cfg.annotation.sample_n);
    let seed = s.seed.unwrap_or(ctx.cfg.annotation.seed);
    let tag = s
        .model_tag
        .clone()
        .unwrap_or_else(|| ctx.cfg.annotation.model_tag.clone());
    let mut plan = Plan::new("annotate");
    plan.input("predictions", &pred)
        .setting("sample_n", n)
        .setting("seed", seed)
        .setting("model_tag", &tag);
    if let Some(g) = &gold {
        plan.input("gold", g);
    }
    Ok((
        plan,
        Sampling {
            pred,
            gold,
            n,
            seed,
            tag,
        },
    ))
}

fn draw_tasks(ctx: &Ctx, s: &Sampling) -> Result<Vec<AnnotationTask>, CliError> {
    let preds = read_preds(&s.pred)?;
    let (gold_items, split) = match &s.gold {
        Some(g) => {
            let split = read_split(g, SplitName::Test, ParseOptions::default()).map_err(input_err)?;
            (load_gold(&split).0, Some(split))
        }
        None => (Vec::new(), None),
    };
    let mut tasks =
        annotation::sample_tasks(&preds, &gold_items, s.n, s.seed, &s.tag, ctx.stem_min()).map_err(input_err)?;
    if let Some(split) = &split {
        annotation::attach_usages(&mut tasks, split);
    }
    Ok(tasks)
}

fn cmd_annotate_sample(ctx: &Ctx, a: AnnotateSampleArgs) -> Result<(), CliError> {
    let (mut plan, sampling) = sample_from(ctx, &a.sampling)?;
    let out = required(a.out.as_ref(), ctx.cfg.paths.tasks.as_ref(), "paths.tasks", "--out")?;
    plan.output("tasks", &out);
    if ctx.stop_after(&plan) {
        return Ok(());
    }
    let tasks = draw_tasks(ctx, &sampling)?;
    annotation::write_tasks(&tasks, &out).map_err(runtime_err)?;
    print_summary(json!({"command": "annotate sample", "tasks": tasks.len()}));
    Ok(())
}

fn cmd_annotate_serve(ctx: &Ctx, a: AnnotateServeArgs) -> Result<(), CliError> {
    let host = a.host.clone().unwrap_or_else(|| ctx.cfg.annotation.host.clone());
    let port = a.port.unwrap_or(ctx.cfg.annotation.port);
    let task_files: Vec<PathBuf> = if !a.tasks.is_empty() {
        a.tasks.clone()
    } else if a.sampling.pred.is_none() {
        ctx.cfg.paths.tasks.iter().cloned().collect()
    } else {
        Vec::new()
    };
    let labels = a.labels.as_ref().or(ctx.cfg.paths.labels.as_ref()).cloned();
    let (mut plan, sampling) = if task_files.is_empty() {
        let (plan, sampling) = sample_from(ctx, &a.sampling)?;
        (plan, Some(sampling))
    } else {
        let mut plan = Plan::new("annotate");
        for (i, t) in task_files.iter().enumerate() {
            plan.input(&format!("tasks[{i}]"), &existing(t.clone(), "paths.tasks")?);
        }
        (plan, None)
    };
    plan.setting("host", &host).setting("port", port);
    match &labels {
        Some(l) => plan.output("labels", l),
        None => plan.setting("labels", "in-memory"),
    };
    if ctx.stop_after(&plan) {
        return Ok(());
    }
    let tasks = match sampling {
        Some(s) => draw_tasks(ctx, &s)?,
        None => {
            let mut all = Vec::new();
            for t in &task_files {
                all.extend(annotation::read_tasks(t).map_err(input_err)?);
            }
            all
        }
    };
    let store = match &labels {
        Some(p) => LabelStore::open(p).map_err(input_err)?,
        None => {
            log::warn!("no label file configured; labels are kept in memory only");
            LabelStore::in_memory()
        }
    };
    let session = Arc::new(Session::new(tasks, store).map_err(input_err)?);
    runtime()?.block_on(async {
        let listener = annotation::bind(&host, port).await.map_err(|e| match e {
            annotation::AnnotationError::PortInUse(_) => config_err("annotation.port", e),
            other => runtime_err(other),
        })?;
        annotation::serve(session, listener).await.map_err(runtime_err)
    })
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .try_init();
}

/// Parses `args` (including the program name) and runs the command.
pub fn execute<I, T>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    Ok(())
                }
                _ => Err(CliError::Usage(e.render().to_string().trim().to_owned())),
            };
        }
    };
    init_logging(cli.verbose);
    let cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    let ctx = Ctx {
        cfg,
        dry_run: cli.dry_run,
    };
    match cli.command {
        Command::Prepare(a) => cmd_prepare(&ctx, a),
        Command::Curate(a) => cmd_curate(&ctx, a),
        Command::ExportFinetune(a) => cmd_export_finetune(&ctx, a),
        Command::ExportConfig(a) => cmd_export_config(&ctx, a),
        Command::Generate(a) => cmd_generate(&ctx, a),
        Command::Aggregate(a) => cmd_aggregate(&ctx, a),
        Command::Score(a) => cmd_score(&ctx, a),
        Command::Compare(a) => cmd_compare(&ctx, a),
        Command::Analyze(a) => cmd_analyze(&ctx, a),
        Command::Annotate(AnnotateCommand::Sample(a)) => cmd_annotate_sample(&ctx, a),
        Command::Annotate(AnnotateCommand::Serve(a)) => cmd_annotate_serve(&ctx, a),
    }
}

/// [`execute`] with errors reported on stderr; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match execute(args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}

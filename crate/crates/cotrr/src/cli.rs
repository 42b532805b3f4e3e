//! The `cotrr` command line.

use std::io::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{ConfigError, ConfigLayer, RunConfig};
use crate::manifest;
use crate::report::{compare, load_report};
use crate::retrieve;
use crate::run::{self, RunError};
use crate::store_io;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;
pub const EXIT_ABORTED: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "cotrr",
    version,
    about = "Training-free image re-ranking with a multimodal chat model"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write initial top-K rankings from the embedding stores to the
    /// candidates file.
    Retrieve(ConfigArgs),
    /// Re-rank every manifest query and write a run directory.
    Run(ConfigArgs),
    /// Compare the reports of one or more run directories.
    Report(ReportArgs),
    /// Check a manifest (and optionally its store) without running anything.
    ValidateManifest(ConfigArgs),
}

/// Settings shared by all run-style subcommands. Each flag has a config-file
/// key of the same name with `_` for `-` (`--metric` maps to `metrics`).
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// TOML config file (or a report.json, whose config block is reused).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Replay the configuration echoed in <RUN_DIR>/report.json.
    #[arg(long, value_name = "RUN_DIR")]
    pub replay: Option<PathBuf>,
    /// Task preset: flickr30k, mscoco, cirr, circo or visdial.
    #[arg(long)]
    pub profile: Option<String>,
    /// Manifest, one JSON record per line.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Image embedding store (`CTRREMB1` file with a `.ids` sidecar).
    #[arg(long)]
    pub image_store: Option<PathBuf>,
    /// Query embedding store; chat rounds use ids `<query_id>#r<t>`.
    #[arg(long)]
    pub query_store: Option<PathBuf>,
    /// Candidates file: read by `run`, written by `retrieve`.
    #[arg(long)]
    pub candidates: Option<PathBuf>,
    /// Directory holding the images named by candidate ids.
    #[arg(long)]
    pub image_root: Option<PathBuf>,
    /// Relevance labels for mock backends (default: labels.jsonl next to the manifest).
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// `http`, an API base URL, or `mock:<kind>:<seed>[:<param>]`.
    #[arg(long)]
    pub backend: Option<String>,
    /// API base URL for the http backend (also COTRR_BASE_URL).
    #[arg(long)]
    pub base_url: Option<String>,
    /// Model identifier sent with every request.
    #[arg(long)]
    pub model: Option<String>,
    /// Sampling temperature (default 0).
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Candidates re-ranked per query (default from the profile).
    #[arg(long)]
    pub k_rerank: Option<usize>,
    /// Subset candidates re-ranked (subset profiles).
    #[arg(long)]
    pub k_subset: Option<usize>,
    /// Depth of the initial ranking (default max(k_rerank, 50)).
    #[arg(long)]
    pub depth: Option<usize>,
    /// Metric such as recall@1 or map@5; repeat to score several.
    #[arg(long = "metric", value_name = "METRIC@K")]
    pub metrics: Vec<String>,
    /// Pipeline mode: R, R+D, R+E or R+D+E.
    #[arg(long)]
    pub mode: Option<String>,
    /// Maximum concurrent backend requests and query workers.
    #[arg(long)]
    pub parallelism: Option<usize>,
    /// Response cache directory (also COTRR_CACHE_DIR).
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    /// Run directory for report.json, per_query.jsonl, transcript.jsonl, chart.csv.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Abort when more than this fraction of queries fail (default 0.1).
    #[arg(long)]
    pub max_failure_rate: Option<f64>,
    /// Attach candidate images to the evaluation-based ranking call.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub attach_thumbnails: Option<bool>,
    /// Directory of prompt template overrides.
    #[arg(long)]
    pub prompt_dir: Option<PathBuf>,
    /// Free-form label for the embedding backbone.
    #[arg(long)]
    pub backbone: Option<String>,
    /// Per-request timeout in seconds.
    #[arg(long)]
    pub timeout_secs: Option<u64>,
}

impl ConfigArgs {
    pub fn layer(&self) -> ConfigLayer {
        ConfigLayer {
            profile: self.profile.clone(),
            manifest: self.manifest.clone(),
            image_store: self.image_store.clone(),
            query_store: self.query_store.clone(),
            candidates: self.candidates.clone(),
            image_root: self.image_root.clone(),
            labels: self.labels.clone(),
            backend: self.backend.clone(),
            base_url: self.base_url.clone(),
            model: self.model.clone(),
            temperature: self.temperature,
            k_rerank: self.k_rerank,
            k_subset: self.k_subset,
            depth: self.depth,
            metrics: (!self.metrics.is_empty()).then(|| self.metrics.clone()),
            mode: self.mode.clone(),
            parallelism: self.parallelism,
            cache_dir: self.cache_dir.clone(),
            output_dir: self.output_dir.clone(),
            max_failure_rate: self.max_failure_rate,
            attach_thumbnails: self.attach_thumbnails,
            prompt_dir: self.prompt_dir.clone(),
            backbone: self.backbone.clone(),
            timeout_secs: self.timeout_secs,
        }
    }

    /// Flags over file over environment over defaults.
    pub fn effective(&self, env: impl Fn(&str) -> Option<String>) -> Result<ConfigLayer, ConfigError> {
        let mut file = ConfigLayer::default();
        if let Some(dir) = &self.replay {
            file = ConfigLayer::from_file(&dir.join(crate::report::REPORT_FILE))?;
        }
        if let Some(path) = &self.config {
            file = ConfigLayer::from_file(path)?.over(file);
        }
        Ok(self.layer().over(file.over(ConfigLayer::from_env(env))))
    }

    pub fn resolve(&self) -> Result<RunConfig, ConfigError> {
        RunConfig::resolve(self.effective(|k| std::env::var(k).ok())?)
    }
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Run directories; the first is the main run, the rest are compared to it.
    #[arg(required = true, value_name = "RUN_DIR")]
    pub runs: Vec<PathBuf>,
    /// Write the merged chart CSV here instead of after the table.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

fn fail(code: i32, message: impl std::fmt::Display) -> i32 {
    eprintln!("error: {message}");
    code
}

fn cmd_run(args: &ConfigArgs) -> i32 {
    let config = match args.resolve() {
        Ok(c) => c,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    match run::run(&config) {
        Ok(output) => {
            let r = &output.report;
            println!(
                "{} [{}]: {} queries, {} scored, {} failed -> {}",
                r.config.profile,
                r.mode,
                r.counters.queries,
                r.counters.scored,
                r.counters.failed,
                config.output_dir.display()
            );
            let rounds = (0..)
                .take_while(|t| r.aggregates.keys().any(|k| k.ends_with(&format!("@round{t}"))))
                .count();
            for spec in &config.metrics {
                let keys = crate::report::metric_keys(spec, rounds.max(1));
                let shown = match keys.len() {
                    0..=2 => keys,
                    n => vec![keys[0].clone(), keys[n - 1].clone()],
                };
                for key in shown {
                    if let (Some(v), Some(i)) = (r.aggregates.get(&key), r.initial_aggregates.get(&key)) {
                        println!("  {key:<28} {v:.4}  (initial {i:.4})");
                    }
                }
            }
            EXIT_OK
        }
        Err(e @ RunError::Aborted { .. }) => fail(
            EXIT_ABORTED,
            format!("{e}; outputs written to {}", config.output_dir.display()),
        ),
        Err(e) => fail(e.exit_code(), e),
    }
}

fn cmd_retrieve(args: &ConfigArgs) -> i32 {
    let layer = match args.effective(|k| std::env::var(k).ok()) {
        Ok(l) => l,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let Some(out_path) = layer.candidates.clone() else {
        return fail(EXIT_CONFIG, ConfigError::Missing("candidates"));
    };
    let (Some(image_path), Some(query_path)) = (layer.image_store.clone(), layer.query_store.clone()) else {
        return fail(EXIT_CONFIG, "retrieve needs both --image-store and --query-store");
    };
    let config = match RunConfig::resolve(ConfigLayer {
        backend: Some("mock:oracle:0".into()),
        ..layer
    }) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let records = match manifest::load_manifest(&config.manifest) {
        Ok(r) => r,
        Err(e) => return fail(EXIT_VALIDATION, e),
    };
    let loaded = store_io::load_store(&image_path).and_then(|i| Ok((i, store_io::load_store(&query_path)?)));
    let (images, queries) = match loaded {
        Ok(pair) => pair,
        Err(e) => return fail(EXIT_VALIDATION, e),
    };
    if let Err(e) = manifest::check_against_store(&records, &images) {
        return fail(EXIT_VALIDATION, e);
    }
    let text = match retrieve::retrieve_all(&records, &images, &queries, config.depth) {
        Ok(t) => t,
        Err(e) => return fail(EXIT_VALIDATION, e),
    };
    if let Err(e) = std::fs::write(&out_path, text) {
        return fail(EXIT_FAILURE, format!("cannot write {}: {e}", out_path.display()));
    }
    println!(
        "wrote {} rankings of depth {} to {}",
        records.len(),
        config.depth,
        out_path.display()
    );
    EXIT_OK
}

fn cmd_validate(args: &ConfigArgs) -> i32 {
    let layer = match args.effective(|k| std::env::var(k).ok()) {
        Ok(l) => l,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let Some(path) = layer.manifest.clone() else {
        return fail(EXIT_CONFIG, ConfigError::Missing("manifest"));
    };
    let records = match manifest::load_manifest(&path) {
        Ok(r) => r,
        Err(e) => return fail(EXIT_VALIDATION, format!("{}: {e}", path.display())),
    };
    if let Some(name) = &layer.profile {
        match cotrr_core::TaskProfile::preset(name) {
            Ok(p) => {
                if let Err(e) = manifest::check_task(&records, p.task) {
                    return fail(EXIT_VALIDATION, e);
                }
            }
            Err(e) => return fail(EXIT_CONFIG, e),
        }
    }
    if let Some(store_path) = &layer.image_store {
        let store = match store_io::load_store(store_path) {
            Ok(s) => s,
            Err(e) => return fail(EXIT_VALIDATION, e),
        };
        if let Err(e) = manifest::check_against_store(&records, &store) {
            return fail(EXIT_VALIDATION, e);
        }
    }
    println!("{}: {} valid records", path.display(), records.len());
    EXIT_OK
}

fn cmd_report(args: &ReportArgs) -> i32 {
    let mut runs = Vec::new();
    for dir in &args.runs {
        match load_report(dir) {
            Ok(r) => runs.push((dir.clone(), r)),
            Err(e) => return fail(EXIT_VALIDATION, e),
        }
    }
    let comparison = compare(&runs);
    for w in &comparison.warnings {
        eprintln!("warning: incompatible metric sets: {w}");
    }
    let mut stdout = std::io::stdout().lock();
    let _ = stdout.write_all(comparison.table.as_bytes());
    match &args.csv {
        Some(path) => {
            if let Err(e) = std::fs::write(path, &comparison.csv) {
                return fail(EXIT_FAILURE, format!("cannot write {}: {e}", path.display()));
            }
        }
        None => {
            let _ = write!(stdout, "\n# chart\n{}", comparison.csv);
        }
    }
    EXIT_OK
}

/// Runs the parsed command and returns the process exit code.
pub fn dispatch(cli: &Cli) -> i32 {
    match &cli.command {
        Command::Retrieve(a) => cmd_retrieve(a),
        Command::Run(a) => cmd_run(a),
        Command::Report(a) => cmd_report(a),
        Command::ValidateManifest(a) => cmd_validate(a),
    }
}

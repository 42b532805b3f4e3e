//! End-to-end runs: initial ranking, re-ranking of the top K, splicing,
//! scoring, and the run directory.
//!
//! Queries are processed by a bounded worker pool; everything written to
//! disk is assembled afterwards in manifest order, so output bytes do not
//! depend on scheduling.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use cotrr_core::harness::{chat_query_for_round, splice_ranking, ManifestRecord};
use cotrr_core::metrics::{
    average_precision_at_k, dialogue_hits, filter_to_subset, mean, pad_rounds, recall_at_k, recall_subset_at_k,
    HitsVariant, MetricKind,
};
use cotrr_core::pipeline::{ImageSource, Pipeline, PipelineConfig, RerankOutcome, TranscriptEntry};
use cotrr_core::{ChatBackend, EmbeddingStore, Query, TaskKind};
use serde::Serialize;
use thiserror::Error;

use crate::backend::{BackendSpec, Client, DiskCache, HttpTransport, Labels, MockTransport, Transport, API_KEY_ENV};
use crate::config::{ConfigError, RunConfig};
use crate::images::{FileImageSource, PlaceholderImages};
use crate::manifest::{self, Numbered};
use crate::report::{
    chart_csv, metric_keys, Counters, MetricReport, QueryRecord, RerankRecord, CHART_FILE, PER_QUERY_FILE, REPORT_FILE,
    REPORT_FORMAT, TRANSCRIPT_FILE,
};
use crate::retrieve::{self, round_id};
use crate::store_io;

pub const LABELS_FILE: &str = "labels.jsonl";

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Validation(String),
    #[error("run aborted: {failed} of {total} queries failed (limit {limit:.0}%)")]
    Aborted { failed: usize, total: usize, limit: f64 },
    #[error("cannot write {path}: {message}")]
    Write { path: PathBuf, message: String },
}

impl RunError {
    /// Process exit code for the command line.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Validation(_) => 3,
            Self::Aborted { .. } => 4,
            Self::Write { .. } => 1,
        }
    }
}

fn validation(e: impl ToString) -> RunError {
    RunError::Validation(e.to_string())
}

/// Where initial rankings come from. Per query, the first source that has
/// one wins: the manifest's own `candidates` / `round_candidates`, then the
/// candidates file, then exact search over the stores.
#[derive(Default)]
pub struct InitialRankings {
    pub file: Option<HashMap<String, Vec<String>>>,
    pub stores: Option<(EmbeddingStore, EmbeddingStore)>,
    pub depth: usize,
}

impl InitialRankings {
    fn lookup_ids(&self, record: &ManifestRecord, round: Option<usize>) -> Vec<String> {
        let mut ids = Vec::new();
        if let Some(t) = round {
            ids.push(round_id(&record.query_id, t));
        }
        ids.push(record.query_id.clone());
        ids
    }

    pub fn for_query(&self, record: &ManifestRecord, round: Option<usize>) -> Result<Vec<String>, String> {
        if let Some(t) = round {
            if let Some(list) = record.round_candidates.as_ref().and_then(|r| r.get(t)) {
                return Ok(list.clone());
            }
        }
        if let Some(list) = &record.candidates {
            return Ok(list.clone());
        }
        let ids = self.lookup_ids(record, round);
        if let Some(file) = &self.file {
            if let Some(list) = ids.iter().find_map(|id| file.get(id)) {
                return Ok(list.clone());
            }
        }
        if let Some((images, queries)) = &self.stores {
            if let Some(vector) = ids.iter().find_map(|id| queries.vector(id)) {
                return images
                    .top_k(vector, self.depth)
                    .map(|c| c.ids())
                    .map_err(|e| e.to_string());
            }
        }
        Err(format!("no initial ranking for `{}`", ids[0]))
    }
}

/// A transcript entry tagged with the part of the run it belongs to.
#[derive(Debug, Clone, Serialize)]
pub struct TranscriptLine {
    pub phase: &'static str,
    #[serde(flatten)]
    pub entry: TranscriptEntry,
}

pub struct RunOutput {
    pub report: MetricReport,
    pub transcript: Vec<TranscriptLine>,
}

impl RunOutput {
    pub fn per_query_jsonl(&self) -> String {
        let mut out = String::new();
        for q in &self.report.per_query {
            let _ = writeln!(out, "{}", serde_json::to_string(q).expect("serializable"));
        }
        out
    }

    pub fn transcript_jsonl(&self) -> String {
        let mut out = String::new();
        for t in &self.transcript {
            let _ = writeln!(out, "{}", serde_json::to_string(t).expect("serializable"));
        }
        out
    }

    pub fn report_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.report).expect("serializable");
        s.push('\n');
        s
    }

    /// Writes `report.json`, `per_query.jsonl`, `transcript.jsonl` and
    /// `chart.csv` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), RunError> {
        let write = |name: &str, body: String| {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| RunError::Write {
                path,
                message: e.to_string(),
            })
        };
        std::fs::create_dir_all(dir).map_err(|e| RunError::Write {
            path: dir.to_path_buf(),
            message: e.to_string(),
        })?;
        write(REPORT_FILE, self.report_json())?;
        write(PER_QUERY_FILE, self.per_query_jsonl())?;
        write(TRANSCRIPT_FILE, self.transcript_jsonl())?;
        write(CHART_FILE, chart_csv(&self.report))
    }
}

struct QueryResult {
    record: QueryRecord,
    transcript: Vec<TranscriptLine>,
    /// Target rank per round (chat), for Hits after padding.
    round_ranks: Vec<usize>,
    initial_round_ranks: Vec<usize>,
}

fn target_rank(ranking: &[String], gts: &BTreeSet<String>) -> Option<usize> {
    ranking.iter().position(|id| gts.contains(id)).map(|p| p + 1)
}

struct Runner<'a, B: ?Sized, I: ?Sized> {
    config: &'a RunConfig,
    pipeline: Pipeline<'a, B, I>,
    initial: &'a InitialRankings,
}

impl<B, I> Runner<'_, B, I>
where
    B: ChatBackend + ?Sized,
    I: ImageSource + ?Sized,
{
    fn rerank(
        &self,
        query_id: &str,
        query: &Query,
        initial: &[String],
        k: usize,
        prior: Option<&RerankOutcome>,
    ) -> Result<(RerankOutcome, Vec<String>), String> {
        let prefix = &initial[..k.min(initial.len())];
        let outcome = self
            .pipeline
            .rerank_reusing(query_id, query, prefix, self.config.mode, prior)
            .map_err(|e| e.to_string())?;
        let spliced = splice_ranking(initial, &outcome.ranked).map_err(|e| e.to_string())?;
        Ok((outcome, spliced))
    }

    fn initial(&self, record: &ManifestRecord, round: Option<usize>) -> Result<Vec<String>, String> {
        let list = self.initial.for_query(record, round)?;
        if list.len() < self.config.k_rerank {
            return Err(format!(
                "initial ranking has {} candidates, fewer than k_rerank = {}",
                list.len(),
                self.config.k_rerank
            ));
        }
        Ok(list)
    }

    fn process(&self, record: &ManifestRecord) -> QueryResult {
        let mut transcript = Vec::new();
        let outcome = match record.task {
            TaskKind::Chat => self.process_chat(record, &mut transcript),
            _ => self.process_single(record, &mut transcript),
        };
        match outcome {
            Ok((record, round_ranks, initial_round_ranks)) => QueryResult {
                record,
                transcript,
                round_ranks,
                initial_round_ranks,
            },
            Err(e) => QueryResult {
                record: QueryRecord::failed(&record.query_id, record.task, e),
                transcript,
                round_ranks: Vec::new(),
                initial_round_ranks: Vec::new(),
            },
        }
    }

    fn process_single(
        &self,
        record: &ManifestRecord,
        transcript: &mut Vec<TranscriptLine>,
    ) -> Result<(QueryRecord, Vec<usize>, Vec<usize>), String> {
        let query = record.query().map_err(|e| e.to_string())?;
        let initial = self.initial(record, None)?;
        let k = self.config.k_rerank;
        let gts: BTreeSet<String> = record.ground_truth.iter().cloned().collect();
        let (outcome, spliced) = self.rerank(&record.query_id, &query, &initial, k, None)?;
        transcript.extend(
            outcome
                .transcript
                .iter()
                .cloned()
                .map(|entry| TranscriptLine { phase: "full", entry }),
        );
        let mut rerank = RerankRecord::new(None, &initial[..k], &outcome);
        rerank.target_rank = target_rank(&spliced, &gts);
        rerank.initial_target_rank = target_rank(&initial, &gts);

        let mut metrics = BTreeMap::new();
        let mut initial_metrics = BTreeMap::new();
        let mut subset_record = None;
        let mut subset_ranking: Option<(Vec<String>, Vec<String>)> = None;
        let needs_subset = self.config.metrics.iter().any(|m| m.kind == MetricKind::RecallSubset);
        if needs_subset {
            let subset = record
                .subset
                .as_ref()
                .ok_or_else(|| "record has no subset for recall_subset".to_string())?;
            let (filtered, _) = filter_to_subset(&initial, subset);
            let filtered: Vec<String> = filtered.into_iter().cloned().collect();
            let ks = self.config.k_subset.unwrap_or(filtered.len()).min(filtered.len());
            let (sub_outcome, sub_spliced) = self.rerank(&record.query_id, &query, &filtered, ks, Some(&outcome))?;
            transcript.extend(
                sub_outcome
                    .transcript
                    .iter()
                    .cloned()
                    .map(|entry| TranscriptLine { phase: "subset", entry }),
            );
            let mut sub = RerankRecord::new(None, &filtered[..ks], &sub_outcome);
            sub.target_rank = target_rank(&sub_spliced, &gts);
            sub.initial_target_rank = target_rank(&filtered, &gts);
            subset_record = Some(sub);
            subset_ranking = Some((filtered, sub_spliced));
        }

        for spec in &self.config.metrics {
            let key = spec.key();
            let (after, before) = match spec.kind {
                MetricKind::Recall => (recall_at_k(&spliced, &gts, spec.k), recall_at_k(&initial, &gts, spec.k)),
                MetricKind::MeanAveragePrecision => (
                    average_precision_at_k(&spliced, &gts, spec.k),
                    average_precision_at_k(&initial, &gts, spec.k),
                ),
                MetricKind::RecallSubset => {
                    let subset = record.subset.as_ref().expect("checked above");
                    let (before, after) = subset_ranking.as_ref().expect("computed above");
                    (
                        recall_subset_at_k(after, subset, &gts, spec.k).map(|r| r.value),
                        recall_subset_at_k(before, subset, &gts, spec.k).map(|r| r.value),
                    )
                }
                MetricKind::Hits(_) => continue,
            };
            metrics.insert(key.clone(), after.map_err(|e| e.to_string())?);
            initial_metrics.insert(key, before.map_err(|e| e.to_string())?);
        }
        Ok((
            QueryRecord {
                query_id: record.query_id.clone(),
                task: record.task,
                error: None,
                metrics,
                initial_metrics,
                reranks: vec![rerank],
                subset: subset_record,
                padded_rounds: 0,
            },
            Vec::new(),
            Vec::new(),
        ))
    }

    fn process_chat(
        &self,
        record: &ManifestRecord,
        transcript: &mut Vec<TranscriptLine>,
    ) -> Result<(QueryRecord, Vec<usize>, Vec<usize>), String> {
        let gts: BTreeSet<String> = record.ground_truth.iter().cloned().collect();
        let k = self.config.k_rerank;
        let mut reranks = Vec::new();
        let mut ranks = Vec::new();
        let mut initial_ranks = Vec::new();
        for t in 0..record.round_count() {
            let query = chat_query_for_round(record, t).map_err(|e| e.to_string())?;
            let initial = self.initial(record, Some(t))?;
            let qid = round_id(&record.query_id, t);
            let (outcome, spliced) = self.rerank(&qid, &query, &initial, k, None)?;
            transcript.extend(
                outcome
                    .transcript
                    .iter()
                    .cloned()
                    .map(|entry| TranscriptLine { phase: "round", entry }),
            );
            let mut rerank = RerankRecord::new(Some(t), &initial[..k], &outcome);
            rerank.target_rank = target_rank(&spliced, &gts);
            rerank.initial_target_rank = target_rank(&initial, &gts);
            // A target outside the ranking counts as one past its end.
            ranks.push(rerank.target_rank.unwrap_or(spliced.len() + 1));
            initial_ranks.push(rerank.initial_target_rank.unwrap_or(initial.len() + 1));
            reranks.push(rerank);
        }
        Ok((
            QueryRecord {
                query_id: record.query_id.clone(),
                task: record.task,
                error: None,
                metrics: BTreeMap::new(),
                initial_metrics: BTreeMap::new(),
                reranks,
                subset: None,
                padded_rounds: 0,
            },
            ranks,
            initial_ranks,
        ))
    }
}

/// Runs every record through the pipeline and assembles the report.
pub fn execute<B, I>(
    config: &RunConfig,
    pipeline_config: &PipelineConfig,
    records: &[Numbered],
    initial: &InitialRankings,
    backend: &B,
    images: &I,
) -> RunOutput
where
    B: ChatBackend + Sync + ?Sized,
    I: ImageSource + Sync + ?Sized,
{
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<QueryResult>>> = records.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..config.parallelism.min(records.len()).max(1) {
            scope.spawn(|| {
                let runner = Runner {
                    config,
                    pipeline: Pipeline::new(backend, images, pipeline_config),
                    initial,
                };
                loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(n) = records.get(i) else { break };
                    let result = runner.process(&n.record);
                    *slots[i].lock().expect("slot poisoned") = Some(result);
                }
            });
        }
    });
    let mut results: Vec<QueryResult> = slots
        .into_iter()
        .map(|s| s.into_inner().expect("slot poisoned").expect("every record processed"))
        .collect();
    assemble(config, &mut results)
}

fn add_hits(config: &RunConfig, results: &mut [QueryResult]) -> usize {
    let chat: Vec<usize> = (0..results.len())
        .filter(|&i| results[i].record.is_ok() && results[i].record.task == TaskKind::Chat)
        .collect();
    if chat.is_empty() {
        return 0;
    }
    let rows: Vec<Vec<usize>> = chat.iter().map(|&i| results[i].round_ranks.clone()).collect();
    let initial_rows: Vec<Vec<usize>> = chat.iter().map(|&i| results[i].initial_round_ranks.clone()).collect();
    let (Ok((padded, padded_count)), Ok((initial_padded, _))) = (pad_rounds(&rows), pad_rounds(&initial_rows)) else {
        return 0;
    };
    for (row, &i) in chat.iter().enumerate() {
        let record = &mut results[i].record;
        record.padded_rounds = padded[row].len() - rows[row].len();
        for spec in &config.metrics {
            let MetricKind::Hits(variant) = spec.kind else { continue };
            let keys = metric_keys(spec, padded[row].len());
            let after = dialogue_hits(&padded[row], spec.k, variant);
            let before = dialogue_hits(&initial_padded[row], spec.k, variant);
            for ((key, a), b) in keys.into_iter().zip(after).zip(before) {
                record.metrics.insert(key.clone(), a);
                record.initial_metrics.insert(key, b);
            }
        }
    }
    padded_count
}

fn assemble(config: &RunConfig, results: &mut [QueryResult]) -> RunOutput {
    let padded_dialogues = add_hits(config, results);
    let scored: Vec<&QueryRecord> = results.iter().map(|r| &r.record).filter(|r| r.is_ok()).collect();
    let aggregate = |pick: fn(&QueryRecord) -> &BTreeMap<String, f64>| {
        let keys: BTreeSet<&String> = scored.iter().flat_map(|r| pick(r).keys()).collect();
        keys.into_iter()
            .filter_map(|k| mean(scored.iter().filter_map(|r| pick(r).get(k).copied())).map(|m| (k.clone(), m)))
            .collect::<BTreeMap<_, _>>()
    };
    let aggregates = aggregate(|r| &r.metrics);
    let initial_aggregates = aggregate(|r| &r.initial_metrics);

    let mut counters = Counters {
        queries: results.len(),
        scored: scored.len(),
        failed: results.len() - scored.len(),
        padded_dialogues,
        ..Counters::default()
    };
    for r in results.iter() {
        for rr in r.record.reranks.iter().chain(&r.record.subset) {
            counters.reranks += 1;
            counters.calls += rr.calls;
            counters.repair_prompts += rr.repair_prompts;
            counters.degraded_evaluations += rr.degraded_evaluations;
            counters.ranking_fallbacks += usize::from(rr.ranking_fallback.is_some());
            counters.deconstruction_fallbacks += usize::from(rr.deconstruction_fallback.is_some());
            counters.repaired_ids += rr.repaired.len();
        }
    }
    let aborted = counters.queries > 0 && counters.failed as f64 > config.max_failure_rate * counters.queries as f64;

    let mut hits_variants = BTreeMap::new();
    for spec in &config.metrics {
        if let MetricKind::Hits(v) = spec.kind {
            hits_variants.insert(spec.key(), v);
        }
    }
    let mut notes = Vec::new();
    if config.metrics.iter().any(|m| m.kind == MetricKind::RecallSubset) {
        notes.push(
            "subset re-ranking reuses the full-set decomposition and evaluations; only subset members \
             outside the full re-ranked prefix are evaluated afresh"
                .to_string(),
        );
    }
    if hits_variants.values().any(|v| *v == HitsVariant::Cumulative) {
        notes.push("hits: a dialogue counts at round t if its target was within k at any round up to t".into());
    }
    if padded_dialogues > 0 {
        notes.push(format!(
            "{padded_dialogues} shorter dialogues padded by carrying the last rank forward"
        ));
    }

    let transcript = results
        .iter_mut()
        .flat_map(|r| std::mem::take(&mut r.transcript))
        .collect();
    let per_query = results.iter().map(|r| r.record.clone()).collect();
    RunOutput {
        report: MetricReport {
            format: REPORT_FORMAT.into(),
            config: config.clone(),
            mode: config.mode,
            aggregates,
            initial_aggregates,
            hits_variants,
            counters,
            aborted,
            notes,
            per_query,
        },
        transcript,
    }
}

/// Everything loaded from disk for a run, before a backend is chosen.
pub struct Prepared {
    pub records: Vec<Numbered>,
    pub initial: InitialRankings,
    pub labels: Arc<Labels>,
    pub images: Box<dyn ImageSource + Sync>,
    pub pipeline: PipelineConfig,
}

fn default_labels_path(config: &RunConfig) -> Option<PathBuf> {
    if let Some(p) = &config.labels {
        return Some(p.clone());
    }
    let candidate = config.manifest.parent().unwrap_or(Path::new(".")).join(LABELS_FILE);
    candidate.is_file().then_some(candidate)
}

/// Loads and cross-checks the manifest, stores, candidates and labels.
pub fn prepare(config: &RunConfig) -> Result<Prepared, RunError> {
    let spec = config.backend_spec();
    if !spec.is_mock() {
        // Checked first so a live run without credentials never gets as far
        // as loading data or opening a connection.
        live_credentials(config)?;
    }
    let records = manifest::load_manifest(&config.manifest).map_err(|e| match e {
        manifest::ManifestError::Read { .. } => RunError::Config(ConfigError::Invalid {
            key: "manifest",
            message: e.to_string(),
        }),
        other => validation(format!("{}: {other}", config.manifest.display())),
    })?;
    manifest::check_task(&records, config.task).map_err(validation)?;

    let mut initial = InitialRankings {
        depth: config.depth,
        ..InitialRankings::default()
    };
    if let Some(path) = &config.image_store {
        let images = store_io::load_store(path).map_err(validation)?;
        manifest::check_against_store(&records, &images).map_err(validation)?;
        if let Some(qpath) = &config.query_store {
            let queries = store_io::load_store(qpath).map_err(validation)?;
            if queries.dim() != images.dim() {
                return Err(validation(format!(
                    "query store dim {} differs from image store dim {}",
                    queries.dim(),
                    images.dim()
                )));
            }
            initial.stores = Some((images, queries));
        }
    } else if config.query_store.is_some() {
        return Err(RunError::Config(ConfigError::Missing("image_store")));
    }
    if let Some(path) = &config.candidates {
        initial.file = Some(retrieve::load_candidates(path).map_err(validation)?);
    }

    let labels = if spec.is_mock() {
        match default_labels_path(config) {
            Some(path) => Labels::load(&path).map_err(validation)?,
            None => Labels::from_ground_truth(&records.iter().map(|n| n.record.clone()).collect::<Vec<_>>()),
        }
    } else {
        Labels::new()
    };

    let images: Box<dyn ImageSource + Sync> = match &config.image_root {
        Some(root) => {
            if !root.is_dir() {
                return Err(RunError::Config(ConfigError::Invalid {
                    key: "image_root",
                    message: format!("{} is not a directory", root.display()),
                }));
            }
            Box::new(FileImageSource::new(root))
        }
        None if spec.is_mock() => Box::new(PlaceholderImages),
        None => return Err(RunError::Config(ConfigError::Missing("image_root"))),
    };

    Ok(Prepared {
        records,
        initial,
        labels: Arc::new(labels),
        images,
        pipeline: config.pipeline_config()?,
    })
}

fn live_credentials(config: &RunConfig) -> Result<(String, String), RunError> {
    let key = std::env::var(API_KEY_ENV)
        .ok()
        .filter(|k| !k.is_empty())
        .ok_or(ConfigError::MissingApiKey(API_KEY_ENV))?;
    let base = config.base_url.clone().ok_or(ConfigError::Missing("base_url"))?;
    Ok((key, base))
}

/// The transport named by the config's backend spec.
pub fn transport_for(config: &RunConfig, labels: Arc<Labels>) -> Result<Box<dyn Transport>, RunError> {
    Ok(match config.backend_spec() {
        BackendSpec::Mock { kind, seed, param } => Box::new(MockTransport::new(kind, seed, param, labels)),
        BackendSpec::Http { .. } => {
            let (key, base) = live_credentials(config)?;
            Box::new(HttpTransport::new(&base, key, Duration::from_secs(config.timeout_secs)))
        }
    })
}

/// Wraps a transport in the configured cache and parallelism bound.
pub fn client_for<T: Transport>(config: &RunConfig, transport: T) -> Result<Client<T>, RunError> {
    let mut client = Client::new(transport).with_parallelism(config.parallelism);
    if let Some(dir) = &config.cache_dir {
        let cache = DiskCache::new(dir.join(config.backend_spec().cache_namespace())).map_err(|e| RunError::Write {
            path: dir.clone(),
            message: e.to_string(),
        })?;
        client = client.with_cache(cache);
    }
    Ok(client)
}

/// Runs a prepared configuration over `transport`.
pub fn run_with<T: Transport>(config: &RunConfig, prepared: &Prepared, transport: T) -> Result<RunOutput, RunError> {
    let client = client_for(config, transport)?;
    Ok(execute(
        config,
        &prepared.pipeline,
        &prepared.records,
        &prepared.initial,
        &client,
        prepared.images.as_ref(),
    ))
}

/// Loads inputs, runs, and writes the run directory. An aborted run still
/// writes its outputs before reporting the abort.
pub fn run(config: &RunConfig) -> Result<RunOutput, RunError> {
    let prepared = prepare(config)?;
    let transport = transport_for(config, prepared.labels.clone())?;
    let output = run_with(config, &prepared, transport)?;
    output.write(&config.output_dir)?;
    let c = &output.report.counters;
    if output.report.aborted {
        return Err(RunError::Aborted {
            failed: c.failed,
            total: c.queries,
            limit: config.max_failure_rate * 100.0,
        });
    }
    Ok(output)
}

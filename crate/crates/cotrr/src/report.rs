//! Run report: aggregates, per-query records and the chart CSV, plus the
//! cross-run comparison table.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use cotrr_core::harness::TaskKind;
use cotrr_core::metrics::{HitsVariant, MetricKind, MetricSpec};
use cotrr_core::pipeline::{Mode, Provenance};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::RunConfig;

pub const REPORT_FORMAT: &str = "cotrr-report v1";
pub const REPORT_FILE: &str = "report.json";
pub const PER_QUERY_FILE: &str = "per_query.jsonl";
pub const TRANSCRIPT_FILE: &str = "transcript.jsonl";
pub const CHART_FILE: &str = "chart.csv";
pub const CHART_HEADER: &str = "round,variant,k,value";

/// One re-ranked list: a full query, one chat round, or a subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub round: Option<usize>,
    /// Initial order of the re-ranked prefix.
    pub initial_top: Vec<String>,
    /// Re-ranked prefix, best first.
    pub reranked_top: Vec<String>,
    /// Ids appended by permutation repair rather than placed by the model.
    pub repaired: Vec<String>,
    /// 1-based rank of the best-placed ground truth after splicing, when
    /// present in the ranking.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_rank: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_target_rank: Option<usize>,
    pub degraded_evaluations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deconstruction_fallback: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ranking_fallback: Option<String>,
    pub calls: usize,
    pub repair_prompts: usize,
}

impl RerankRecord {
    pub fn new(round: Option<usize>, initial_top: &[String], outcome: &cotrr_core::pipeline::RerankOutcome) -> Self {
        Self {
            round,
            initial_top: initial_top.to_vec(),
            reranked_top: outcome.ranked.ids(),
            repaired: outcome
                .ranked
                .iter()
                .filter(|e| e.provenance == Provenance::Repaired)
                .map(|e| e.id.clone())
                .collect(),
            target_rank: None,
            initial_target_rank: None,
            degraded_evaluations: outcome.degraded_evaluations(),
            deconstruction_fallback: outcome.deconstruction_error.clone(),
            ranking_fallback: outcome.ranking_fallback.clone(),
            calls: outcome.transcript.len(),
            repair_prompts: outcome.transcript.iter().filter(|t| t.repair).count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query_id: String,
    pub task: TaskKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Metric values after re-ranking, keyed like the aggregates.
    pub metrics: BTreeMap<String, f64>,
    /// The same metrics on the initial ranking.
    pub initial_metrics: BTreeMap<String, f64>,
    pub reranks: Vec<RerankRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subset: Option<RerankRecord>,
    /// Rounds filled in by carrying the last rank forward.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub padded_rounds: usize,
}

fn is_zero(v: &usize) -> bool {
    *v == 0
}

impl QueryRecord {
    pub fn failed(query_id: &str, task: TaskKind, error: String) -> Self {
        Self {
            query_id: query_id.to_string(),
            task,
            error: Some(error),
            metrics: BTreeMap::new(),
            initial_metrics: BTreeMap::new(),
            reranks: Vec::new(),
            subset: None,
            padded_rounds: 0,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub queries: usize,
    pub scored: usize,
    pub failed: usize,
    pub reranks: usize,
    pub calls: usize,
    pub repair_prompts: usize,
    pub degraded_evaluations: usize,
    pub ranking_fallbacks: usize,
    pub deconstruction_fallbacks: usize,
    pub repaired_ids: usize,
    pub padded_dialogues: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub format: String,
    pub config: RunConfig,
    pub mode: Mode,
    /// Mean over scored queries, keyed `<metric>@<k>` (chat metrics add
    /// `@round<t>`).
    pub aggregates: BTreeMap<String, f64>,
    pub initial_aggregates: BTreeMap<String, f64>,
    /// Which Hits variant each hits key uses.
    pub hits_variants: BTreeMap<String, HitsVariant>,
    pub counters: Counters,
    pub aborted: bool,
    pub notes: Vec<String>,
    pub per_query: Vec<QueryRecord>,
}

/// Aggregate keys for one metric spec: one key, or one per round.
pub fn metric_keys(spec: &MetricSpec, rounds: usize) -> Vec<String> {
    match spec.kind {
        MetricKind::Hits(_) => (0..rounds).map(|t| format!("{}@round{t}", spec.key())).collect(),
        _ => vec![spec.key()],
    }
}

/// Chart rows for every Hits metric, re-ranked and initial.
pub fn chart_rows(report: &MetricReport) -> Vec<(usize, String, usize, f64)> {
    let mut rows = Vec::new();
    for spec in &report.config.metrics {
        let MetricKind::Hits(variant) = spec.kind else { continue };
        for (prefix, table) in [("", &report.aggregates), ("initial_", &report.initial_aggregates)] {
            let mut t = 0;
            while let Some(v) = table.get(&format!("{}@round{t}", spec.key())) {
                rows.push((t, format!("{prefix}{}", variant.as_str()), spec.k, *v));
                t += 1;
            }
        }
    }
    rows
}

pub fn chart_csv(report: &MetricReport) -> String {
    let mut out = String::from(CHART_HEADER);
    out.push('\n');
    for (round, variant, k, value) in chart_rows(report) {
        let _ = writeln!(out, "{round},{variant},{k},{value}");
    }
    out
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot read {path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("{path} is not a valid report: {message}")]
    Invalid { path: PathBuf, message: String },
}

pub fn load_report(run_dir: &Path) -> Result<MetricReport, ReportError> {
    let path = run_dir.join(REPORT_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| ReportError::Read {
        path: path.clone(),
        message: e.to_string(),
    })?;
    let report: MetricReport = serde_json::from_str(&text).map_err(|e| ReportError::Invalid {
        path: path.clone(),
        message: e.to_string(),
    })?;
    if report.format != REPORT_FORMAT {
        return Err(ReportError::Invalid {
            path,
            message: format!("unknown format `{}`", report.format),
        });
    }
    Ok(report)
}

/// Comparison of several runs.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub table: String,
    pub csv: String,
    /// Metric keys missing from some runs.
    pub warnings: Vec<String>,
}

fn run_label(report: &MetricReport, dir: &Path, index: usize) -> String {
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| format!("run{index}"));
    format!("{name} [{}]", report.mode)
}

/// Aligned table with one row per metric key and one column per run, plus
/// the merged chart CSV (`run,round,variant,k,value`).
pub fn compare(runs: &[(PathBuf, MetricReport)]) -> Comparison {
    let labels: Vec<String> = runs.iter().enumerate().map(|(i, (d, r))| run_label(r, d, i)).collect();
    let mut rows: Vec<String> = Vec::new();
    let mut seen = BTreeSet::new();
    for (_, report) in runs {
        for spec in &report.config.metrics {
            let rounds = (0..)
                .take_while(|t| report.aggregates.contains_key(&format!("{}@round{t}", spec.key())))
                .count();
            for key in metric_keys(spec, rounds.max(1)) {
                if report.aggregates.contains_key(&key) && seen.insert(key.clone()) {
                    rows.push(key);
                }
            }
        }
    }
    let mut warnings = Vec::new();
    for (label, (_, report)) in labels.iter().zip(runs) {
        let missing: Vec<&str> = rows
            .iter()
            .filter(|k| !report.aggregates.contains_key(*k))
            .map(String::as_str)
            .collect();
        if !missing.is_empty() {
            warnings.push(format!("{label} lacks {}", missing.join(", ")));
        }
    }

    let cell = |v: Option<&f64>| v.map_or_else(|| "-".to_string(), |v| format!("{:.2}", v * 100.0));
    let key_width = rows.iter().map(String::len).chain([6]).max().unwrap_or(6);
    let widths: Vec<usize> = labels.iter().map(|l| l.len().max(6)).collect();
    let mut table = format!("{:<key_width$}", "metric");
    for (label, w) in labels.iter().zip(&widths) {
        let _ = write!(table, "  {label:>w$}");
    }
    table.push('\n');
    for key in &rows {
        let _ = write!(table, "{key:<key_width$}");
        for ((_, report), w) in runs.iter().zip(&widths) {
            let _ = write!(table, "  {:>w$}", cell(report.aggregates.get(key)));
        }
        table.push('\n');
    }

    let mut csv = String::from("run,");
    csv.push_str(CHART_HEADER);
    csv.push('\n');
    for (label, (_, report)) in labels.iter().zip(runs) {
        for (round, variant, k, value) in chart_rows(report) {
            let _ = writeln!(csv, "{},{round},{variant},{k},{value}", label.replace(',', ";"));
        }
    }
    Comparison { table, csv, warnings }
}

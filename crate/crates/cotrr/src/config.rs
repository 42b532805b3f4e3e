//! Run configuration, layered as flag > config file > environment > default.
//!
//! [`ConfigLayer`] is the partial form shared by the TOML file, the
//! environment and the command line; [`RunConfig`] is the resolved form,
//! echoed verbatim into every report. A report's `config` block is itself a
//! valid layer, which is how runs are replayed.

use std::path::{Path, PathBuf};

use cotrr_core::chat::DEFAULT_TEMPERATURE;
use cotrr_core::harness::{TaskKind, TaskProfile};
use cotrr_core::metrics::{MetricKind, MetricSpec};
use cotrr_core::pipeline::{Mode, PipelineConfig, PromptSet, PROMPT_VERSION};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendSpec, BASE_URL_ENV, DEFAULT_PARALLELISM};

pub const CACHE_DIR_ENV: &str = "COTRR_CACHE_DIR";
pub const DEFAULT_MODEL: &str = "gemini-2.5-pro";
pub const DEFAULT_MAX_FAILURE_RATE: f64 = 0.10;
pub const DEFAULT_TIMEOUT_SECS: u64 = 120;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Read { path: String, message: String },
    #[error("config {path}: {message}")]
    Syntax { path: String, message: String },
    #[error("missing required setting `{0}`")]
    Missing(&'static str),
    #[error("invalid `{key}`: {message}")]
    Invalid { key: &'static str, message: String },
    #[error("{0} is not set; a live backend needs an API key")]
    MissingApiKey(&'static str),
}

fn invalid(key: &'static str, message: impl ToString) -> ConfigError {
    ConfigError::Invalid {
        key,
        message: message.to_string(),
    }
}

/// Every setting, all optional. Field names double as TOML keys; the
/// matching command-line flag is the same name with `-` for `_`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_store: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_store: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidates: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_root: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_rerank: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_subset: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parallelism: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_failure_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attach_thumbnails: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backbone: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timeout_secs: Option<u64>,
}

macro_rules! overlay {
    ($upper:ident, $lower:ident, $($field:ident),* $(,)?) => {
        ConfigLayer { $($field: $upper.$field.or($lower.$field)),* }
    };
}

impl ConfigLayer {
    /// Names of every key, in declaration order.
    pub const KEYS: [&'static str; 24] = [
        "profile",
        "manifest",
        "image_store",
        "query_store",
        "candidates",
        "image_root",
        "labels",
        "backend",
        "base_url",
        "model",
        "temperature",
        "k_rerank",
        "k_subset",
        "depth",
        "metrics",
        "mode",
        "parallelism",
        "cache_dir",
        "output_dir",
        "max_failure_rate",
        "attach_thumbnails",
        "prompt_dir",
        "backbone",
        "timeout_secs",
    ];

    /// Fields set in `self` win over those in `lower`.
    pub fn over(self, lower: ConfigLayer) -> ConfigLayer {
        overlay!(
            self,
            lower,
            profile,
            manifest,
            image_store,
            query_store,
            candidates,
            image_root,
            labels,
            backend,
            base_url,
            model,
            temperature,
            k_rerank,
            k_subset,
            depth,
            metrics,
            mode,
            parallelism,
            cache_dir,
            output_dir,
            max_failure_rate,
            attach_thumbnails,
            prompt_dir,
            backbone,
            timeout_secs,
        )
    }

    /// Settings taken from the environment.
    pub fn from_env(get: impl Fn(&str) -> Option<String>) -> Self {
        Self {
            base_url: get(BASE_URL_ENV).filter(|v| !v.is_empty()),
            cache_dir: get(CACHE_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from),
            ..Self::default()
        }
    }

    /// Reads a TOML config file, or a JSON report whose `config` block is
    /// used (for replaying a run).
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let syntax = |message: String| ConfigError::Syntax {
            path: path.display().to_string(),
            message,
        };
        if path.extension().is_some_and(|e| e == "json") {
            let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| syntax(e.to_string()))?;
            let block = value.get("config").cloned().unwrap_or(value);
            let config: RunConfig = serde_json::from_value(block).map_err(|e| syntax(e.to_string()))?;
            return Ok(config.to_layer());
        }
        let layer: Self = toml::from_str(&text).map_err(|e| syntax(e.to_string()))?;
        Ok(layer.rebased(path.parent().unwrap_or(Path::new(""))))
    }

    /// Joins relative path values onto `base`.
    pub fn rebased(mut self, base: &Path) -> Self {
        for slot in [
            &mut self.manifest,
            &mut self.image_store,
            &mut self.query_store,
            &mut self.candidates,
            &mut self.image_root,
            &mut self.labels,
            &mut self.cache_dir,
            &mut self.output_dir,
            &mut self.prompt_dir,
        ] {
            if let Some(p) = slot.as_mut() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        self
    }
}

/// Fully resolved configuration of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub profile: String,
    pub task: TaskKind,
    pub manifest: PathBuf,
    pub image_store: Option<PathBuf>,
    pub query_store: Option<PathBuf>,
    pub candidates: Option<PathBuf>,
    pub image_root: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub backend: String,
    pub base_url: Option<String>,
    pub model: String,
    pub temperature: f64,
    pub k_rerank: usize,
    pub k_subset: Option<usize>,
    pub depth: usize,
    pub metrics: Vec<MetricSpec>,
    pub mode: Mode,
    pub parallelism: usize,
    pub cache_dir: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub max_failure_rate: f64,
    pub attach_thumbnails: bool,
    pub prompt_dir: Option<PathBuf>,
    pub backbone: String,
    pub timeout_secs: u64,
    pub prompt_version: String,
}

impl RunConfig {
    /// Applies profile defaults and validates. `output_dir` may be left unset
    /// by commands that write no run directory.
    pub fn resolve(layer: ConfigLayer) -> Result<Self, ConfigError> {
        let profile_name = layer.profile.clone().unwrap_or_else(|| "flickr30k".into());
        let profile = TaskProfile::preset(&profile_name).map_err(|e| invalid("profile", e))?;
        let manifest = layer.manifest.ok_or(ConfigError::Missing("manifest"))?;
        let backend_raw = layer.backend.unwrap_or_else(|| "http".into());
        let backend: BackendSpec = backend_raw.parse().map_err(|e| invalid("backend", e))?;

        let temperature = layer.temperature.unwrap_or(DEFAULT_TEMPERATURE);
        if !temperature.is_finite() || temperature < 0.0 {
            return Err(invalid("temperature", "must be a finite non-negative number"));
        }
        let k_rerank = layer.k_rerank.unwrap_or(profile.k_rerank);
        if k_rerank == 0 {
            return Err(invalid("k_rerank", "must be positive"));
        }
        let k_subset = layer.k_subset.or(profile.k_subset);
        if k_subset == Some(0) {
            return Err(invalid("k_subset", "must be positive"));
        }
        let depth = layer.depth.unwrap_or(
            TaskProfile {
                k_rerank,
                ..profile.clone()
            }
            .initial_depth(),
        );
        if depth < k_rerank {
            return Err(invalid("depth", format!("must be at least k_rerank ({k_rerank})")));
        }
        let metrics = match layer.metrics {
            Some(list) => list
                .iter()
                .map(|m| m.parse::<MetricSpec>().map_err(|e| invalid("metrics", e)))
                .collect::<Result<Vec<_>, _>>()?,
            None => profile.metrics.clone(),
        };
        if metrics.is_empty() {
            return Err(invalid("metrics", "at least one metric is required"));
        }
        for m in &metrics {
            match m.kind {
                MetricKind::Hits(_) if profile.task != TaskKind::Chat => {
                    return Err(invalid("metrics", format!("{} needs a chat profile", m.key())));
                }
                MetricKind::Hits(_) => {}
                _ if profile.task == TaskKind::Chat => {
                    return Err(invalid(
                        "metrics",
                        format!("chat profiles score hits only, not {}", m.key()),
                    ));
                }
                MetricKind::RecallSubset if k_subset.is_none() => {
                    return Err(invalid("metrics", format!("{} needs k_subset", m.key())));
                }
                _ => {}
            }
        }
        let mode: Mode = match layer.mode {
            Some(m) => m.parse().map_err(|e| invalid("mode", e))?,
            None => Mode::default(),
        };
        let parallelism = layer.parallelism.unwrap_or(DEFAULT_PARALLELISM);
        if parallelism == 0 {
            return Err(invalid("parallelism", "must be at least 1"));
        }
        let max_failure_rate = layer.max_failure_rate.unwrap_or(DEFAULT_MAX_FAILURE_RATE);
        if !(0.0..=1.0).contains(&max_failure_rate) {
            return Err(invalid("max_failure_rate", "must lie in [0, 1]"));
        }
        let timeout_secs = layer.timeout_secs.unwrap_or(DEFAULT_TIMEOUT_SECS);
        if timeout_secs == 0 {
            return Err(invalid("timeout_secs", "must be positive"));
        }
        let base_url = match &backend {
            BackendSpec::Http { base_url: Some(url) } => Some(url.clone()),
            _ => layer.base_url,
        };
        let prompt_dir = layer.prompt_dir;
        Ok(Self {
            profile: profile_name,
            task: profile.task,
            manifest,
            image_store: layer.image_store,
            query_store: layer.query_store,
            candidates: layer.candidates,
            image_root: layer.image_root,
            labels: layer.labels,
            backend: backend.to_string(),
            base_url,
            model: layer.model.unwrap_or_else(|| DEFAULT_MODEL.into()),
            temperature,
            k_rerank,
            k_subset,
            depth,
            metrics,
            mode,
            parallelism,
            cache_dir: layer.cache_dir,
            output_dir: layer.output_dir.unwrap_or_else(|| PathBuf::from("runs/latest")),
            max_failure_rate,
            attach_thumbnails: layer.attach_thumbnails.unwrap_or(false),
            prompt_dir,
            backbone: layer.backbone.unwrap_or(profile.backbone),
            timeout_secs,
            prompt_version: PROMPT_VERSION.to_string(),
        })
        .map(|mut c| {
            if c.prompt_dir.is_some() {
                c.prompt_version = format!("{PROMPT_VERSION}+custom");
            }
            c
        })
    }

    pub fn backend_spec(&self) -> BackendSpec {
        self.backend.parse().expect("validated at resolve time")
    }

    /// The layer that reproduces this configuration.
    pub fn to_layer(&self) -> ConfigLayer {
        ConfigLayer {
            profile: Some(self.profile.clone()),
            manifest: Some(self.manifest.clone()),
            image_store: self.image_store.clone(),
            query_store: self.query_store.clone(),
            candidates: self.candidates.clone(),
            image_root: self.image_root.clone(),
            labels: self.labels.clone(),
            backend: Some(self.backend.clone()),
            base_url: self.base_url.clone(),
            model: Some(self.model.clone()),
            temperature: Some(self.temperature),
            k_rerank: Some(self.k_rerank),
            k_subset: self.k_subset,
            depth: Some(self.depth),
            metrics: Some(self.metrics.iter().map(MetricSpec::key).collect()),
            mode: Some(self.mode.to_string()),
            parallelism: Some(self.parallelism),
            cache_dir: self.cache_dir.clone(),
            output_dir: Some(self.output_dir.clone()),
            max_failure_rate: Some(self.max_failure_rate),
            attach_thumbnails: Some(self.attach_thumbnails),
            prompt_dir: self.prompt_dir.clone(),
            backbone: Some(self.backbone.clone()),
            timeout_secs: Some(self.timeout_secs),
        }
    }

    /// Pipeline settings, with template overrides from `prompt_dir`.
    pub fn pipeline_config(&self) -> Result<PipelineConfig, ConfigError> {
        let mut prompts = PromptSet::default();
        if let Some(dir) = &self.prompt_dir {
            for name in PromptSet::FILE_NAMES {
                let path = dir.join(name);
                if path.is_file() {
                    let text = std::fs::read_to_string(&path).map_err(|e| ConfigError::Read {
                        path: path.display().to_string(),
                        message: e.to_string(),
                    })?;
                    *prompts.slot_mut(name).expect("known template name") = text;
                }
            }
        }
        Ok(PipelineConfig {
            model: self.model.clone(),
            temperature: self.temperature,
            prompts,
            attach_thumbnails: self.attach_thumbnails,
            ..PipelineConfig::default()
        })
    }
}

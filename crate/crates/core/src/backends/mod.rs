//! LLM annotators: backend specs, prompt rendering, label parsing, retries and
//! the persistent annotation cache.

mod cache;
mod chat;
mod parse;

use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

pub use cache::{AnnotationCache, CacheEntry, CacheKey};
pub use chat::{
    complete_with_retries, ChatBackend, HttpChatBackend, ScriptedBackend, TransportError,
    SCRIPT_WILDCARD,
};
pub use parse::{parse_label, PromptTemplate};

use crate::dataset::{Dataset, LabelSpace};
use crate::error::{CellIndex, Error, Result};
use crate::mrengine::{MrId, VariantSet};
use crate::optimize::AnnotationTensorView;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    HttpChat,
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendSpec {
    pub name: String,
    pub kind: BackendKind,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub model: String,
    #[serde(default)]
    pub temperature: Option<f64>,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    /// Name of the environment variable holding the bearer token.
    #[serde(default)]
    pub api_key_env: Option<String>,
    /// Response map for scripted backends.
    #[serde(default)]
    pub script: Option<PathBuf>,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_retry_backoff_ms")]
    pub retry_backoff_ms: u64,
}

fn default_max_retries() -> u32 {
    2
}

fn default_max_in_flight() -> usize {
    4
}

fn default_timeout_secs() -> u64 {
    120
}

fn default_retry_backoff_ms() -> u64 {
    250
}

impl BackendSpec {
    pub fn scripted(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: BackendKind::Scripted,
            endpoint: None,
            model: "scripted".into(),
            temperature: None,
            max_retries: default_max_retries(),
            api_key_env: None,
            script: None,
            max_in_flight: default_max_in_flight(),
            timeout_secs: default_timeout_secs(),
            retry_backoff_ms: 0,
        }
    }

    pub fn http_chat(name: impl Into<String>, endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            kind: BackendKind::HttpChat,
            endpoint: Some(endpoint.into()),
            model: model.into(),
            retry_backoff_ms: default_retry_backoff_ms(),
            ..Self::scripted(name)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: String| Err(Error::InvalidInput(format!("backend `{}`: {msg}", self.name)));
        if self.name.trim().is_empty() {
            return invalid("name is empty".into());
        }
        if let Some(t) = self.temperature {
            if !(t.is_finite() && t >= 0.0) {
                return invalid(format!("temperature must be >= 0, got {t}"));
            }
        }
        if self.max_in_flight == 0 {
            return invalid("max_in_flight must be >= 1".into());
        }
        match self.kind {
            BackendKind::HttpChat => {
                if self.endpoint.as_deref().is_none_or(|e| e.trim().is_empty()) {
                    return invalid("http_chat backends need an endpoint".into());
                }
                if self.model.trim().is_empty() {
                    return invalid("http_chat backends need a model".into());
                }
            }
            BackendKind::Scripted => {
                if self.script.is_none() {
                    return invalid("scripted backends need a script file".into());
                }
            }
        }
        Ok(())
    }
}

/// A ready-to-call backend with a round-trip counter.
pub struct Backend {
    spec: BackendSpec,
    chat: Box<dyn ChatBackend>,
    calls: AtomicUsize,
}

impl std::fmt::Debug for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Backend")
            .field("spec", &self.spec)
            .field("calls", &self.calls())
            .finish()
    }
}

impl Backend {
    pub fn new(spec: BackendSpec, chat: Box<dyn ChatBackend>) -> Self {
        Self {
            spec,
            chat,
            calls: AtomicUsize::new(0),
        }
    }

    /// Build the transport described by `spec`. API keys come only from the
    /// environment variable named in the spec.
    pub fn from_spec(spec: BackendSpec) -> Result<Self> {
        spec.validate()?;
        let chat: Box<dyn ChatBackend> = match spec.kind {
            BackendKind::Scripted => {
                let path = spec.script.as_ref().expect("validated");
                Box::new(ScriptedBackend::from_file(path)?)
            }
            BackendKind::HttpChat => {
                let api_key = match &spec.api_key_env {
                    Some(var) => Some(std::env::var(var).map_err(|_| {
                        Error::InvalidInput(format!(
                            "backend `{}`: environment variable {var} is not set",
                            spec.name
                        ))
                    })?),
                    None => None,
                };
                Box::new(HttpChatBackend::new(
                    spec.endpoint.as_deref().expect("validated"),
                    &spec.model,
                    spec.temperature,
                    api_key,
                    Duration::from_secs(spec.timeout_secs),
                )?)
            }
        };
        Ok(Self::new(spec, chat))
    }

    pub fn spec(&self) -> &BackendSpec {
        &self.spec
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    /// Round-trips issued so far, including failed ones.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    /// One completion with transport retries per the spec.
    pub fn complete(&self, prompt: &str, subject: &str) -> Result<String, TransportError> {
        let counted = Counted {
            inner: self.chat.as_ref(),
            calls: &self.calls,
        };
        complete_with_retries(
            &counted,
            prompt,
            subject,
            self.spec.max_retries,
            Duration::from_millis(self.spec.retry_backoff_ms),
        )
    }
}

struct Counted<'a> {
    inner: &'a dyn ChatBackend,
    calls: &'a AtomicUsize,
}

impl ChatBackend for Counted<'_> {
    fn complete(&self, prompt: &str, subject: &str) -> Result<String, TransportError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.complete(prompt, subject)
    }
}

/// One label (or abstention) from one backend for one variant of one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub sample_id: String,
    pub mr: MrId,
    pub backend: String,
    pub raw: String,
    pub label: Option<usize>,
    pub abstained: bool,
    pub latency_ms: u64,
}

#[derive(Debug, Clone)]
pub struct AnnotateOutcome {
    pub annotation: Annotation,
    pub cache_hit: bool,
    /// Set when the result could not be written to the cache.
    pub cache_error: Option<String>,
}

/// Shared state for annotating variants: prompt, label space and optional cache.
#[derive(Debug, Clone, Copy)]
pub struct Annotator<'a> {
    pub template: &'a PromptTemplate,
    pub space: &'a LabelSpace,
    pub cache: Option<&'a AnnotationCache>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct MatrixStats {
    pub cells: usize,
    pub cache_hits: usize,
    pub backend_calls: usize,
    pub cache_errors: usize,
}

impl<'a> Annotator<'a> {
    pub fn new(template: &'a PromptTemplate, space: &'a LabelSpace) -> Self {
        Self {
            template,
            space,
            cache: None,
        }
    }

    pub fn with_cache(mut self, cache: &'a AnnotationCache) -> Self {
        self.cache = Some(cache);
        self
    }

    /// Label one variant text. Unparseable completions are re-asked with the
    /// same prompt up to `max_retries` times, then recorded as an abstention.
    pub fn annotate(
        &self,
        backend: &Backend,
        sample_id: &str,
        mr: &MrId,
        variant_text: &str,
    ) -> Result<AnnotateOutcome> {
        let spec = backend.spec();
        let prompt = self.template.render(variant_text, self.space);
        let key = CacheKey::new(&spec.name, &spec.model, &prompt, variant_text);

        if let Some(entry) = self.cache.and_then(|c| c.get(&key)) {
            let label = entry.label.as_deref().and_then(|l| self.space.index_of(l));
            if entry.abstained || label.is_some() {
                return Ok(AnnotateOutcome {
                    annotation: Annotation {
                        sample_id: sample_id.to_string(),
                        mr: mr.clone(),
                        backend: spec.name.clone(),
                        raw: entry.raw,
                        label,
                        abstained: label.is_none(),
                        latency_ms: entry.latency_ms,
                    },
                    cache_hit: true,
                    cache_error: None,
                });
            }
        }

        let started = Instant::now();
        let mut raw = String::new();
        let mut label = None;
        for attempt in 0..=spec.max_retries {
            raw = backend
                .complete(&prompt, variant_text)
                .map_err(|e| Error::BackendUnavailable {
                    backend: spec.name.clone(),
                    reason: e.0,
                    completed: Vec::new(),
                })?;
            label = parse_label(&raw, self.space);
            if label.is_some() {
                break;
            }
            tracing::debug!(backend = %spec.name, attempt, "unparseable completion");
        }
        let latency_ms = started.elapsed().as_millis() as u64;

        let annotation = Annotation {
            sample_id: sample_id.to_string(),
            mr: mr.clone(),
            backend: spec.name.clone(),
            raw,
            label,
            abstained: label.is_none(),
            latency_ms,
        };

        let mut cache_error = None;
        if let Some(cache) = self.cache {
            let (prompt_digest, variant_digest) = CacheEntry::digests(&prompt, variant_text);
            let entry = CacheEntry {
                key,
                backend: spec.name.clone(),
                model: spec.model.clone(),
                prompt_digest,
                variant_digest,
                raw: annotation.raw.clone(),
                label: label.map(|l| self.space.name(l).to_string()),
                abstained: annotation.abstained,
                latency_ms,
                timestamp: SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0),
            };
            if let Err(e) = cache.put(entry) {
                tracing::warn!(error = %e, "annotation not cached");
                cache_error = Some(e.to_string());
            }
        }
        Ok(AnnotateOutcome {
            annotation,
            cache_hit: false,
            cache_error,
        })
    }

    /// Annotate every (sample, backend, variant) cell. Cached cells are not
    /// re-queried. Each backend runs with its own in-flight bound; the result
    /// does not depend on completion order.
    pub fn annotate_matrix(
        &self,
        dataset: &Dataset,
        variant_sets: &[VariantSet],
        backends: &[Backend],
    ) -> Result<(AnnotationTensor, MatrixStats)> {
        if backends.is_empty() {
            return Err(Error::InvalidInput("no backends configured".into()));
        }
        if variant_sets.len() != dataset.len() {
            return Err(Error::InvalidInput(format!(
                "{} variant sets for {} samples",
                variant_sets.len(),
                dataset.len()
            )));
        }
        for (sample, set) in dataset.samples.iter().zip(variant_sets) {
            if sample.id != set.sample_id {
                return Err(Error::InvalidInput(format!(
                    "variant set `{}` does not match sample `{}`",
                    set.sample_id, sample.id
                )));
            }
        }
        let mrs: Vec<MrId> = variant_sets
            .first()
            .map(|s| s.mrs().cloned().collect())
            .unwrap_or_default();
        for set in variant_sets {
            if !set.mrs().eq(mrs.iter()) {
                return Err(Error::InvalidInput(format!(
                    "variant set `{}` has a different MR list",
                    set.sample_id
                )));
            }
        }

        let n = variant_sets.len();
        let v = mrs.len();
        let cells: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..v).map(move |k| (i, k))).collect();
        let calls_before: usize = backends.iter().map(Backend::calls).sum();
        let failure: Mutex<Option<Error>> = Mutex::new(None);

        let per_backend: Vec<Vec<Option<AnnotateOutcome>>> = std::thread::scope(|scope| {
            let handles: Vec<_> = backends
                .iter()
                .map(|backend| {
                    let cells = &cells;
                    let failure = &failure;
                    scope.spawn(move || {
                        let stop = AtomicBool::new(false);
                        crate::util::parallel_map(cells, backend.spec().max_in_flight, |_, &(i, k)| {
                            if stop.load(Ordering::Relaxed) {
                                return None;
                            }
                            let set = &variant_sets[i];
                            let variant = &set.variants[k];
                            match self.annotate(backend, &set.sample_id, &variant.mr, &variant.text) {
                                Ok(outcome) => Some(outcome),
                                Err(e) => {
                                    stop.store(true, Ordering::Relaxed);
                                    failure.lock().unwrap().get_or_insert(e);
                                    None
                                }
                            }
                        })
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("annotation worker panicked")).collect()
        });

        let l = backends.len();
        let mut stats = MatrixStats {
            cells: n * l * v,
            backend_calls: backends.iter().map(Backend::calls).sum::<usize>() - calls_before,
            ..MatrixStats::default()
        };

        if let Some(err) = failure.into_inner().unwrap() {
            let completed: Vec<CellIndex> = per_backend
                .iter()
                .enumerate()
                .flat_map(|(j, outs)| {
                    outs.iter()
                        .zip(&cells)
                        .filter(|(o, _)| o.is_some())
                        .map(move |(_, &(i, k))| (i, j, k))
                })
                .collect();
            return Err(match err {
                Error::BackendUnavailable { backend, reason, .. } => Error::BackendUnavailable {
                    backend,
                    reason,
                    completed,
                },
                other => other,
            });
        }

        let mut slots: Vec<Option<Annotation>> = vec![None; n * l * v];
        for (j, outs) in per_backend.into_iter().enumerate() {
            for (outcome, &(i, k)) in outs.into_iter().zip(&cells) {
                let outcome = outcome.expect("no failure recorded");
                stats.cache_hits += usize::from(outcome.cache_hit);
                stats.cache_errors += usize::from(outcome.cache_error.is_some());
                slots[(i * l + j) * v + k] = Some(outcome.annotation);
            }
        }

        let tensor = AnnotationTensor {
            label_space: self.space.clone(),
            sample_ids: variant_sets.iter().map(|s| s.sample_id.clone()).collect(),
            backends: backends.iter().map(|b| b.name().to_string()).collect(),
            mrs,
            cells: slots.into_iter().map(|c| c.expect("every cell filled")).collect(),
        };
        Ok((tensor, stats))
    }
}

/// The fully materialized `samples x backends x variants` annotation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationTensor {
    pub label_space: LabelSpace,
    pub sample_ids: Vec<String>,
    pub backends: Vec<String>,
    pub mrs: Vec<MrId>,
    /// Row-major over (sample, backend, variant).
    pub cells: Vec<Annotation>,
}

impl AnnotationTensor {
    pub fn n_samples(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn n_backends(&self) -> usize {
        self.backends.len()
    }

    pub fn n_variants(&self) -> usize {
        self.mrs.len()
    }

    pub fn get(&self, sample: usize, backend: usize, variant: usize) -> &Annotation {
        &self.cells[(sample * self.n_backends() + backend) * self.n_variants() + variant]
    }

    /// Labels for one sample and backend, ordered like `mrs`.
    pub fn labels(&self, sample: usize, backend: usize) -> Vec<Option<usize>> {
        (0..self.n_variants())
            .map(|k| self.get(sample, backend, k).label)
            .collect()
    }

    pub fn view(&self) -> AnnotationTensorView {
        AnnotationTensorView::new(
            self.n_samples(),
            self.n_backends(),
            self.n_variants(),
            self.label_space.len(),
            self.cells.iter().map(|a| a.label).collect(),
        )
        .expect("tensor labels index the label space")
    }

    pub fn check_shape(&self) -> Result<()> {
        let expected = self.n_samples() * self.n_backends() * self.n_variants();
        if self.cells.len() != expected {
            return Err(Error::InvalidInput(format!(
                "tensor has {} cells, expected {expected}",
                self.cells.len()
            )));
        }
        for cell in &self.cells {
            if cell.abstained == cell.label.is_some() {
                return Err(Error::InvalidInput(format!(
                    "cell for sample `{}` must carry exactly one of label or abstention",
                    cell.sample_id
                )));
            }
            if cell.label.is_some_and(|l| l >= self.label_space.len()) {
                return Err(Error::InvalidInput("label index out of range".into()));
            }
        }
        Ok(())
    }
}

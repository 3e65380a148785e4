pub mod annotate;
pub mod evaluate;
pub mod mutate;
pub mod score;
pub mod sweep;
pub mod train;

use std::io::Write;
use std::path::{Path, PathBuf};

use pcs_core::backends::{AnnotationTensor, Backend, PromptTemplate};
use pcs_core::dataset::{load_dataset, Dataset};
use pcs_core::mrengine::{LlmMutator, MutationTemplates, Mutator, RuleMutator, VariantSet};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::config::{MutatorConfig, RunConfig};
use crate::error::{CliError, CliResult};

pub const VARIANTS_FILE: &str = "variants.jsonl";
pub const MUTATION_LOG_FILE: &str = "mutation_log.jsonl";
pub const ANNOTATIONS_FILE: &str = "annotations.json";
pub const SCORES_FILE: &str = "scores.jsonl";
pub const REPORT_JSON_FILE: &str = "eval_report.json";
pub const REPORT_TEXT_FILE: &str = "eval_report.txt";
pub const SWEEP_FILE: &str = "sweep.json";

/// What a command did, for the terminal and for tests.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Summary {
    pub message: String,
    /// Round-trips made to mutator and annotator backends.
    pub backend_calls: usize,
    pub outputs: Vec<PathBuf>,
}

fn output_err(path: &Path, source: std::io::Error) -> CliError {
    CliError::Output {
        path: path.to_path_buf(),
        source,
    }
}

/// Replace `path` with `bytes` via a sibling temporary file.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| output_err(parent, e))?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(|e| output_err(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| output_err(path, e))
}

pub(crate) fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> CliResult<()> {
    let mut body = serde_json::to_string_pretty(value).map_err(pcs_core::Error::from)?;
    body.push('\n');
    write_atomic(path, body.as_bytes())
}

pub(crate) fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    let mut body = String::new();
    for row in rows {
        body.push_str(&serde_json::to_string(row).map_err(pcs_core::Error::from)?);
        body.push('\n');
    }
    write_atomic(path, body.as_bytes())
}

pub(crate) fn append_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    if rows.is_empty() {
        return Ok(());
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| output_err(parent, e))?;
    }
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| output_err(path, e))?;
    for row in rows {
        let line = serde_json::to_string(row).map_err(pcs_core::Error::from)?;
        writeln!(file, "{line}").map_err(|e| output_err(path, e))?;
    }
    Ok(())
}

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path, hint: &str) -> CliResult<T> {
    let body = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read {} ({e}); {hint}", path.display())))?;
    serde_json::from_str(&body).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub(crate) fn read_jsonl<T: DeserializeOwned>(path: &Path) -> CliResult<Vec<T>> {
    let body = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    body.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| CliError::Data(format!("{} line {}: {e}", path.display(), i + 1))))
        .collect()
}

pub(crate) fn dataset(cfg: &RunConfig) -> CliResult<Dataset> {
    Ok(load_dataset(&cfg.dataset)?)
}

pub(crate) fn classify_template(cfg: &RunConfig) -> CliResult<PromptTemplate> {
    match &cfg.prompts.classify {
        Some(path) => PromptTemplate::from_file(path).map_err(|e| CliError::Config(e.to_string())),
        None => Ok(PromptTemplate::default()),
    }
}

/// Instantiate the annotator backends. Missing API key variables are
/// configuration errors.
pub(crate) fn backends(cfg: &RunConfig) -> CliResult<Vec<Backend>> {
    cfg.backends
        .iter()
        .map(|spec| build_backend(spec.clone()))
        .collect()
}

fn build_backend(spec: pcs_core::backends::BackendSpec) -> CliResult<Backend> {
    Backend::from_spec(spec).map_err(|e| match e {
        pcs_core::Error::InvalidInput(msg) => CliError::Config(msg),
        other => CliError::Config(other.to_string()),
    })
}

pub(crate) enum BuiltMutator {
    Rule(RuleMutator),
    Llm(Box<LlmMutator>),
}

impl BuiltMutator {
    pub(crate) fn from_config(cfg: &RunConfig) -> CliResult<Self> {
        Ok(match &cfg.mutator {
            MutatorConfig::Rule { synonyms: None } => BuiltMutator::Rule(RuleMutator::default()),
            MutatorConfig::Rule { synonyms: Some(table) } => {
                BuiltMutator::Rule(RuleMutator::with_synonyms(table.iter().map(|(a, b)| (a.as_str(), b.as_str()))))
            }
            MutatorConfig::Llm(spec) => {
                let templates = match &cfg.prompts.mutations_dir {
                    Some(dir) => MutationTemplates::load_dir(dir).map_err(|e| CliError::Config(e.to_string()))?,
                    None => MutationTemplates::default(),
                };
                BuiltMutator::Llm(Box::new(LlmMutator::new(build_backend(spec.clone())?, templates)))
            }
        })
    }

    pub(crate) fn as_dyn(&self) -> &dyn Mutator {
        match self {
            BuiltMutator::Rule(m) => m,
            BuiltMutator::Llm(m) => m.as_ref(),
        }
    }

    pub(crate) fn calls(&self) -> usize {
        match self {
            BuiltMutator::Rule(_) => 0,
            BuiltMutator::Llm(m) => m.backend().calls(),
        }
    }
}

/// Variant sets from the variants file, in dataset order.
pub(crate) fn aligned_variant_sets(cfg: &RunConfig, ds: &Dataset) -> CliResult<Vec<VariantSet>> {
    let path = cfg.output(VARIANTS_FILE);
    if !path.is_file() {
        return Err(CliError::Data(format!("{} not found; run `pcs mutate` first", path.display())));
    }
    let mut by_id: std::collections::HashMap<String, VariantSet> = read_jsonl::<VariantSet>(&path)?
        .into_iter()
        .map(|s| (s.sample_id.clone(), s))
        .collect();
    let expected = cfg.variant_mrs();
    ds.samples
        .iter()
        .map(|sample| {
            let set = by_id
                .remove(&sample.id)
                .ok_or_else(|| CliError::Data(format!("no variants for sample `{}`; run `pcs mutate`", sample.id)))?;
            if !set.mrs().eq(expected.iter()) {
                return Err(CliError::Data(format!(
                    "variants for `{}` were built for a different MR list; rerun `pcs mutate`",
                    sample.id
                )));
            }
            Ok(set)
        })
        .collect()
}

/// The persisted annotation tensor and the dataset it belongs to, checked
/// against the current configuration.
pub(crate) fn annotated(cfg: &RunConfig) -> CliResult<(Dataset, AnnotationTensor)> {
    let ds = dataset(cfg)?;
    let tensor: AnnotationTensor = read_json(&cfg.output(ANNOTATIONS_FILE), "run `pcs annotate` first")?;
    tensor.check_shape()?;
    let ids: Vec<&str> = ds.samples.iter().map(|s| s.id.as_str()).collect();
    if tensor.sample_ids.iter().map(String::as_str).ne(ids.iter().copied()) {
        return Err(CliError::Data("annotations do not match the dataset; rerun `pcs annotate`".into()));
    }
    if tensor.backends != cfg.backend_names() || tensor.mrs != cfg.variant_mrs() {
        return Err(CliError::Data(
            "annotations were produced with different backends or MRs; rerun `pcs annotate`".into(),
        ));
    }
    Ok((ds, tensor))
}

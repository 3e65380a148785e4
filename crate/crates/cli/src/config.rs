//! The run configuration: one TOML document describing dataset, mutator,
//! backends and fitting parameters. Relative paths resolve against the
//! directory holding the config file.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use pcs_core::backends::{BackendKind, BackendSpec};
use pcs_core::dataset::DatasetSource;
use pcs_core::mrengine::{registered_mrs, MrId, MutationTemplates};
use pcs_core::optimize::FitConfig;
use serde::Deserialize;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_output_dir")]
    output_dir: PathBuf,
    #[serde(default)]
    cache_path: Option<PathBuf>,
    #[serde(default)]
    weights_path: Option<PathBuf>,
    #[serde(default = "default_mrs")]
    mrs: Vec<String>,
    #[serde(default = "default_parallelism")]
    parallelism: usize,
    dataset: DatasetSource,
    #[serde(default)]
    prompts: PromptsConfig,
    #[serde(default)]
    mutator: Option<toml::Table>,
    #[serde(default)]
    backends: Vec<BackendSpec>,
    #[serde(default)]
    fit: FitConfig,
    #[serde(default)]
    evaluate: EvaluateConfig,
    #[serde(default)]
    sweep: SweepConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_mrs() -> Vec<String> {
    MrId::BUILTIN.iter().map(ToString::to_string).collect()
}

fn default_parallelism() -> usize {
    4
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptsConfig {
    /// Classification prompt; the built-in template when absent.
    pub classify: Option<PathBuf>,
    /// Directory of `<mr_id>.txt` rewrite prompts overriding the built-ins.
    pub mutations_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub repeats: usize,
    pub calibration_fraction: f64,
    /// Restrict the report to these methods (`zero_shot`, `mv`,
    /// `mv_all_variants`, `pcs`). All methods when absent.
    pub methods: Option<Vec<String>>,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self {
            repeats: 10,
            calibration_fraction: 0.5,
            methods: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub sizes: Vec<usize>,
    pub repeats: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            sizes: Vec::new(),
            repeats: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MutatorConfig {
    /// Built-in rule rewrites with an optional synonym table.
    Rule { synonyms: Option<BTreeMap<String, String>> },
    /// Rewrites by prompting a chat backend.
    Llm(BackendSpec),
}

/// A validated configuration with every path resolved.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub cache_path: PathBuf,
    pub weights_path: PathBuf,
    /// Requested relations, without Identity.
    pub mrs: Vec<MrId>,
    pub parallelism: usize,
    pub dataset: DatasetSource,
    pub prompts: PromptsConfig,
    pub mutator: MutatorConfig,
    pub backends: Vec<BackendSpec>,
    pub fit: FitConfig,
    pub evaluate: EvaluateConfig,
    pub sweep: SweepConfig,
}

#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

fn require_file(what: &str, path: &Path) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(config_err(format!("{what} {} does not exist", path.display())))
    }
}

impl RunConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> CliResult<Self> {
        let body = std::fs::read_to_string(path).map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&body, base, overrides)
    }

    /// Parse and validate a config document. No network or backend activity
    /// happens here.
    pub fn parse(body: &str, base: &Path, overrides: &Overrides) -> CliResult<Self> {
        let raw: RawConfig = toml::from_str(body).map_err(|e| config_err(e.to_string()))?;

        let seed = overrides.seed.unwrap_or(raw.seed);
        let output_dir = match &overrides.output_dir {
            Some(dir) => dir.clone(),
            None => resolve(base, &raw.output_dir),
        };
        let cache_path = raw
            .cache_path
            .map(|p| resolve(base, &p))
            .unwrap_or_else(|| output_dir.join("cache.jsonl"));
        let weights_path = raw
            .weights_path
            .map(|p| resolve(base, &p))
            .unwrap_or_else(|| output_dir.join("weights.json"));

        let mrs = raw
            .mrs
            .iter()
            .map(|s| s.parse::<MrId>().map_err(|e| config_err(e.to_string())))
            .collect::<CliResult<Vec<_>>>()?;
        registered_mrs(&mrs).map_err(|e| config_err(e.to_string()))?;
        let mrs: Vec<MrId> = mrs.into_iter().filter(|m| *m != MrId::Identity).collect();
        if mrs.is_empty() {
            tracing::warn!("no metamorphic relations configured; variant sets hold the original text only");
        }

        if raw.parallelism == 0 {
            return Err(config_err("parallelism must be >= 1"));
        }

        let mut dataset = raw.dataset;
        dataset.path = resolve(base, &dataset.path);
        require_file("dataset", &dataset.path)?;

        let mut prompts = raw.prompts;
        if let Some(p) = &mut prompts.classify {
            *p = resolve(base, p);
            require_file("classification prompt", p)?;
        }
        if let Some(dir) = &mut prompts.mutations_dir {
            *dir = resolve(base, dir);
            if !dir.is_dir() {
                return Err(config_err(format!("mutation prompt directory {} does not exist", dir.display())));
            }
        }

        let mut backends = raw.backends;
        if backends.is_empty() {
            return Err(config_err("at least one [[backends]] entry is required"));
        }
        let mut names = HashSet::new();
        for spec in &mut backends {
            validate_backend(spec, base)?;
            if !names.insert(spec.name.clone()) {
                return Err(config_err(format!("backend name `{}` used twice", spec.name)));
            }
        }

        let mutator = parse_mutator(raw.mutator, base)?;
        if let MutatorConfig::Llm(_) = &mutator {
            let templates = match &prompts.mutations_dir {
                Some(dir) => MutationTemplates::load_dir(dir).map_err(|e| config_err(e.to_string()))?,
                None => MutationTemplates::default(),
            };
            if let Some(mr) = mrs.iter().find(|m| templates.get(m).is_none()) {
                return Err(config_err(format!("no rewrite prompt for MR `{mr}`")));
            }
        }

        let mut fit = raw.fit;
        fit.seed = seed;
        fit.validate().map_err(|e| config_err(e.to_string()))?;

        let evaluate = raw.evaluate;
        if evaluate.repeats == 0 {
            return Err(config_err("evaluate.repeats must be >= 1"));
        }
        if !(evaluate.calibration_fraction > 0.0 && evaluate.calibration_fraction < 1.0) {
            return Err(config_err("evaluate.calibration_fraction must lie in (0, 1)"));
        }
        if let Some(methods) = &evaluate.methods {
            const KNOWN: [&str; 4] = ["zero_shot", "mv", "mv_all_variants", "pcs"];
            if methods.is_empty() {
                return Err(config_err("evaluate.methods must not be empty"));
            }
            if let Some(m) = methods.iter().find(|m| !KNOWN.contains(&m.as_str())) {
                return Err(config_err(format!("unknown evaluation method `{m}`")));
            }
        }
        if raw.sweep.repeats == 0 {
            return Err(config_err("sweep.repeats must be >= 1"));
        }
        if raw.sweep.sizes.contains(&0) {
            return Err(config_err("sweep sizes must be >= 1"));
        }

        Ok(Self {
            seed,
            output_dir,
            cache_path,
            weights_path,
            mrs,
            parallelism: raw.parallelism,
            dataset,
            prompts,
            mutator,
            backends,
            fit,
            evaluate,
            sweep: raw.sweep,
        })
    }

    /// Identity followed by the configured relations.
    pub fn variant_mrs(&self) -> Vec<MrId> {
        registered_mrs(&self.mrs).expect("validated")
    }

    pub fn backend_names(&self) -> Vec<String> {
        self.backends.iter().map(|b| b.name.clone()).collect()
    }

    pub fn output(&self, file: &str) -> PathBuf {
        self.output_dir.join(file)
    }
}

fn validate_backend(spec: &mut BackendSpec, base: &Path) -> CliResult<()> {
    if let Some(script) = &mut spec.script {
        *script = resolve(base, script);
    }
    spec.validate().map_err(|e| config_err(e.to_string()))?;
    if spec.kind == BackendKind::Scripted {
        require_file(&format!("script for backend `{}`", spec.name), spec.script.as_deref().expect("validated"))?;
    }
    Ok(())
}

fn parse_mutator(table: Option<toml::Table>, base: &Path) -> CliResult<MutatorConfig> {
    let Some(mut table) = table else {
        return Ok(MutatorConfig::Rule { synonyms: None });
    };
    let kind = table.get("kind").and_then(|k| k.as_str()).unwrap_or("rule").to_string();
    if kind == "rule" {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct RuleTable {
            #[allow(dead_code)]
            kind: Option<String>,
            synonyms: Option<BTreeMap<String, String>>,
        }
        let rule: RuleTable = table.try_into().map_err(|e| config_err(format!("[mutator]: {e}")))?;
        return Ok(MutatorConfig::Rule { synonyms: rule.synonyms });
    }
    table
        .entry("name")
        .or_insert_with(|| toml::Value::String("mutator".into()));
    let mut spec: BackendSpec = table.try_into().map_err(|e| config_err(format!("[mutator]: {e}")))?;
    validate_backend(&mut spec, base)?;
    Ok(MutatorConfig::Llm(spec))
}

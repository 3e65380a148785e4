use std::path::PathBuf;

use pcs_core::backends::{AnnotationCache, AnnotationTensor, Annotator};
use pcs_core::dataset::{Dataset, Sample};
use pcs_core::mrengine::build_variant_sets;
use pcs_core::optimize::WeightsFile;
use pcs_core::pcs::{PcsScorer, ScoreRecord};

use super::{annotated, backends, classify_template, dataset, write_jsonl, BuiltMutator, Summary, SCORES_FILE};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq)]
pub enum ScoreInput {
    /// Every sample of the annotated dataset.
    Dataset,
    /// One ad-hoc text; the report goes to stdout only.
    Text(String),
    /// A file with one text per line.
    File(PathBuf),
}

pub fn run(cfg: &RunConfig, input: &ScoreInput, uniform: bool) -> CliResult<Summary> {
    let (tensor, backend_calls) = match input {
        ScoreInput::Dataset => (annotated(cfg)?.1, 0),
        ScoreInput::Text(text) => annotate_texts(cfg, std::slice::from_ref(text))?,
        ScoreInput::File(path) => {
            let body = std::fs::read_to_string(path)
                .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
            let texts: Vec<String> = body.lines().filter(|l| !l.trim().is_empty()).map(str::to_string).collect();
            if texts.is_empty() {
                return Err(CliError::Data(format!("{} holds no texts", path.display())));
            }
            annotate_texts(cfg, &texts)?
        }
    };

    let scorer = if uniform {
        PcsScorer::uniform(tensor.n_variants(), &tensor.backends)
    } else {
        let weights = WeightsFile::load(&cfg.weights_path).map_err(|e| {
            CliError::Data(format!("{e}; run `pcs train` first or pass --uniform"))
        })?;
        let (mr, llm) = weights
            .aligned(&tensor.mrs, &tensor.backends)
            .map_err(|e| CliError::Data(e.to_string()))?;
        PcsScorer::new(mr, &tensor.backends, &llm)?
    };
    let names = tensor.label_space.labels().to_vec();
    let m = names.len();
    let records = (0..tensor.n_samples())
        .map(|i| {
            let labels: Vec<_> = (0..tensor.n_backends()).map(|j| tensor.labels(i, j)).collect();
            let pcs = scorer.score(&labels, m)?;
            Ok(ScoreRecord::new(&tensor.sample_ids[i], &pcs, &names, &[]))
        })
        .collect::<CliResult<Vec<_>>>()?;

    if let ScoreInput::Text(_) = input {
        let line = serde_json::to_string(&records[0]).map_err(pcs_core::Error::from)?;
        return Ok(Summary {
            message: line,
            backend_calls,
            outputs: vec![],
        });
    }
    let path = cfg.output(SCORES_FILE);
    write_jsonl(&path, &records)?;
    Ok(Summary {
        message: format!("scored {} samples into {}", records.len(), path.display()),
        backend_calls,
        outputs: vec![path],
    })
}

/// Mutate and annotate ad-hoc texts, sharing the annotation cache.
fn annotate_texts(cfg: &RunConfig, texts: &[String]) -> CliResult<(AnnotationTensor, usize)> {
    let space = dataset(cfg)?.label_space;
    let samples = texts
        .iter()
        .enumerate()
        .map(|(i, t)| Sample::new(format!("input-{:06}", i + 1), t.clone(), None))
        .collect::<Result<Vec<_>, _>>()?;
    let ds = Dataset::new("input", space, samples)?;

    let mutator = BuiltMutator::from_config(cfg)?;
    let sets = build_variant_sets(&ds.samples, &cfg.mrs, mutator.as_dyn(), cfg.parallelism)
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let template = classify_template(cfg)?;
    let backends = backends(cfg)?;
    let cache = AnnotationCache::open(&cfg.cache_path)?;
    let (tensor, stats) = Annotator::new(&template, &ds.label_space)
        .with_cache(&cache)
        .annotate_matrix(&ds, &sets, &backends)?;
    Ok((tensor, stats.backend_calls + mutator.calls()))
}

use pcs_core::backends::{AnnotationCache, Annotator};

use super::{aligned_variant_sets, backends, classify_template, dataset, write_json, Summary, ANNOTATIONS_FILE};
use crate::config::RunConfig;
use crate::error::CliResult;

/// Label every variant with every backend. Completed cells are cached, so an
/// interrupted run resumes where it stopped.
pub fn run(cfg: &RunConfig) -> CliResult<Summary> {
    let ds = dataset(cfg)?;
    let sets = aligned_variant_sets(cfg, &ds)?;
    let template = classify_template(cfg)?;
    let backends = backends(cfg)?;
    let cache = AnnotationCache::open(&cfg.cache_path)?;

    let (tensor, stats) = Annotator::new(&template, &ds.label_space)
        .with_cache(&cache)
        .annotate_matrix(&ds, &sets, &backends)?;
    let path = cfg.output(ANNOTATIONS_FILE);
    write_json(&path, &tensor)?;

    let abstained = tensor.cells.iter().filter(|c| c.abstained).count();
    let mut message = format!(
        "annotated {} cells ({} samples x {} backends x {} variants): {} cached, {} backend calls, {abstained} abstentions",
        stats.cells,
        tensor.n_samples(),
        tensor.n_backends(),
        tensor.n_variants(),
        stats.cache_hits,
        stats.backend_calls
    );
    if stats.cache_errors > 0 {
        message.push_str(&format!(", {} cache write failures", stats.cache_errors));
    }
    Ok(Summary {
        message,
        backend_calls: stats.backend_calls,
        outputs: vec![path],
    })
}

use std::collections::HashMap;

use pcs_core::dataset::Sample;
use pcs_core::mrengine::{build_variant_sets, VariantSet};

use super::{append_jsonl, dataset, read_jsonl, write_jsonl, BuiltMutator, Summary, MUTATION_LOG_FILE, VARIANTS_FILE};
use crate::config::RunConfig;
use crate::error::CliResult;

/// Build variant sets for every sample that does not have one yet.
pub fn run(cfg: &RunConfig) -> CliResult<Summary> {
    let ds = dataset(cfg)?;
    let expected = cfg.variant_mrs();
    let path = cfg.output(VARIANTS_FILE);

    let mut sets: HashMap<String, VariantSet> = HashMap::new();
    if path.is_file() {
        for set in read_jsonl::<VariantSet>(&path)? {
            if set.mrs().eq(expected.iter()) {
                sets.insert(set.sample_id.clone(), set);
            } else {
                tracing::warn!(sample = %set.sample_id, "stale variant set for a different MR list, rebuilding");
            }
        }
    }
    let reused = ds.samples.iter().filter(|s| sets.contains_key(&s.id)).count();
    let todo: Vec<Sample> = ds.samples.iter().filter(|s| !sets.contains_key(&s.id)).cloned().collect();

    let mutator = BuiltMutator::from_config(cfg)?;
    let mut built = Vec::new();
    let mut failure = None;
    for result in build_variant_sets(&todo, &cfg.mrs, mutator.as_dyn(), cfg.parallelism) {
        match result {
            Ok(set) => built.push(set),
            Err(e) => {
                failure.get_or_insert(e);
            }
        }
    }

    let log: Vec<_> = built.iter().flat_map(VariantSet::audit_records).collect();
    append_jsonl(&cfg.output(MUTATION_LOG_FILE), &log)?;
    let fallbacks = built.iter().filter(|s| s.has_fallback()).count();
    let new = built.len();
    for set in built {
        sets.insert(set.sample_id.clone(), set);
    }
    let ordered: Vec<&VariantSet> = ds.samples.iter().filter_map(|s| sets.get(&s.id)).collect();
    write_jsonl(&path, &ordered)?;

    if let Some(e) = failure {
        return Err(e.into());
    }
    Ok(Summary {
        message: format!(
            "{new} new variant sets ({reused} reused, {fallbacks} with fallbacks), {} variants each, {} mutator calls",
            expected.len(),
            mutator.calls()
        ),
        backend_calls: mutator.calls(),
        outputs: vec![path, cfg.output(MUTATION_LOG_FILE)],
    })
}

use pcs_core::evaluate::{sweep_calibration_size, SweepPoint};
use serde::Serialize;

use super::{annotated, write_json, Summary, SWEEP_FILE};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

#[derive(Debug, Serialize)]
struct SweepFile<'a> {
    seed: u64,
    repeats: usize,
    points: &'a [SweepPoint],
}

/// Held-out AUROC as a function of calibration-set size.
pub fn run(cfg: &RunConfig, sizes: &[usize], repeats: Option<usize>) -> CliResult<Summary> {
    let sizes = if sizes.is_empty() { &cfg.sweep.sizes[..] } else { sizes };
    if sizes.is_empty() {
        return Err(CliError::Config("no calibration sizes given (use --sizes or [sweep] sizes)".into()));
    }
    let repeats = repeats.unwrap_or(cfg.sweep.repeats);
    let (ds, tensor) = annotated(cfg)?;
    let golds = ds
        .golds()
        .ok_or_else(|| pcs_core::Error::Calibration("the sweep needs a gold label for every sample".into()))?;
    let points = sweep_calibration_size(&tensor.view(), &golds, sizes, repeats, cfg.seed, &cfg.fit)?;

    let path = cfg.output(SWEEP_FILE);
    write_json(
        &path,
        &SweepFile {
            seed: cfg.seed,
            repeats,
            points: &points,
        },
    )?;
    let mut message = format!("{:>6}  {:>8}  {:>8}  {:>5}\n", "size", "AUROC", "std", "fits");
    for p in &points {
        message.push_str(&format!("{:>6}  {:>8.4}  {:>8.4}  {:>5}\n", p.size, p.mean_auroc, p.std_auroc, p.fits));
    }
    Ok(Summary {
        message,
        backend_calls: 0,
        outputs: vec![path],
    })
}

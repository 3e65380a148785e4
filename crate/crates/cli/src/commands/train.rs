use pcs_core::optimize::{encode_targets, fit_weights, WeightsFile};

use super::{annotated, Summary};
use crate::config::RunConfig;
use crate::error::CliResult;

/// Fit MR and backend weights on the whole labeled dataset.
pub fn run(cfg: &RunConfig) -> CliResult<Summary> {
    let (ds, tensor) = annotated(cfg)?;
    let targets = encode_targets(&ds)?;
    let fitted = fit_weights(&tensor.view(), &targets, &cfg.fit)?;
    let file = WeightsFile::new(&tensor.mrs, &tensor.backends, &fitted);
    file.save(&cfg.weights_path)?;

    let fmt = |pairs: Vec<(String, f64)>| {
        pairs
            .into_iter()
            .map(|(k, w)| format!("{k}={w:.4}"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let mut message = format!(
        "objective {:.6} after {} iterations\nmr weights: {}\nbackend weights: {}",
        fitted.report.objective,
        fitted.report.iterations,
        fmt(file.mr_weights.iter().map(|(k, w)| (k.to_string(), *w)).collect()),
        fmt(file.llm_weights.iter().map(|(k, w)| (k.clone(), *w)).collect()),
    );
    if !fitted.report.flags.is_empty() {
        message.push_str(&format!("\nflags: {:?}", fitted.report.flags));
    }
    Ok(Summary {
        message,
        backend_calls: 0,
        outputs: vec![cfg.weights_path.clone()],
    })
}

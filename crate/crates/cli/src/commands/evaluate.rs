use std::path::Path;

use indexmap::IndexMap;
use pcs_core::evaluate::{evaluate_holdout, replay_report, EvalReport, HoldoutConfig, PCS_METHOD};
use pcs_core::mrengine::MrId;

use super::{annotated, write_atomic, write_json, Summary, REPORT_JSON_FILE, REPORT_TEXT_FILE};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

/// Compare PCS against the baselines on repeated calibration/held-out splits.
pub fn run(cfg: &RunConfig) -> CliResult<Summary> {
    let (ds, tensor) = annotated(cfg)?;
    let golds = ds
        .golds()
        .ok_or_else(|| pcs_core::Error::Calibration("evaluation needs a gold label for every sample".into()))?;
    let identity = tensor
        .mrs
        .iter()
        .position(|m| *m == MrId::Identity)
        .expect("identity variant is always registered");
    let holdout = HoldoutConfig {
        repeats: cfg.evaluate.repeats,
        calibration_fraction: cfg.evaluate.calibration_fraction,
        seed: cfg.seed,
        fit: cfg.fit.clone(),
    };
    let mut report = evaluate_holdout(&tensor.view(), &golds, &tensor.backends, identity, &holdout)?;
    if let Some(methods) = &cfg.evaluate.methods {
        report = restrict(report, methods)?;
    }
    write_report(&cfg.output_dir, &report)
}

/// Build the report from AUROC values in a CSV file: a header row, one row per
/// evaluation setting, the first column naming the row. The last column is
/// compared against each of the others.
pub fn replay(csv_path: &Path, output_dir: &Path) -> CliResult<Summary> {
    let columns = read_replay_csv(csv_path)?;
    if columns.len() < 2 {
        return Err(CliError::Data(format!(
            "{} needs at least two method columns after the row label",
            csv_path.display()
        )));
    }
    write_report(output_dir, &replay_report(columns)?)
}

pub fn read_replay_csv(path: &Path) -> CliResult<IndexMap<String, Vec<f64>>> {
    let data_err = |msg: String| CliError::Data(format!("{}: {msg}", path.display()));
    let mut reader = csv::Reader::from_path(path).map_err(|e| data_err(e.to_string()))?;
    let headers = reader.headers().map_err(|e| data_err(e.to_string()))?.clone();
    let mut columns: IndexMap<String, Vec<f64>> = headers.iter().skip(1).map(|h| (h.trim().to_string(), Vec::new())).collect();
    if columns.len() + 1 != headers.len() {
        return Err(data_err("duplicate column names".into()));
    }
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| data_err(e.to_string()))?;
        if record.len() != headers.len() {
            return Err(data_err(format!("row {} has {} fields", row + 1, record.len())));
        }
        for (value, column) in record.iter().skip(1).zip(columns.values_mut()) {
            let v: f64 = value
                .trim()
                .parse()
                .map_err(|_| data_err(format!("row {}: `{value}` is not a number", row + 1)))?;
            column.push(v);
        }
    }
    Ok(columns)
}

fn restrict(report: EvalReport, methods: &[String]) -> CliResult<EvalReport> {
    let keep = |name: &str| {
        methods
            .iter()
            .any(|m| name == m || name.strip_prefix(m.as_str()).is_some_and(|rest| rest.starts_with(':')))
    };
    let runs: IndexMap<String, Vec<f64>> = report.runs.into_iter().filter(|(k, _)| keep(k)).collect();
    let reference = if runs.contains_key(PCS_METHOD) {
        PCS_METHOD.to_string()
    } else {
        runs.keys().last().cloned().unwrap_or_default()
    };
    Ok(EvalReport::from_runs(runs, &reference, report.n_samples, report.excluded_rows)?)
}

fn write_report(output_dir: &Path, report: &EvalReport) -> CliResult<Summary> {
    let json_path = output_dir.join(REPORT_JSON_FILE);
    let text_path = output_dir.join(REPORT_TEXT_FILE);
    write_json(&json_path, report)?;
    let table = report.render_table();
    write_atomic(&text_path, table.as_bytes())?;
    Ok(Summary {
        message: table,
        backend_calls: 0,
        outputs: vec![json_path, text_path],
    })
}

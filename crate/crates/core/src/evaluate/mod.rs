//! Metrics, baselines and evaluation harnesses.
//!
//! AUROC is computed from rank statistics (Mann-Whitney U with mid-ranks for
//! ties). Multiclass AUROC is the macro average of one-vs-rest splits, each
//! scored by that label's entry in the score vector. Hard-label baselines are
//! scored by their vote share: zero-shot puts 1.0 on the predicted label,
//! majority voting puts the fraction of votes on each label.

mod simulate;
mod stats;

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use simulate::{simulate_annotations, Confusion, FlipModel};
pub use stats::{
    avg_relative_improvement, ln_gamma, paired_ttest, regularized_incomplete_beta, student_t_two_tailed, TTest,
};

use crate::error::{Error, Result};
use crate::optimize::{fit_weights, one_hot, AnnotationTensorView, FitConfig};
use crate::pcs::PcsScorer;

/// Probability that a random positive outscores a random negative, ties
/// counting one half.
pub fn auroc_binary(scores: &[f64], truths: &[bool]) -> Result<f64> {
    if scores.len() != truths.len() {
        return Err(Error::InvalidInput(format!(
            "{} scores for {} truths",
            scores.len(),
            truths.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidInput("NaN score".into()));
    }
    let n_pos = truths.iter().filter(|t| **t).count() as u64;
    let n_neg = truths.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric("AUROC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // twice the positive rank sum, with ties taking the mean rank of their
    // block; doubled ranks keep everything integral
    let mut doubled_rank_sum: u64 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // 1-based ranks start+1 ..= end; doubled mean rank = start + end + 1
        let doubled_mid = (start + end + 1) as u64;
        let positives = order[start..end].iter().filter(|&&i| truths[i]).count() as u64;
        doubled_rank_sum += positives * doubled_mid;
        start = end;
    }
    let doubled_u = doubled_rank_sum - n_pos * (n_pos + 1);
    Ok(doubled_u as f64 / (2 * n_pos * n_neg) as f64)
}

/// Macro one-vs-rest AUROC. `rows[r][c]` is the score of label `c` for row `r`.
pub fn auroc_multiclass(rows: &[Vec<f64>], truths: &[usize], num_labels: usize) -> Result<f64> {
    if rows.len() != truths.len() {
        return Err(Error::InvalidInput("rows and truths differ in length".into()));
    }
    if rows.iter().any(|r| r.len() != num_labels) {
        return Err(Error::InvalidInput("score rows must have one entry per label".into()));
    }
    let mut total = 0.0;
    for c in 0..num_labels {
        if !truths.contains(&c) {
            return Err(Error::UndefinedMetric(format!("label {c} never occurs")));
        }
        let scores: Vec<f64> = rows.iter().map(|r| r[c]).collect();
        let split: Vec<bool> = truths.iter().map(|t| *t == c).collect();
        total += auroc_binary(&scores, &split)?;
    }
    Ok(total / num_labels as f64)
}

/// Most frequent label and its share; ties go to the lowest index.
pub fn majority_vote(labels: &[usize], num_labels: usize) -> Result<(usize, f64)> {
    let shares = vote_shares(labels, num_labels)?;
    Ok(crate::pcs::classify(&shares))
}

/// Fraction of votes per label.
pub fn vote_shares(labels: &[usize], num_labels: usize) -> Result<Vec<f64>> {
    if labels.is_empty() {
        return Err(Error::InvalidInput("no votes".into()));
    }
    let mut counts = vec![0usize; num_labels];
    for &l in labels {
        *counts
            .get_mut(l)
            .ok_or_else(|| Error::InvalidInput(format!("label {l} out of range")))? += 1;
    }
    Ok(counts.into_iter().map(|c| c as f64 / labels.len() as f64).collect())
}

fn uniform(m: usize) -> Vec<f64> {
    vec![1.0 / m as f64; m]
}

/// Zero-shot scores for one backend: the label it gave the original input.
pub fn zero_shot_scores(view: &AnnotationTensorView, backend: usize, identity_variant: usize) -> Vec<Vec<f64>> {
    let m = view.n_labels();
    (0..view.n_samples())
        .map(|i| match view.label(i, backend, identity_variant) {
            Some(c) => {
                let mut row = vec![0.0; m];
                row[c] = 1.0;
                row
            }
            None => uniform(m),
        })
        .collect()
}

/// Majority-vote shares per sample over the given variants of every backend.
pub fn majority_vote_scores(view: &AnnotationTensorView, variants: &[usize]) -> Vec<Vec<f64>> {
    let m = view.n_labels();
    (0..view.n_samples())
        .map(|i| {
            let votes: Vec<usize> = (0..view.n_backends())
                .flat_map(|j| variants.iter().filter_map(move |&k| view.label(i, j, k)))
                .collect();
            vote_shares(&votes, m).unwrap_or_else(|_| uniform(m))
        })
        .collect()
}

/// Aggregated PCS rows for every sample.
pub fn pcs_scores(view: &AnnotationTensorView, scorer: &PcsScorer) -> Result<Vec<Vec<f64>>> {
    (0..view.n_samples())
        .map(|i| Ok(scorer.score(&view.sample_labels(i), view.n_labels())?.scores))
        .collect()
}

/// Samples with no label from any backend on any variant.
pub fn all_abstained_rows(view: &AnnotationTensorView) -> Vec<usize> {
    (0..view.n_samples())
        .filter(|&i| (0..view.n_backends()).all(|j| view.fiber_labels(i, j).iter().all(Option::is_none)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub method_a: String,
    pub method_b: String,
    pub t: Option<f64>,
    pub p: Option<f64>,
    /// Relative improvement of `method_a` over `method_b`, percent. Absent
    /// when some baseline value is zero.
    pub ari_percent: Option<f64>,
    /// Method with the higher mean when `p < 0.05`, otherwise `"n.s."`.
    pub superior: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

/// Paired comparison of two per-run AUROC series.
pub fn compare(method_a: &str, a: &[f64], method_b: &str, b: &[f64]) -> Result<Comparison> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::InvalidInput(format!(
            "cannot compare {} against {} paired values",
            a.len(),
            b.len()
        )));
    }
    let mut notes = Vec::new();
    let ari_percent = match avg_relative_improvement(a, b) {
        Ok(v) => Some(v),
        Err(Error::InvalidInput(msg)) => {
            notes.push(format!("no relative improvement: {msg}"));
            None
        }
        Err(e) => return Err(e),
    };
    let (t, p) = match paired_ttest(a, b) {
        Ok(test) => (Some(test.t), Some(test.p)),
        Err(Error::ZeroVariance) => {
            notes.push("differences have zero variance".to_string());
            (None, None)
        }
        Err(Error::InvalidInput(msg)) => {
            notes.push(msg);
            (None, None)
        }
        Err(e) => return Err(e),
    };
    let note = (!notes.is_empty()).then(|| notes.join("; "));
    let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
    let superior = match p {
        Some(p) if p < SIGNIFICANCE_LEVEL => {
            if mean(a) >= mean(b) { method_a } else { method_b }.to_string()
        }
        _ => "n.s.".to_string(),
    };
    Ok(Comparison {
        method_a: method_a.to_string(),
        method_b: method_b.to_string(),
        t,
        p,
        ari_percent,
        superior,
        note,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Mean AUROC per method.
    pub auroc: IndexMap<String, f64>,
    /// Per-run AUROC series the comparisons were computed on.
    #[serde(default)]
    pub runs: IndexMap<String, Vec<f64>>,
    pub comparisons: Vec<Comparison>,
    pub n_samples: usize,
    pub excluded_rows: usize,
}

impl EvalReport {
    /// Build from per-run series, comparing `reference` against every other
    /// method. With a single method there is no comparison section.
    pub fn from_runs(runs: IndexMap<String, Vec<f64>>, reference: &str, n_samples: usize, excluded_rows: usize) -> Result<Self> {
        let auroc = runs
            .iter()
            .map(|(k, v)| (k.clone(), v.iter().sum::<f64>() / v.len().max(1) as f64))
            .collect();
        let mut comparisons = Vec::new();
        if let Some(reference_runs) = runs.get(reference) {
            for (name, series) in &runs {
                if name != reference {
                    comparisons.push(compare(reference, reference_runs, name, series)?);
                }
            }
        }
        Ok(Self {
            auroc,
            runs,
            comparisons,
            n_samples,
            excluded_rows,
        })
    }

    /// Aligned plain-text table: one row per method, comparisons below.
    pub fn render_table(&self) -> String {
        let width = self
            .auroc
            .keys()
            .map(String::len)
            .chain(self.comparisons.iter().map(|c| c.method_a.len() + c.method_b.len() + 4))
            .max()
            .unwrap_or(6)
            .max(6);
        let mut out = String::new();
        out.push_str(&format!("{:<width$}  {:>7}\n", "method", "AUROC"));
        out.push_str(&format!("{}\n", "-".repeat(width + 9)));
        for (name, auc) in &self.auroc {
            out.push_str(&format!("{name:<width$}  {auc:>7.4}\n"));
        }
        if !self.comparisons.is_empty() {
            out.push('\n');
            out.push_str(&format!(
                "{:<width$}  {:>8}  {:>8}  {:>8}  {}\n",
                "comparison", "ARI(%)", "t", "p-value", "superior"
            ));
            out.push_str(&format!("{}\n", "-".repeat(width + 40)));
            for c in &self.comparisons {
                let fmt = |x: Option<f64>, prec: usize| x.map_or("-".to_string(), |v| format!("{v:.prec$}"));
                out.push_str(&format!(
                    "{:<width$}  {:>8}  {:>8}  {:>8}  {}\n",
                    format!("{} vs {}", c.method_a, c.method_b),
                    c.ari_percent.map_or("-".to_string(), |v| format!("{v:+.2}")),
                    fmt(c.t, 3),
                    fmt(c.p, 4),
                    c.superior
                ));
            }
        }
        out.push_str(&format!("\nsamples: {}  excluded (all abstained): {}\n", self.n_samples, self.excluded_rows));
        out
    }
}

/// Report from AUROC values supplied directly: `columns` maps method name to
/// one value per row; the last column is compared against every other one.
pub fn replay_report(columns: IndexMap<String, Vec<f64>>) -> Result<EvalReport> {
    let reference = columns
        .keys()
        .last()
        .cloned()
        .ok_or_else(|| Error::InvalidInput("no columns to replay".into()))?;
    let rows = columns.values().next().map_or(0, Vec::len);
    if columns.values().any(|c| c.len() != rows) {
        return Err(Error::InvalidInput("replay columns differ in length".into()));
    }
    EvalReport::from_runs(columns, &reference, rows, 0)
}

/// Derive an independent seed for one (size, repeat) cell.
pub fn cell_seed(seed: u64, size: usize, repeat: usize) -> u64 {
    let digest = crate::util::digest_fields(&[&seed.to_string(), &size.to_string(), &repeat.to_string()]);
    u64::from_str_radix(&digest[..16], 16).expect("hex digest")
}

/// Evaluate PCS on the held-out rows of `view` after fitting on `calibration`.
fn pcs_auroc(
    view: &AnnotationTensorView,
    golds: &[usize],
    calibration: &[usize],
    held_out: &[usize],
    backends: &[String],
    fit: &FitConfig,
) -> Result<f64> {
    let cal = view.subset(calibration);
    let targets = one_hot(&calibration.iter().map(|&i| golds[i]).collect::<Vec<_>>(), view.n_labels());
    let fitted = fit_weights(&cal, &targets, fit)?;
    let scorer = PcsScorer::new(fitted.mr_weights, backends, &fitted.llm_weights)?;
    let test = view.subset(held_out);
    let rows = pcs_scores(&test, &scorer)?;
    let truths: Vec<usize> = held_out.iter().map(|&i| golds[i]).collect();
    auroc_multiclass(&rows, &truths, view.n_labels())
}

fn backend_names(n: usize) -> Vec<String> {
    (0..n).map(|j| format!("backend{j}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub size: usize,
    pub mean_auroc: f64,
    pub std_auroc: f64,
    /// Fits that produced a held-out AUROC.
    pub fits: usize,
    /// Repeats skipped because the held-out part lacked a label.
    pub skipped: usize,
}

/// Held-out PCS AUROC as a function of calibration-set size.
///
/// For each size, `repeats` random calibration subsets are fitted and scored
/// on the remaining rows. At `size == n` nothing is held out: the single fit
/// is scored on the full set.
pub fn sweep_calibration_size(
    view: &AnnotationTensorView,
    golds: &[usize],
    sizes: &[usize],
    repeats: usize,
    seed: u64,
    fit: &FitConfig,
) -> Result<Vec<SweepPoint>> {
    let n = view.n_samples();
    if golds.len() != n {
        return Err(Error::InvalidInput("one gold label per sample is required".into()));
    }
    if repeats == 0 {
        return Err(Error::InvalidInput("repeats must be >= 1".into()));
    }
    if let Some(s) = sizes.iter().find(|s| **s > n || **s == 0) {
        return Err(Error::InvalidInput(format!("calibration size {s} outside 1..={n}")));
    }
    let backends = backend_names(view.n_backends());
    let all: Vec<usize> = (0..n).collect();

    let cells: Vec<(usize, usize)> = sizes
        .iter()
        .flat_map(|&size| {
            let reps = if size == n { 1 } else { repeats };
            (0..reps).map(move |r| (size, r))
        })
        .collect();
    let results: Vec<Result<Option<f64>>> = cells
        .par_iter()
        .map(|&(size, repeat)| {
            if size == n {
                return pcs_auroc(view, golds, &all, &all, &backends, fit).map(Some);
            }
            let mut order = all.clone();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(cell_seed(seed, size, repeat)));
            let (cal, held) = order.split_at(size);
            match pcs_auroc(view, golds, cal, held, &backends, fit) {
                Ok(a) => Ok(Some(a)),
                Err(Error::UndefinedMetric(_)) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect();

    let mut points = Vec::with_capacity(sizes.len());
    let mut results = results.into_iter();
    for &size in sizes {
        let reps = if size == n { 1 } else { repeats };
        let mut values = Vec::with_capacity(reps);
        let mut skipped = 0;
        for _ in 0..reps {
            match results.next().expect("one result per cell")? {
                Some(a) => values.push(a),
                None => skipped += 1,
            }
        }
        let fits = values.len();
        let mean = values.iter().sum::<f64>() / fits.max(1) as f64;
        let std = if fits > 1 {
            (values.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (fits - 1) as f64).sqrt()
        } else {
            0.0
        };
        points.push(SweepPoint {
            size,
            mean_auroc: if fits == 0 { f64::NAN } else { mean },
            std_auroc: std,
            fits,
            skipped,
        });
    }
    Ok(points)
}

/// Settings for repeated calibration/held-out evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HoldoutConfig {
    pub repeats: usize,
    pub calibration_fraction: f64,
    pub seed: u64,
    pub fit: FitConfig,
}

impl Default for HoldoutConfig {
    fn default() -> Self {
        Self {
            repeats: 10,
            calibration_fraction: 0.5,
            seed: 0,
            fit: FitConfig::default(),
        }
    }
}

pub const PCS_METHOD: &str = "pcs";
pub const MV_METHOD: &str = "mv";
pub const MV_ALL_METHOD: &str = "mv_all_variants";

/// Compare PCS against zero-shot (per backend) and majority-vote baselines
/// over repeated random calibration/held-out splits. Every method is scored on
/// the same held-out rows of each split; rows where every cell abstained are
/// excluded throughout.
pub fn evaluate_holdout(
    view: &AnnotationTensorView,
    golds: &[usize],
    backends: &[String],
    identity_variant: usize,
    cfg: &HoldoutConfig,
) -> Result<EvalReport> {
    if golds.len() != view.n_samples() {
        return Err(Error::InvalidInput("one gold label per sample is required".into()));
    }
    if backends.len() != view.n_backends() {
        return Err(Error::InvalidInput("backend names do not match the tensor".into()));
    }
    if cfg.repeats == 0 || !(cfg.calibration_fraction > 0.0 && cfg.calibration_fraction < 1.0) {
        return Err(Error::InvalidInput("need repeats >= 1 and a calibration fraction in (0, 1)".into()));
    }
    let excluded = all_abstained_rows(view);
    let usable: Vec<usize> = (0..view.n_samples()).filter(|i| !excluded.contains(i)).collect();
    let cal_size = ((usable.len() as f64) * cfg.calibration_fraction).round() as usize;
    if cal_size == 0 || cal_size >= usable.len() {
        return Err(Error::InvalidInput("too few usable samples to split".into()));
    }

    let mut methods: Vec<String> = backends.iter().map(|b| format!("zero_shot:{b}")).collect();
    if backends.len() > 1 {
        methods.push(MV_METHOD.into());
    }
    if view.n_variants() > 1 {
        methods.push(MV_ALL_METHOD.into());
    }
    methods.push(PCS_METHOD.into());
    let mut runs: IndexMap<String, Vec<f64>> = methods.iter().map(|m| (m.clone(), Vec::new())).collect();

    let m = view.n_labels();
    let all_variants: Vec<usize> = (0..view.n_variants()).collect();
    let mut attempts = 0;
    let mut split = 0;
    while runs[PCS_METHOD].len() < cfg.repeats {
        attempts += 1;
        if attempts > cfg.repeats * 20 {
            return Err(Error::UndefinedMetric(
                "could not draw held-out splits containing every label".into(),
            ));
        }
        let mut order = usable.clone();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(cell_seed(cfg.seed, cal_size, split)));
        split += 1;
        let (cal, held) = order.split_at(cal_size);
        let truths: Vec<usize> = held.iter().map(|&i| golds[i]).collect();
        if (0..m).any(|c| !truths.contains(&c)) {
            continue;
        }
        let test = view.subset(held);
        let mut row: Vec<(String, f64)> = Vec::with_capacity(methods.len());
        for (j, b) in backends.iter().enumerate() {
            let rows = zero_shot_scores(&test, j, identity_variant);
            row.push((format!("zero_shot:{b}"), auroc_multiclass(&rows, &truths, m)?));
        }
        if backends.len() > 1 {
            let rows = majority_vote_scores(&test, &[identity_variant]);
            row.push((MV_METHOD.into(), auroc_multiclass(&rows, &truths, m)?));
        }
        if view.n_variants() > 1 {
            let rows = majority_vote_scores(&test, &all_variants);
            row.push((MV_ALL_METHOD.into(), auroc_multiclass(&rows, &truths, m)?));
        }
        row.push((PCS_METHOD.into(), pcs_auroc(view, golds, cal, held, backends, &cfg.fit)?));
        for (name, auc) in row {
            runs.get_mut(&name).expect("method registered").push(auc);
        }
    }
    EvalReport::from_runs(runs, PCS_METHOD, usable.len(), excluded.len())
}

//! Perceived confidence scores.
//!
//! Per backend, the score of a label is the weight-normalized share of
//! variants that received that label. Across backends, the per-backend scores
//! are averaged with backend weights. Abstained variants drop out of both the
//! numerator and the denominator.

use std::ops::Deref;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for the sum-to-one check on weight vectors.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Nonnegative weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidInput("weight vector is empty".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && (0.0..=1.0).contains(*w))) {
            return Err(Error::InvalidInput(format!("weight {w} outside [0, 1]")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidInput(format!("weights sum to {sum}, not 1")));
        }
        Ok(Self(weights))
    }

    pub fn uniform(len: usize) -> Self {
        assert!(len > 0, "uniform weights need at least one entry");
        Self(vec![1.0 / len as f64; len])
    }

    /// Scale nonnegative weights to sum to one.
    pub fn normalized(weights: &[f64]) -> Result<Self> {
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidInput("weights must be finite and nonnegative".into()));
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(Error::InvalidInput("weights sum to zero".into()));
        }
        Self::new(weights.iter().map(|w| w / sum).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for WeightVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for WeightVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<WeightVector> for Vec<f64> {
    fn from(w: WeightVector) -> Self {
        w.0
    }
}

/// Per-label scores from one backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmScores {
    pub scores: Vec<f64>,
    /// No variant carried weight and a label; `scores` is uniform.
    pub all_abstained: bool,
}

/// Weighted label shares over the variants of one sample for one backend.
///
/// `labels[k]` is the label given to variant `k` (`None` = abstained) and
/// `mr_weights[k]` its nonnegative weight; weights need not sum to one.
pub fn pcs_per_llm(labels: &[Option<usize>], mr_weights: &[f64], num_labels: usize) -> Result<LlmScores> {
    if labels.len() != mr_weights.len() {
        return Err(Error::InvalidInput(format!(
            "{} annotations but {} MR weights",
            labels.len(),
            mr_weights.len()
        )));
    }
    if num_labels == 0 {
        return Err(Error::InvalidInput("empty label space".into()));
    }
    if mr_weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::InvalidInput("MR weights must be finite and nonnegative".into()));
    }
    let mut numer = vec![0.0; num_labels];
    let mut denom = 0.0;
    for (label, &w) in labels.iter().zip(mr_weights) {
        if let Some(c) = *label {
            if c >= num_labels {
                return Err(Error::InvalidInput(format!("label index {c} out of range")));
            }
            numer[c] += w;
            denom += w;
        }
    }
    if denom <= 0.0 {
        return Ok(LlmScores {
            scores: vec![1.0 / num_labels as f64; num_labels],
            all_abstained: true,
        });
    }
    Ok(LlmScores {
        scores: numer.into_iter().map(|x| x / denom).collect(),
        all_abstained: false,
    })
}

/// Aggregated scores with the per-backend breakdown they came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcsVector {
    pub scores: Vec<f64>,
    pub per_llm: IndexMap<String, Vec<f64>>,
    /// No backend contributed a label; `scores` is uniform.
    pub all_abstained: bool,
}

/// Combine per-backend scores with backend weights. Backends whose variants
/// all abstained are left out and the remaining weights renormalized.
pub fn pcs_aggregate(per_llm: &IndexMap<String, LlmScores>, llm_weights: &IndexMap<String, f64>) -> Result<PcsVector> {
    let Some(first) = per_llm.values().next() else {
        return Err(Error::InvalidInput("no per-backend scores".into()));
    };
    let m = first.scores.len();
    if per_llm.len() != llm_weights.len() {
        return Err(Error::InvalidInput(format!(
            "{} backends scored but {} backend weights",
            per_llm.len(),
            llm_weights.len()
        )));
    }
    let mut numer = vec![0.0; m];
    let mut denom = 0.0;
    for (name, scores) in per_llm {
        let w = *llm_weights
            .get(name)
            .ok_or_else(|| Error::InvalidInput(format!("no weight for backend `{name}`")))?;
        if !(w.is_finite() && w >= 0.0) {
            return Err(Error::InvalidInput(format!("invalid weight {w} for `{name}`")));
        }
        if scores.scores.len() != m {
            return Err(Error::InvalidInput("per-backend score lengths differ".into()));
        }
        if scores.all_abstained {
            continue;
        }
        for (acc, s) in numer.iter_mut().zip(&scores.scores) {
            *acc += w * s;
        }
        denom += w;
    }
    let provenance = per_llm
        .iter()
        .map(|(k, v)| (k.clone(), v.scores.clone()))
        .collect();
    if denom <= 0.0 {
        return Ok(PcsVector {
            scores: vec![1.0 / m as f64; m],
            per_llm: provenance,
            all_abstained: true,
        });
    }
    Ok(PcsVector {
        scores: numer.into_iter().map(|x| x / denom).collect(),
        per_llm: provenance,
        all_abstained: false,
    })
}

/// Argmax label and its score; ties go to the lowest index.
pub fn classify(scores: &[f64]) -> (usize, f64) {
    scores
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, s)| if s > best.1 { (i, s) } else { best })
}

/// Scores every sample of a tensor with fixed weights.
#[derive(Debug, Clone)]
pub struct PcsScorer {
    pub mr_weights: WeightVector,
    pub llm_weights: IndexMap<String, f64>,
}

impl PcsScorer {
    pub fn new(mr_weights: WeightVector, backends: &[String], llm_weights: &WeightVector) -> Result<Self> {
        if backends.len() != llm_weights.len() {
            return Err(Error::InvalidInput("backend names and weights differ in length".into()));
        }
        Ok(Self {
            mr_weights,
            llm_weights: backends.iter().cloned().zip(llm_weights.iter().copied()).collect(),
        })
    }

    pub fn uniform(n_variants: usize, backends: &[String]) -> Self {
        Self::new(
            WeightVector::uniform(n_variants),
            backends,
            &WeightVector::uniform(backends.len()),
        )
        .expect("lengths match")
    }

    /// `labels[j][k]`: label from backend `j` on variant `k`.
    pub fn score(&self, labels: &[Vec<Option<usize>>], num_labels: usize) -> Result<PcsVector> {
        if labels.len() != self.llm_weights.len() {
            return Err(Error::InvalidInput("backend count mismatch".into()));
        }
        let per_llm = self
            .llm_weights
            .keys()
            .zip(labels)
            .map(|(name, l)| Ok((name.clone(), pcs_per_llm(l, &self.mr_weights, num_labels)?)))
            .collect::<Result<IndexMap<_, _>>>()?;
        pcs_aggregate(&per_llm, &self.llm_weights)
    }
}

/// One line of the score report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub sample_id: String,
    /// Score per label name.
    pub pcs: IndexMap<String, f64>,
    pub label: String,
    pub confidence: f64,
    pub per_llm: IndexMap<String, IndexMap<String, f64>>,
    pub flags: Vec<String>,
}

impl ScoreRecord {
    pub fn new(sample_id: impl Into<String>, pcs: &PcsVector, label_names: &[String], extra_flags: &[&str]) -> Self {
        let (label, confidence) = classify(&pcs.scores);
        let mut flags: Vec<String> = extra_flags.iter().map(|f| f.to_string()).collect();
        if pcs.all_abstained {
            flags.push("all_abstained".into());
        }
        let named = |scores: &[f64]| label_names.iter().cloned().zip(scores.iter().copied()).collect();
        Self {
            sample_id: sample_id.into(),
            pcs: named(&pcs.scores),
            label: label_names[label].clone(),
            confidence,
            per_llm: pcs.per_llm.iter().map(|(b, s)| (b.clone(), named(s))).collect(),
            flags,
        }
    }
}

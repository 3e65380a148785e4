//! Synthetic annotators driven by per-(backend, MR) confusion matrices.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimize::AnnotationTensorView;

/// Row-stochastic confusion matrix: `rows[gold][predicted]`.
pub type Confusion = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlipModel {
    /// Indexed `[backend][variant]`.
    pub confusions: Vec<Vec<Confusion>>,
    pub num_labels: usize,
    pub seed: u64,
}

impl FlipModel {
    pub fn new(confusions: Vec<Vec<Confusion>>, num_labels: usize, seed: u64) -> Result<Self> {
        let model = Self {
            confusions,
            num_labels,
            seed,
        };
        model.validate()?;
        Ok(model)
    }

    /// Each cell answers correctly with the given accuracy and otherwise picks
    /// one of the wrong labels uniformly. `accuracy[backend][variant]`.
    pub fn from_accuracies(accuracy: &[Vec<f64>], num_labels: usize, seed: u64) -> Result<Self> {
        if num_labels < 2 {
            return Err(Error::InvalidInput("need at least 2 labels".into()));
        }
        let confusions = accuracy
            .iter()
            .map(|row| {
                row.iter()
                    .map(|&acc| {
                        let off = (1.0 - acc) / (num_labels - 1) as f64;
                        (0..num_labels)
                            .map(|g| (0..num_labels).map(|p| if p == g { acc } else { off }).collect())
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Self::new(confusions, num_labels, seed)
    }

    pub fn n_backends(&self) -> usize {
        self.confusions.len()
    }

    pub fn n_variants(&self) -> usize {
        self.confusions.first().map_or(0, Vec::len)
    }

    fn validate(&self) -> Result<()> {
        let v = self.n_variants();
        if self.confusions.is_empty() || v == 0 {
            return Err(Error::InvalidInput("flip model needs at least one backend and variant".into()));
        }
        for per_backend in &self.confusions {
            if per_backend.len() != v {
                return Err(Error::InvalidInput("ragged flip model".into()));
            }
            for matrix in per_backend {
                if matrix.len() != self.num_labels {
                    return Err(Error::InvalidInput("confusion matrix has the wrong size".into()));
                }
                for row in matrix {
                    if row.len() != self.num_labels || row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                        return Err(Error::InvalidInput("invalid confusion row".into()));
                    }
                    let sum: f64 = row.iter().sum();
                    if (sum - 1.0).abs() > 1e-9 {
                        return Err(Error::InvalidInput(format!("confusion row sums to {sum}")));
                    }
                }
            }
        }
        Ok(())
    }
}

fn draw(row: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left u above the last cumulative sum
    row.iter().rposition(|p| *p > 0.0).unwrap_or(row.len() - 1)
}

/// Draw a label for every (sample, backend, variant) cell from the confusion
/// row of the sample's gold label. Reproducible for a fixed seed.
pub fn simulate_annotations(flip: &FlipModel, golds: &[usize]) -> Result<AnnotationTensorView> {
    flip.validate()?;
    if let Some(g) = golds.iter().find(|g| **g >= flip.num_labels) {
        return Err(Error::InvalidInput(format!("gold label {g} out of range")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(flip.seed);
    let (l, v) = (flip.n_backends(), flip.n_variants());
    let mut labels = Vec::with_capacity(golds.len() * l * v);
    for &g in golds {
        for per_backend in &flip.confusions {
            for matrix in per_backend {
                let u: f64 = rng.random();
                labels.push(Some(draw(&matrix[g], u)));
            }
        }
    }
    AnnotationTensorView::new(golds.len(), l, v, flip.num_labels, labels)
}

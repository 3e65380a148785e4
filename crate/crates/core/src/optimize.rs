//! Learning MR and backend weights from a labeled calibration set.
//!
//! The aggregated score of label `c` for sample `i` is
//! `sum_j wl[j] * sum_k wm[k] * T[i][j][k][c]`, where `T` is the label
//! indicator tensor. It is bilinear in `(wm, wl)`, so the squared error against
//! one-hot targets is minimized by alternating between the two weight vectors.
//! With one vector held fixed the problem is a least-squares regression
//! constrained to the probability simplex, solved exactly by projected
//! gradient descent warm-started from the projected unconstrained solution.
//! Alternation runs from the uniform point, every simplex vertex and a few
//! seeded random points; the lowest final objective wins.

use std::path::Path;

use indexmap::IndexMap;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::mrengine::MrId;
use crate::pcs::WeightVector;

/// Compact label-indicator tensor over (sample, backend, variant). A cell with
/// label `c` is the one-hot fiber `e_c`; an abstained cell is the zero fiber.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationTensorView {
    n: usize,
    l: usize,
    v: usize,
    m: usize,
    labels: Vec<Option<usize>>,
}

impl AnnotationTensorView {
    pub fn new(n: usize, l: usize, v: usize, m: usize, labels: Vec<Option<usize>>) -> Result<Self> {
        if labels.len() != n * l * v {
            return Err(Error::InvalidInput(format!(
                "{} cells for a {n}x{l}x{v} tensor",
                labels.len()
            )));
        }
        if labels.iter().flatten().any(|&c| c >= m) {
            return Err(Error::InvalidInput("label index outside the label space".into()));
        }
        Ok(Self { n, l, v, m, labels })
    }

    pub fn n_samples(&self) -> usize {
        self.n
    }

    pub fn n_backends(&self) -> usize {
        self.l
    }

    pub fn n_variants(&self) -> usize {
        self.v
    }

    pub fn n_labels(&self) -> usize {
        self.m
    }

    pub fn label(&self, sample: usize, backend: usize, variant: usize) -> Option<usize> {
        self.labels[(sample * self.l + backend) * self.v + variant]
    }

    pub fn abstained(&self, sample: usize, backend: usize, variant: usize) -> bool {
        self.label(sample, backend, variant).is_none()
    }

    pub fn indicator(&self, sample: usize, backend: usize, variant: usize, label: usize) -> f64 {
        f64::from(u8::from(self.label(sample, backend, variant) == Some(label)))
    }

    /// Labels of every variant for one (sample, backend) pair.
    pub fn fiber_labels(&self, sample: usize, backend: usize) -> &[Option<usize>] {
        let start = (sample * self.l + backend) * self.v;
        &self.labels[start..start + self.v]
    }

    /// Labels per backend for one sample, `out[j][k]`.
    pub fn sample_labels(&self, sample: usize) -> Vec<Vec<Option<usize>>> {
        (0..self.l).map(|j| self.fiber_labels(sample, j).to_vec()).collect()
    }

    /// Restrict to the given samples, in the given order.
    pub fn subset(&self, samples: &[usize]) -> Self {
        let labels = samples
            .iter()
            .flat_map(|&i| {
                let start = i * self.l * self.v;
                self.labels[start..start + self.l * self.v].iter().copied()
            })
            .collect();
        Self {
            n: samples.len(),
            l: self.l,
            v: self.v,
            m: self.m,
            labels,
        }
    }
}

/// One-hot targets, `y[i][gold_i] = 1`.
pub fn encode_targets(dataset: &Dataset) -> Result<Vec<Vec<f64>>> {
    if dataset.is_empty() {
        return Err(Error::Calibration("calibration set is empty".into()));
    }
    let golds = dataset
        .samples
        .iter()
        .map(|s| {
            s.gold
                .ok_or_else(|| Error::Calibration(format!("sample `{}` has no gold label", s.id)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(one_hot(&golds, dataset.label_space.len()))
}

pub fn one_hot(golds: &[usize], num_labels: usize) -> Vec<Vec<f64>> {
    golds
        .iter()
        .map(|&g| {
            let mut row = vec![0.0; num_labels];
            row[g] = 1.0;
            row
        })
        .collect()
}

/// Euclidean projection onto the probability simplex (sort and threshold).
pub fn project_simplex(v: &[f64]) -> Result<WeightVector> {
    if v.is_empty() {
        return Err(Error::InvalidInput("cannot project an empty vector".into()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("cannot project non-finite entries".into()));
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (i, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let t = (cumulative - 1.0) / (i + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    let mut w: Vec<f64> = v.iter().map(|x| (x - theta).max(0.0)).collect();
    let sum: f64 = w.iter().sum();
    if (sum - 1.0).abs() > 1e-12 {
        w.iter_mut().for_each(|x| *x /= sum);
    }
    w.iter_mut().for_each(|x| *x = x.clamp(0.0, 1.0));
    WeightVector::new(w)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    AlternatingLs,
    Genetic,
}

impl Strategy {
    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::AlternatingLs => "alternating_ls",
            Strategy::Genetic => "genetic",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub max_outer_iters: usize,
    pub tol: f64,
    pub ridge: f64,
    /// Random starting points tried in addition to the uniform and vertex starts.
    pub restarts: usize,
    pub seed: u64,
    pub strategy: Strategy,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_outer_iters: 50,
            tol: 1e-6,
            ridge: 1e-8,
            restarts: 4,
            seed: 0,
            strategy: Strategy::AlternatingLs,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_outer_iters < 1 {
            return Err(Error::InvalidInput("max_outer_iters must be >= 1".into()));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::InvalidInput("tol must be > 0".into()));
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(Error::InvalidInput("ridge must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitFlag {
    /// Every sample's labels agree across variants; MR weights stay uniform.
    MrWeightsUnidentifiable,
    /// Every sample's labels agree across backends; backend weights stay uniform.
    LlmWeightsUnidentifiable,
    /// Stopped at `max_outer_iters` before the improvement fell below `tol`.
    MaxItersReached,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub strategy: String,
    /// Unpenalized mean squared error at the returned weights.
    pub objective: f64,
    /// Ridge-penalized objective of the winning start, after initialization
    /// and each outer iteration. Non-increasing.
    pub trajectory: Vec<f64>,
    pub iterations: usize,
    pub flags: Vec<FitFlag>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedWeights {
    pub mr_weights: WeightVector,
    pub llm_weights: WeightVector,
    pub report: FitReport,
}

/// A pluggable fitting strategy.
pub trait WeightFitter: Send + Sync {
    fn fit(&self, tensor: &AnnotationTensorView, targets: &[Vec<f64>], cfg: &FitConfig) -> Result<FittedWeights>;
}

/// Dispatches on [`FitConfig::strategy`]. The genetic slot is empty unless a
/// fitter is registered for it.
#[derive(Default)]
pub struct Optimizer {
    genetic: Option<Box<dyn WeightFitter>>,
}

impl Optimizer {
    pub fn register_genetic(&mut self, fitter: Box<dyn WeightFitter>) {
        self.genetic = Some(fitter);
    }

    pub fn fit(&self, tensor: &AnnotationTensorView, targets: &[Vec<f64>], cfg: &FitConfig) -> Result<FittedWeights> {
        cfg.validate()?;
        check_inputs(tensor, targets)?;
        match cfg.strategy {
            Strategy::AlternatingLs => AlternatingLs.fit(tensor, targets, cfg),
            Strategy::Genetic => match &self.genetic {
                Some(fitter) => fitter.fit(tensor, targets, cfg),
                None => Err(Error::NotAvailable(Strategy::Genetic.as_str().into())),
            },
        }
    }
}

/// Fit with the default optimizer.
pub fn fit_weights(tensor: &AnnotationTensorView, targets: &[Vec<f64>], cfg: &FitConfig) -> Result<FittedWeights> {
    Optimizer::default().fit(tensor, targets, cfg)
}

fn check_inputs(tensor: &AnnotationTensorView, targets: &[Vec<f64>]) -> Result<()> {
    if tensor.n == 0 {
        return Err(Error::Calibration("calibration set is empty".into()));
    }
    if targets.len() != tensor.n {
        return Err(Error::Calibration(format!(
            "{} target rows for {} samples",
            targets.len(),
            tensor.n
        )));
    }
    if tensor.l == 0 || tensor.v == 0 {
        return Err(Error::Calibration("need at least one backend and one variant".into()));
    }
    if targets.iter().any(|row| row.len() != tensor.m) {
        return Err(Error::Calibration("target width differs from the label count".into()));
    }
    Ok(())
}

/// Mean over samples of the squared error between aggregated scores and targets.
pub fn objective(tensor: &AnnotationTensorView, targets: &[Vec<f64>], mr_weights: &[f64], llm_weights: &[f64]) -> f64 {
    let mut total = 0.0;
    let mut pred = vec![0.0; tensor.m];
    for (i, target) in targets.iter().enumerate() {
        pred.iter_mut().for_each(|p| *p = 0.0);
        for (j, wl) in llm_weights.iter().enumerate() {
            for (k, wm) in mr_weights.iter().enumerate() {
                if let Some(c) = tensor.label(i, j, k) {
                    pred[c] += wl * wm;
                }
            }
        }
        total += pred.iter().zip(target).map(|(p, y)| (p - y).powi(2)).sum::<f64>();
    }
    total / tensor.n as f64
}

fn penalized(obj: f64, ridge: f64, mr: &[f64], llm: &[f64]) -> f64 {
    let sq = |w: &[f64]| w.iter().map(|x| x * x).sum::<f64>();
    obj + ridge * (sq(mr) + sq(llm))
}

/// Quadratic `w'Hw - 2b'w + c` in one weight block.
struct Quadratic {
    h: DMatrix<f64>,
    b: DVector<f64>,
}

impl Quadratic {
    fn value(&self, w: &DVector<f64>) -> f64 {
        (w.transpose() * &self.h * w)[(0, 0)] - 2.0 * self.b.dot(w)
    }

    /// Minimize over the simplex, never returning a point worse than `start`.
    fn minimize_on_simplex(&self, start: &[f64]) -> Vec<f64> {
        let k = start.len();
        let start_vec = DVector::from_column_slice(start);
        let mut best = start_vec.clone();
        let mut best_val = self.value(&best);

        if let Some(chol) = self.h.clone().cholesky() {
            let unconstrained = chol.solve(&self.b);
            if let Ok(p) = project_simplex(unconstrained.as_slice()) {
                let p = DVector::from_column_slice(&p);
                let val = self.value(&p);
                if val < best_val {
                    best = p;
                    best_val = val;
                }
            }
        }

        // Lipschitz bound of the gradient 2(Hw - b): 2 * max absolute row sum
        let lipschitz = 2.0
            * (0..k)
                .map(|r| self.h.row(r).iter().map(|x| x.abs()).sum::<f64>())
                .fold(0.0, f64::max);
        if lipschitz <= 0.0 {
            return best.as_slice().to_vec();
        }
        let step = 1.0 / lipschitz;

        // accelerated projected gradient with function-value restart
        let mut x = best.clone();
        let mut y = x.clone();
        let mut t = 1.0_f64;
        let mut fx = best_val;
        for _ in 0..20_000 {
            let grad = 2.0 * (&self.h * &y - &self.b);
            let candidate = &y - step * grad;
            let next = DVector::from_column_slice(
                &project_simplex(candidate.as_slice()).expect("finite").into_inner(),
            );
            let f_next = self.value(&next);
            if f_next > fx {
                // restart momentum from the last iterate
                y = x.clone();
                t = 1.0;
                continue;
            }
            let moved = (&next - &x).amax();
            let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
            y = &next + ((t - 1.0) / t_next) * (&next - &x);
            x = next;
            fx = f_next;
            t = t_next;
            if moved < 1e-15 {
                break;
            }
        }
        if fx <= best_val {
            best = x;
        }
        best.as_slice().to_vec()
    }
}

struct AlternatingLs;

impl AlternatingLs {
    /// Quadratic in the MR weights with backend weights fixed. Regression rows
    /// are (sample, label) pairs with features `sum_j wl[j] * T[i][j][k][c]`.
    fn mr_step(tensor: &AnnotationTensorView, targets: &[Vec<f64>], wl: &[f64], ridge: f64) -> Quadratic {
        let (v, m) = (tensor.v, tensor.m);
        let mut h = DMatrix::<f64>::zeros(v, v);
        let mut b = DVector::<f64>::zeros(v);
        let mut features = DMatrix::<f64>::zeros(m, v);
        for (i, target) in targets.iter().enumerate() {
            features.fill(0.0);
            for (j, w) in wl.iter().enumerate() {
                for k in 0..v {
                    if let Some(c) = tensor.label(i, j, k) {
                        features[(c, k)] += w;
                    }
                }
            }
            h += features.transpose() * &features;
            b += features.transpose() * DVector::from_column_slice(target);
        }
        Self::finish(h, b, tensor.n, ridge)
    }

    /// Quadratic in the backend weights with MR weights fixed.
    fn llm_step(tensor: &AnnotationTensorView, targets: &[Vec<f64>], wm: &[f64], ridge: f64) -> Quadratic {
        let (l, m) = (tensor.l, tensor.m);
        let mut h = DMatrix::<f64>::zeros(l, l);
        let mut b = DVector::<f64>::zeros(l);
        let mut features = DMatrix::<f64>::zeros(m, l);
        for (i, target) in targets.iter().enumerate() {
            features.fill(0.0);
            for j in 0..l {
                for (k, w) in wm.iter().enumerate() {
                    if let Some(c) = tensor.label(i, j, k) {
                        features[(c, j)] += w;
                    }
                }
            }
            h += features.transpose() * &features;
            b += features.transpose() * DVector::from_column_slice(target);
        }
        Self::finish(h, b, tensor.n, ridge)
    }

    fn finish(h: DMatrix<f64>, b: DVector<f64>, n: usize, ridge: f64) -> Quadratic {
        let scale = 1.0 / n as f64;
        let dim = h.nrows();
        Quadratic {
            h: h * scale + DMatrix::identity(dim, dim) * ridge,
            b: b * scale,
        }
    }
}

fn constant_across_variants(tensor: &AnnotationTensorView) -> bool {
    (0..tensor.n).all(|i| {
        (0..tensor.l).all(|j| {
            let fiber = tensor.fiber_labels(i, j);
            fiber.iter().all(|x| *x == fiber[0])
        })
    })
}

fn constant_across_backends(tensor: &AnnotationTensorView) -> bool {
    (0..tensor.n).all(|i| {
        (0..tensor.v).all(|k| {
            let first = tensor.label(i, 0, k);
            (1..tensor.l).all(|j| tensor.label(i, j, k) == first)
        })
    })
}

struct Run {
    wm: Vec<f64>,
    wl: Vec<f64>,
    trajectory: Vec<f64>,
    iterations: usize,
    converged: bool,
}

impl Run {
    fn final_value(&self) -> f64 {
        *self.trajectory.last().expect("non-empty")
    }
}

fn vertex(dim: usize, at: usize) -> Vec<f64> {
    let mut w = vec![0.0; dim];
    w[at] = 1.0;
    w
}

/// Uniform draw from the simplex via normalized exponentials.
fn random_simplex_point(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..dim).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

impl AlternatingLs {
    #[allow(clippy::too_many_arguments)]
    fn run(
        &self,
        tensor: &AnnotationTensorView,
        targets: &[Vec<f64>],
        cfg: &FitConfig,
        mut wm: Vec<f64>,
        mut wl: Vec<f64>,
        fit_mr: bool,
        fit_llm: bool,
    ) -> Run {
        let eval = |wm: &[f64], wl: &[f64]| penalized(objective(tensor, targets, wm, wl), cfg.ridge, wm, wl);
        let mut trajectory = vec![eval(&wm, &wl)];
        let mut iterations = 0;
        let mut converged = !(fit_mr || fit_llm);
        while !converged && iterations < cfg.max_outer_iters {
            iterations += 1;
            if fit_mr {
                wm = AlternatingLs::mr_step(tensor, targets, &wl, cfg.ridge).minimize_on_simplex(&wm);
            }
            if fit_llm {
                wl = AlternatingLs::llm_step(tensor, targets, &wm, cfg.ridge).minimize_on_simplex(&wl);
            }
            let current = eval(&wm, &wl);
            let previous = *trajectory.last().expect("non-empty");
            trajectory.push(current);
            converged = previous - current < cfg.tol;
        }
        Run {
            wm,
            wl,
            trajectory,
            iterations,
            converged,
        }
    }
}

impl WeightFitter for AlternatingLs {
    fn fit(&self, tensor: &AnnotationTensorView, targets: &[Vec<f64>], cfg: &FitConfig) -> Result<FittedWeights> {
        let mut flags = Vec::new();
        let fit_mr = tensor.v > 1 && !constant_across_variants(tensor);
        let fit_llm = tensor.l > 1 && !constant_across_backends(tensor);
        if tensor.v > 1 && !fit_mr {
            flags.push(FitFlag::MrWeightsUnidentifiable);
        }
        if tensor.l > 1 && !fit_llm {
            flags.push(FitFlag::LlmWeightsUnidentifiable);
        }

        let uniform_mr = WeightVector::uniform(tensor.v).into_inner();
        let uniform_llm = WeightVector::uniform(tensor.l).into_inner();
        let mut starts = vec![(uniform_mr.clone(), uniform_llm.clone())];
        // the joint problem is bilinear, so several starts guard against
        // stalling at a poor stationary point
        if fit_mr && fit_llm {
            starts.extend((0..tensor.v).map(|k| (vertex(tensor.v, k), uniform_llm.clone())));
            starts.extend((0..tensor.l).map(|j| (uniform_mr.clone(), vertex(tensor.l, j))));
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            for _ in 0..cfg.restarts {
                starts.push((random_simplex_point(&mut rng, tensor.v), random_simplex_point(&mut rng, tensor.l)));
            }
        }

        let mut best: Option<Run> = None;
        for (wm, wl) in starts {
            let run = self.run(tensor, targets, cfg, wm, wl, fit_mr, fit_llm);
            if best.as_ref().is_none_or(|b| run.final_value() < b.final_value()) {
                best = Some(run);
            }
        }
        let Run {
            wm,
            wl,
            trajectory,
            iterations,
            converged,
        } = best.expect("at least one start");
        if !converged {
            flags.push(FitFlag::MaxItersReached);
        }

        let mr_weights = project_simplex(&wm)?;
        let llm_weights = project_simplex(&wl)?;
        Ok(FittedWeights {
            report: FitReport {
                strategy: Strategy::AlternatingLs.as_str().into(),
                objective: objective(tensor, targets, &mr_weights, &llm_weights),
                trajectory,
                iterations,
                flags,
            },
            mr_weights,
            llm_weights,
        })
    }
}

/// Serialized weights consumed by scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsFile {
    pub mr_weights: IndexMap<MrId, f64>,
    pub llm_weights: IndexMap<String, f64>,
    pub objective: f64,
    pub iterations: usize,
    pub flags: Vec<FitFlag>,
}

impl WeightsFile {
    pub fn new(mrs: &[MrId], backends: &[String], fitted: &FittedWeights) -> Self {
        Self {
            mr_weights: mrs.iter().cloned().zip(fitted.mr_weights.iter().copied()).collect(),
            llm_weights: backends.iter().cloned().zip(fitted.llm_weights.iter().copied()).collect(),
            objective: fitted.report.objective,
            iterations: fitted.report.iterations,
            flags: fitted.report.flags.clone(),
        }
    }

    /// Weights reordered to match `mrs` and `backends`.
    pub fn aligned(&self, mrs: &[MrId], backends: &[String]) -> Result<(WeightVector, WeightVector)> {
        let mr = mrs
            .iter()
            .map(|mr| {
                self.mr_weights
                    .get(mr)
                    .copied()
                    .ok_or_else(|| Error::InvalidInput(format!("weights file has no entry for MR `{mr}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let llm = backends
            .iter()
            .map(|b| {
                self.llm_weights
                    .get(b)
                    .copied()
                    .ok_or_else(|| Error::InvalidInput(format!("weights file has no entry for backend `{b}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((WeightVector::normalized(&mr)?, WeightVector::normalized(&llm)?))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut body = serde_json::to_string_pretty(self)?;
        body.push('\n');
        std::fs::write(path, body).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let body = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&body)?)
    }
}

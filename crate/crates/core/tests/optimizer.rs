use pcs_core::evaluate::{simulate_annotations, FlipModel};
use pcs_core::optimize::{fit_weights, one_hot, AnnotationTensorView, FitConfig, FitFlag};
use pcs_core::pcs::SIMPLEX_TOL;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GRID: usize = 50;

/// All points of the `dim`-simplex whose coordinates are multiples of 1/GRID.
fn simplex_grid(dim: usize) -> Vec<Vec<f64>> {
    fn rec(dim: usize, left: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        if prefix.len() + 1 == dim {
            prefix.push(left);
            out.push(prefix.iter().map(|&x| x as f64 / GRID as f64).collect());
            prefix.pop();
            return;
        }
        for x in 0..=left {
            prefix.push(x);
            rec(dim, left - x, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(dim, GRID, &mut Vec::new(), &mut out);
    out
}

/// Brute-force minimum of the mean squared error over the product grid.
fn grid_minimum(view: &AnnotationTensorView, golds: &[usize]) -> f64 {
    let (n, l, v, m) = (view.n_samples(), view.n_backends(), view.n_variants(), view.n_labels());
    let mr_grid = simplex_grid(v);
    let mut best = f64::INFINITY;
    for wl in simplex_grid(l) {
        // coef[i][c][k] = sum_j wl[j] * [label(i, j, k) == c]
        let mut coef = vec![0.0; n * m * v];
        for i in 0..n {
            for (j, w) in wl.iter().enumerate() {
                for k in 0..v {
                    if let Some(c) = view.label(i, j, k) {
                        coef[(i * m + c) * v + k] += w;
                    }
                }
            }
        }
        for wm in &mr_grid {
            let mut total = 0.0;
            for i in 0..n {
                for c in 0..m {
                    let row = &coef[(i * m + c) * v..(i * m + c + 1) * v];
                    let pred: f64 = row.iter().zip(wm).map(|(a, b)| a * b).sum();
                    let y = if golds[i] == c { 1.0 } else { 0.0 };
                    total += (pred - y).powi(2);
                }
            }
            best = best.min(total / n as f64);
        }
    }
    best
}

fn random_instance(seed: u64, n: usize, l: usize, v: usize, m: usize) -> (AnnotationTensorView, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let accuracies: Vec<Vec<f64>> = (0..l).map(|_| (0..v).map(|_| rng.random_range(0.3..0.95)).collect()).collect();
    let golds: Vec<usize> = (0..n).map(|_| rng.random_range(0..m)).collect();
    let flip = FlipModel::from_accuracies(&accuracies, m, seed ^ 0x5eed).unwrap();
    (simulate_annotations(&flip, &golds).unwrap(), golds)
}

fn assert_monotone(trajectory: &[f64]) {
    for pair in trajectory.windows(2) {
        assert!(pair[1] <= pair[0] + 1e-10, "trajectory rose: {trajectory:?}");
    }
}

#[test]
fn fit_is_no_worse_than_the_grid() {
    for seed in 0..4 {
        let (view, golds) = random_instance(seed, 50, 2, 4, 2);
        let fitted = fit_weights(&view, &one_hot(&golds, 2), &FitConfig::default()).unwrap();
        let best = grid_minimum(&view, &golds);
        assert!(
            fitted.report.objective <= best + 1e-3,
            "seed {seed}: fitted {} vs grid {best}",
            fitted.report.objective
        );
        assert_monotone(&fitted.report.trajectory);
    }
}

#[test]
fn fit_is_no_worse_than_the_grid_three_labels() {
    for seed in 10..13 {
        let (view, golds) = random_instance(seed, 40, 2, 3, 3);
        let fitted = fit_weights(&view, &one_hot(&golds, 3), &FitConfig::default()).unwrap();
        let best = grid_minimum(&view, &golds);
        assert!(fitted.report.objective <= best + 1e-3, "seed {seed}");
    }
}

#[test]
fn planted_mr_dominates() {
    let golds: Vec<usize> = (0..200).map(|i| i % 2).collect();
    let flip = FlipModel::from_accuracies(&[vec![0.5, 0.98, 0.5, 0.5]], 2, 4).unwrap();
    let view = simulate_annotations(&flip, &golds).unwrap();
    let fitted = fit_weights(&view, &one_hot(&golds, 2), &FitConfig::default()).unwrap();
    let w = fitted.mr_weights.as_slice();
    assert!(w[1] > 0.8, "{w:?}");
    assert_eq!(fitted.llm_weights.as_slice(), &[1.0]);
}

#[test]
fn accurate_backend_ranks_higher() {
    let golds: Vec<usize> = (0..300).map(|i| i % 2).collect();
    let flip = FlipModel::from_accuracies(&[vec![0.95; 4], vec![0.5; 4]], 2, 12).unwrap();
    let view = simulate_annotations(&flip, &golds).unwrap();
    let fitted = fit_weights(&view, &one_hot(&golds, 2), &FitConfig::default()).unwrap();
    let w = fitted.llm_weights.as_slice();
    assert!(w[0] > w[1], "{w:?}");
}

#[test]
fn duplicate_backends_share_weight() {
    let (base, golds) = random_instance(42, 60, 1, 4, 2);
    let mut labels = Vec::new();
    for i in 0..60 {
        for _ in 0..2 {
            labels.extend_from_slice(base.fiber_labels(i, 0));
        }
    }
    let view = AnnotationTensorView::new(60, 2, 4, 2, labels).unwrap();
    let fitted = fit_weights(&view, &one_hot(&golds, 2), &FitConfig::default()).unwrap();
    let w = fitted.llm_weights.as_slice();
    assert!((w[0] - w[1]).abs() < 1e-6, "{w:?}");
    assert!(fitted.report.flags.contains(&FitFlag::LlmWeightsUnidentifiable));
}

#[test]
fn constant_variants_are_flagged() {
    let labels: Vec<Option<usize>> = (0..20).flat_map(|i| vec![Some(i % 2); 3]).collect();
    let view = AnnotationTensorView::new(20, 1, 3, 2, labels).unwrap();
    let golds: Vec<usize> = (0..20).map(|i| (i / 2) % 2).collect();
    let fitted = fit_weights(&view, &one_hot(&golds, 2), &FitConfig::default()).unwrap();
    assert!(fitted.report.flags.contains(&FitFlag::MrWeightsUnidentifiable));
    assert_eq!(fitted.mr_weights.as_slice(), &[1.0 / 3.0; 3]);
}

#[test]
fn fit_is_deterministic() {
    let (view, golds) = random_instance(7, 50, 2, 4, 2);
    let cfg = FitConfig {
        seed: 3,
        ..FitConfig::default()
    };
    let a = fit_weights(&view, &one_hot(&golds, 2), &cfg).unwrap();
    let b = fit_weights(&view, &one_hot(&golds, 2), &cfg).unwrap();
    assert_eq!(a.mr_weights, b.mr_weights);
    assert_eq!(a.llm_weights, b.llm_weights);
    assert_eq!(a.report, b.report);
}

#[test]
fn abstentions_are_tolerated() {
    let (view, golds) = random_instance(9, 40, 2, 3, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let labels: Vec<Option<usize>> = (0..40)
        .flat_map(|i| (0..2).flat_map(move |j| (0..3).map(move |k| (i, j, k))))
        .map(|(i, j, k)| if rng.random_bool(0.2) { None } else { view.label(i, j, k) })
        .collect();
    let holey = AnnotationTensorView::new(40, 2, 3, 2, labels).unwrap();
    let fitted = fit_weights(&holey, &one_hot(&golds, 2), &FitConfig::default()).unwrap();
    assert_monotone(&fitted.report.trajectory);
    assert!(fitted.report.objective <= grid_minimum(&holey, &golds) + 1e-3);
}

#[test]
fn calibration_errors() {
    let view = AnnotationTensorView::new(0, 1, 2, 2, vec![]).unwrap();
    assert!(matches!(
        fit_weights(&view, &[], &FitConfig::default()),
        Err(pcs_core::Error::Calibration(_))
    ));
    let view = AnnotationTensorView::new(1, 1, 2, 2, vec![Some(0), Some(1)]).unwrap();
    assert!(fit_weights(&view, &[vec![1.0, 0.0], vec![0.0, 1.0]], &FitConfig::default()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weights_stay_feasible(seed in any::<u64>(), n in 2usize..30, l in 1usize..4, v in 1usize..5, m in 2usize..4) {
        let (view, golds) = random_instance(seed, n, l, v, m);
        let fitted = fit_weights(&view, &one_hot(&golds, m), &FitConfig::default()).unwrap();
        for w in [fitted.mr_weights.as_slice(), fitted.llm_weights.as_slice()] {
            prop_assert!(w.iter().all(|x| (0.0..=1.0).contains(x)));
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= SIMPLEX_TOL);
        }
        for pair in fitted.report.trajectory.windows(2) {
            prop_assert!(pair[1] <= pair[0] + 1e-10);
        }
    }
}

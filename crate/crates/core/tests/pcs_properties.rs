use indexmap::IndexMap;
use pcs_core::optimize::project_simplex;
use pcs_core::pcs::{pcs_aggregate, pcs_per_llm, LlmScores, WeightVector, SIMPLEX_TOL};
use proptest::prelude::*;

const M: usize = 4;

fn fiber(v: usize) -> impl Strategy<Value = Vec<Option<usize>>> {
    prop::collection::vec(prop::option::weighted(0.85, 0..M), v)
}

fn weights(v: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, v)
}

/// `labels[j][k]` with weights per variant and per backend.
fn instance() -> impl Strategy<Value = (Vec<Vec<Option<usize>>>, Vec<f64>, Vec<f64>)> {
    (1usize..6, 1usize..4).prop_flat_map(|(v, l)| (prop::collection::vec(fiber(v), l), weights(v), weights(l)))
}

fn aggregate(labels: &[Vec<Option<usize>>], wm: &[f64], wl: &[f64], m: usize) -> (IndexMap<String, LlmScores>, Vec<f64>) {
    let per: IndexMap<String, LlmScores> = labels
        .iter()
        .enumerate()
        .map(|(j, l)| (format!("b{j}"), pcs_per_llm(l, wm, m).unwrap()))
        .collect();
    let names: IndexMap<String, f64> = wl.iter().enumerate().map(|(j, w)| (format!("b{j}"), *w)).collect();
    let scores = pcs_aggregate(&per, &names).unwrap().scores;
    (per, scores)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn scores_are_normalized((labels, wm, wl) in instance()) {
        let (per, agg) = aggregate(&labels, &wm, &wl, M);
        for s in per.values() {
            prop_assert!((s.scores.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
        prop_assert!((agg.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn weight_scale_cancels((labels, wm, wl) in instance(), c in 1e-3f64..1e3) {
        let scaled_m: Vec<f64> = wm.iter().map(|w| w * c).collect();
        let scaled_l: Vec<f64> = wl.iter().map(|w| w * c).collect();
        let (per_a, agg_a) = aggregate(&labels, &wm, &wl, M);
        let (per_b, agg_b) = aggregate(&labels, &scaled_m, &wl, M);
        for (a, b) in per_a.values().zip(per_b.values()) {
            for (x, y) in a.scores.iter().zip(&b.scores) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }
        let (_, agg_c) = aggregate(&labels, &wm, &scaled_l, M);
        for ((x, y), z) in agg_a.iter().zip(&agg_b).zip(&agg_c) {
            prop_assert!((x - y).abs() <= 1e-12);
            prop_assert!((x - z).abs() <= 1e-12);
        }
    }

    #[test]
    fn relabeling_permutes_scores((labels, wm, wl) in instance(), perm in Just((0..M).collect::<Vec<_>>()).prop_shuffle()) {
        let relabeled: Vec<Vec<Option<usize>>> =
            labels.iter().map(|f| f.iter().map(|l| l.map(|c| perm[c])).collect()).collect();
        let (_, a) = aggregate(&labels, &wm, &wl, M);
        let (_, b) = aggregate(&relabeled, &wm, &wl, M);
        for c in 0..M {
            prop_assert!((a[c] - b[perm[c]]).abs() <= 1e-12);
        }
    }

    #[test]
    fn aggregate_within_hull((labels, wm, wl) in instance()) {
        let (per, agg) = aggregate(&labels, &wm, &wl, M);
        let live: Vec<&LlmScores> = per.values().filter(|s| !s.all_abstained).collect();
        if live.is_empty() {
            return Ok(());
        }
        for (c, a) in agg.iter().enumerate() {
            let lo = live.iter().map(|s| s.scores[c]).fold(f64::INFINITY, f64::min);
            let hi = live.iter().map(|s| s.scores[c]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(*a >= lo - 1e-12 && *a <= hi + 1e-12);
        }
    }

    #[test]
    fn projection_is_feasible(v in prop::collection::vec(-5.0f64..5.0, 1..12)) {
        let w = project_simplex(&v).unwrap();
        prop_assert!(w.iter().all(|x| (0.0..=1.0).contains(x)));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= SIMPLEX_TOL);
        prop_assert!(WeightVector::new(w.into_inner()).is_ok());
    }

    #[test]
    fn uniform_weights_give_frequencies(f in fiber(7)) {
        let s = pcs_per_llm(&f, &[1.0 / 7.0; 7], M).unwrap();
        let present = f.iter().flatten().count();
        if present == 0 {
            prop_assert!(s.all_abstained);
        } else {
            for c in 0..M {
                let count = f.iter().filter(|l| **l == Some(c)).count();
                prop_assert!((s.scores[c] - count as f64 / present as f64).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn worked_example() {
    let fiber = [Some(0), Some(0), Some(0), Some(1)];
    let s = pcs_per_llm(&fiber, &[0.25; 4], 2).unwrap();
    assert_eq!(s.scores, vec![0.75, 0.25]);
}

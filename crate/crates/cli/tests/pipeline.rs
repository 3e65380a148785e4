mod common;

use common::{fixture_csv, gold, identity_only_correct, pcs, Fixture, LABELS};
use pcs_core::mrengine::MrId;
use serde_json::Value;

fn read_json(path: &std::path::Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn read_jsonl(path: &std::path::Path) -> Vec<Value> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn ok(out: &common::Output) {
    assert_eq!(out.code, 0, "stdout: {}\nstderr: {}", out.stdout, out.stderr);
}

fn unanimous(i: usize, _b: usize, _k: usize) -> String {
    format!("<label>{}</label>", LABELS[gold(i)])
}

#[test]
fn mutate_writes_one_set_per_sample_and_reuses_them() {
    let fx = Fixture::new(10, 2, &unanimous);
    let out = fx.pcs(&["mutate"]);
    ok(&out);
    assert!(out.stdout.starts_with("10 new variant sets"), "{}", out.stdout);

    let sets = read_jsonl(&fx.out("variants.jsonl"));
    assert_eq!(sets.len(), 10);
    for set in &sets {
        assert_eq!(set["variants"].as_array().unwrap().len(), 4);
    }
    let log = read_jsonl(&fx.out("mutation_log.jsonl"));
    assert!(!log.is_empty());

    let again = fx.pcs(&["mutate"]);
    ok(&again);
    assert!(again.stdout.starts_with("0 new variant sets (10 reused"), "{}", again.stdout);
}

#[test]
fn empty_mr_list_keeps_only_the_original() {
    let fx = Fixture::build(4, 1, &unanimous, true, &[]);
    let out = fx.pcs(&["mutate"]);
    ok(&out);
    assert!(out.stderr.contains("no metamorphic relations"), "{}", out.stderr);
    for set in read_jsonl(&fx.out("variants.jsonl")) {
        assert_eq!(set["variants"].as_array().unwrap().len(), 1);
    }
}

#[test]
fn llm_mutator_calls_are_counted_and_not_repeated() {
    let fx = Fixture::new(5, 1, &unanimous);
    std::fs::write(fx.path("mutator.json"), r#"{"*": "A rewritten sentence."}"#).unwrap();
    fx.append_config("\n[mutator]\nkind = \"scripted\"\nscript = \"mutator.json\"\n");
    let out = fx.pcs(&["mutate"]);
    ok(&out);
    assert!(out.stdout.contains("15 mutator calls"), "{}", out.stdout);
    let again = fx.pcs(&["mutate"]);
    ok(&again);
    assert!(again.stdout.contains(" 0 mutator calls"), "{}", again.stdout);
}

#[test]
fn annotate_fills_the_matrix_and_caches_it() {
    let fx = Fixture::new(10, 2, &identity_only_correct);
    ok(&fx.pcs(&["mutate"]));
    let cold = fx.pcs(&["annotate"]);
    ok(&cold);
    assert!(cold.stdout.starts_with("annotated 80 cells"), "{}", cold.stdout);
    assert!(cold.stdout.contains("80 backend calls"), "{}", cold.stdout);
    let first = std::fs::read(fx.out("annotations.json")).unwrap();

    let warm = fx.pcs(&["annotate"]);
    ok(&warm);
    assert!(warm.stdout.contains("80 cached, 0 backend calls"), "{}", warm.stdout);
    assert_eq!(first, std::fs::read(fx.out("annotations.json")).unwrap());
}

#[test]
fn annotate_without_variants_is_a_data_error() {
    let fx = Fixture::new(4, 1, &unanimous);
    let out = fx.pcs(&["annotate"]);
    assert_eq!(out.code, 3, "{}", out.stderr);
}

#[test]
fn train_prefers_the_informative_relation() {
    let fx = Fixture::new(20, 2, &identity_only_correct);
    for cmd in ["mutate", "annotate", "train"] {
        ok(&fx.pcs(&[cmd]));
    }
    let weights = read_json(&fx.path("out/weights.json"));
    let mr = weights["mr_weights"].as_object().unwrap();
    assert_eq!(mr.len(), 4);
    let identity = mr["identity"].as_f64().unwrap();
    assert!(identity > 0.9, "{weights}");
    let total: f64 = mr.values().map(|v| v.as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-9);
}

#[test]
fn single_backend_gets_all_the_weight() {
    let fx = Fixture::new(12, 1, &identity_only_correct);
    for cmd in ["mutate", "annotate", "train"] {
        ok(&fx.pcs(&[cmd]));
    }
    let weights = read_json(&fx.path("out/weights.json"));
    assert_eq!(weights["llm_weights"]["backend0"].as_f64().unwrap(), 1.0);
}

#[test]
fn train_without_gold_labels_fails_with_data_code() {
    let fx = Fixture::build(6, 1, &unanimous, false, &MrId::BUILTIN);
    ok(&fx.pcs(&["mutate"]));
    ok(&fx.pcs(&["annotate"]));
    let out = fx.pcs(&["train"]);
    assert_eq!(out.code, 3, "{}", out.stderr);
    assert!(out.stderr.contains("gold"), "{}", out.stderr);
}

#[test]
fn score_text_with_unanimous_backends_is_certain() {
    let fx = Fixture::new(4, 2, &unanimous);
    let text = common::sample_text(1);
    let out = fx.pcs(&["score", "--uniform", "--text", &text]);
    ok(&out);
    let record: Value = serde_json::from_str(out.stdout.trim()).unwrap();
    assert_eq!(record["label"], "real");
    assert_eq!(record["pcs"]["real"].as_f64().unwrap(), 1.0);
    assert_eq!(record["pcs"]["fake"].as_f64().unwrap(), 0.0);
}

#[test]
fn uniform_scores_are_vote_frequencies() {
    // three rewrites say "fake", the original says "real"
    let fx = Fixture::new(2, 1, &|_, _, k| if k == 0 { "real".into() } else { "fake".into() });
    let out = fx.pcs(&["score", "--uniform", "--text", &common::sample_text(0)]);
    ok(&out);
    let record: Value = serde_json::from_str(out.stdout.trim()).unwrap();
    assert_eq!(record["pcs"]["fake"].as_f64().unwrap(), 0.75);
    assert_eq!(record["pcs"]["real"].as_f64().unwrap(), 0.25);
    assert_eq!(record["label"], "fake");
}

#[test]
fn score_file_writes_one_row_per_text() {
    let fx = Fixture::new(5, 2, &unanimous);
    let texts: Vec<String> = (0..5).map(common::sample_text).collect();
    std::fs::write(fx.path("inputs.txt"), texts.join("\n") + "\n").unwrap();
    let out = fx.pcs(&["score", "--uniform", "--input", "inputs.txt"]);
    ok(&out);
    let rows = read_jsonl(&fx.out("scores.jsonl"));
    assert_eq!(rows.len(), 5);
    for (i, row) in rows.iter().enumerate() {
        assert_eq!(row["label"], LABELS[gold(i)]);
    }
}

#[test]
fn score_without_weights_points_at_train() {
    let fx = Fixture::new(4, 1, &unanimous);
    ok(&fx.pcs(&["mutate"]));
    ok(&fx.pcs(&["annotate"]));
    let out = fx.pcs(&["score"]);
    assert_eq!(out.code, 3);
    assert!(out.stderr.contains("pcs train"), "{}", out.stderr);
}

#[test]
fn evaluate_reports_every_method_against_pcs() {
    let fx = Fixture::new(24, 2, &identity_only_correct);
    for cmd in ["mutate", "annotate"] {
        ok(&fx.pcs(&[cmd]));
    }
    let out = fx.pcs(&["evaluate"]);
    ok(&out);
    assert!(out.stdout.contains("comparison"), "{}", out.stdout);
    let report = read_json(&fx.out("eval_report.json"));
    let auroc = report["auroc"].as_object().unwrap();
    for key in ["zero_shot:backend0", "zero_shot:backend1", "mv", "mv_all_variants", "pcs"] {
        assert!(auroc.contains_key(key), "{report}");
    }
    assert_eq!(auroc["pcs"].as_f64().unwrap(), 1.0);
    assert_eq!(report["comparisons"].as_array().unwrap().len(), 4);
    assert!(fx.out("eval_report.txt").exists());
}

#[test]
fn single_method_report_has_no_comparisons() {
    let fx = Fixture::new(16, 1, &identity_only_correct);
    fx.replace_config("repeats = 5\n", "repeats = 3\nmethods = [\"pcs\"]\n");
    for cmd in ["mutate", "annotate", "evaluate"] {
        ok(&fx.pcs(&[cmd]));
    }
    let report = read_json(&fx.out("eval_report.json"));
    assert_eq!(report["auroc"].as_object().unwrap().len(), 1);
    assert!(report["comparisons"].as_array().unwrap().is_empty());
}

#[test]
fn replay_reproduces_the_single_backend_comparison() {
    let dir = tempfile::tempdir().unwrap();
    let csv = fixture_csv("single_llm_auroc.csv");
    let out = pcs(&["evaluate", "--replay", csv.to_str().unwrap(), "--out", "rep"], dir.path());
    ok(&out);
    let report = read_json(&dir.path().join("rep/eval_report.json"));
    let cmp = &report["comparisons"][0];
    assert_eq!(cmp["superior"], "pcs");
    assert!((cmp["ari_percent"].as_f64().unwrap() - 9.3).abs() < 0.05, "{cmp}");
    assert!((cmp["p"].as_f64().unwrap() - 0.01).abs() < 0.005, "{cmp}");
}

#[test]
fn replay_reproduces_the_multi_backend_comparison() {
    let dir = tempfile::tempdir().unwrap();
    let csv = fixture_csv("multi_llm_auroc.csv");
    let out = pcs(&["evaluate", "--replay", csv.to_str().unwrap(), "--out", "rep"], dir.path());
    ok(&out);
    let report = read_json(&dir.path().join("rep/eval_report.json"));
    let cmp = &report["comparisons"][0];
    assert!((cmp["ari_percent"].as_f64().unwrap() - 5.8).abs() < 0.05, "{cmp}");
    assert!(cmp["p"].as_f64().unwrap() < 0.01, "{cmp}");
}

#[test]
fn sweep_writes_one_point_per_size() {
    let fx = Fixture::new(30, 2, &identity_only_correct);
    for cmd in ["mutate", "annotate"] {
        ok(&fx.pcs(&[cmd]));
    }
    let out = fx.pcs(&["sweep", "--sizes", "6,12,30", "--repeats", "3"]);
    ok(&out);
    let sweep = read_json(&fx.out("sweep.json"));
    let points = sweep["points"].as_array().unwrap();
    assert_eq!(points.len(), 3);
    assert_eq!(points[2]["size"], 30);
    assert_eq!(points[2]["fits"], 1);
    assert_eq!(sweep["repeats"], 3);
}

#[test]
fn missing_config_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = pcs(&["mutate"], dir.path());
    assert_eq!(out.code, 2);
    let out = pcs(&["--config", "nope.toml", "mutate"], dir.path());
    assert_eq!(out.code, 2);
}

#[test]
fn unknown_config_key_exits_with_config_code() {
    let fx = Fixture::new(2, 1, &unanimous);
    fx.append_config("\nbogus = 1\n");
    let out = fx.pcs(&["mutate"]);
    assert_eq!(out.code, 2, "{}", out.stderr);
}

#[test]
fn unreachable_backend_exits_with_backend_code() {
    let fx = Fixture::new(3, 1, &unanimous);
    std::fs::write(fx.path("backend0.json"), "{}").unwrap();
    fx.replace_config("script = \"backend0.json\"\n", "script = \"backend0.json\"\nmax_retries = 0\n");
    ok(&fx.pcs(&["mutate"]));
    let out = fx.pcs(&["annotate"]);
    assert_eq!(out.code, 4, "{}", out.stderr);
}

#[test]
fn http_backend_without_key_fails_before_any_request() {
    let fx = Fixture::new(3, 1, &unanimous);
    fx.append_config(
        "\n[[backends]]\nname = \"remote\"\nkind = \"http_chat\"\nendpoint = \"http://127.0.0.1:9/v1/chat/completions\"\nmodel = \"m\"\napi_key_env = \"PCS_TEST_KEY_THAT_IS_NEVER_SET\"\n",
    );
    ok(&fx.pcs(&["mutate"]));
    let out = fx.pcs(&["annotate"]);
    assert_eq!(out.code, 2, "{}", out.stderr);
    assert!(out.stderr.contains("PCS_TEST_KEY_THAT_IS_NEVER_SET"), "{}", out.stderr);
}

#[test]
fn cold_runs_are_byte_identical_and_warm_runs_free() {
    let run = |fx: &Fixture| {
        for cmd in ["mutate", "annotate", "train"] {
            ok(&fx.pcs(&[cmd]));
        }
        ok(&fx.pcs(&["score"]));
        (
            std::fs::read(fx.path("out/weights.json")).unwrap(),
            std::fs::read(fx.out("scores.jsonl")).unwrap(),
        )
    };
    let a = Fixture::new(12, 2, &identity_only_correct);
    let b = Fixture::new(12, 2, &identity_only_correct);
    assert_eq!(run(&a), run(&b));
    let warm = a.pcs(&["annotate"]);
    assert!(warm.stdout.contains(" 0 backend calls"), "{}", warm.stdout);
}

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use pcs_core::dataset::Sample;
use pcs_core::mrengine::{build_variant_set, MrId, RuleMutator};
use pcs_core::util::sha256_hex;

pub const LABELS: [&str; 2] = ["fake", "real"];

/// Every built-in rule applies to this sentence, so the four variants differ.
pub fn sample_text(i: usize) -> String {
    format!("Officials criticized budget {i} which is fair.")
}

pub fn gold(i: usize) -> usize {
    i % 2
}

/// Variant texts (identity first) exactly as `pcs mutate` will produce them.
pub fn variant_texts(i: usize, mrs: &[MrId]) -> Vec<String> {
    let sample = Sample::new(format!("s{i:03}"), sample_text(i), Some(gold(i))).unwrap();
    build_variant_set(&sample, mrs, &RuleMutator::default())
        .unwrap()
        .variants
        .into_iter()
        .map(|v| v.text)
        .collect()
}

/// Decides the completion of backend `b` for variant `k` of sample `i`.
pub type Answer<'a> = &'a dyn Fn(usize, usize, usize) -> String;

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub n: usize,
    pub backends: usize,
}

impl Fixture {
    /// Dataset of `n` labeled samples and `backends` scripted backends.
    pub fn new(n: usize, backends: usize, answer: Answer) -> Self {
        Self::build(n, backends, answer, true, &MrId::BUILTIN)
    }

    pub fn build(n: usize, backends: usize, answer: Answer, labeled: bool, mrs: &[MrId]) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let mut csv = String::from("id,text,label\n");
        for i in 0..n {
            let label = if labeled { LABELS[gold(i)] } else { "" };
            csv.push_str(&format!("s{i:03},{},{label}\n", sample_text(i)));
        }
        std::fs::write(dir.path().join("data.csv"), csv).unwrap();

        for b in 0..backends {
            let mut script = BTreeMap::new();
            for i in 0..n {
                for (k, text) in variant_texts(i, mrs).into_iter().enumerate() {
                    script.insert(sha256_hex(&text), answer(i, b, k));
                }
            }
            std::fs::write(
                dir.path().join(format!("backend{b}.json")),
                serde_json::to_string_pretty(&script).unwrap(),
            )
            .unwrap();
        }
        let mut config = String::from("seed = 7\noutput_dir = \"out\"\n");
        let mr_list: Vec<String> = mrs.iter().map(|m| format!("\"{m}\"")).collect();
        config.push_str(&format!("mrs = [{}]\n\n", mr_list.join(", ")));
        config.push_str(
            "[dataset]\npath = \"data.csv\"\nformat = \"csv\"\nid_field = \"id\"\nlabel_list = [\"fake\", \"real\"]\n\n",
        );
        for b in 0..backends {
            config.push_str(&format!(
                "[[backends]]\nname = \"backend{b}\"\nkind = \"scripted\"\nscript = \"backend{b}.json\"\n\n"
            ));
        }
        config.push_str("[evaluate]\nrepeats = 5\ncalibration_fraction = 0.5\n");
        std::fs::write(dir.path().join("config.toml"), config).unwrap();
        Self { dir, n, backends }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    pub fn config(&self) -> PathBuf {
        self.path("config.toml")
    }

    pub fn out(&self, file: &str) -> PathBuf {
        self.path("out").join(file)
    }

    pub fn append_config(&self, extra: &str) {
        let mut body = std::fs::read_to_string(self.config()).unwrap();
        body.push_str(extra);
        std::fs::write(self.config(), body).unwrap();
    }

    pub fn replace_config(&self, from: &str, to: &str) {
        let body = std::fs::read_to_string(self.config()).unwrap();
        std::fs::write(self.config(), body.replace(from, to)).unwrap();
    }

    /// Run the `pcs` binary with `--config` and the given arguments.
    pub fn pcs(&self, args: &[&str]) -> Output {
        let config = self.config();
        let mut full = vec!["--config", config.to_str().unwrap()];
        full.extend_from_slice(args);
        pcs(&full, self.dir.path())
    }
}

pub struct Output {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn pcs(args: &[&str], cwd: &Path) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_pcs"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("run pcs");
    Output {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

/// Backend answers that only get the original text right: identity variants
/// carry the gold label, rewritten variants the opposite one.
pub fn identity_only_correct(i: usize, _b: usize, k: usize) -> String {
    let label = if k == 0 { gold(i) } else { 1 - gold(i) };
    format!("<label>{}</label>", LABELS[label])
}

pub fn fixture_csv(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

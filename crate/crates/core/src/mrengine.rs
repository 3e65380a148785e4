//! Metamorphic relations and the mutators that apply them.
//!
//! Every variant set starts with the identity variant (the untouched input).
//! The remaining variants come from a [`Mutator`]: either an LLM rewriting the
//! text from a per-relation prompt template, or the deterministic
//! [`RuleMutator`] used for offline runs.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backends::Backend;
use crate::dataset::Sample;
use crate::error::{Error, Result};
use crate::util::{parallel_map, sha256_hex};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum MrId {
    Identity,
    PassiveActive,
    DoubleNegation,
    SynonymReplacement,
    Custom(String),
}

impl MrId {
    pub const BUILTIN: [MrId; 3] = [
        MrId::PassiveActive,
        MrId::DoubleNegation,
        MrId::SynonymReplacement,
    ];

    pub fn as_str(&self) -> &str {
        match self {
            MrId::Identity => "identity",
            MrId::PassiveActive => "mr1_passive_active",
            MrId::DoubleNegation => "mr2_double_negation",
            MrId::SynonymReplacement => "mr3_synonym_replacement",
            MrId::Custom(name) => name,
        }
    }
}

impl fmt::Display for MrId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MrId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        Ok(match key.as_str() {
            "identity" | "no_mr" | "original" => MrId::Identity,
            "mr1" | "mr1_passive_active" | "passive_active" => MrId::PassiveActive,
            "mr2" | "mr2_double_negation" | "double_negation" => MrId::DoubleNegation,
            "mr3" | "mr3_synonym_replacement" | "synonym_replacement" => MrId::SynonymReplacement,
            _ => {
                let valid = !key.is_empty()
                    && key
                        .chars()
                        .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
                if !valid {
                    return Err(Error::InvalidInput(format!("invalid MR id `{s}`")));
                }
                MrId::Custom(key)
            }
        })
    }
}

impl TryFrom<String> for MrId {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<MrId> for String {
    fn from(mr: MrId) -> Self {
        mr.as_str().to_string()
    }
}

/// Produces rewritten variants of a text.
pub trait Mutator: Send + Sync {
    fn name(&self) -> &str;

    /// Rewrite `text` under `mr`. Not called for [`MrId::Identity`].
    fn rewrite(&self, text: &str, mr: &MrId) -> Result<String>;
}

/// Apply `mr` to `text`. Identity returns the input unchanged.
pub fn mutate(text: &str, mr: &MrId, mutator: &dyn Mutator) -> Result<String> {
    if *mr == MrId::Identity {
        return Ok(text.to_string());
    }
    let out = mutator.rewrite(text, mr)?.trim().to_string();
    tracing::debug!(mr = %mr, input_hash = %sha256_hex(text), mutator = mutator.name(), output = %out, "mutated");
    if out.is_empty() {
        return Err(Error::MutationFailed {
            mr: mr.to_string(),
            reason: "empty completion".into(),
            unreachable: false,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variant {
    pub mr: MrId,
    pub text: String,
    /// The mutation failed and `text` is the original input.
    #[serde(default)]
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariantSet {
    pub sample_id: String,
    pub mutator: String,
    pub variants: Vec<Variant>,
}

/// One line of the mutation audit log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MutationRecord {
    pub sample_id: String,
    pub mr: MrId,
    pub input_hash: String,
    pub output_text: String,
    pub fallback: bool,
}

impl VariantSet {
    pub fn mrs(&self) -> impl Iterator<Item = &MrId> {
        self.variants.iter().map(|v| &v.mr)
    }

    pub fn len(&self) -> usize {
        self.variants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variants.is_empty()
    }

    pub fn has_fallback(&self) -> bool {
        self.variants.iter().any(|v| v.fallback)
    }

    pub fn original(&self) -> &str {
        &self
            .variants
            .iter()
            .find(|v| v.mr == MrId::Identity)
            .expect("identity variant is always present")
            .text
    }

    pub fn audit_records(&self) -> Vec<MutationRecord> {
        let input_hash = sha256_hex(self.original());
        self.variants
            .iter()
            .filter(|v| v.mr != MrId::Identity)
            .map(|v| MutationRecord {
                sample_id: self.sample_id.clone(),
                mr: v.mr.clone(),
                input_hash: input_hash.clone(),
                output_text: v.text.clone(),
                fallback: v.fallback,
            })
            .collect()
    }
}

/// Identity first, then the requested relations in order, without repeats.
pub fn registered_mrs(mrs: &[MrId]) -> Result<Vec<MrId>> {
    let mut out = Vec::with_capacity(mrs.len() + 1);
    if !mrs.contains(&MrId::Identity) {
        out.push(MrId::Identity);
    }
    let mut seen = HashSet::new();
    for mr in mrs {
        if !seen.insert(mr) {
            return Err(Error::InvalidInput(format!("MR `{mr}` registered twice")));
        }
        out.push(mr.clone());
    }
    Ok(out)
}

/// Build the variant set for one sample. A failed mutation falls back to the
/// original text with `fallback` set; the call only fails when every
/// non-identity mutation failed because the mutator was unreachable.
pub fn build_variant_set(sample: &Sample, mrs: &[MrId], mutator: &dyn Mutator) -> Result<VariantSet> {
    let mrs = registered_mrs(mrs)?;
    let mut variants = Vec::with_capacity(mrs.len());
    let mut attempted = 0;
    let mut unreachable = 0;
    let mut last_reason = String::new();
    for mr in mrs {
        if mr == MrId::Identity {
            variants.push(Variant {
                mr,
                text: sample.text.clone(),
                fallback: false,
            });
            continue;
        }
        attempted += 1;
        match mutate(&sample.text, &mr, mutator) {
            Ok(text) => variants.push(Variant {
                mr,
                text,
                fallback: false,
            }),
            Err(e) => {
                if let Error::MutationFailed { unreachable: true, .. } = &e {
                    unreachable += 1;
                }
                tracing::warn!(sample = %sample.id, mr = %mr, error = %e, "mutation failed, using original text");
                last_reason = e.to_string();
                variants.push(Variant {
                    mr,
                    text: sample.text.clone(),
                    fallback: true,
                });
            }
        }
    }
    if attempted > 0 && unreachable == attempted {
        return Err(Error::MutationFailed {
            mr: "all".into(),
            reason: format!("mutator `{}` unreachable: {last_reason}", mutator.name()),
            unreachable: true,
        });
    }
    Ok(VariantSet {
        sample_id: sample.id.clone(),
        mutator: mutator.name().to_string(),
        variants,
    })
}

/// [`build_variant_set`] over many samples with at most `parallelism`
/// concurrent samples in flight. Output order follows `samples`.
pub fn build_variant_sets(
    samples: &[Sample],
    mrs: &[MrId],
    mutator: &dyn Mutator,
    parallelism: usize,
) -> Vec<Result<VariantSet>> {
    parallel_map(samples, parallelism, |_, sample| {
        build_variant_set(sample, mrs, mutator)
    })
}

const MR1_TEMPLATE: &str = include_str!("../prompts/mr1_passive_active.txt");
const MR2_TEMPLATE: &str = include_str!("../prompts/mr2_double_negation.txt");
const MR3_TEMPLATE: &str = include_str!("../prompts/mr3_synonym_replacement.txt");

/// Per-relation rewrite prompts, each with a `{text}` placeholder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MutationTemplates {
    templates: HashMap<MrId, String>,
}

impl Default for MutationTemplates {
    fn default() -> Self {
        let templates = [
            (MrId::PassiveActive, MR1_TEMPLATE),
            (MrId::DoubleNegation, MR2_TEMPLATE),
            (MrId::SynonymReplacement, MR3_TEMPLATE),
        ]
        .into_iter()
        .map(|(mr, t)| (mr, t.to_string()))
        .collect();
        Self { templates }
    }
}

impl MutationTemplates {
    /// The built-in instruction line for a relation.
    pub fn instruction(mr: &MrId) -> Option<&'static str> {
        let template = match mr {
            MrId::PassiveActive => MR1_TEMPLATE,
            MrId::DoubleNegation => MR2_TEMPLATE,
            MrId::SynonymReplacement => MR3_TEMPLATE,
            _ => return None,
        };
        template.lines().next()
    }

    pub fn insert(&mut self, mr: MrId, template: impl Into<String>) -> Result<()> {
        let template = template.into();
        if !template.contains("{text}") {
            return Err(Error::InvalidInput(format!(
                "template for `{mr}` has no `{{text}}` placeholder"
            )));
        }
        self.templates.insert(mr, template);
        Ok(())
    }

    /// Override the defaults with `<mr_id>.txt` files found in `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut templates = Self::default();
        let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        for entry in entries {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("txt") {
                continue;
            }
            let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
                continue;
            };
            let mr: MrId = stem.parse()?;
            let body = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            templates.insert(mr, body)?;
        }
        Ok(templates)
    }

    pub fn get(&self, mr: &MrId) -> Option<&str> {
        self.templates.get(mr).map(String::as_str)
    }

    pub fn render(&self, mr: &MrId, text: &str) -> Option<String> {
        self.get(mr).map(|t| t.replace("{text}", text))
    }
}

/// Rewrites text by prompting a chat backend with the relation's template.
pub struct LlmMutator {
    backend: Backend,
    templates: MutationTemplates,
}

impl LlmMutator {
    pub fn new(backend: Backend, templates: MutationTemplates) -> Self {
        Self { backend, templates }
    }

    pub fn backend(&self) -> &Backend {
        &self.backend
    }
}

impl Mutator for LlmMutator {
    fn name(&self) -> &str {
        self.backend.name()
    }

    fn rewrite(&self, text: &str, mr: &MrId) -> Result<String> {
        let prompt = self.templates.render(mr, text).ok_or_else(|| Error::MutationFailed {
            mr: mr.to_string(),
            reason: "no prompt template registered".into(),
            unreachable: false,
        })?;
        // the rendered prompt doubles as the scripted-backend lookup subject
        self.backend
            .complete(&prompt, &prompt)
            .map_err(|e| Error::MutationFailed {
                mr: mr.to_string(),
                reason: e.0,
                unreachable: true,
            })
    }
}

/// Result of a rule rewrite. `applied` is false when the text did not match
/// the rule's pattern and was passed through unchanged.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleOutcome {
    pub text: String,
    pub applied: bool,
}

impl RuleOutcome {
    fn passthrough(text: &str) -> Self {
        Self {
            text: text.to_string(),
            applied: false,
        }
    }
}

const DEFAULT_SYNONYMS: &[(&str, &str)] = &[
    ("good", "great"),
    ("bad", "poor"),
    ("happy", "glad"),
    ("big", "large"),
    ("small", "little"),
    ("fast", "quick"),
    ("movie", "film"),
    ("criticized", "condemned"),
    ("criticised", "condemned"),
    ("said", "stated"),
    ("help", "assist"),
    ("buy", "purchase"),
    ("begin", "start"),
    ("smart", "clever"),
    ("angry", "furious"),
    ("terrible", "awful"),
    ("beautiful", "lovely"),
    ("sued", "took legal action against"),
];

const COPULAS: &[&str] = &["is", "are", "was", "were"];

/// Deterministic template-level rewrites for offline runs and tests.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleMutator {
    synonyms: BTreeMap<String, String>,
}

impl Default for RuleMutator {
    fn default() -> Self {
        Self::with_synonyms(DEFAULT_SYNONYMS.iter().map(|&(a, b)| (a, b)))
    }
}

impl RuleMutator {
    pub fn with_synonyms<'a, I>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        Self {
            synonyms: pairs
                .into_iter()
                .map(|(a, b)| (a.to_lowercase(), b.to_string()))
                .collect(),
        }
    }

    pub fn rule_mutate(&self, text: &str, mr: &MrId) -> RuleOutcome {
        match mr {
            MrId::Identity => RuleOutcome {
                text: text.to_string(),
                applied: true,
            },
            MrId::PassiveActive => passive_voice(text),
            MrId::DoubleNegation => double_negation(text),
            MrId::SynonymReplacement => self.synonym_replacement(text),
            MrId::Custom(_) => RuleOutcome::passthrough(text),
        }
    }

    fn synonym_replacement(&self, text: &str) -> RuleOutcome {
        let mut applied = false;
        let words: Vec<String> = text
            .split(' ')
            .map(|token| {
                let (lead, core, trail) = split_punct(token);
                match self.synonyms.get(&core.to_lowercase()) {
                    Some(syn) if !core.is_empty() => {
                        applied = true;
                        format!("{lead}{}{trail}", match_case(core, syn))
                    }
                    _ => token.to_string(),
                }
            })
            .collect();
        RuleOutcome {
            text: words.join(" "),
            applied,
        }
    }
}

/// `rule_mutate` with the built-in synonym table.
pub fn rule_mutate(text: &str, mr: &MrId) -> RuleOutcome {
    RuleMutator::default().rule_mutate(text, mr)
}

impl Mutator for RuleMutator {
    fn name(&self) -> &str {
        "rule"
    }

    fn rewrite(&self, text: &str, mr: &MrId) -> Result<String> {
        let outcome = self.rule_mutate(text, mr);
        if !outcome.applied {
            tracing::debug!(mr = %mr, "rule did not match, passing text through");
        }
        Ok(outcome.text)
    }
}

fn split_punct(token: &str) -> (&str, &str, &str) {
    let start = token
        .find(|c: char| c.is_alphanumeric())
        .unwrap_or(token.len());
    let end = token
        .rfind(|c: char| c.is_alphanumeric())
        .map(|i| i + token[i..].chars().next().map_or(1, char::len_utf8))
        .unwrap_or(start);
    (&token[..start], &token[start..end.max(start)], &token[end.max(start)..])
}

fn match_case(original: &str, replacement: &str) -> String {
    if original.chars().next().is_some_and(char::is_uppercase) {
        let mut chars = replacement.chars();
        chars
            .next()
            .map(|c| c.to_uppercase().chain(chars).collect())
            .unwrap_or_default()
    } else {
        replacement.to_string()
    }
}

/// "SUBJ VERBed OBJ" -> "OBJ was VERBed by SUBJ" for a single regular
/// past-tense verb.
fn passive_voice(text: &str) -> RuleOutcome {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    let verb = tokens.iter().enumerate().position(|(i, t)| {
        i > 0
            && i + 1 < tokens.len()
            && t.len() >= 4
            && t.ends_with("ed")
            && t.chars().all(|c| c.is_ascii_lowercase())
    });
    let Some(v) = verb else {
        return RuleOutcome::passthrough(text);
    };
    let subject = tokens[..v].join(" ");
    let object = tokens[v + 1..].join(" ");
    let (object, trail) = {
        let (_, _, trail) = split_punct(&object);
        (object[..object.len() - trail.len()].to_string(), trail.to_string())
    };
    if object.is_empty() {
        return RuleOutcome::passthrough(text);
    }
    RuleOutcome {
        text: format!("{object} was {} by {subject}{trail}", tokens[v]),
        applied: true,
    }
}

/// "X is ADJ" -> "X is not unADJ" (or "not non-ADJ" when ADJ already starts
/// with "un").
fn double_negation(text: &str) -> RuleOutcome {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    let n = tokens.len();
    if n < 3 || !COPULAS.contains(&tokens[n - 2].to_lowercase().as_str()) {
        return RuleOutcome::passthrough(text);
    }
    let (lead, adj, trail) = split_punct(tokens[n - 1]);
    if adj.is_empty() || !lead.is_empty() {
        return RuleOutcome::passthrough(text);
    }
    let negated = if adj.to_lowercase().starts_with("un") {
        format!("non-{adj}")
    } else {
        format!("un{adj}")
    };
    RuleOutcome {
        text: format!("{} not {negated}{trail}", tokens[..n - 1].join(" ")),
        applied: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{BackendSpec, ScriptedBackend};

    struct Failing;

    impl Mutator for Failing {
        fn name(&self) -> &str {
            "failing"
        }
        fn rewrite(&self, _: &str, _: &MrId) -> Result<String> {
            Ok("   ".into())
        }
    }

    struct Unreachable;

    impl Mutator for Unreachable {
        fn name(&self) -> &str {
            "down"
        }
        fn rewrite(&self, _: &str, mr: &MrId) -> Result<String> {
            Err(Error::MutationFailed {
                mr: mr.to_string(),
                reason: "connection refused".into(),
                unreachable: true,
            })
        }
    }

    fn sample(text: &str) -> Sample {
        Sample::new("s0", text, None).unwrap()
    }

    #[test]
    fn mr_id_round_trip() {
        for mr in [MrId::Identity, MrId::PassiveActive, MrId::DoubleNegation, MrId::SynonymReplacement] {
            assert_eq!(mr.as_str().parse::<MrId>().unwrap(), mr);
        }
        assert_eq!("MR2".parse::<MrId>().unwrap(), MrId::DoubleNegation);
        assert_eq!("mr4_paraphrase".parse::<MrId>().unwrap(), MrId::Custom("mr4_paraphrase".into()));
        assert!("bad id!".parse::<MrId>().is_err());
        let json = serde_json::to_string(&MrId::PassiveActive).unwrap();
        assert_eq!(json, "\"mr1_passive_active\"");
    }

    #[test]
    fn rule_examples() {
        assert_eq!(
            rule_mutate("The cat chased the dog", &MrId::PassiveActive).text,
            "the dog was chased by The cat"
        );
        assert_eq!(
            rule_mutate("The movie is good", &MrId::DoubleNegation).text,
            "The movie is not ungood"
        );
        let table = RuleMutator::with_synonyms([("good", "great")]);
        assert_eq!(
            table.rule_mutate("The movie is good", &MrId::SynonymReplacement).text,
            "The movie is great"
        );
    }

    #[test]
    fn rule_punctuation_and_case() {
        assert_eq!(
            rule_mutate("The cat chased the dog.", &MrId::PassiveActive).text,
            "the dog was chased by The cat."
        );
        assert_eq!(
            rule_mutate("The plan was unwise!", &MrId::DoubleNegation).text,
            "The plan was not non-unwise!"
        );
        assert_eq!(
            rule_mutate("Good movie, bad ending.", &MrId::SynonymReplacement).text,
            "Great film, poor ending."
        );
    }

    #[test]
    fn rule_passthrough_flag() {
        let out = rule_mutate("Run fast", &MrId::PassiveActive);
        assert!(!out.applied);
        assert_eq!(out.text, "Run fast");
        let out = rule_mutate("Nothing to see here", &MrId::SynonymReplacement);
        assert!(!out.applied);
        let out = rule_mutate("anything", &MrId::Custom("x".into()));
        assert!(!out.applied);
    }

    #[test]
    fn identity_is_untouched() {
        let text = "  odd   spacing\tkept ";
        assert_eq!(mutate(text, &MrId::Identity, &Failing).unwrap(), text);
    }

    #[test]
    fn empty_completion_fails() {
        let err = mutate("x", &MrId::PassiveActive, &Failing).unwrap_err();
        assert!(matches!(err, Error::MutationFailed { unreachable: false, .. }));
    }

    #[test]
    fn variant_set_sizes() {
        let s = sample("The movie is good");
        let rule = RuleMutator::default();
        let set = build_variant_set(&s, &MrId::BUILTIN, &rule).unwrap();
        assert_eq!(set.len(), 4);
        assert_eq!(set.variants[0].mr, MrId::Identity);
        assert_eq!(set.original(), "The movie is good");
        let set = build_variant_set(&s, &[], &rule).unwrap();
        assert_eq!(set.len(), 1);
    }

    #[test]
    fn failed_mutation_falls_back() {
        let s = sample("The movie is good");
        let set = build_variant_set(&s, &[MrId::SynonymReplacement], &Failing).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.variants[1].text, s.text);
        assert!(set.variants[1].fallback);
        assert!(set.has_fallback());
        let records = set.audit_records();
        assert_eq!(records.len(), 1);
        assert!(records[0].fallback);
        assert_eq!(records[0].input_hash, sha256_hex(&s.text));
    }

    #[test]
    fn unreachable_mutator_fails_whole_set() {
        let s = sample("x");
        let err = build_variant_set(&s, &MrId::BUILTIN, &Unreachable).unwrap_err();
        assert!(matches!(err, Error::MutationFailed { unreachable: true, .. }));
        // identity-only sets never touch the mutator
        assert_eq!(build_variant_set(&s, &[], &Unreachable).unwrap().len(), 1);
    }

    #[test]
    fn duplicate_mr_rejected() {
        assert!(registered_mrs(&[MrId::PassiveActive, MrId::PassiveActive]).is_err());
        let order = registered_mrs(&[MrId::SynonymReplacement, MrId::Identity]).unwrap();
        assert_eq!(order, vec![MrId::SynonymReplacement, MrId::Identity]);
    }

    #[test]
    fn prompt_contains_instruction_once() {
        let templates = MutationTemplates::default();
        for mr in MrId::BUILTIN {
            let instruction = MutationTemplates::instruction(&mr).unwrap();
            let prompt = templates.render(&mr, "The cat chased the dog.").unwrap();
            assert_eq!(prompt.matches(instruction).count(), 1, "{mr}");
            assert!(prompt.ends_with("The cat chased the dog.\n"));
        }
    }

    #[test]
    fn templates_from_dir() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("mr3.txt"), "Synonyms please: {text}").unwrap();
        std::fs::write(dir.path().join("mr4_echo.txt"), "Echo {text}").unwrap();
        let t = MutationTemplates::load_dir(dir.path()).unwrap();
        assert_eq!(t.render(&MrId::SynonymReplacement, "a").unwrap(), "Synonyms please: a");
        assert_eq!(t.render(&MrId::Custom("mr4_echo".into()), "a").unwrap(), "Echo a");
        assert!(t.get(&MrId::PassiveActive).is_some());
        std::fs::write(dir.path().join("mr1.txt"), "no placeholder").unwrap();
        assert!(MutationTemplates::load_dir(dir.path()).is_err());
    }

    #[test]
    fn llm_mutator_uses_template() {
        let templates = MutationTemplates::default();
        let text = "The FTC and 17 state attorneys general have sued Amazon.";
        let prompt = templates.render(&MrId::PassiveActive, text).unwrap();
        let chat = ScriptedBackend::from_texts([(
            prompt.as_str(),
            "  Amazon has been sued by the FTC and 17 state attorneys general.\n",
        )]);
        let backend = Backend::new(BackendSpec::scripted("mutator"), Box::new(chat));
        let mutator = LlmMutator::new(backend, templates);
        let out = mutate(text, &MrId::PassiveActive, &mutator).unwrap();
        assert_eq!(out, "Amazon has been sued by the FTC and 17 state attorneys general.");
        // no scripted answer for MR2: transport failure after retries
        let err = mutate(text, &MrId::DoubleNegation, &mutator).unwrap_err();
        assert!(matches!(err, Error::MutationFailed { unreachable: true, .. }));
        assert_eq!(mutator.backend().calls(), 1 + 3);
    }

    proptest::proptest! {
        #[test]
        fn identity_invariance(text in ".{1,60}") {
            proptest::prop_assert_eq!(mutate(&text, &MrId::Identity, &RuleMutator::default()).unwrap(), text);
        }

        #[test]
        fn rule_is_deterministic(text in "[A-Za-z ,.]{1,60}", k in 0usize..3) {
            let mr = &MrId::BUILTIN[k];
            proptest::prop_assert_eq!(rule_mutate(&text, mr), rule_mutate(&text, mr));
        }

        #[test]
        fn variant_set_totality(text in "[A-Za-z]{1,10}( [A-Za-z]{1,10}){0,6}", mask in 0u8..8) {
            let mrs: Vec<MrId> = MrId::BUILTIN.iter().enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0).map(|(_, m)| m.clone()).collect();
            let s = Sample::new("p", text, None).unwrap();
            let set = build_variant_set(&s, &mrs, &RuleMutator::default()).unwrap();
            proptest::prop_assert_eq!(set.len(), mrs.len() + 1);
            proptest::prop_assert!(set.variants.iter().all(|v| !v.text.trim().is_empty()));
        }
    }
}

use std::path::Path;

use crate::dataset::LabelSpace;
use crate::error::{Error, Result};

const DEFAULT_CLASSIFY_TEMPLATE: &str = include_str!("../../prompts/classify.txt");

/// A classification prompt with a `{text}` placeholder.
///
/// `{labels}` expands to the comma-separated label list and `{first_label}` to
/// the first label; both are optional.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    text: String,
}

impl PromptTemplate {
    pub fn new(text: impl Into<String>) -> Result<Self> {
        let text = text.into();
        if !text.contains("{text}") {
            return Err(Error::InvalidInput(
                "prompt template has no `{text}` placeholder".into(),
            ));
        }
        Ok(Self { text })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::new(text)
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn render(&self, variant_text: &str, space: &LabelSpace) -> String {
        // {text} goes last so placeholders inside the input are left alone
        self.text
            .replace("{labels}", &space.labels().join(", "))
            .replace("{first_label}", space.name(0))
            .replace("{text}", variant_text)
    }
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self {
            text: DEFAULT_CLASSIFY_TEMPLATE.to_string(),
        }
    }
}

/// Extract a label from a free-form completion.
///
/// Tried in order: the first `<label>...</label>` span, the whole completion,
/// then a label that is the only one occurring as a standalone word. Returns
/// `None` when nothing resolves unambiguously.
pub fn parse_label(raw: &str, space: &LabelSpace) -> Option<usize> {
    if let Some(inner) = first_tag_span(raw) {
        if let Some(i) = space.index_of(inner) {
            return Some(i);
        }
    }

    let whole = raw.trim_matches(|c: char| !c.is_alphanumeric());
    if let Some(i) = space.index_of(whole) {
        return Some(i);
    }

    let haystack = raw.to_lowercase();
    let mut found = space
        .labels()
        .iter()
        .enumerate()
        .filter(|(_, label)| contains_word(&haystack, &label.trim().to_lowercase()))
        .map(|(i, _)| i);
    match (found.next(), found.next()) {
        (Some(i), None) => Some(i),
        _ => None,
    }
}

fn first_tag_span(raw: &str) -> Option<&str> {
    const OPEN: &str = "<label>";
    const CLOSE: &str = "</label>";
    // ASCII lowercasing keeps byte offsets aligned with `raw`
    let lower = raw.to_ascii_lowercase();
    let start = lower.find(OPEN)? + OPEN.len();
    let end = start + lower[start..].find(CLOSE)?;
    Some(raw[start..end].trim())
}

fn contains_word(haystack: &str, needle: &str) -> bool {
    if needle.is_empty() {
        return false;
    }
    let is_word = |c: Option<char>| c.is_some_and(|c| c.is_alphanumeric() || c == '_');
    haystack.match_indices(needle).any(|(pos, _)| {
        let before = haystack[..pos].chars().next_back();
        let after = haystack[pos + needle.len()..].chars().next();
        !is_word(before) && !is_word(after)
    })
}

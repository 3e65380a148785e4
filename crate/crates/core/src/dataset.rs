//! Label spaces, samples and dataset ingestion from CSV or JSONL.
//!
//! Label strings are matched case-insensitively after trimming. The order of a
//! [`LabelSpace`] is fixed at construction and defines the index of every label
//! in all score vectors downstream.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn fold(label: &str) -> String {
    label.trim().to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LabelSpace {
    labels: Vec<String>,
}

impl LabelSpace {
    pub fn new<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let labels: Vec<String> = labels
            .into_iter()
            .map(|l| l.as_ref().trim().to_string())
            .collect();
        if labels.len() < 2 {
            return Err(Error::InvalidLabelSpace(format!(
                "need at least 2 labels, got {}",
                labels.len()
            )));
        }
        let mut seen = HashSet::new();
        for label in &labels {
            if label.is_empty() {
                return Err(Error::InvalidLabelSpace("empty label".into()));
            }
            if !seen.insert(fold(label)) {
                return Err(Error::InvalidLabelSpace(format!(
                    "duplicate label `{label}`"
                )));
            }
        }
        Ok(Self { labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn name(&self, index: usize) -> &str {
        &self.labels[index]
    }

    /// Case-insensitive, whitespace-trimmed lookup.
    pub fn index_of(&self, raw: &str) -> Option<usize> {
        let key = fold(raw);
        self.labels.iter().position(|l| fold(l) == key)
    }
}

impl TryFrom<Vec<String>> for LabelSpace {
    type Error = Error;

    fn try_from(labels: Vec<String>) -> Result<Self> {
        LabelSpace::new(labels)
    }
}

impl From<LabelSpace> for Vec<String> {
    fn from(space: LabelSpace) -> Self {
        space.labels
    }
}

/// Resolve a raw label string against `space`.
pub fn validate_label(raw: &str, space: &LabelSpace) -> Result<usize> {
    space
        .index_of(raw)
        .ok_or_else(|| Error::UnknownLabel(raw.to_string()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub text: String,
    pub gold: Option<usize>,
}

impl Sample {
    pub fn new(id: impl Into<String>, text: impl Into<String>, gold: Option<usize>) -> Result<Self> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(Error::InvalidInput("sample text is empty".into()));
        }
        Ok(Self {
            id: id.into(),
            text,
            gold,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub label_space: LabelSpace,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, label_space: LabelSpace, samples: Vec<Sample>) -> Result<Self> {
        let mut ids = HashSet::new();
        for sample in &samples {
            if !ids.insert(sample.id.as_str()) {
                return Err(Error::DuplicateId(sample.id.clone()));
            }
            if let Some(g) = sample.gold {
                if g >= label_space.len() {
                    return Err(Error::InvalidInput(format!(
                        "sample `{}` has gold index {g} outside the label space",
                        sample.id
                    )));
                }
            }
        }
        Ok(Self {
            name: name.into(),
            label_space,
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Gold labels of every sample, or `None` if any sample is unlabeled.
    pub fn golds(&self) -> Option<Vec<usize>> {
        self.samples.iter().map(|s| s.gold).collect()
    }

    /// Write as JSONL with `id`, `text` and `label` keys. Unlabeled samples
    /// carry an empty label string.
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        for sample in &self.samples {
            let label = sample
                .gold
                .map(|g| self.label_space.name(g))
                .unwrap_or("");
            let row = serde_json::json!({ "id": sample.id, "text": sample.text, "label": label });
            serde_json::to_writer(&mut out, &row)?;
            out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    Csv,
    Jsonl,
}

impl DatasetFormat {
    /// Guess from the file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(Self::Csv),
            "jsonl" | "ndjson" => Some(Self::Jsonl),
            _ => None,
        }
    }
}

/// Where and how to read a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSource {
    pub path: PathBuf,
    pub format: DatasetFormat,
    #[serde(default = "default_text_field")]
    pub text_field: String,
    #[serde(default = "default_label_field")]
    pub label_field: String,
    #[serde(default)]
    pub id_field: Option<String>,
    /// Explicit label ordering; inferred from the data when absent.
    #[serde(default)]
    pub label_list: Option<Vec<String>>,
    #[serde(default)]
    pub name: Option<String>,
}

fn default_text_field() -> String {
    "text".into()
}

fn default_label_field() -> String {
    "label".into()
}

impl DatasetSource {
    pub fn new(path: impl Into<PathBuf>, format: DatasetFormat) -> Self {
        Self {
            path: path.into(),
            format,
            text_field: default_text_field(),
            label_field: default_label_field(),
            id_field: None,
            label_list: None,
            name: None,
        }
    }
}

struct RawRow {
    row: usize,
    id: Option<String>,
    text: String,
    label: Option<String>,
}

/// Load a dataset. Row numbers in errors are 1-based and exclude the CSV
/// header.
pub fn load_dataset(source: &DatasetSource) -> Result<Dataset> {
    let path = &source.path;
    if !path.is_file() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "dataset file not found"),
        ));
    }
    let rows = match source.format {
        DatasetFormat::Csv => read_csv(source)?,
        DatasetFormat::Jsonl => read_jsonl(source)?,
    };
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let label_space = match &source.label_list {
        Some(list) => LabelSpace::new(list)?,
        None => infer_label_space(&rows)?,
    };

    let mut samples = Vec::with_capacity(rows.len());
    for (i, raw) in rows.into_iter().enumerate() {
        let gold = match raw.label.as_deref().map(str::trim) {
            None | Some("") => None,
            Some(label) => Some(validate_label(label, &label_space)?),
        };
        let id = raw.id.unwrap_or_else(|| format!("{i:06}"));
        let sample = Sample::new(id, raw.text, gold).map_err(|_| Error::Malformed {
            row: raw.row,
            message: "text is empty".into(),
        })?;
        samples.push(sample);
    }

    let name = source.name.clone().unwrap_or_else(|| {
        path.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    Dataset::new(name, label_space, samples)
}

fn infer_label_space(rows: &[RawRow]) -> Result<LabelSpace> {
    // folded key -> first-seen spelling; BTreeMap gives the lexicographic order
    let mut distinct = BTreeMap::new();
    for row in rows {
        if let Some(label) = row.label.as_deref().map(str::trim).filter(|l| !l.is_empty()) {
            distinct.entry(fold(label)).or_insert_with(|| label.to_string());
        }
    }
    LabelSpace::new(distinct.into_values())
}

fn read_csv(source: &DatasetSource) -> Result<Vec<RawRow>> {
    let path = &source.path;
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_error(path, 0, e))?;
    let headers = reader
        .headers()
        .map_err(|e| csv_error(path, 0, e))?
        .clone();
    let column = |field: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == field)
            .ok_or_else(|| Error::MissingField {
                row: 1,
                field: field.to_string(),
            })
    };
    let text_col = column(&source.text_field)?;
    let label_col = column(&source.label_field)?;
    let id_col = source.id_field.as_deref().map(column).transpose()?;

    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| csv_error(path, row, e))?;
        let get = |col: usize, field: &str| -> Result<String> {
            record
                .get(col)
                .map(str::to_string)
                .ok_or_else(|| Error::MissingField {
                    row,
                    field: field.to_string(),
                })
        };
        rows.push(RawRow {
            row,
            text: get(text_col, &source.text_field)?,
            label: Some(get(label_col, &source.label_field)?),
            id: match (id_col, &source.id_field) {
                (Some(c), Some(f)) => Some(get(c, f)?),
                _ => None,
            },
        });
    }
    Ok(rows)
}

fn csv_error(path: &Path, row: usize, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Malformed {
            row,
            message: format!("{other:?}"),
        },
    }
}

fn read_jsonl(source: &DatasetSource) -> Result<Vec<RawRow>> {
    let path = &source.path;
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    let mut row = 0;
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        row += 1;
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| Error::Malformed {
                row,
                message: e.to_string(),
            })?;
        let obj = value.as_object().ok_or_else(|| Error::Malformed {
            row,
            message: "expected a JSON object".into(),
        })?;
        let field = |name: &str| -> Result<Option<String>> {
            match obj.get(name) {
                None => Err(Error::MissingField {
                    row,
                    field: name.to_string(),
                }),
                Some(serde_json::Value::Null) => Ok(None),
                Some(serde_json::Value::String(s)) => Ok(Some(s.clone())),
                Some(other) => Ok(Some(other.to_string())),
            }
        };
        let text = field(&source.text_field)?.unwrap_or_default();
        let label = field(&source.label_field)?;
        let id = source.id_field.as_deref().map(field).transpose()?.flatten();
        rows.push(RawRow {
            row,
            id,
            text,
            label,
        });
    }
    Ok(rows)
}

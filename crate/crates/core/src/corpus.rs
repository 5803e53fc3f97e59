//! Labelled tweet collections in the SemEval-2018 E-c tab-separated layout.
//!
//! A file starts with a header `ID<TAB>Tweet<TAB><label columns>` followed by
//! one row per tweet. Label cells are ASCII `0` or `1`. Files carrying only
//! the eleven original emotion columns are accepted and padded with an
//! all-zero `neutral` column.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub mod synthetic;

/// Number of emotion classes.
pub const NUM_LABELS: usize = 12;

pub const DEFAULT_LABELS: [&str; NUM_LABELS] = [
    "anger",
    "anticipation",
    "disgust",
    "fear",
    "joy",
    "love",
    "optimism",
    "pessimism",
    "sadness",
    "surprise",
    "trust",
    "neutral",
];

/// Ordered label schema. Column `c` of every label matrix refers to `labels()[c]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmotionLabelSet {
    labels: Vec<String>,
}

impl Default for EmotionLabelSet {
    fn default() -> Self {
        Self {
            labels: DEFAULT_LABELS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl EmotionLabelSet {
    pub fn new<S: AsRef<str>>(labels: &[S]) -> Result<Self> {
        if labels.len() != NUM_LABELS {
            return Err(Error::config(format!(
                "label set needs exactly {NUM_LABELS} labels, got {}",
                labels.len()
            )));
        }
        let mut seen = HashSet::new();
        for l in labels {
            if !seen.insert(l.as_ref()) {
                return Err(Error::config(format!("duplicate label `{}`", l.as_ref())));
            }
        }
        Ok(Self {
            labels: labels.iter().map(|s| s.as_ref().to_string()).collect(),
        })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == name)
    }
}

/// Dense row-major binary matrix (instances x classes).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LabelMatrix {
    rows: usize,
    cols: usize,
    data: Vec<u8>,
}

impl LabelMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    pub fn from_rows<R: AsRef<[u8]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::Shape(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            if let Some(v) = r.iter().find(|&&v| v > 1) {
                return Err(Error::Shape(format!("row {i} holds non-binary value {v}")));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, c: usize) -> u8 {
        self.data[i * self.cols + c]
    }

    pub fn set(&mut self, i: usize, c: usize, value: bool) {
        self.data[i * self.cols + c] = value as u8;
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.data
    }

    pub fn column_sums(&self) -> Vec<usize> {
        let mut sums = vec![0usize; self.cols];
        for row in self.data.chunks_exact(self.cols.max(1)) {
            for (s, &v) in sums.iter_mut().zip(row) {
                *s += v as usize;
            }
        }
        sums
    }

    /// Rows picked by `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub id: String,
    pub raw_text: String,
    pub labels: Vec<u8>,
}

/// Ordered list of examples with the derived label matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    examples: Vec<Example>,
    label_matrix: LabelMatrix,
}

impl Dataset {
    pub fn new(examples: Vec<Example>) -> Result<Self> {
        for (i, ex) in examples.iter().enumerate() {
            if ex.labels.len() != NUM_LABELS {
                return Err(Error::Shape(format!(
                    "example {i} (`{}`) has {} labels, expected {NUM_LABELS}",
                    ex.id,
                    ex.labels.len()
                )));
            }
        }
        let rows: Vec<&[u8]> = examples.iter().map(|e| e.labels.as_slice()).collect();
        let label_matrix = if rows.is_empty() {
            LabelMatrix::zeros(0, NUM_LABELS)
        } else {
            LabelMatrix::from_rows(&rows)?
        };
        Ok(Self {
            examples,
            label_matrix,
        })
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn label_matrix(&self) -> &LabelMatrix {
        &self.label_matrix
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    fn subset(&self, indices: &[usize]) -> Self {
        Self {
            examples: indices.iter().map(|&i| self.examples[i].clone()).collect(),
            label_matrix: self.label_matrix.select(indices),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassDistribution {
    pub counts: Vec<usize>,
    pub total: usize,
}

pub fn class_distribution(d: &Dataset) -> ClassDistribution {
    ClassDistribution {
        counts: d.label_matrix.column_sums(),
        total: d.len(),
    }
}

fn strip_bom(s: &str) -> &str {
    s.strip_prefix('\u{feff}').unwrap_or(s)
}

/// Data lines with their 1-based line numbers. A single trailing newline is
/// not a row; `\r` before `\n` is tolerated.
fn lines(s: &str) -> impl Iterator<Item = (usize, &str)> {
    let body = s.strip_suffix('\n').unwrap_or(s);
    body.split('\n')
        .take(if s.is_empty() { 0 } else { usize::MAX })
        .map(|l| l.strip_suffix('\r').unwrap_or(l))
        .enumerate()
        .map(|(i, l)| (i + 1, l))
}

/// Label columns declared in the header, mapped to schema indices.
fn parse_header(header: &str, schema: &EmotionLabelSet) -> Result<Vec<usize>> {
    let fields: Vec<&str> = header.split('\t').collect();
    if fields.len() < 2
        || !fields[0].eq_ignore_ascii_case("id")
        || !fields[1].eq_ignore_ascii_case("tweet")
    {
        return Err(Error::Parse {
            line: 1,
            message: "header must start with `ID<TAB>Tweet`".into(),
        });
    }
    let names = &fields[2..];
    let full = schema.labels();
    let matches = |expected: &[String]| {
        names.len() == expected.len()
            && names
                .iter()
                .zip(expected)
                .all(|(a, b)| a.eq_ignore_ascii_case(b))
    };
    if matches(full) {
        Ok((0..full.len()).collect())
    } else if matches(&full[..full.len() - 1]) {
        Ok((0..full.len() - 1).collect())
    } else {
        Err(Error::Parse {
            line: 1,
            message: format!(
                "label columns {:?} do not match schema {:?} (the last column may be omitted)",
                names, full
            ),
        })
    }
}

/// Parses TSV text into a dataset.
pub fn parse_tsv(text: &str, schema: &EmotionLabelSet) -> Result<Dataset> {
    let text = strip_bom(text);
    let mut lines = lines(text);
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "missing header".into(),
    })?;
    let columns = parse_header(header, schema)?;
    let expected_fields = columns.len() + 2;

    let mut examples = Vec::new();
    for (line, row) in lines {
        let fields: Vec<&str> = row.split('\t').collect();
        if fields.len() != expected_fields {
            return Err(Error::Parse {
                line,
                message: format!("expected {expected_fields} fields, found {}", fields.len()),
            });
        }
        if fields[1].is_empty() {
            return Err(Error::Validation {
                line,
                message: "empty tweet text".into(),
            });
        }
        let mut labels = vec![0u8; schema.len()];
        for (cell, &c) in fields[2..].iter().zip(&columns) {
            labels[c] = match *cell {
                "0" => 0,
                "1" => 1,
                other => {
                    return Err(Error::Validation {
                        line,
                        message: format!(
                            "label `{}` has value `{other}`, expected 0 or 1",
                            schema.labels()[c]
                        ),
                    })
                }
            };
        }
        examples.push(Example {
            id: fields[0].to_string(),
            raw_text: fields[1].to_string(),
            labels,
        });
    }
    Dataset::new(examples)
}

fn read_utf8(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    String::from_utf8(bytes).map_err(|e| {
        let line = 1 + e.as_bytes()[..e.utf8_error().valid_up_to()]
            .iter()
            .filter(|&&b| b == b'\n')
            .count();
        Error::Parse {
            line,
            message: format!("{}: invalid UTF-8", path.display()),
        }
    })
}

pub fn load_tsv(path: impl AsRef<Path>, schema: &EmotionLabelSet) -> Result<Dataset> {
    let path = path.as_ref();
    let text = read_utf8(path)?;
    parse_tsv(&text, schema).map_err(|e| match e {
        Error::Parse { line, message } => Error::Parse {
            line,
            message: format!("{}: {message}", path.display()),
        },
        Error::Validation { line, message } => Error::Validation {
            line,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

/// Serializes with the full schema header. Tabs and newlines inside tweets
/// cannot be represented and are rejected.
pub fn to_tsv(d: &Dataset, schema: &EmotionLabelSet) -> Result<String> {
    let mut out = String::from("ID\tTweet");
    for l in schema.labels() {
        out.push('\t');
        out.push_str(l);
    }
    out.push('\n');
    for ex in d.examples() {
        if [&ex.id, &ex.raw_text]
            .iter()
            .any(|f| f.contains(['\t', '\n', '\r']))
        {
            return Err(Error::Validation {
                line: 0,
                message: format!("example `{}` contains a tab or newline", ex.id),
            });
        }
        out.push_str(&ex.id);
        out.push('\t');
        out.push_str(&ex.raw_text);
        for &v in &ex.labels {
            let _ = write!(out, "\t{v}");
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_tsv(d: &Dataset, schema: &EmotionLabelSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_tsv(d, schema)?).map_err(|e| Error::io(path, e))
}

/// An `ID`/`Tweet` row without labels, as consumed by prediction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnlabeledRow {
    pub id: String,
    pub raw_text: String,
}

/// Reads the first two columns of a TSV with an `ID<TAB>Tweet` header; any
/// further columns are ignored.
pub fn parse_unlabeled_tsv(text: &str) -> Result<Vec<UnlabeledRow>> {
    let text = strip_bom(text);
    let mut lines = lines(text);
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "missing header".into(),
    })?;
    let head: Vec<&str> = header.split('\t').collect();
    if head.len() < 2 || !head[0].eq_ignore_ascii_case("id") || !head[1].eq_ignore_ascii_case("tweet")
    {
        return Err(Error::Parse {
            line: 1,
            message: "header must start with `ID<TAB>Tweet`".into(),
        });
    }
    lines
        .map(|(line, row)| {
            let mut fields = row.split('\t');
            match (fields.next(), fields.next()) {
                (Some(id), Some(tweet)) => Ok(UnlabeledRow {
                    id: id.to_string(),
                    raw_text: tweet.to_string(),
                }),
                _ => Err(Error::Parse {
                    line,
                    message: "expected at least 2 fields".into(),
                }),
            }
        })
        .collect()
}

pub fn load_unlabeled_tsv(path: impl AsRef<Path>) -> Result<Vec<UnlabeledRow>> {
    let path = path.as_ref();
    parse_unlabeled_tsv(&read_utf8(path)?)
}

/// Seeded three-way partition. Sizes are rounded from the fractions, the
/// last split takes the remainder.
pub fn split(d: &Dataset, fractions: [f64; 3], seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
    let mut problems = Vec::new();
    for (i, f) in fractions.iter().enumerate() {
        if !(0.0..=1.0).contains(f) {
            problems.push(format!("split fraction {i} = {f} is outside [0, 1]"));
        }
    }
    let sum: f64 = fractions.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        problems.push(format!("split fractions sum to {sum}, expected 1"));
    }
    if !problems.is_empty() {
        return Err(Error::Config(problems));
    }

    let n = d.len();
    let first = ((fractions[0] * n as f64).round() as usize).min(n);
    let second = ((fractions[1] * n as f64).round() as usize).min(n - first);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (a, rest) = order.split_at(first);
    let (b, c) = rest.split_at(second);
    Ok((d.subset(a), d.subset(b), d.subset(c)))
}

//! CSV ingestion into a typed, column-oriented table.

use std::fs::File;
use std::path::Path;

use super::schema::{DatasetSchema, FeatureKind};
use crate::{Error, Result};

/// Default cap on malformed rows, as a fraction of all data rows.
pub const DEFAULT_MALFORMED_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub enum RawColumn {
    Numeric(Vec<f64>),
    Categorical(Vec<String>),
}

impl RawColumn {
    fn len(&self) -> usize {
        match self {
            RawColumn::Numeric(v) => v.len(),
            RawColumn::Categorical(v) => v.len(),
        }
    }
}

/// Parsed rows: one column per schema feature plus the raw label strings.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub schema: DatasetSchema,
    pub columns: Vec<RawColumn>,
    pub labels: Vec<String>,
    /// Rows rejected while parsing.
    pub malformed: usize,
    pub first_malformed: Option<String>,
}

impl RawTable {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadOptions {
    /// Largest tolerated fraction of malformed rows.
    pub malformed_fraction: f64,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            malformed_fraction: DEFAULT_MALFORMED_FRACTION,
        }
    }
}

/// Where each schema column sits in a record.
struct Layout {
    features: Vec<usize>,
    label: usize,
    min_len: usize,
}

fn header_layout(schema: &DatasetSchema, header: &csv::StringRecord) -> Result<Layout> {
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    let find = |name: &str| {
        names
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| Error::Schema(format!("column `{name}` missing from CSV header")))
    };
    let features = schema
        .features
        .iter()
        .map(|f| find(&f.name))
        .collect::<Result<Vec<_>>>()?;
    let label = find(&schema.label)?;
    let unlisted: Vec<&str> = names
        .iter()
        .copied()
        .filter(|h| {
            *h != schema.label
                && !schema.features.iter().any(|f| f.name == *h)
                && !schema.ignore.iter().any(|i| i == h)
        })
        .collect();
    if !unlisted.is_empty() {
        return Err(Error::Schema(format!(
            "schema does not cover column(s): {}",
            unlisted.join(", ")
        )));
    }
    Ok(Layout {
        features,
        label,
        min_len: names.len(),
    })
}

fn positional_layout(schema: &DatasetSchema) -> Layout {
    let n = schema.features.len();
    let label = schema.label_position.unwrap_or(n);
    let features = (0..n).map(|i| if i < label { i } else { i + 1 }).collect();
    Layout {
        features,
        label,
        min_len: n + 1,
    }
}

/// Parses `path` according to `schema`.
///
/// A row is malformed when it has too few fields, a numeric field that is not a
/// finite number, or an empty label. Malformed rows are dropped and counted; if
/// they exceed `options.malformed_fraction` of all rows, loading fails.
pub fn load_csv(
    path: impl AsRef<Path>,
    schema: &DatasetSchema,
    options: LoadOptions,
) -> Result<RawTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, schema, options)
}

pub fn read_csv(
    reader: impl std::io::Read,
    schema: &DatasetSchema,
    options: LoadOptions,
) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(schema.header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let layout = if schema.header {
        header_layout(schema, rdr.headers()?)?
    } else {
        positional_layout(schema)
    };

    let mut columns: Vec<RawColumn> = schema
        .features
        .iter()
        .map(|f| match f.kind {
            FeatureKind::Numeric => RawColumn::Numeric(Vec::new()),
            FeatureKind::Categorical => RawColumn::Categorical(Vec::new()),
        })
        .collect();
    let mut labels = Vec::new();
    let mut malformed = 0;
    let mut first_malformed = None;
    let mut total = 0usize;
    let mut numeric_buf = vec![0.0; schema.features.len()];

    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        total += 1;
        let line = i + 1 + usize::from(schema.header);
        let problem = check_record(&record, &layout, schema, &mut numeric_buf);
        if let Some(why) = problem {
            malformed += 1;
            first_malformed.get_or_insert_with(|| format!("line {line}: {why}"));
            continue;
        }
        for ((col, &idx), &num) in columns.iter_mut().zip(&layout.features).zip(&numeric_buf) {
            match col {
                RawColumn::Numeric(v) => v.push(num),
                RawColumn::Categorical(v) => v.push(record[idx].to_string()),
            }
        }
        labels.push(record[layout.label].to_string());
    }

    let limit = (options.malformed_fraction * total as f64).floor() as usize;
    if malformed > limit {
        return Err(Error::TooManyMalformed {
            malformed,
            total,
            limit,
            first: first_malformed.unwrap_or_default(),
        });
    }
    if malformed > 0 {
        log::warn!(
            "dropped {malformed} malformed row(s) of {total}; first: {}",
            first_malformed.as_deref().unwrap_or("")
        );
    }
    debug_assert!(columns.iter().all(|c| c.len() == labels.len()));
    Ok(RawTable {
        schema: schema.clone(),
        columns,
        labels,
        malformed,
        first_malformed,
    })
}

fn check_record(
    record: &csv::StringRecord,
    layout: &Layout,
    schema: &DatasetSchema,
    numeric: &mut [f64],
) -> Option<String> {
    if record.len() < layout.min_len {
        return Some(format!(
            "{} fields, expected {}",
            record.len(),
            layout.min_len
        ));
    }
    for ((f, &idx), slot) in schema
        .features
        .iter()
        .zip(&layout.features)
        .zip(numeric.iter_mut())
    {
        if f.kind == FeatureKind::Numeric {
            match record[idx].parse::<f64>() {
                Ok(v) if v.is_finite() => *slot = v,
                _ => {
                    return Some(format!(
                        "`{}` is not a finite number in `{}`",
                        &record[idx], f.name
                    ))
                }
            }
        }
    }
    if record[layout.label].is_empty() {
        return Some("empty label".into());
    }
    None
}

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::schema::{DatasetSchema, FeatureKind};
use super::table::{RawColumn, RawTable};
use crate::math::Matrix;
use crate::metrics;
use crate::{Error, Result};

/// Lower bound on a stored standard deviation.
pub const STD_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedColumn {
    pub name: String,
    /// False for one-hot indicator columns.
    pub numeric: bool,
}

/// Numeric feature matrix with class-index labels; benign is class 0.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedDataset {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
    pub columns: Vec<EncodedColumn>,
}

impl EncodedDataset {
    pub fn new(
        features: Matrix,
        labels: Vec<usize>,
        class_names: Vec<String>,
        columns: Vec<EncodedColumn>,
    ) -> Result<Self> {
        if features.rows() != labels.len() || features.cols() != columns.len() {
            return Err(Error::shape(
                "dataset",
                features.shape(),
                (labels.len(), columns.len()),
            ));
        }
        if let Some((row, &label)) = labels
            .iter()
            .enumerate()
            .find(|(_, &y)| y >= class_names.len())
        {
            return Err(Error::LabelOutOfRange {
                row,
                label,
                num_classes: class_names.len(),
            });
        }
        if !features.is_finite() {
            return Err(Error::InvalidArgument(
                "feature matrix contains NaN or Inf".into(),
            ));
        }
        Ok(Self {
            features,
            labels,
            class_names,
            columns,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn num_features(&self) -> usize {
        self.features.cols()
    }

    pub fn class_counts(&self) -> Vec<u64> {
        let mut counts = vec![0; self.num_classes()];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    pub fn omega_imb(&self) -> Result<f64> {
        metrics::imbalance_measure(&self.class_counts())
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.class_names.iter().position(|c| c == name)
    }

    pub fn class_name(&self, index: usize) -> Option<&str> {
        self.class_names.get(index).map(String::as_str)
    }

    /// Row indices grouped by class.
    pub fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_classes()];
        for (i, &y) in self.labels.iter().enumerate() {
            out[y].push(i);
        }
        out
    }

    /// Rows `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> EncodedDataset {
        EncodedDataset {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_names: self.class_names.clone(),
            columns: self.columns.clone(),
        }
    }
}

/// One-hot vocabularies and label mapping learned from training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub schema: DatasetSchema,
    /// Sorted category values, one list per feature (empty for numeric ones).
    pub vocabularies: Vec<Vec<String>>,
    pub class_names: Vec<String>,
}

impl Encoder {
    pub fn fit(table: &RawTable, schema: &DatasetSchema) -> Result<Self> {
        if table.columns.len() != schema.features.len() {
            return Err(Error::Schema(format!(
                "table has {} feature columns, schema declares {}",
                table.columns.len(),
                schema.features.len()
            )));
        }
        let vocabularies = table
            .columns
            .iter()
            .map(|col| match col {
                RawColumn::Numeric(_) => Vec::new(),
                RawColumn::Categorical(values) => values
                    .iter()
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .cloned()
                    .collect(),
            })
            .collect();
        Ok(Self {
            schema: schema.clone(),
            vocabularies,
            class_names: schema.ordered_classes(),
        })
    }

    pub fn columns(&self) -> Vec<EncodedColumn> {
        let mut out = Vec::new();
        for (f, vocab) in self.schema.features.iter().zip(&self.vocabularies) {
            match f.kind {
                FeatureKind::Numeric => out.push(EncodedColumn {
                    name: f.name.clone(),
                    numeric: true,
                }),
                FeatureKind::Categorical => out.extend(vocab.iter().map(|v| EncodedColumn {
                    name: format!("{}={v}", f.name),
                    numeric: false,
                })),
            }
        }
        out
    }

    pub fn label_index(&self, raw: &str) -> Option<usize> {
        let class = self.schema.resolve_label(raw)?;
        self.class_names.iter().position(|c| c == class)
    }

    /// Encodes a table; categories unseen at fit time become all-zero indicators.
    pub fn encode(&self, table: &RawTable) -> Result<EncodedDataset> {
        if table.columns.len() != self.vocabularies.len() {
            return Err(Error::Schema(format!(
                "table has {} feature columns, encoder expects {}",
                table.columns.len(),
                self.vocabularies.len()
            )));
        }
        let mut unknown = BTreeSet::new();
        let labels: Vec<usize> = table
            .labels
            .iter()
            .map(|raw| {
                self.label_index(raw).unwrap_or_else(|| {
                    unknown.insert(raw.clone());
                    0
                })
            })
            .collect();
        if !unknown.is_empty() {
            return Err(Error::UnknownLabels(unknown.into_iter().collect()));
        }

        let columns = self.columns();
        let n = table.len();
        let width = columns.len();
        let mut data = vec![0.0; n * width];
        let mut offset = 0;
        for (col, vocab) in table.columns.iter().zip(&self.vocabularies) {
            match col {
                RawColumn::Numeric(values) => {
                    for (r, &v) in values.iter().enumerate() {
                        data[r * width + offset] = v;
                    }
                    offset += 1;
                }
                RawColumn::Categorical(values) => {
                    let slot: HashMap<&str, usize> = vocab
                        .iter()
                        .enumerate()
                        .map(|(i, v)| (v.as_str(), i))
                        .collect();
                    for (r, v) in values.iter().enumerate() {
                        if let Some(&k) = slot.get(v.as_str()) {
                            data[r * width + offset + k] = 1.0;
                        }
                    }
                    offset += vocab.len();
                }
            }
        }
        EncodedDataset::new(
            Matrix::from_vec(n, width, data)?,
            labels,
            self.class_names.clone(),
            columns,
        )
    }

    pub fn decode_label(&self, index: usize) -> Option<&str> {
        self.class_names.get(index).map(String::as_str)
    }
}

/// Per-column z-scoring learned on training data; one-hot columns pass through.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub numeric: Vec<bool>,
}

impl Normalizer {
    /// Population mean and standard deviation of each numeric column.
    pub fn fit(train: &EncodedDataset) -> Self {
        let x = &train.features;
        let n = x.rows().max(1) as f64;
        let mut mean = x.column_sums();
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0; x.cols()];
        for row in x.row_iter() {
            for ((v, &xi), &m) in var.iter_mut().zip(row).zip(&mean) {
                *v += (xi - m) * (xi - m);
            }
        }
        let numeric: Vec<bool> = train.columns.iter().map(|c| c.numeric).collect();
        let (mean, std) = mean
            .into_iter()
            .zip(var)
            .zip(&numeric)
            .map(|((m, v), &is_num)| {
                if is_num {
                    (m, (v / n).sqrt().max(STD_FLOOR))
                } else {
                    (0.0, 1.0)
                }
            })
            .unzip();
        Self { mean, std, numeric }
    }

    pub fn apply(&self, ds: &EncodedDataset) -> Result<EncodedDataset> {
        if ds.num_features() != self.mean.len() {
            return Err(Error::shape(
                "normalize",
                ds.features.shape(),
                (ds.len(), self.mean.len()),
            ));
        }
        let mut out = ds.clone();
        for r in 0..out.features.rows() {
            let row = out.features.row_mut(r);
            for (((v, &is_num), &m), &s) in row
                .iter_mut()
                .zip(&self.numeric)
                .zip(&self.mean)
                .zip(&self.std)
            {
                if is_num {
                    *v = (*v - m) / s;
                }
            }
        }
        Ok(out)
    }
}

/// Encoder and normalizer bundled for reuse on held-out data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    pub encoder: Encoder,
    pub normalizer: Normalizer,
}

impl Preprocessor {
    pub fn transform(&self, table: &RawTable) -> Result<EncodedDataset> {
        self.normalizer.apply(&self.encoder.encode(table)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = toml::to_string(self).map_err(|e| Error::Schema(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
    }
}

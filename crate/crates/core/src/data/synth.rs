//! Gaussian-cluster datasets with declared class sizes.
//!
//! Spec files are TOML:
//!
//! ```toml
//! dim = 20
//! mean_spread = 2.0    # std of randomly drawn class means
//! benign = "Benign"    # defaults to the first class
//!
//! [[class]]
//! name = "Benign"
//! count = 9000
//! std = 1.0            # isotropic noise; or `covariance = [[...], ...]`
//! # mean = [...]       # drawn from N(0, mean_spread²) when omitted
//! ```

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::encode::{EncodedColumn, EncodedDataset};
use super::schema::DatasetSchema;
use crate::math::{cholesky_psd, Matrix, RngState};
use crate::{Error, Result};

fn default_std() -> Option<f64> {
    Some(1.0)
}

fn default_spread() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthClass {
    pub name: String,
    pub count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<Vec<f64>>,
    #[serde(default = "default_std", skip_serializing_if = "Option::is_none")]
    pub std: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "default_spread")]
    pub mean_spread: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benign: Option<String>,
    #[serde(rename = "class")]
    pub classes: Vec<SynthClass>,
}

impl SynthSpec {
    /// Five isotropic unit-variance classes in 20 dimensions with sizes
    /// 9000/400/300/200/100; class means are drawn from `N(0, 2²)` per
    /// coordinate.
    pub fn long_tail() -> Self {
        let counts = [
            ("Benign", 9000),
            ("DoS", 400),
            ("Probe", 300),
            ("R2L", 200),
            ("U2R", 100),
        ];
        Self {
            dim: 20,
            seed: None,
            mean_spread: 2.0,
            benign: Some("Benign".into()),
            classes: counts
                .iter()
                .map(|&(name, count)| SynthClass {
                    name: name.into(),
                    count,
                    mean: None,
                    std: Some(1.0),
                    covariance: None,
                })
                .collect(),
        }
    }

    /// Tight clusters centred on distinct coordinate axes, far apart relative to
    /// their spread.
    pub fn separable(counts: &[usize], dim: usize) -> Self {
        Self {
            dim,
            seed: None,
            mean_spread: 1.0,
            benign: None,
            classes: counts
                .iter()
                .enumerate()
                .map(|(k, &count)| {
                    let mut mean = vec![0.0; dim];
                    mean[k % dim] = if k < dim { 6.0 } else { -6.0 };
                    SynthClass {
                        name: format!("class{k}"),
                        count,
                        mean: Some(mean),
                        std: Some(0.5),
                        covariance: None,
                    }
                })
                .collect(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
    }

    pub fn total(&self) -> usize {
        self.classes.iter().map(|c| c.count).sum()
    }

    fn benign_name(&self) -> &str {
        self.benign
            .as_deref()
            .unwrap_or_else(|| self.classes.first().map_or("", |c| c.name.as_str()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.dim == 0 {
            return bad("dim must be >= 1".into());
        }
        if self.classes.len() < 2 {
            return bad("need at least two classes".into());
        }
        if !self.classes.iter().any(|c| c.name == self.benign_name()) {
            return bad(format!(
                "benign class `{}` not declared",
                self.benign_name()
            ));
        }
        for c in &self.classes {
            if c.count == 0 {
                return bad(format!("class `{}` has count 0", c.name));
            }
            if c.mean.as_ref().is_some_and(|m| m.len() != self.dim) {
                return bad(format!("mean of class `{}` has wrong length", c.name));
            }
            if let Some(cov) = &c.covariance {
                if cov.len() != self.dim || cov.iter().any(|r| r.len() != self.dim) {
                    return bad(format!("covariance of class `{}` is not {0}x{0}", self.dim));
                }
            }
            if c.std.is_some_and(|s| !(s >= 0.0)) {
                return bad(format!("std of class `{}` must be >= 0", c.name));
            }
        }
        Ok(())
    }

    /// Class names in generated order: benign first.
    pub fn class_names(&self) -> Vec<String> {
        let benign = self.benign_name();
        std::iter::once(benign.to_string())
            .chain(
                self.classes
                    .iter()
                    .map(|c| c.name.clone())
                    .filter(|n| n != benign),
            )
            .collect()
    }
}

/// Samples `spec` into an all-numeric dataset with shuffled rows.
pub fn synth_generate(spec: &SynthSpec, rng: &mut RngState) -> Result<EncodedDataset> {
    spec.validate()?;
    let d = spec.dim;
    let names = spec.class_names();
    let mut mean_rng = rng.derive(0);
    let mut noise_rng = rng.derive(1);
    let mut order_rng = rng.derive(2);

    let mut rows: Vec<(Vec<f64>, usize)> = Vec::with_capacity(spec.total());
    for class in &spec.classes {
        let label = names
            .iter()
            .position(|n| *n == class.name)
            .expect("validated");
        let mean = match &class.mean {
            Some(m) => m.clone(),
            None => (0..d)
                .map(|_| spec.mean_spread * mean_rng.standard_normal())
                .collect(),
        };
        let factor = match &class.covariance {
            Some(cov) => Some(cholesky_psd(&Matrix::from_rows(cov)?)?),
            None => None,
        };
        let std = class.std.unwrap_or(1.0);
        for _ in 0..class.count {
            let z: Vec<f64> = (0..d).map(|_| noise_rng.standard_normal()).collect();
            let x = match &factor {
                Some(l) => (0..d)
                    .map(|i| mean[i] + (0..=i).map(|k| l.get(i, k) * z[k]).sum::<f64>())
                    .collect(),
                None => mean.iter().zip(&z).map(|(m, zi)| m + std * zi).collect(),
            };
            rows.push((x, label));
        }
    }
    order_rng.shuffle(&mut rows);

    let (features, labels): (Vec<Vec<f64>>, Vec<usize>) = rows.into_iter().unzip();
    let columns = (0..d)
        .map(|i| EncodedColumn {
            name: format!("f{i}"),
            numeric: true,
        })
        .collect();
    let features = if features.is_empty() {
        Matrix::zeros(0, d)
    } else {
        Matrix::from_rows(&features)?
    };
    EncodedDataset::new(features, labels, names, columns)
}

/// Schema describing a CSV written by [`write_csv`].
pub fn schema_for(ds: &EncodedDataset) -> DatasetSchema {
    let columns: Vec<String> = ds.columns.iter().map(|c| c.name.clone()).collect();
    DatasetSchema::numeric(&columns, "label", &ds.class_names, &ds.class_names[0])
}

/// Header of column names plus `label`; values use shortest round-trip formatting.
pub fn write_csv(ds: &EncodedDataset, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = ds.columns.iter().map(|c| c.name.as_str()).collect();
    header.push("label");
    w.write_record(&header)?;
    let mut record = Vec::with_capacity(header.len());
    for (row, &y) in ds.features.row_iter().zip(&ds.labels) {
        record.clear();
        record.extend(row.iter().map(|v| v.to_string()));
        record.push(ds.class_names[y].clone());
        w.write_record(&record)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

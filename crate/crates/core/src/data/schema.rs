//! Dataset schema files.
//!
//! A schema is a TOML document:
//!
//! ```toml
//! label = "label"
//! benign = "Benign"
//! classes = ["Benign", "DoS", "Probing", "U2R", "R2L"]
//! header = true            # false: columns are positional
//! ignore = ["Timestamp"]   # header columns to skip
//!
//! [[features]]
//! name = "protocol_type"
//! kind = "categorical"
//!
//! [label_map]              # optional fine label -> class
//! "smurf." = "DoS"
//! ```
//!
//! Without a header, features are read in declared order and the label sits at
//! `label_position` (default: right after the features); trailing extra columns
//! are ignored. `label_map_file` names a second TOML file of `fine = "class"`
//! pairs, resolved relative to the schema.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSchema {
    pub label: String,
    pub benign: String,
    pub classes: Vec<String>,
    #[serde(default = "default_true")]
    pub header: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_position: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ignore: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_map_file: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub label_map: BTreeMap<String, String>,
    pub features: Vec<FeatureSpec>,
}

impl DatasetSchema {
    /// All-numeric schema over the given columns.
    pub fn numeric(features: &[String], label: &str, classes: &[String], benign: &str) -> Self {
        Self {
            label: label.to_string(),
            benign: benign.to_string(),
            classes: classes.to_vec(),
            header: true,
            label_position: None,
            ignore: Vec::new(),
            label_map_file: None,
            label_map: BTreeMap::new(),
            features: features
                .iter()
                .map(|name| FeatureSpec {
                    name: name.clone(),
                    kind: FeatureKind::Numeric,
                })
                .collect(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let schema: Self = toml::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        schema.validate()?;
        Ok(schema)
    }

    /// Reads a schema file, merging any referenced label-map file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut schema: Self =
            toml::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
        if let Some(file) = schema.label_map_file.take() {
            let map_path = path.parent().unwrap_or(Path::new(".")).join(&file);
            let map_text =
                std::fs::read_to_string(&map_path).map_err(|e| Error::io(&map_path, e))?;
            let extra: BTreeMap<String, String> = toml::from_str(&map_text)
                .map_err(|e| Error::Schema(format!("{}: {e}", map_path.display())))?;
            for (fine, class) in extra {
                schema.label_map.entry(fine).or_insert(class);
            }
        }
        schema.validate()?;
        Ok(schema)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Schema(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for c in &self.classes {
            if !seen.insert(c.as_str()) {
                return Err(Error::Schema(format!("duplicate class `{c}`")));
            }
        }
        if !seen.contains(self.benign.as_str()) {
            return Err(Error::Schema(format!(
                "benign class `{}` is not among the classes",
                self.benign
            )));
        }
        for (fine, class) in &self.label_map {
            if !seen.contains(class.as_str()) {
                return Err(Error::Schema(format!(
                    "label_map sends `{fine}` to unknown class `{class}`"
                )));
            }
        }
        if self.features.is_empty() {
            return Err(Error::Schema("no feature columns declared".into()));
        }
        let mut names = HashSet::new();
        for f in &self.features {
            if !names.insert(f.name.as_str()) || f.name == self.label {
                return Err(Error::Schema(format!("duplicate column `{}`", f.name)));
            }
        }
        if let Some(pos) = self.label_position {
            if pos > self.features.len() {
                return Err(Error::Schema(format!(
                    "label_position {pos} beyond {} features",
                    self.features.len()
                )));
            }
        }
        Ok(())
    }

    /// Class names in internal order: benign first, then the rest as declared.
    pub fn ordered_classes(&self) -> Vec<String> {
        std::iter::once(self.benign.clone())
            .chain(self.classes.iter().filter(|c| **c != self.benign).cloned())
            .collect()
    }

    /// Class name for a raw label string, if known.
    pub fn resolve_label<'a>(&'a self, raw: &'a str) -> Option<&'a str> {
        if let Some(class) = self.label_map.get(raw) {
            return Some(class);
        }
        self.classes.iter().find(|c| *c == raw).map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const KDD: &str = r#"
label = "label"
benign = "Benign"
classes = ["DoS", "Benign", "Probing"]

[label_map]
"normal." = "Benign"
"smurf." = "DoS"

[[features]]
name = "duration"
kind = "numeric"

[[features]]
name = "protocol_type"
kind = "categorical"
"#;

    #[test]
    fn parses_and_orders_benign_first() {
        let s = DatasetSchema::from_toml(KDD).unwrap();
        assert!(s.header);
        assert_eq!(s.ordered_classes(), vec!["Benign", "DoS", "Probing"]);
        assert_eq!(s.resolve_label("smurf."), Some("DoS"));
        assert_eq!(s.resolve_label("Probing"), Some("Probing"));
        assert_eq!(s.resolve_label("neptune."), None);
    }

    #[test]
    fn rejects_inconsistent_schemas() {
        let bad_benign = KDD.replace("benign = \"Benign\"", "benign = \"Normal\"");
        assert!(DatasetSchema::from_toml(&bad_benign).is_err());
        let dup = KDD.replace("\"Probing\"]", "\"Probing\", \"DoS\"]");
        assert!(DatasetSchema::from_toml(&dup).is_err());
        let bad_map = KDD.replace("\"smurf.\" = \"DoS\"", "\"smurf.\" = \"Smurf\"");
        assert!(DatasetSchema::from_toml(&bad_map).is_err());
        let unknown_key = format!("{KDD}\nbogus = 1\n");
        assert!(DatasetSchema::from_toml(&unknown_key).is_err());
    }

    #[test]
    fn label_map_file_is_merged() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("map.toml"), "\"neptune.\" = \"DoS\"\n").unwrap();
        let text = KDD.replace("classes =", "label_map_file = \"map.toml\"\nclasses =");
        std::fs::write(dir.path().join("schema.toml"), text).unwrap();
        let s = DatasetSchema::load(dir.path().join("schema.toml")).unwrap();
        assert_eq!(s.resolve_label("neptune."), Some("DoS"));
        assert_eq!(s.resolve_label("normal."), Some("Benign"));
    }
}

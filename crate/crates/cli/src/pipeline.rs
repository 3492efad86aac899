//! Loading, encoding, splitting and normalizing the datasets of a run.

use std::io::Read;
use std::path::{Path, PathBuf};

use anyhow::Context;
use imba_ids::data::{
    load_csv, stratified_split, DatasetSchema, EncodedDataset, Encoder, LoadOptions, Normalizer,
    Preprocessor, RawTable,
};
use imba_ids::RngState;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::DataConfig;

/// Seed sub-stream used for the train/test split.
const SPLIT_STREAM: u64 = 7;

/// Identity of an input file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetFingerprint {
    pub role: String,
    pub path: PathBuf,
    /// Data rows that parsed cleanly.
    pub rows: usize,
    pub malformed_rows: usize,
    pub sha256: String,
}

pub fn sha256_file(path: &Path) -> anyhow::Result<String> {
    let mut file =
        std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn load_table(
    role: &str,
    path: &Path,
    schema: &DatasetSchema,
    malformed_fraction: f64,
) -> anyhow::Result<(RawTable, DatasetFingerprint)> {
    let table = load_csv(path, schema, LoadOptions { malformed_fraction })
        .with_context(|| format!("loading {}", path.display()))?;
    let fingerprint = DatasetFingerprint {
        role: role.into(),
        path: path.to_path_buf(),
        rows: table.len(),
        malformed_rows: table.malformed,
        sha256: sha256_file(path)?,
    };
    Ok((table, fingerprint))
}

/// Normalized train and test sets plus what is needed to reproduce them.
pub struct Prepared {
    pub train: EncodedDataset,
    pub test: EncodedDataset,
    pub preprocessor: Preprocessor,
    pub datasets: Vec<DatasetFingerprint>,
}

/// Fits the encoder on the training file, splits when there is no test file,
/// and z-scores both sides with training statistics.
pub fn prepare(data: &DataConfig, seed: u64) -> anyhow::Result<Prepared> {
    let schema = DatasetSchema::load(&data.schema)
        .with_context(|| format!("loading schema {}", data.schema.display()))?;
    let (train_table, train_fp) =
        load_table("train", &data.train, &schema, data.malformed_fraction)?;
    if train_table.is_empty() {
        anyhow::bail!("{} contains no data rows", data.train.display());
    }
    let encoder = Encoder::fit(&train_table, &schema)?;
    let encoded = encoder.encode(&train_table)?;
    let mut datasets = vec![train_fp];

    let (train, test) = match &data.test {
        Some(path) => {
            let (table, fp) = load_table("test", path, &schema, data.malformed_fraction)?;
            datasets.push(fp);
            (encoded, encoder.encode(&table)?)
        }
        None => stratified_split(
            &encoded,
            data.split_ratio(),
            &mut RngState::new(seed).derive(SPLIT_STREAM),
        ),
    };
    let normalizer = Normalizer::fit(&train);
    Ok(Prepared {
        train: normalizer.apply(&train)?,
        test: normalizer.apply(&test)?,
        preprocessor: Preprocessor {
            encoder,
            normalizer,
        },
        datasets,
    })
}

//! Flow-record datasets: loading, encoding, normalization, splitting and
//! resampling.

mod encode;
mod resample;
pub mod schema;
pub mod synth;
mod table;

pub use encode::{EncodedColumn, EncodedDataset, Encoder, Normalizer, Preprocessor, STD_FLOOR};
pub use resample::{oversample, stratified_split, undersample, SplitRatio};
pub use schema::{DatasetSchema, FeatureKind, FeatureSpec};
pub use synth::{schema_for, synth_generate, write_csv, SynthClass, SynthSpec};
pub use table::{load_csv, read_csv, LoadOptions, RawColumn, RawTable, DEFAULT_MALFORMED_FRACTION};

use crate::Result;

/// Fits an encoder on `table` and encodes it.
pub fn encode(table: &RawTable, schema: &DatasetSchema) -> Result<EncodedDataset> {
    Encoder::fit(table, schema)?.encode(table)
}

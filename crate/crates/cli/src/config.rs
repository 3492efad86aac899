//! Experiment config files and flag overrides.
//!
//! ```toml
//! [data]
//! train = "train.csv"      # required (or --dataset)
//! schema = "schema.toml"   # required (or --schema)
//! test = "test.csv"        # optional; otherwise `split` is applied to train
//! split = "5:1"
//! malformed_fraction = 0.01
//!
//! [model]
//! hidden_layers = 10
//! hidden_width = 100
//! keep_prob = 0.8
//!
//! [loss]
//! kind = "attack_sharing"  # cross_entropy | attack_sharing | weighted_ce
//! lambda = 10.0
//! # class_weights = [...]  # weighted_ce only; inverse frequency when absent
//!
//! [optimizer]
//! kind = "adam"            # adam | sgd
//! learning_rate = 1e-4
//! rho1 = 0.9
//! rho2 = 0.999
//! delta = 1e-8
//! reset_each_epoch = false
//!
//! [training]
//! batch_size = 128
//! epochs = 10
//! seed = 0
//! resample = "none"        # none | over | under
//! ```
//!
//! Relative paths in a file are resolved against the file's directory.

use std::path::{Path, PathBuf};

use clap::Args;
use imba_ids::data::{SplitRatio, DEFAULT_MALFORMED_FRACTION};
use imba_ids::trainer::{LossChoice, OptimizerChoice, Resample, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub data: DataSection,
    pub model: ModelSection,
    pub loss: LossSection,
    pub optimizer: OptimizerSection,
    pub training: TrainingSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub split: Option<String>,
    pub malformed_fraction: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub hidden_layers: Option<usize>,
    pub hidden_width: Option<usize>,
    pub keep_prob: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossSection {
    pub kind: Option<LossChoice>,
    pub lambda: Option<f64>,
    pub class_weights: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSection {
    pub kind: Option<OptimizerChoice>,
    pub learning_rate: Option<f64>,
    pub rho1: Option<f64>,
    pub rho2: Option<f64>,
    pub delta: Option<f64>,
    pub reset_each_epoch: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
    pub seed: Option<u64>,
    pub resample: Option<Resample>,
}

/// Command-line counterparts of the config keys.
#[derive(Debug, Default, Clone, Args)]
pub struct Overrides {
    /// Experiment config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Training CSV (data.train).
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Held-out CSV (data.test).
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Dataset schema file (data.schema).
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Train:test ratio used when no test file is given (data.split).
    #[arg(long)]
    pub split: Option<String>,
    /// Largest tolerated fraction of unparseable rows (data.malformed_fraction).
    #[arg(long)]
    pub malformed_fraction: Option<f64>,
    /// Number of hidden layers (model.hidden_layers).
    #[arg(long)]
    pub hidden_layers: Option<usize>,
    /// Units per hidden layer (model.hidden_width).
    #[arg(long)]
    pub hidden_width: Option<usize>,
    /// Dropout keep probability on hidden outputs (model.keep_prob).
    #[arg(long)]
    pub keep_prob: Option<f64>,
    /// cross_entropy, attack_sharing or weighted_ce (loss.kind).
    #[arg(long, value_parser = parse_enum::<LossChoice>)]
    pub loss: Option<LossChoice>,
    /// Attack-sharing penalty weight (loss.lambda).
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Comma-separated per-class weights (loss.class_weights).
    #[arg(long, value_delimiter = ',')]
    pub class_weights: Option<Vec<f64>>,
    /// adam or sgd (optimizer.kind).
    #[arg(long, value_parser = parse_enum::<OptimizerChoice>)]
    pub optimizer: Option<OptimizerChoice>,
    /// Step size (optimizer.learning_rate).
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Adam first-moment decay (optimizer.rho1).
    #[arg(long)]
    pub rho1: Option<f64>,
    /// Adam second-moment decay (optimizer.rho2).
    #[arg(long)]
    pub rho2: Option<f64>,
    /// Adam denominator constant (optimizer.delta).
    #[arg(long)]
    pub delta: Option<f64>,
    /// Clear optimizer state at the start of every epoch (optimizer.reset_each_epoch).
    #[arg(long)]
    pub reset_each_epoch: Option<bool>,
    /// Mini-batch size (training.batch_size).
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Passes over the training data (training.epochs).
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Root seed for initialization, dropout, shuffling and resampling (training.seed).
    #[arg(long)]
    pub seed: Option<u64>,
    /// none, over or under (training.resample).
    #[arg(long, value_parser = parse_enum::<Resample>)]
    pub resample: Option<Resample>,
}

/// Parses a snake_case enum value through its serde representation.
fn parse_enum<T: serde::de::DeserializeOwned>(s: &str) -> Result<T, String> {
    T::deserialize(serde::de::value::StrDeserializer::<serde::de::value::Error>::new(s))
        .map_err(|e| e.to_string())
}

/// Where the data lives and how to split it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DataConfig {
    pub train: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test: Option<PathBuf>,
    pub schema: PathBuf,
    pub split: String,
    pub malformed_fraction: f64,
}

impl DataConfig {
    pub fn split_ratio(&self) -> SplitRatio {
        self.split.parse().expect("validated when resolved")
    }
}

/// A fully resolved experiment: every key has a value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub data: DataConfig,
    pub train: TrainConfig,
}

fn key_error(key: &str, message: impl std::fmt::Display) -> CliError {
    CliError::Usage(format!("config key `{key}`: {message}"))
}

fn relative_to(base: Option<&Path>, p: PathBuf) -> PathBuf {
    match base {
        Some(dir) if p.is_relative() => dir.join(p),
        _ => p,
    }
}

impl Overrides {
    fn read_file(&self) -> Result<(FileConfig, Option<PathBuf>), CliError> {
        let Some(path) = &self.config else {
            return Ok((FileConfig::default(), None));
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let file: FileConfig = toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))?;
        let dir = path.parent().map(Path::to_path_buf);
        Ok((file, dir))
    }

    /// Applies defaults, then the config file, then flags.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let (file, dir) = self.read_file()?;
        let from_file = |p: Option<PathBuf>| p.map(|p| relative_to(dir.as_deref(), p));
        let train_path = self
            .dataset
            .clone()
            .or(from_file(file.data.train))
            .ok_or_else(|| key_error("data.train", "missing required key (or pass --dataset)"))?;
        let schema = self
            .schema
            .clone()
            .or(from_file(file.data.schema))
            .ok_or_else(|| key_error("data.schema", "missing required key (or pass --schema)"))?;
        let test = self.test.clone().or(from_file(file.data.test));
        let split = self
            .split
            .clone()
            .or(file.data.split)
            .unwrap_or_else(|| SplitRatio::default().to_string());
        split
            .parse::<SplitRatio>()
            .map_err(|e| key_error("data.split", e))?;
        let malformed_fraction = self
            .malformed_fraction
            .or(file.data.malformed_fraction)
            .unwrap_or(DEFAULT_MALFORMED_FRACTION);
        if !(0.0..=1.0).contains(&malformed_fraction) {
            return Err(key_error("data.malformed_fraction", "must lie in [0, 1]"));
        }

        let d = TrainConfig::default();
        let train = TrainConfig {
            hidden_layers: self
                .hidden_layers
                .or(file.model.hidden_layers)
                .unwrap_or(d.hidden_layers),
            hidden_width: self
                .hidden_width
                .or(file.model.hidden_width)
                .unwrap_or(d.hidden_width),
            keep_prob: self
                .keep_prob
                .or(file.model.keep_prob)
                .unwrap_or(d.keep_prob),
            loss: self.loss.or(file.loss.kind).unwrap_or(d.loss),
            lambda: self.lambda.or(file.loss.lambda).unwrap_or(d.lambda),
            class_weights: self.class_weights.clone().or(file.loss.class_weights),
            optimizer: self
                .optimizer
                .or(file.optimizer.kind)
                .unwrap_or(d.optimizer),
            learning_rate: self
                .learning_rate
                .or(file.optimizer.learning_rate)
                .unwrap_or(d.learning_rate),
            rho1: self.rho1.or(file.optimizer.rho1).unwrap_or(d.rho1),
            rho2: self.rho2.or(file.optimizer.rho2).unwrap_or(d.rho2),
            delta: self.delta.or(file.optimizer.delta).unwrap_or(d.delta),
            batch_size: self
                .batch_size
                .or(file.training.batch_size)
                .unwrap_or(d.batch_size),
            epochs: self.epochs.or(file.training.epochs).unwrap_or(d.epochs),
            seed: self.seed.or(file.training.seed).unwrap_or(d.seed),
            resample: self
                .resample
                .or(file.training.resample)
                .unwrap_or(d.resample),
            reset_optimizer_each_epoch: self
                .reset_each_epoch
                .or(file.optimizer.reset_each_epoch)
                .unwrap_or(d.reset_optimizer_each_epoch),
        };
        train.validate().map_err(|e| match e {
            imba_ids::Error::Config { key, message } => key_error(&section_key(&key), message),
            other => CliError::Usage(other.to_string()),
        })?;

        Ok(RunConfig {
            data: DataConfig {
                train: train_path,
                test,
                schema,
                split,
                malformed_fraction,
            },
            train,
        })
    }
}

/// Maps a `TrainConfig` field to its `section.key` name in config files.
fn section_key(field: &str) -> String {
    match field {
        "hidden_layers" | "hidden_width" | "keep_prob" => format!("model.{field}"),
        "loss" => "loss.kind".into(),
        "lambda" | "class_weights" => format!("loss.{field}"),
        "learning_rate" | "rho1" | "rho2" | "delta" => format!("optimizer.{field}"),
        "reset_optimizer_each_epoch" => "optimizer.reset_each_epoch".into(),
        _ => format!("training.{field}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, text: &str) -> PathBuf {
        let p = dir.join("run.toml");
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn defaults_and_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let config = write(
            dir.path(),
            "[data]\ntrain = \"a.csv\"\nschema = \"/abs/s.toml\"\n",
        );
        let run = Overrides {
            config: Some(config),
            ..Overrides::default()
        }
        .resolve()
        .unwrap();
        assert_eq!(run.data.train, dir.path().join("a.csv"));
        assert_eq!(run.data.schema, PathBuf::from("/abs/s.toml"));
        assert_eq!(run.train, TrainConfig::default());
        assert_eq!(run.data.split, "5:1");
    }

    #[test]
    fn flags_beat_file() {
        let dir = tempfile::tempdir().unwrap();
        let config = write(
            dir.path(),
            "[data]\ntrain = \"a.csv\"\nschema = \"s.toml\"\n[training]\nseed = 3\nepochs = 2\n[loss]\nkind = \"cross_entropy\"\n",
        );
        let run = Overrides {
            config: Some(config),
            seed: Some(9),
            ..Overrides::default()
        }
        .resolve()
        .unwrap();
        assert_eq!((run.train.seed, run.train.epochs), (9, 2));
        assert_eq!(run.train.loss, LossChoice::CrossEntropy);
    }

    #[test]
    fn errors_name_the_key() {
        let dir = tempfile::tempdir().unwrap();
        let missing = write(dir.path(), "[data]\nschema = \"s.toml\"\n");
        let err = Overrides {
            config: Some(missing),
            ..Overrides::default()
        }
        .resolve()
        .unwrap_err();
        assert!(err.to_string().contains("data.train"), "{err}");

        let bad = Overrides {
            dataset: Some("a.csv".into()),
            schema: Some("s.toml".into()),
            keep_prob: Some(1.5),
            ..Overrides::default()
        }
        .resolve()
        .unwrap_err();
        assert!(bad.to_string().contains("model.keep_prob"), "{bad}");

        let unknown = write(dir.path(), "[model]\nwidth = 3\n");
        let err = Overrides {
            config: Some(unknown),
            ..Overrides::default()
        }
        .resolve()
        .unwrap_err();
        assert!(err.to_string().contains("width"), "{err}");
    }

    #[test]
    fn enum_flags_parse() {
        assert_eq!(
            parse_enum::<LossChoice>("weighted_ce").unwrap(),
            LossChoice::WeightedCe
        );
        assert_eq!(parse_enum::<Resample>("under").unwrap(), Resample::Under);
        assert!(parse_enum::<Resample>("sideways").is_err());
    }
}

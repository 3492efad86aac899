use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use imba_ids::data::{
    encode, load_csv, schema_for, synth_generate, write_csv, DatasetSchema, LoadOptions,
    Preprocessor, SynthSpec,
};
use imba_ids::metrics::imbalance_measure;
use imba_ids::model::relu_grad;
use imba_ids::trainer::{self, gradcheck_suite, Strategy, GRADCHECK_TOLERANCE};
use imba_ids::{MlpModel, RngState};
use serde::Serialize;
use time::format_description::well_known::Rfc3339;
use time::OffsetDateTime;

use crate::config::{Overrides, RunConfig};
use crate::output;
use crate::pipeline::{self, sha256_bytes, sha256_file, DatasetFingerprint};
use crate::{CliError, Fault, Preset};

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const PREPROCESS_FILE: &str = "preprocess.toml";
pub const HISTORY_FILE: &str = "history.jsonl";
pub const REPORT_FILE: &str = "report.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

fn now() -> String {
    OffsetDateTime::now_utc()
        .format(&Rfc3339)
        .unwrap_or_default()
}

/// Opens `path` for writing, with `-` meaning stdout.
fn sink(path: &Path) -> anyhow::Result<Box<dyn Write>> {
    if path == Path::new("-") {
        Ok(Box::new(std::io::stdout().lock()))
    } else {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        Ok(Box::new(BufWriter::new(file)))
    }
}

pub fn stats(
    dataset: Option<PathBuf>,
    schema: Option<PathBuf>,
    counts: Option<PathBuf>,
) -> Result<(), CliError> {
    let (names, counts) = match (dataset, counts) {
        (_, Some(path)) => read_counts(&path)?,
        (Some(path), None) => {
            let schema_path = schema
                .ok_or_else(|| CliError::Usage("--schema is required with --dataset".into()))?;
            let schema = DatasetSchema::load(&schema_path)?;
            let table = load_csv(&path, &schema, LoadOptions::default())?;
            let ds = encode(&table, &schema)?;
            (ds.class_names.clone(), ds.class_counts())
        }
        (None, None) => return Err(CliError::Usage("pass --dataset or --counts".into())),
    };
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(CliError::Runtime(anyhow::anyhow!("dataset is empty")));
    }
    let omega = imbalance_measure(&counts)?;
    let width = names.iter().map(String::len).max().unwrap_or(5).max(5);
    println!("{:<width$}  {:>12}  {:>9}", "class", "count", "fraction");
    for (name, &n) in names.iter().zip(&counts) {
        println!(
            "{name:<width$}  {n:>12}  {:>8.2}%",
            100.0 * n as f64 / total as f64
        );
    }
    println!("{:<width$}  {total:>12}  {:>8.2}%", "total", 100.0);
    println!("Ω_imb {omega:.2}");
    Ok(())
}

fn read_counts(path: &Path) -> anyhow::Result<(Vec<String>, Vec<u64>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let mut names = Vec::new();
    let mut counts = Vec::new();
    for row in rdr.deserialize::<(String, u64)>() {
        let (name, n) = row.with_context(|| format!("reading {}", path.display()))?;
        names.push(name);
        counts.push(n);
    }
    Ok((names, counts))
}

#[derive(Serialize)]
struct Artifact {
    name: &'static str,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    checkpoint_version: u32,
    config_hash: &'a str,
    config: &'a RunConfig,
    datasets: &'a [DatasetFingerprint],
    train_rows: usize,
    test_rows: usize,
    artifacts: Vec<Artifact>,
    started_at: String,
    finished_at: String,
    epoch_seconds: Vec<f64>,
}

#[derive(Serialize)]
struct EpochLine {
    epoch: usize,
    mean_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    test_cba: Option<f64>,
}

/// First 16 hex digits of the SHA-256 of the resolved config.
pub fn config_hash(config: &RunConfig) -> anyhow::Result<String> {
    let bytes = serde_json::to_vec(config)?;
    Ok(sha256_bytes(&bytes)[..16].to_string())
}

pub fn train(overrides: &Overrides, out: &Path) -> Result<(), CliError> {
    let config = overrides.resolve()?;
    let started_at = now();
    let prepared = pipeline::prepare(&config.data, config.train.seed)?;
    let (model, history) = trainer::train(&config.train, &prepared.train, Some(&prepared.test))?;
    let report = trainer::evaluate(&model, &prepared.test)?;

    let hash = config_hash(&config)?;
    let dir = out.join(&hash);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    model.save(dir.join(CHECKPOINT_FILE))?;
    prepared.preprocessor.save(dir.join(PREPROCESS_FILE))?;

    let mut lines = Vec::new();
    for e in &history.epochs {
        let line = EpochLine {
            epoch: e.epoch + 1,
            mean_loss: e.mean_loss,
            test_cba: e.eval.as_ref().map(|r| r.cba),
        };
        writeln!(
            lines,
            "{}",
            serde_json::to_string(&line).map_err(anyhow::Error::from)?
        )?;
    }
    std::fs::write(dir.join(HISTORY_FILE), &lines)?;
    let mut report_bytes = Vec::new();
    output::write_report(&report, &mut report_bytes)?;
    std::fs::write(dir.join(REPORT_FILE), &report_bytes)?;

    let mut artifacts = Vec::new();
    for name in [CHECKPOINT_FILE, PREPROCESS_FILE, HISTORY_FILE, REPORT_FILE] {
        artifacts.push(Artifact {
            name,
            sha256: sha256_file(&dir.join(name))?,
        });
    }
    let manifest = Manifest {
        tool: "imba-ids",
        version: env!("CARGO_PKG_VERSION"),
        checkpoint_version: imba_ids::model::CHECKPOINT_VERSION,
        config_hash: &hash,
        config: &config,
        datasets: &prepared.datasets,
        train_rows: prepared.train.len(),
        test_rows: prepared.test.len(),
        artifacts,
        started_at,
        finished_at: now(),
        epoch_seconds: history.epochs.iter().map(|e| e.seconds).collect(),
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(anyhow::Error::from)?;
    std::fs::write(dir.join(MANIFEST_FILE), json + "\n")?;

    print!("{}", report.render());
    println!("run directory: {}", dir.display());
    Ok(())
}

pub fn evaluate(run: &Path, dataset: &Path, jsonl: Option<&Path>) -> Result<(), CliError> {
    let pre = Preprocessor::load(run.join(PREPROCESS_FILE))?;
    let model = MlpModel::load(run.join(CHECKPOINT_FILE))?;
    let table = load_csv(dataset, &pre.encoder.schema, LoadOptions::default())?;
    let ds = pre.transform(&table)?;
    let report = trainer::evaluate(&model, &ds)?;
    match jsonl {
        Some(path) if path == Path::new("-") => {
            output::write_report(&report, std::io::stdout().lock())?
        }
        Some(path) => {
            let mut w = sink(path)?;
            output::write_report(&report, &mut w)?;
            w.flush()?;
            print!("{}", report.render());
        }
        None => print!("{}", report.render()),
    }
    Ok(())
}

pub fn compare(
    overrides: &Overrides,
    strategies: &str,
    jsonl: Option<&Path>,
) -> Result<(), CliError> {
    let strategies =
        Strategy::parse_list(strategies).map_err(|e| CliError::Usage(e.to_string()))?;
    if strategies.is_empty() {
        return Err(CliError::Usage("no strategies given".into()));
    }
    let config = overrides.resolve()?;
    let prepared = pipeline::prepare(&config.data, config.train.seed)?;
    let results =
        trainer::compare_strategies(&config.train, &strategies, &prepared.train, &prepared.test)?;
    match jsonl {
        Some(path) if path == Path::new("-") => {
            output::write_comparison(&results, std::io::stdout().lock())?
        }
        Some(path) => {
            let mut w = sink(path)?;
            output::write_comparison(&results, &mut w)?;
            w.flush()?;
            print!("{}", output::comparison_table(&results));
        }
        None => print!("{}", output::comparison_table(&results)),
    }
    Ok(())
}

fn flipped_relu_grad(z: f64) -> f64 {
    -relu_grad(z)
}

pub fn gradcheck(seed: u64, instances: usize, fault: Option<Fault>) -> Result<(), CliError> {
    if instances == 0 {
        return Err(CliError::Usage("--instances must be >= 1".into()));
    }
    let activation_grad: fn(f64) -> f64 = match fault {
        None => relu_grad,
        Some(Fault::ReluSignFlip) => flipped_relu_grad,
    };
    let checks = gradcheck_suite(seed, instances, activation_grad)?;
    let width = checks.iter().map(|c| c.loss.len()).max().unwrap_or(4);
    let mut failed = Vec::new();
    for c in &checks {
        let verdict = if c.check.passed() { "PASS" } else { "FAIL" };
        println!(
            "{:<width$}  max rel err {:.3e}  ({} instances)  {verdict}",
            c.loss, c.check.max_rel_error, c.instances
        );
        if !c.check.passed() {
            println!(
                "{:<width$}  worst: {} analytic {:.6e} numeric {:.6e}",
                "", c.check.worst, c.check.analytic, c.check.numeric
            );
            failed.push(c.loss.as_str());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Runtime(anyhow::anyhow!(
            "gradient check above {GRADCHECK_TOLERANCE:e} for: {}",
            failed.join(", ")
        )))
    }
}

pub fn synth(
    spec: Option<PathBuf>,
    preset: Option<Preset>,
    seed: Option<u64>,
    out: &Path,
    schema_out: Option<PathBuf>,
) -> Result<(), CliError> {
    let spec = match (spec, preset) {
        (Some(path), _) => SynthSpec::load(&path).map_err(|e| CliError::Usage(e.to_string()))?,
        (None, Some(Preset::LongTail)) => SynthSpec::long_tail(),
        (None, Some(Preset::Separable)) => SynthSpec::separable(&[600, 200, 100], 4),
        (None, None) => return Err(CliError::Usage("pass --spec or --preset".into())),
    };
    let seed = seed.or(spec.seed).unwrap_or(0);
    let ds = synth_generate(&spec, &mut RngState::new(seed))?;

    let file = File::create(out).with_context(|| format!("creating {}", out.display()))?;
    let mut w = BufWriter::new(file);
    write_csv(&ds, &mut w)?;
    w.flush()
        .with_context(|| format!("writing {}", out.display()))?;

    let schema_path = schema_out.unwrap_or_else(|| out.with_extension("schema.toml"));
    let schema = schema_for(&ds).to_toml()?;
    std::fs::write(&schema_path, schema)
        .with_context(|| format!("writing {}", schema_path.display()))?;
    println!(
        "wrote {} rows ({} classes, {} features) to {}; schema {}",
        ds.len(),
        ds.num_classes(),
        ds.num_features(),
        out.display(),
        schema_path.display()
    );
    Ok(())
}

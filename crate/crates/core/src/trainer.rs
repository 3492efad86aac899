//! Minibatch training, evaluation, gradient checking and strategy comparison.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{oversample, undersample, EncodedDataset};
use crate::loss::{self, LossSpec};
use crate::math::{self, Matrix, RngState};
use crate::metrics::ClassReport;
use crate::model::{relu_grad, MlpModel, Mode};
use crate::optimizer::{AdamConfig, AdamState, Optimizer};
use crate::{Error, Result};

// Sub-streams of the run seed.
const STREAM_INIT: u64 = 1;
const STREAM_RESAMPLE: u64 = 2;
const STREAM_DROPOUT: u64 = 3;
const STREAM_SHUFFLE_BASE: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossChoice {
    CrossEntropy,
    AttackSharing,
    WeightedCe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerChoice {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resample {
    #[default]
    None,
    Over,
    Under,
}

/// Everything that determines a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub keep_prob: f64,
    pub loss: LossChoice,
    /// Penalty weight of the attack-sharing loss.
    pub lambda: f64,
    /// Per-class weights for `weighted_ce`; inverse training frequency when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub class_weights: Option<Vec<f64>>,
    pub optimizer: OptimizerChoice,
    pub learning_rate: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub delta: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub resample: Resample,
    /// Clear Adam moments and step count at every epoch boundary.
    pub reset_optimizer_each_epoch: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            hidden_layers: 10,
            hidden_width: 100,
            keep_prob: 0.8,
            loss: LossChoice::AttackSharing,
            lambda: 10.0,
            class_weights: None,
            optimizer: OptimizerChoice::Adam,
            learning_rate: adam.step_size,
            rho1: adam.rho1,
            rho2: adam.rho2,
            delta: adam.delta,
            batch_size: 128,
            epochs: 10,
            seed: 0,
            resample: Resample::None,
            reset_optimizer_each_epoch: false,
        }
    }
}

fn config_err(key: &str, message: impl Into<String>) -> Error {
    Error::Config {
        key: key.into(),
        message: message.into(),
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_width == 0 {
            return Err(config_err("hidden_width", "must be >= 1"));
        }
        if !(self.keep_prob > 0.0 && self.keep_prob <= 1.0) {
            return Err(config_err(
                "keep_prob",
                format!("must lie in (0, 1], got {}", self.keep_prob),
            ));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(config_err(
                "lambda",
                format!("must be finite and >= 0, got {}", self.lambda),
            ));
        }
        if let Some(w) = &self.class_weights {
            if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(config_err(
                    "class_weights",
                    "weights must be finite and >= 0",
                ));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(config_err(
                "learning_rate",
                format!("must be > 0, got {}", self.learning_rate),
            ));
        }
        for (key, rho) in [("rho1", self.rho1), ("rho2", self.rho2)] {
            if !(0.0..1.0).contains(&rho) {
                return Err(config_err(key, format!("must lie in [0, 1), got {rho}")));
            }
        }
        if !(self.delta > 0.0) {
            return Err(config_err(
                "delta",
                format!("must be > 0, got {}", self.delta),
            ));
        }
        if self.batch_size == 0 {
            return Err(config_err("batch_size", "must be >= 1"));
        }
        Ok(())
    }

    pub fn hidden_dims(&self) -> Vec<usize> {
        vec![self.hidden_width; self.hidden_layers]
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            rho1: self.rho1,
            rho2: self.rho2,
            step_size: self.learning_rate,
            delta: self.delta,
        }
    }

    /// Binds the configured loss to a training set's class counts.
    pub fn loss_spec(&self, class_counts: &[u64]) -> Result<LossSpec> {
        let spec = match self.loss {
            LossChoice::CrossEntropy => LossSpec::cross_entropy(),
            LossChoice::AttackSharing => LossSpec::attack_sharing(self.lambda),
            LossChoice::WeightedCe => match &self.class_weights {
                Some(w) => LossSpec::weighted_ce(w.clone()),
                None => {
                    let counts: Vec<usize> = class_counts.iter().map(|&n| n as usize).collect();
                    LossSpec::weighted_ce(loss::inverse_frequency_weights(&counts)?)
                }
            },
        };
        spec.validate(class_counts.len())
            .map_err(|e| config_err("loss", e.to_string()))?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval: Option<ClassReport>,
    /// Wall-clock time; kept out of serialized history so runs compare equal.
    #[serde(skip)]
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub steps: usize,
}

impl TrainHistory {
    pub fn losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.mean_loss).collect()
    }
}

/// Trains a fresh network on `train_ds`, optionally evaluating on `eval_ds`
/// after every epoch.
///
/// Identical config, seed and data give bit-identical parameters.
pub fn train(
    config: &TrainConfig,
    train_ds: &EncodedDataset,
    eval_ds: Option<&EncodedDataset>,
) -> Result<(MlpModel, TrainHistory)> {
    config.validate()?;
    if train_ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let root = RngState::new(config.seed);
    let resampled;
    let data = match config.resample {
        Resample::None => train_ds,
        Resample::Over => {
            resampled = oversample(train_ds, &mut root.derive(STREAM_RESAMPLE))?;
            &resampled
        }
        Resample::Under => {
            resampled = undersample(train_ds, &mut root.derive(STREAM_RESAMPLE));
            &resampled
        }
    };
    let spec = config.loss_spec(&data.class_counts())?;
    let mut model = MlpModel::new(
        data.num_features(),
        &config.hidden_dims(),
        data.num_classes(),
        &mut root.derive(STREAM_INIT),
    )?;
    let mut optimizer = match config.optimizer {
        OptimizerChoice::Adam => Optimizer::Adam(AdamState::for_model(config.adam(), &model)?),
        OptimizerChoice::Sgd => Optimizer::Sgd {
            learning_rate: config.learning_rate,
        },
    };
    let mut dropout_rng = root.derive(STREAM_DROPOUT);
    let mut history = TrainHistory::default();
    let n = data.len();

    for epoch in 0..config.epochs {
        let started = Instant::now();
        if config.reset_optimizer_each_epoch && epoch > 0 {
            optimizer.reset();
        }
        let mut order: Vec<usize> = (0..n).collect();
        root.derive(STREAM_SHUFFLE_BASE + epoch as u64)
            .shuffle(&mut order);

        let mut loss_sum = 0.0;
        for (batch, idx) in order.chunks(config.batch_size).enumerate() {
            let x = data.features.select_rows(idx);
            let y: Vec<usize> = idx.iter().map(|&i| data.labels[i]).collect();
            let (probs, cache) =
                model.forward(&x, config.keep_prob, Mode::Train, &mut dropout_rng)?;
            let value = spec.loss(cache.log_probs(), &y)?;
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss {
                    loss: value,
                    step: history.steps,
                    epoch,
                    batch,
                });
            }
            loss_sum += value * idx.len() as f64;
            let dlogits = loss::loss_grad_logits(&spec, &probs, cache.log_probs(), &y)?;
            let grads = model.backward(&cache, &dlogits)?;
            optimizer.step(&mut model, &grads)?;
            history.steps += 1;
        }

        let eval = eval_ds.map(|ds| evaluate(&model, ds)).transpose()?;
        let record = EpochRecord {
            epoch,
            mean_loss: loss_sum / n as f64,
            eval,
            seconds: started.elapsed().as_secs_f64(),
        };
        log::info!("epoch {} mean loss {:.6}", epoch + 1, record.mean_loss);
        history.epochs.push(record);
    }
    Ok((model, history))
}

/// Eval-mode predictions on `ds`, summarized.
pub fn evaluate(model: &MlpModel, ds: &EncodedDataset) -> Result<ClassReport> {
    if ds.num_features() != model.input_dim() {
        return Err(Error::Schema(format!(
            "dataset has {} encoded features but the model expects {}",
            ds.num_features(),
            model.input_dim()
        )));
    }
    if ds.num_classes() != model.num_classes() {
        return Err(Error::Schema(format!(
            "dataset has {} classes but the model predicts {}",
            ds.num_classes(),
            model.num_classes()
        )));
    }
    let preds = model.predict(&ds.features)?;
    ClassReport::from_predictions(&preds, &ds.labels, &ds.class_names)
}

/// Perturbation used for central differences.
pub const GRADCHECK_STEP: f64 = 1e-5;
/// Gradients smaller than this are compared in absolute rather than relative terms.
pub const GRADCHECK_FLOOR: f64 = 1e-6;
/// Largest acceptable relative error.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

/// Location of one parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ParamCoord {
    pub layer: usize,
    pub bias: bool,
    pub row: usize,
    pub col: usize,
}

impl fmt::Display for ParamCoord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.bias {
            write!(f, "layer {} bias[{}]", self.layer, self.row)
        } else {
            write!(f, "layer {} weight[{},{}]", self.layer, self.row, self.col)
        }
    }
}

/// Outcome of comparing backpropagated gradients with finite differences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub worst: ParamCoord,
    pub analytic: f64,
    pub numeric: f64,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.max_rel_error < GRADCHECK_TOLERANCE
    }
}

/// `|a - n| / max(|a|, |n|, GRADCHECK_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRADCHECK_FLOOR)
}

/// Compares `backward` (without dropout) against central differences of the
/// loss over every parameter of `model`.
pub fn gradient_check(
    model: &MlpModel,
    spec: &LossSpec,
    x: &Matrix,
    labels: &[usize],
) -> Result<GradCheck> {
    gradient_check_with(model, spec, x, labels, relu_grad)
}

/// [`gradient_check`] with a substitute activation derivative in the
/// backward pass.
pub fn gradient_check_with(
    model: &MlpModel,
    spec: &LossSpec,
    x: &Matrix,
    labels: &[usize],
    activation_grad: impl Fn(f64) -> f64,
) -> Result<GradCheck> {
    let (probs, cache) = model.forward(x, 1.0, Mode::Train, &mut RngState::new(0))?;
    let dlogits = loss::loss_grad_logits(spec, &probs, cache.log_probs(), labels)?;
    let grads = model.backward_with(&cache, &dlogits, activation_grad)?;

    let loss_at =
        |m: &MlpModel| -> Result<f64> { spec.loss(&math::log_softmax_rows(&m.logits(x)?), labels) };
    let mut probe = model.clone();
    let mut result = GradCheck {
        max_rel_error: 0.0,
        worst: ParamCoord {
            layer: 0,
            bias: false,
            row: 0,
            col: 0,
        },
        analytic: 0.0,
        numeric: 0.0,
    };
    for (layer, g) in grads.layers.iter().enumerate() {
        let fan_in = g.fan_in();
        for bias in [false, true] {
            let analytic = if bias {
                g.bias()
            } else {
                g.weights().as_slice()
            };
            for (k, &a) in analytic.iter().enumerate() {
                let orig = if bias {
                    probe.layers()[layer].bias()[k]
                } else {
                    probe.layers()[layer].weights().as_slice()[k]
                };
                set_param(&mut probe, layer, bias, k, orig + GRADCHECK_STEP);
                let plus = loss_at(&probe)?;
                set_param(&mut probe, layer, bias, k, orig - GRADCHECK_STEP);
                let minus = loss_at(&probe)?;
                set_param(&mut probe, layer, bias, k, orig);
                let numeric = (plus - minus) / (2.0 * GRADCHECK_STEP);
                let err = relative_error(a, numeric);
                if !(err <= result.max_rel_error) {
                    result = GradCheck {
                        max_rel_error: err,
                        worst: ParamCoord {
                            layer,
                            bias,
                            row: if bias { k } else { k / fan_in },
                            col: if bias { 0 } else { k % fan_in },
                        },
                        analytic: a,
                        numeric,
                    };
                }
            }
        }
    }
    Ok(result)
}

fn set_param(model: &mut MlpModel, layer: usize, bias: bool, k: usize, value: f64) {
    let l = &mut model.layers_mut()[layer];
    if bias {
        l.bias_mut()[k] = value;
    } else {
        l.weights_mut()[k] = value;
    }
}

/// Result of checking one loss kind over several random instances.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossCheck {
    pub loss: String,
    pub instances: usize,
    pub check: GradCheck,
}

/// Random network and batch within the checked size limits: up to 3 hidden
/// layers of width 2..=16, batch 1..=8.
///
/// Instances where some pre-activation sits within `1e-3` of the ReLU kink
/// are redrawn, since finite differences are meaningless there.
pub fn random_instance(rng: &mut RngState) -> Result<(MlpModel, Matrix, Vec<usize>)> {
    loop {
        let d = 2 + rng.index(7);
        let c = 2 + rng.index(5);
        let hidden: Vec<usize> = (0..1 + rng.index(3)).map(|_| 2 + rng.index(15)).collect();
        let n = 1 + rng.index(8);
        let mut model = MlpModel::new(d, &hidden, c, rng)?;
        for layer in model.layers_mut() {
            for b in layer.bias_mut() {
                *b = 0.1 * rng.standard_normal();
            }
        }
        let x = Matrix::from_vec(n, d, (0..n * d).map(|_| rng.standard_normal()).collect())?;
        let labels: Vec<usize> = (0..n).map(|_| rng.index(c)).collect();
        let (_, cache) = model.forward(&x, 1.0, Mode::Eval, rng)?;
        let near_kink = cache
            .pre_activations()
            .iter()
            .any(|z| z.as_slice().iter().any(|v| v.abs() < 1e-3));
        if !near_kink {
            return Ok((model, x, labels));
        }
    }
}

/// Runs [`gradient_check_with`] for cross-entropy, attack-sharing with
/// λ = 1 and λ = 10, and weighted cross-entropy, each on `instances` random
/// networks; reports the worst instance per loss.
pub fn gradcheck_suite(
    seed: u64,
    instances: usize,
    activation_grad: fn(f64) -> f64,
) -> Result<Vec<LossCheck>> {
    type MakeSpec = fn(usize, &mut RngState) -> LossSpec;
    let kinds: [(&str, MakeSpec); 4] = [
        ("cross_entropy", |_, _| LossSpec::cross_entropy()),
        ("attack_sharing(lambda=1)", |_, _| {
            LossSpec::attack_sharing(1.0)
        }),
        ("attack_sharing(lambda=10)", |_, _| {
            LossSpec::attack_sharing(10.0)
        }),
        ("weighted_ce", |c, rng| {
            LossSpec::weighted_ce((0..c).map(|_| 0.5 + 1.5 * rng.uniform()).collect())
        }),
    ];
    let root = RngState::new(seed);
    kinds
        .iter()
        .enumerate()
        .map(|(k, (name, make))| {
            let mut rng = root.derive(k as u64);
            let mut worst: Option<GradCheck> = None;
            for _ in 0..instances {
                let (model, x, labels) = random_instance(&mut rng)?;
                let spec = make(model.num_classes(), &mut rng);
                let check = gradient_check_with(&model, &spec, &x, &labels, activation_grad)?;
                if worst.is_none_or(|w| !(check.max_rel_error <= w.max_rel_error)) {
                    worst = Some(check);
                }
            }
            let check =
                worst.ok_or_else(|| Error::InvalidArgument("need at least one instance".into()))?;
            Ok(LossCheck {
                loss: name.to_string(),
                instances,
                check,
            })
        })
        .collect()
}

/// A training recipe compared against the others.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    CrossEntropy,
    AttackSharing,
    WeightedCe,
    Oversample,
    Undersample,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::CrossEntropy,
        Strategy::AttackSharing,
        Strategy::WeightedCe,
        Strategy::Oversample,
        Strategy::Undersample,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::CrossEntropy => "ce",
            Strategy::AttackSharing => "attack_sharing",
            Strategy::WeightedCe => "weighted_ce",
            Strategy::Oversample => "ce+oversample",
            Strategy::Undersample => "ce+undersample",
        }
    }

    /// `base` with the loss and resampling this strategy calls for.
    pub fn apply(self, base: &TrainConfig) -> TrainConfig {
        let (loss, resample) = match self {
            Strategy::CrossEntropy => (LossChoice::CrossEntropy, Resample::None),
            Strategy::AttackSharing => (LossChoice::AttackSharing, Resample::None),
            Strategy::WeightedCe => (LossChoice::WeightedCe, Resample::None),
            Strategy::Oversample => (LossChoice::CrossEntropy, Resample::Over),
            Strategy::Undersample => (LossChoice::CrossEntropy, Resample::Under),
        };
        TrainConfig {
            loss,
            resample,
            ..base.clone()
        }
    }

    /// Parses a comma-separated list such as `ce,as`.
    pub fn parse_list(s: &str) -> Result<Vec<Strategy>> {
        s.split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(str::parse)
            .collect()
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "ce" | "cross_entropy" => Strategy::CrossEntropy,
            "as" | "attack_sharing" => Strategy::AttackSharing,
            "wce" | "weighted_ce" | "cost_sensitive" => Strategy::WeightedCe,
            "over" | "oversample" | "ce+oversample" => Strategy::Oversample,
            "under" | "undersample" | "ce+undersample" => Strategy::Undersample,
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "unknown strategy `{s}` (expected one of ce, attack_sharing, weighted_ce, ce+oversample, ce+undersample)"
                )))
            }
        })
    }
}

#[derive(Debug, Clone)]
pub struct StrategyResult {
    pub strategy: Strategy,
    pub config: TrainConfig,
    pub report: ClassReport,
    pub history: TrainHistory,
}

/// Trains and evaluates each strategy on the same split with the same seed.
///
/// Runs are independent and execute in parallel; output order follows
/// `strategies`.
pub fn compare_strategies(
    base: &TrainConfig,
    strategies: &[Strategy],
    train_ds: &EncodedDataset,
    test_ds: &EncodedDataset,
) -> Result<Vec<StrategyResult>> {
    strategies
        .par_iter()
        .map(|&strategy| {
            let config = strategy.apply(base);
            let (model, history) = train(&config, train_ds, None)?;
            let report = evaluate(&model, test_ds)?;
            Ok(StrategyResult {
                strategy,
                config,
                report,
                history,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_generate, SynthSpec};

    fn small(loss: LossChoice, epochs: usize) -> TrainConfig {
        TrainConfig {
            hidden_layers: 2,
            hidden_width: 16,
            loss,
            epochs,
            batch_size: 32,
            learning_rate: 1e-2,
            ..TrainConfig::default()
        }
    }

    fn separable(seed: u64) -> EncodedDataset {
        synth_generate(
            &SynthSpec::separable(&[200, 60, 40], 4),
            &mut RngState::new(seed),
        )
        .unwrap()
    }

    #[test]
    fn defaults() {
        let c = TrainConfig::default();
        assert_eq!(
            (c.hidden_layers, c.hidden_width, c.batch_size, c.epochs),
            (10, 100, 128, 10)
        );
        assert_eq!((c.keep_prob, c.learning_rate, c.lambda), (0.8, 1e-4, 10.0));
        assert_eq!(c.loss, LossChoice::AttackSharing);
        c.validate().unwrap();
    }

    #[test]
    fn invalid_config_names_key() {
        let c = TrainConfig {
            keep_prob: 0.0,
            ..TrainConfig::default()
        };
        match c.validate() {
            Err(Error::Config { key, .. }) => assert_eq!(key, "keep_prob"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn step_count_and_short_final_batch() {
        let ds = separable(1);
        let (_, h) = train(&small(LossChoice::CrossEntropy, 3), &ds, None).unwrap();
        assert_eq!(h.epochs.len(), 3);
        assert_eq!(h.steps, 3 * ds.len().div_ceil(32));
    }

    #[test]
    fn zero_epochs_returns_initial_model() {
        let ds = separable(1);
        let config = small(LossChoice::CrossEntropy, 0);
        let (model, h) = train(&config, &ds, None).unwrap();
        let init = MlpModel::new(
            4,
            &config.hidden_dims(),
            3,
            &mut RngState::new(0).derive(STREAM_INIT),
        )
        .unwrap();
        assert_eq!(model, init);
        assert!(h.epochs.is_empty());
    }

    #[test]
    fn lambda_zero_matches_cross_entropy() {
        let ds = separable(2);
        let mut as_config = small(LossChoice::AttackSharing, 2);
        as_config.lambda = 0.0;
        let (a, _) = train(&as_config, &ds, None).unwrap();
        let (b, _) = train(&small(LossChoice::CrossEntropy, 2), &ds, None).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let ds = separable(3);
        let config = small(LossChoice::AttackSharing, 2);
        let (a, ha) = train(&config, &ds, Some(&ds)).unwrap();
        let (b, hb) = train(&config, &ds, Some(&ds)).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        assert_eq!(ha.losses(), hb.losses());
        let (c, _) = train(&TrainConfig { seed: 1, ..config }, &ds, None).unwrap();
        assert_ne!(a.to_bytes(), c.to_bytes());
    }

    #[test]
    fn separable_clusters_are_learned() {
        let ds = separable(4);
        let config = TrainConfig {
            learning_rate: 1e-3,
            keep_prob: 1.0,
            ..small(LossChoice::CrossEntropy, 10)
        };
        let (model, h) = train(&config, &ds, None).unwrap();
        let losses = h.losses();
        assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
        let report = evaluate(&model, &ds).unwrap();
        assert!(report.cba > 95.0, "{}", report.render());
        let mean_recall = report.recall.iter().sum::<f64>() / 3.0;
        assert!((report.cba - mean_recall).abs() < 1e-12);
        assert_eq!(evaluate(&model, &ds).unwrap(), report);
    }

    #[test]
    fn evaluate_rejects_dimension_drift() {
        let ds = separable(5);
        let model = MlpModel::new(5, &[4], 3, &mut RngState::new(0)).unwrap();
        assert!(matches!(evaluate(&model, &ds), Err(Error::Schema(_))));
    }

    #[test]
    fn non_finite_loss_aborts() {
        let ds = separable(6);
        let config = TrainConfig {
            loss: LossChoice::WeightedCe,
            class_weights: Some(vec![f64::MAX, f64::MAX, f64::MAX]),
            ..small(LossChoice::WeightedCe, 1)
        };
        match train(&config, &ds, None) {
            Err(Error::NonFiniteLoss {
                step, epoch, batch, ..
            }) => assert_eq!((step, epoch, batch), (0, 0, 0)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn gradcheck_passes_on_random_instances() {
        for check in gradcheck_suite(11, 10, relu_grad).unwrap() {
            assert!(check.check.passed(), "{check:?}");
        }
    }

    #[test]
    fn gradcheck_catches_broken_relu_derivative() {
        let checks = gradcheck_suite(11, 5, |z| if z > 0.0 { -1.0 } else { 0.0 }).unwrap();
        assert!(checks.iter().all(|c| !c.check.passed()));
    }

    #[test]
    fn zero_input_gives_finite_error() {
        let model = MlpModel::new(3, &[4, 4], 3, &mut RngState::new(2)).unwrap();
        let x = Matrix::zeros(4, 3);
        let check =
            gradient_check(&model, &LossSpec::attack_sharing(10.0), &x, &[0, 1, 2, 0]).unwrap();
        assert!(check.max_rel_error.is_finite());
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
        }
        assert_eq!(
            Strategy::parse_list("ce, as").unwrap(),
            vec![Strategy::CrossEntropy, Strategy::AttackSharing]
        );
        assert!(Strategy::parse_list("ce,bogus").is_err());
    }

    #[test]
    fn single_strategy_matches_direct_run() {
        let ds = separable(7);
        let base = small(LossChoice::AttackSharing, 2);
        let out = compare_strategies(&base, &[Strategy::WeightedCe], &ds, &ds).unwrap();
        let (model, _) = train(&Strategy::WeightedCe.apply(&base), &ds, None).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].report, evaluate(&model, &ds).unwrap());
    }
}

//! Fully connected ReLU network with inverted dropout and a softmax head.
//!
//! Layer `ℓ` computes `h = relu(h̃_prev Wᵀ + b)` for a batch stored one sample per
//! row. During training every hidden output is multiplied by an independent
//! Bernoulli(`keep_prob`) draw and rescaled by `1 / keep_prob`; the raw input
//! and the output logits are never dropped. Evaluation applies no mask and no
//! rescaling.
//!
//! Weights are row-major with shape `(fan_out, fan_in)`.

use std::path::Path;

use rayon::prelude::*;

use crate::math::{self, Matrix, RngState};
use crate::{Error, Result};

/// Version written into checkpoint headers.
pub const CHECKPOINT_VERSION: u32 = 1;
const CHECKPOINT_MAGIC: &[u8; 8] = b"IMBAIDS\0";

/// Rows per block when evaluating large inputs in parallel.
const EVAL_BLOCK_ROWS: usize = 512;

/// Weights and bias of one dense layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    weights: Matrix,
    bias: Vec<f64>,
}

impl LayerParams {
    pub fn new(weights: Matrix, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(Error::shape("layer", weights.shape(), (bias.len(), 1)));
        }
        Ok(Self { weights, bias })
    }

    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weights: Matrix::zeros(fan_out, fan_in),
            bias: vec![0.0; fan_out],
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weights.cols()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.rows()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        self.weights.as_mut_slice()
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }
}

/// Whether dropout masks are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Everything `backward` needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    fingerprint: u64,
    keep_prob: f64,
    /// Input fed to each layer (the thinned output of the previous one).
    inputs: Vec<Matrix>,
    /// Pre-activations of the hidden layers.
    pre_activations: Vec<Matrix>,
    /// 0/1 dropout masks of the hidden layers; `None` in eval mode.
    masks: Option<Vec<Matrix>>,
    logits: Matrix,
    log_probs: Matrix,
    probs: Matrix,
}

impl ForwardCache {
    pub fn logits(&self) -> &Matrix {
        &self.logits
    }

    pub fn log_probs(&self) -> &Matrix {
        &self.log_probs
    }

    pub fn probs(&self) -> &Matrix {
        &self.probs
    }

    pub fn pre_activations(&self) -> &[Matrix] {
        &self.pre_activations
    }

    pub fn masks(&self) -> Option<&[Matrix]> {
        self.masks.as_deref()
    }

    /// Replaces the dropout mask of hidden layer `layer`.
    ///
    /// Used to study masked units; the stored activations are not recomputed.
    pub fn set_mask(&mut self, layer: usize, mask: Matrix) -> Result<()> {
        let masks = self
            .masks
            .as_mut()
            .ok_or_else(|| Error::InvalidArgument("eval-mode cache has no masks".into()))?;
        let slot = masks
            .get_mut(layer)
            .ok_or_else(|| Error::InvalidArgument(format!("no hidden layer {layer}")))?;
        if slot.shape() != mask.shape() {
            return Err(Error::shape("set_mask", slot.shape(), mask.shape()));
        }
        *slot = mask;
        Ok(())
    }
}

/// Parameter gradients, shaped like the model's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerParams>,
}

impl Gradients {
    /// Flat views in optimizer order: weights then bias for each layer.
    pub fn slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.slices()
            .iter()
            .flat_map(|s| s.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// ReLU subgradient, 0 at exactly 0.
#[inline]
pub fn relu_grad(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Feedforward classifier: `hidden_dims.len()` ReLU layers and a softmax output.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    input_dim: usize,
    hidden_dims: Vec<usize>,
    num_classes: usize,
    layers: Vec<LayerParams>,
}

impl MlpModel {
    /// He-initialized weights, zero biases.
    pub fn new(
        input_dim: usize,
        hidden_dims: &[usize],
        num_classes: usize,
        rng: &mut RngState,
    ) -> Result<Self> {
        let dims = Self::chain(input_dim, hidden_dims, num_classes)?;
        let layers = dims
            .windows(2)
            .map(|w| {
                let weights = math::he_init(rng, w[0], w[1])?;
                LayerParams::new(weights, vec![0.0; w[1]])
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            input_dim,
            hidden_dims: hidden_dims.to_vec(),
            num_classes,
            layers,
        })
    }

    pub fn zeros(input_dim: usize, hidden_dims: &[usize], num_classes: usize) -> Result<Self> {
        let dims = Self::chain(input_dim, hidden_dims, num_classes)?;
        Ok(Self {
            input_dim,
            hidden_dims: hidden_dims.to_vec(),
            num_classes,
            layers: dims
                .windows(2)
                .map(|w| LayerParams::zeros(w[0], w[1]))
                .collect(),
        })
    }

    /// Assembles a model from explicit layers, checking that shapes chain.
    pub fn from_layers(layers: Vec<LayerParams>) -> Result<Self> {
        let Some(first) = layers.first() else {
            return Err(Error::InvalidArgument(
                "model needs at least one layer".into(),
            ));
        };
        let input_dim = first.fan_in();
        for pair in layers.windows(2) {
            if pair[1].fan_in() != pair[0].fan_out() {
                return Err(Error::shape(
                    "layer chain",
                    pair[0].weights.shape(),
                    pair[1].weights.shape(),
                ));
            }
        }
        let hidden_dims = layers[..layers.len() - 1]
            .iter()
            .map(LayerParams::fan_out)
            .collect();
        let num_classes = layers[layers.len() - 1].fan_out();
        if input_dim == 0 || num_classes == 0 {
            return Err(Error::InvalidArgument("layer dims must be >= 1".into()));
        }
        Ok(Self {
            input_dim,
            hidden_dims,
            num_classes,
            layers,
        })
    }

    fn chain(input_dim: usize, hidden_dims: &[usize], num_classes: usize) -> Result<Vec<usize>> {
        let mut dims = Vec::with_capacity(hidden_dims.len() + 2);
        dims.push(input_dim);
        dims.extend_from_slice(hidden_dims);
        dims.push(num_classes);
        if dims.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "layer dims must be >= 1, got {dims:?}"
            )));
        }
        Ok(dims)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dims(&self) -> &[usize] {
        &self.hidden_dims
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LayerParams] {
        &mut self.layers
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.as_slice().len() + l.bias.len())
            .sum()
    }

    /// Lengths of the flat parameter slices, in optimizer order.
    pub fn param_lengths(&self) -> Vec<usize> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice().len(), l.bias.len()])
            .collect()
    }

    /// Mutable flat views in optimizer order: weights then bias for each layer.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    /// FNV-1a hash over parameter bits and dims.
    pub fn fingerprint(&self) -> u64 {
        const PRIME: u64 = 0x0000_0100_0000_01b3;
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |v: u64| {
            h ^= v;
            h = h.wrapping_mul(PRIME);
        };
        eat(self.input_dim as u64);
        eat(self.num_classes as u64);
        for l in &self.layers {
            eat(l.fan_in() as u64);
            eat(l.fan_out() as u64);
            for v in l.weights.as_slice().iter().chain(&l.bias) {
                eat(v.to_bits());
            }
        }
        h
    }

    fn affine(&self, layer: &LayerParams, input: &Matrix) -> Result<Matrix> {
        let mut z = math::matmul_nt(input, &layer.weights)?;
        z.add_row_vector(&layer.bias)?;
        Ok(z)
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_dim {
            return Err(Error::shape(
                "forward",
                x.shape(),
                (self.input_dim, self.num_classes),
            ));
        }
        Ok(())
    }

    /// Runs the network on a batch and keeps what `backward` needs.
    pub fn forward(
        &self,
        x: &Matrix,
        keep_prob: f64,
        mode: Mode,
        rng: &mut RngState,
    ) -> Result<(Matrix, ForwardCache)> {
        self.check_input(x)?;
        if mode == Mode::Train && !(keep_prob > 0.0 && keep_prob <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "keep_prob must lie in (0, 1] for training, got {keep_prob}"
            )));
        }

        let hidden = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(hidden);
        let mut masks = (mode == Mode::Train).then(|| Vec::with_capacity(hidden));
        let scale = 1.0 / keep_prob;

        let mut h = x.clone();
        for layer in &self.layers[..hidden] {
            let z = self.affine(layer, &h)?;
            let mut a = z.clone();
            a.map_inplace(|v| v.max(0.0));
            if let Some(masks) = masks.as_mut() {
                let r = math::bernoulli_mask(rng, a.rows() * a.cols(), keep_prob)?;
                for (v, keep) in a.as_mut_slice().iter_mut().zip(&r) {
                    *v *= keep * scale;
                }
                masks.push(Matrix::from_vec(a.rows(), a.cols(), r)?);
            }
            inputs.push(std::mem::replace(&mut h, a));
            pre_activations.push(z);
        }
        let logits = self.affine(&self.layers[hidden], &h)?;
        inputs.push(h);

        let log_probs = math::log_softmax_rows(&logits);
        let mut probs = log_probs.clone();
        probs.map_inplace(f64::exp);

        let cache = ForwardCache {
            fingerprint: self.fingerprint(),
            keep_prob,
            inputs,
            pre_activations,
            masks,
            logits,
            log_probs,
            probs: probs.clone(),
        };
        Ok((probs, cache))
    }

    /// Eval-mode logits without building a cache.
    pub fn logits(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let hidden = self.layers.len() - 1;
        let mut h = x.clone();
        for layer in &self.layers[..hidden] {
            h = self.affine(layer, &h)?;
            h.map_inplace(|v| v.max(0.0));
        }
        self.affine(&self.layers[hidden], &h)
    }

    /// Eval-mode class probabilities.
    pub fn predict_proba(&self, x: &Matrix) -> Result<Matrix> {
        Ok(math::softmax_rows(&self.logits(x)?))
    }

    /// Most probable class per row, lowest index on ties.
    ///
    /// Large inputs are evaluated in row blocks across threads; each row's
    /// result does not depend on the split.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        self.check_input(x)?;
        let blocks: Vec<Vec<usize>> = (0..x.rows())
            .step_by(EVAL_BLOCK_ROWS)
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|start| {
                let idx: Vec<usize> = (start..(start + EVAL_BLOCK_ROWS).min(x.rows())).collect();
                let probs = self.predict_proba(&x.select_rows(&idx))?;
                Ok(probs.row_iter().map(math::argmax).collect())
            })
            .collect::<Result<_>>()?;
        Ok(blocks.into_iter().flatten().collect())
    }

    /// Reverse-mode gradients of a loss whose logit gradient is `dloss_dlogits`.
    pub fn backward(&self, cache: &ForwardCache, dloss_dlogits: &Matrix) -> Result<Gradients> {
        self.backward_with(cache, dloss_dlogits, relu_grad)
    }

    /// `backward` with a substitute activation derivative.
    ///
    /// Exists so gradient checks can be shown to catch a broken derivative.
    pub fn backward_with(
        &self,
        cache: &ForwardCache,
        dloss_dlogits: &Matrix,
        activation_grad: impl Fn(f64) -> f64,
    ) -> Result<Gradients> {
        if cache.fingerprint != self.fingerprint() || cache.inputs.len() != self.layers.len() {
            return Err(Error::StaleCache);
        }
        if dloss_dlogits.shape() != cache.logits.shape() {
            return Err(Error::shape(
                "backward",
                dloss_dlogits.shape(),
                cache.logits.shape(),
            ));
        }

        let scale = 1.0 / cache.keep_prob;
        let mut grads: Vec<LayerParams> = Vec::with_capacity(self.layers.len());
        let mut delta = dloss_dlogits.clone();
        for idx in (0..self.layers.len()).rev() {
            let layer = &self.layers[idx];
            let input = &cache.inputs[idx];
            let dw = math::matmul_tn(&delta, input)?;
            let db = delta.column_sums();
            grads.push(LayerParams::new(dw, db)?);

            if idx > 0 {
                let mut d_prev = math::matmul(&delta, &layer.weights)?;
                let z = &cache.pre_activations[idx - 1];
                match cache.masks.as_ref() {
                    Some(masks) => {
                        let mask = &masks[idx - 1];
                        for ((d, &zv), &keep) in d_prev
                            .as_mut_slice()
                            .iter_mut()
                            .zip(z.as_slice())
                            .zip(mask.as_slice())
                        {
                            *d *= keep * scale * activation_grad(zv);
                        }
                    }
                    None => {
                        for (d, &zv) in d_prev.as_mut_slice().iter_mut().zip(z.as_slice()) {
                            *d *= activation_grad(zv);
                        }
                    }
                }
                delta = d_prev;
            }
        }
        grads.reverse();
        Ok(Gradients { layers: grads })
    }

    /// Serializes dims and parameters (little-endian) behind a versioned header.
    ///
    /// Layout: magic `IMBAIDS\0`, `u32` version, `u32` input dim, `u32` class
    /// count, `u32` hidden layer count, one `u32` per hidden width, then for each
    /// layer its weights (row-major) followed by its bias as `f64`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(24 + 8 * self.num_params());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        for v in [
            CHECKPOINT_VERSION,
            self.input_dim as u32,
            self.num_classes as u32,
            self.hidden_dims.len() as u32,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for &h in &self.hidden_dims {
            out.extend_from_slice(&(h as u32).to_le_bytes());
        }
        for l in &self.layers {
            for v in l.weights.as_slice().iter().chain(&l.bias) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.get(..8) != Some(CHECKPOINT_MAGIC.as_slice()) {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let mut pos = 8;
        let u32_at = |pos: &mut usize| -> Result<usize> {
            let b = bytes
                .get(*pos..*pos + 4)
                .ok_or_else(|| Error::Checkpoint("truncated header".into()))?;
            *pos += 4;
            Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
        };
        let version = u32_at(&mut pos)?;
        if version != CHECKPOINT_VERSION as usize {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let input_dim = u32_at(&mut pos)?;
        let num_classes = u32_at(&mut pos)?;
        let hidden_count = u32_at(&mut pos)?;
        if hidden_count > bytes.len() / 4 {
            return Err(Error::Checkpoint(format!(
                "implausible layer count {hidden_count}"
            )));
        }
        let hidden_dims = (0..hidden_count)
            .map(|_| u32_at(&mut pos))
            .collect::<Result<Vec<_>>>()?;

        let dims = Self::chain(input_dim, &hidden_dims, num_classes)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        let params: usize = dims.windows(2).map(|w| (w[0] + 1) * w[1]).sum();
        let expected = pos + 8 * params;
        if bytes.len() != expected {
            return Err(Error::Checkpoint(format!(
                "expected {expected} bytes, found {}",
                bytes.len()
            )));
        }
        let mut model = Self::zeros(input_dim, &hidden_dims, num_classes)?;
        for slice in model.param_slices_mut() {
            for v in slice.iter_mut() {
                let mut b = [0u8; 8];
                b.copy_from_slice(&bytes[pos..pos + 8]);
                *v = f64::from_le_bytes(b);
                pos += 8;
            }
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::{loss_grad_logits, LossSpec};
    use crate::trainer::gradient_check;

    fn batch(rng: &mut RngState, n: usize, d: usize) -> Matrix {
        Matrix::from_vec(n, d, (0..n * d).map(|_| rng.standard_normal()).collect()).unwrap()
    }

    #[test]
    fn zero_weights_give_uniform_probabilities() {
        let model = MlpModel::zeros(3, &[5, 5], 4).unwrap();
        let x = batch(&mut RngState::new(1), 6, 3);
        let p = model.predict_proba(&x).unwrap();
        assert!(p.as_slice().iter().all(|&v| (v - 0.25).abs() < 1e-15));
        // all-equal probabilities predict the lowest index
        assert_eq!(model.predict(&x).unwrap(), vec![0; 6]);
    }

    #[test]
    fn hand_computed_forward() {
        let model = MlpModel::from_layers(vec![
            LayerParams::new(
                Matrix::from_rows(&[vec![1.0, -1.0], vec![0.5, 2.0]]).unwrap(),
                vec![0.0, -1.0],
            )
            .unwrap(),
            LayerParams::new(
                Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap(),
                vec![0.0, 0.0, -3.5],
            )
            .unwrap(),
        ])
        .unwrap();
        let x = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        // hidden pre-activations (-1, 3.5) → relu (0, 3.5) → logits (0, 3.5, 0)
        let e = 3.5f64.exp();
        let want = [1.0 / (2.0 + e), e / (2.0 + e), 1.0 / (2.0 + e)];
        let (p, cache) = model
            .forward(&x, 1.0, Mode::Eval, &mut RngState::new(0))
            .unwrap();
        for (a, b) in p.as_slice().iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(cache.pre_activations()[0].as_slice(), &[-1.0, 3.5]);
        assert_eq!(cache.logits().as_slice(), &[0.0, 3.5, 0.0]);
        assert_eq!(model.predict(&x).unwrap(), vec![1]);
    }

    #[test]
    fn full_keep_training_matches_eval() {
        let mut rng = RngState::new(2);
        let model = MlpModel::new(4, &[8, 8], 3, &mut rng).unwrap();
        let x = batch(&mut rng, 5, 4);
        let (train, _) = model.forward(&x, 1.0, Mode::Train, &mut rng).unwrap();
        let (eval, cache) = model.forward(&x, 0.5, Mode::Eval, &mut rng).unwrap();
        assert_eq!(train, eval);
        assert!(cache.masks().is_none());
        assert_eq!(eval, model.predict_proba(&x).unwrap());
    }

    #[test]
    fn dropout_rescales_kept_units() {
        let mut rng = RngState::new(3);
        let model = MlpModel::new(2, &[50], 2, &mut rng).unwrap();
        let x = batch(&mut rng, 4, 2);
        let (_, cache) = model.forward(&x, 0.8, Mode::Train, &mut rng).unwrap();
        let mask = &cache.masks().unwrap()[0];
        let z = &cache.pre_activations()[0];
        let h = &cache.inputs[1];
        for ((&m, &zv), &hv) in mask.as_slice().iter().zip(z.as_slice()).zip(h.as_slice()) {
            assert_eq!(hv, zv.max(0.0) * (m * (1.0 / 0.8)));
        }
        assert!(mask.as_slice().contains(&0.0));
        assert!(model.forward(&x, 0.0, Mode::Train, &mut rng).is_err());
    }

    #[test]
    fn zero_logit_gradient_gives_zero_parameter_gradients() {
        let mut rng = RngState::new(4);
        let model = MlpModel::new(4, &[8], 3, &mut rng).unwrap();
        let x = batch(&mut rng, 5, 4);
        let (_, cache) = model.forward(&x, 0.8, Mode::Train, &mut rng).unwrap();
        let g = model.backward(&cache, &Matrix::zeros(5, 3)).unwrap();
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn backward_matches_finite_differences_on_4_8_8_3() {
        let mut rng = RngState::new(5);
        let mut model = MlpModel::new(4, &[8, 8], 3, &mut rng).unwrap();
        for layer in model.layers_mut() {
            for b in layer.bias_mut() {
                *b = 0.1 * rng.standard_normal();
            }
        }
        let x = batch(&mut rng, 5, 4);
        for spec in [LossSpec::cross_entropy(), LossSpec::attack_sharing(10.0)] {
            let check = gradient_check(&model, &spec, &x, &[0, 1, 2, 0, 1]).unwrap();
            assert!(check.max_rel_error < 1e-4, "{check:?}");
        }
    }

    #[test]
    fn dropped_units_receive_no_gradient() {
        let mut rng = RngState::new(6);
        let model = MlpModel::new(3, &[16, 4], 2, &mut rng).unwrap();
        let x = batch(&mut rng, 1, 3);
        let (p, cache) = model.forward(&x, 0.5, Mode::Train, &mut rng).unwrap();
        let dl = loss_grad_logits(&LossSpec::cross_entropy(), &p, cache.log_probs(), &[1]).unwrap();
        let g = model.backward(&cache, &dl).unwrap();
        let mask = &cache.masks().unwrap()[0];
        let dropped: Vec<usize> = (0..16).filter(|&j| mask.get(0, j) == 0.0).collect();
        assert!(!dropped.is_empty());
        for j in dropped {
            assert!(g.layers[0].weights().row(j).iter().all(|&v| v == 0.0));
            assert_eq!(g.layers[0].bias()[j], 0.0);
            assert!((0..4).all(|i| g.layers[1].weights().get(i, j) == 0.0));
        }
    }

    #[test]
    fn stale_cache_is_rejected() {
        let mut rng = RngState::new(7);
        let mut model = MlpModel::new(2, &[3], 2, &mut rng).unwrap();
        let x = batch(&mut rng, 2, 2);
        let (_, cache) = model.forward(&x, 1.0, Mode::Train, &mut rng).unwrap();
        model.layers_mut()[0].bias_mut()[0] += 1.0;
        assert!(matches!(
            model.backward(&cache, &Matrix::zeros(2, 2)),
            Err(Error::StaleCache)
        ));
        assert!(model.backward(&cache, &Matrix::zeros(3, 2)).is_err());
    }

    #[test]
    fn input_dimension_is_checked() {
        let model = MlpModel::new(3, &[4], 2, &mut RngState::new(8)).unwrap();
        assert!(model.predict(&Matrix::zeros(2, 4)).is_err());
        assert!(MlpModel::new(0, &[4], 2, &mut RngState::new(8)).is_err());
        assert!(MlpModel::new(3, &[0], 2, &mut RngState::new(8)).is_err());
    }

    #[test]
    fn checkpoint_round_trip_and_corruption() {
        let model = MlpModel::new(5, &[7, 3], 4, &mut RngState::new(9)).unwrap();
        let bytes = model.to_bytes();
        assert_eq!(MlpModel::from_bytes(&bytes).unwrap(), model);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        model.save(&path).unwrap();
        assert_eq!(MlpModel::load(&path).unwrap(), model);

        assert!(MlpModel::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(MlpModel::from_bytes(&bad).is_err());
        let mut future = bytes.clone();
        future[8] = 99;
        assert!(matches!(
            MlpModel::from_bytes(&future),
            Err(Error::Checkpoint(_))
        ));
    }

    #[test]
    fn blocked_prediction_matches_row_by_row() {
        let mut rng = RngState::new(10);
        let model = MlpModel::new(3, &[6], 4, &mut rng).unwrap();
        let x = batch(&mut rng, 1100, 3);
        let all = model.predict(&x).unwrap();
        for i in [0, 511, 512, 1099] {
            assert_eq!(all[i], model.predict(&x.select_rows(&[i])).unwrap()[0]);
        }
    }
}

//! Parameter update rules: plain SGD and Adam.
//!
//! Both operate on parameters exposed as a list of flat `f64` slices (see
//! [`crate::model::MlpModel::param_slices_mut`]); gradients must come in the
//! same order with the same lengths.

use serde::{Deserialize, Serialize};

use crate::model::{Gradients, MlpModel};
use crate::{Error, Result};

fn check_shapes(params: &[&mut [f64]], grads: &[&[f64]]) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::shape(
            "optimizer",
            (params.len(), 0),
            (grads.len(), 0),
        ));
    }
    for (p, g) in params.iter().zip(grads) {
        if p.len() != g.len() {
            return Err(Error::shape("optimizer", (p.len(), 1), (g.len(), 1)));
        }
    }
    Ok(())
}

/// `θ ← θ - lr·g`.
pub fn sgd_step(params: &mut [&mut [f64]], grads: &[&[f64]], learning_rate: f64) -> Result<()> {
    if !(learning_rate > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "learning rate must be > 0, got {learning_rate}"
        )));
    }
    check_shapes(params, grads)?;
    for (p, g) in params.iter_mut().zip(grads) {
        for (theta, grad) in p.iter_mut().zip(g.iter()) {
            *theta -= learning_rate * grad;
        }
    }
    Ok(())
}

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    /// Decay of the first-moment average.
    pub rho1: f64,
    /// Decay of the second-moment average.
    pub rho2: f64,
    /// Step size ζ.
    pub step_size: f64,
    /// Stabilizer δ, added after the square root.
    pub delta: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            rho1: 0.9,
            rho2: 0.999,
            step_size: 1e-4,
            delta: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        if !open_unit(self.rho1) || !open_unit(self.rho2) {
            return Err(Error::InvalidArgument(format!(
                "rho1 and rho2 must lie in (0, 1), got {} and {}",
                self.rho1, self.rho2
            )));
        }
        if !(self.step_size > 0.0) || !(self.delta > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "step size and delta must be > 0, got {} and {}",
                self.step_size, self.delta
            )));
        }
        Ok(())
    }
}

/// Moment accumulators for Adam.
///
/// `s` and `r` are stored without bias correction; the correction by
/// `1 - ρᵗ` is applied when computing each update, after `t` is incremented.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    config: AdamConfig,
    s: Vec<Vec<f64>>,
    r: Vec<Vec<f64>>,
    t: u64,
    initialized: bool,
}

impl AdamState {
    /// A state with no parameter shapes yet; call [`AdamState::init`] before stepping.
    pub fn new(config: AdamConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            s: Vec::new(),
            r: Vec::new(),
            t: 0,
            initialized: false,
        })
    }

    pub fn for_lengths(config: AdamConfig, lengths: &[usize]) -> Result<Self> {
        let mut state = Self::new(config)?;
        state.init(lengths);
        Ok(state)
    }

    pub fn for_model(config: AdamConfig, model: &MlpModel) -> Result<Self> {
        Self::for_lengths(config, &model.param_lengths())
    }

    /// Zeroes both accumulators for the given slice lengths and resets `t`.
    pub fn init(&mut self, lengths: &[usize]) {
        self.s = lengths.iter().map(|&n| vec![0.0; n]).collect();
        self.r = self.s.clone();
        self.t = 0;
        self.initialized = true;
    }

    /// Zeroes the accumulators and step counter, keeping shapes.
    pub fn reset(&mut self) {
        let lengths: Vec<usize> = self.s.iter().map(Vec::len).collect();
        self.init(&lengths);
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self) -> &[Vec<f64>] {
        &self.s
    }

    pub fn second_moment(&self) -> &[Vec<f64>] {
        &self.r
    }

    /// Bias-corrected moments `(ŝ, r̂)` of one coordinate at the current step.
    pub fn corrected(&self, slice: usize, index: usize) -> (f64, f64) {
        let t = self.t.min(i32::MAX as u64) as i32;
        (
            self.s[slice][index] / (1.0 - self.config.rho1.powi(t)),
            self.r[slice][index] / (1.0 - self.config.rho2.powi(t)),
        )
    }

    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if !self.initialized {
            return Err(Error::Uninitialized);
        }
        check_shapes(params, grads)?;
        if params.len() != self.s.len()
            || params.iter().zip(&self.s).any(|(p, s)| p.len() != s.len())
        {
            return Err(Error::shape(
                "adam state",
                (self.s.len(), 0),
                (params.len(), 0),
            ));
        }

        self.t += 1;
        let AdamConfig {
            rho1,
            rho2,
            step_size,
            delta,
        } = self.config;
        let t = self.t.min(i32::MAX as u64) as i32;
        let c1 = 1.0 - rho1.powi(t);
        let c2 = 1.0 - rho2.powi(t);

        for (((p, g), s), r) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.s)
            .zip(&mut self.r)
        {
            for (((theta, &grad), s), r) in p
                .iter_mut()
                .zip(g.iter())
                .zip(s.iter_mut())
                .zip(r.iter_mut())
            {
                *s = rho1 * *s + (1.0 - rho1) * grad;
                *r = rho2 * *r + (1.0 - rho2) * grad * grad;
                let s_hat = *s / c1;
                let r_hat = *r / c2;
                *theta -= step_size * s_hat / (r_hat.sqrt() + delta);
            }
        }
        Ok(())
    }
}

/// Optimizer selected for a training run.
#[derive(Debug, Clone, PartialEq)]
pub enum Optimizer {
    Sgd { learning_rate: f64 },
    Adam(AdamState),
}

impl Optimizer {
    pub fn step(&mut self, model: &mut MlpModel, grads: &Gradients) -> Result<()> {
        let grads = grads.slices();
        let mut params = model.param_slices_mut();
        match self {
            Optimizer::Sgd { learning_rate } => sgd_step(&mut params, &grads, *learning_rate),
            Optimizer::Adam(state) => state.step(&mut params, &grads),
        }
    }

    pub fn reset(&mut self) {
        if let Optimizer::Adam(state) = self {
            state.reset();
        }
    }
}

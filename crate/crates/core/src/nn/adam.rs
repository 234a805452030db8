//! Adam with multiplicative weight decay.
//!
//! One step, element-wise, for step counter `t` (after increment):
//!
//! ```text
//! m_t = β1 m_{t-1} + (1 - β1) g_t
//! v_t = β2 v_{t-1} + (1 - β2) g_t²
//! m̂_t = m_t / (1 - β1^t),  v̂_t = v_t / (1 - β2^t)
//! θ_t = (1 - ηw) θ_{t-1} - η m̂_t / (sqrt(v̂_t) + ε)
//! ```

use std::ops::Range;

use super::model::{DecayMode, Model};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub decay_mode: DecayMode,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Evaluate the full-training-set loss every this many epochs. The last
    /// epoch is always logged.
    pub log_every: usize,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
            decay_mode: DecayMode::Decoupled,
            batch_size: 16,
            epochs: 200,
            seed: 0,
            log_every: 1,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::HyperParams(msg));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.learning_rate));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} = {b} must lie in [0, 1)"));
            }
        }
        if !(self.eps > 0.0) {
            return bad(format!("eps {} must be positive", self.eps));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight decay {} must be non-negative", self.weight_decay));
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        if self.log_every == 0 {
            return bad("log interval must be at least 1".into());
        }
        Ok(())
    }

    /// The `w` applied inside the update; zero when decay is in the gradient.
    pub fn step_decay(&self) -> f64 {
        match self.decay_mode {
            DecayMode::Decoupled => self.weight_decay,
            DecayMode::Coupled => 0.0,
        }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl OptimizerState {
    pub fn new(len: usize) -> Self {
        OptimizerState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }
}

/// A run of parameters sharing update rules.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamGroup {
    pub range: Range<usize>,
    pub decay: bool,
    pub frozen: bool,
}

/// Groups covering a model's parameters: biases are not decayed and fixed
/// projections are frozen.
pub fn param_groups(model: &Model) -> Vec<ParamGroup> {
    model
        .layout
        .segments()
        .map(|s| ParamGroup {
            range: s.range(),
            decay: Model::is_decayed(s),
            frozen: !model.is_trainable(s),
        })
        .collect()
}

/// Replaces subnormal values by zero. Moments of parameters whose gradient
/// stays zero decay geometrically into the subnormal range, where floating
/// point arithmetic is orders of magnitude slower; their contribution to the
/// update is far below the resolution of the parameters anyway.
fn flush(x: f64) -> f64 {
    if x.abs() < f64::MIN_POSITIVE {
        0.0
    } else {
        x
    }
}

/// Applies one update in place. `lr`, moments and decay come from `h`; the
/// decay factor is `h.step_decay()`.
pub fn adam_step(
    params: &mut [f64],
    state: &mut OptimizerState,
    grad: &[f64],
    h: &HyperParams,
    groups: &[ParamGroup],
) {
    assert_eq!(params.len(), grad.len());
    assert_eq!(params.len(), state.m.len());
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - h.beta1.powi(t);
    let bc2 = 1.0 - h.beta2.powi(t);
    let w = h.step_decay();
    for group in groups {
        if group.frozen {
            continue;
        }
        let shrink = if group.decay { 1.0 - h.learning_rate * w } else { 1.0 };
        for i in group.range.clone() {
            let g = grad[i];
            let m = flush(h.beta1 * state.m[i] + (1.0 - h.beta1) * g);
            let v = flush(h.beta2 * state.v[i] + (1.0 - h.beta2) * g * g);
            state.m[i] = m;
            state.v[i] = v;
            let m_hat = m / bc1;
            let v_hat = v / bc2;
            let step = if m_hat == 0.0 {
                0.0
            } else {
                h.learning_rate * m_hat / (v_hat.sqrt() + h.eps)
            };
            params[i] = shrink * params[i] - step;
        }
    }
}

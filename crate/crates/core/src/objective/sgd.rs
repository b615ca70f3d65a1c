use serde::{Deserialize, Serialize};

use crate::error::{GcfError, Result};
use crate::numerics::Matrix;
use crate::params::ParamSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SgdConfig {
    pub lr: f64,
    pub momentum: f64,
    pub dampening: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub lr_reductions: usize,
    pub lr_factor: f64,
    pub plateau_patience: usize,
    pub min_delta: f64,
    pub max_epochs: usize,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            lr: 0.1,
            momentum: 0.9,
            dampening: 0.9,
            weight_decay: 1e-3,
            batch_size: 32,
            lr_reductions: 3,
            lr_factor: 0.1,
            plateau_patience: 3,
            min_delta: 1e-4,
            max_epochs: 200,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(GcfError::InvalidConfig(m));
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be >= 0, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if !(0.0..=1.0).contains(&self.dampening) {
            return bad(format!("dampening must be in [0, 1], got {}", self.dampening));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight_decay must be >= 0, got {}", self.weight_decay));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if !(self.lr_factor > 0.0 && self.lr_factor < 1.0) {
            return bad(format!("lr_factor must be in (0, 1), got {}", self.lr_factor));
        }
        if self.plateau_patience == 0 {
            return bad("plateau_patience must be >= 1".into());
        }
        if !(self.min_delta >= 0.0) {
            return bad(format!("min_delta must be >= 0, got {}", self.min_delta));
        }
        Ok(())
    }
}

/// Momentum buffers, one per tensor in `ParamSet::tensors` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdState {
    pub steps: u64,
    pub buffers: Vec<Matrix>,
}

impl SgdState {
    pub fn new() -> Self {
        Self {
            steps: 0,
            buffers: Vec::new(),
        }
    }
}

impl Default for SgdState {
    fn default() -> Self {
        Self::new()
    }
}

/// One update at learning rate `lr`.
///
/// Every gradient is checked before anything is written, so a rejected step
/// leaves both parameters and buffers untouched.
pub fn sgd_step<P: ParamSet>(params: &mut P, grads: &P, state: &mut SgdState, cfg: &SgdConfig, lr: f64) -> Result<()> {
    let gs = grads.tensors();
    for (name, g) in &gs {
        if !g.is_finite() {
            return Err(GcfError::NonFiniteGradient { tensor: name.clone() });
        }
    }
    let first = state.steps == 0;
    if !first && state.buffers.len() != gs.len() {
        return Err(GcfError::stage(
            "sgd",
            "optimizer state does not match the parameter set",
        ));
    }
    let mut effective = Vec::with_capacity(gs.len());
    for ((name, w), (_, g)) in params.tensors().into_iter().zip(&gs) {
        if w.shape() != g.shape() {
            return Err(GcfError::stage("sgd", format!("gradient shape mismatch for {name}")));
        }
        let mut d = (*g).clone();
        if cfg.weight_decay != 0.0 {
            d.add_scaled(w, cfg.weight_decay)?;
        }
        effective.push(d);
    }
    if first {
        state.buffers = effective;
    } else {
        for (buf, d) in state.buffers.iter_mut().zip(&effective) {
            for (b, &x) in buf.as_mut_slice().iter_mut().zip(d.as_slice()) {
                *b = cfg.momentum * *b + (1.0 - cfg.dampening) * x;
            }
        }
    }
    for ((_, w), buf) in params.tensors_mut().into_iter().zip(&state.buffers) {
        w.add_scaled(buf, -lr)?;
    }
    state.steps += 1;
    Ok(())
}

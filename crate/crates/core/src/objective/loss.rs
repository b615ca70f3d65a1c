use serde::{Deserialize, Serialize};

use crate::error::{GcfError, Result};
use crate::head::ForwardTrace;

/// Smallest probability fed to the log.
pub const PROB_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    /// Weight of the L1 penalty on the gate.
    pub lambda: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { lambda: 0.01 }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(GcfError::InvalidConfig(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

pub fn cross_entropy(y: &[f64], label: usize) -> Result<f64> {
    let p = y.get(label).ok_or(GcfError::LabelOutOfRange {
        label,
        classes: y.len(),
    })?;
    Ok(-p.max(PROB_FLOOR).ln())
}

pub fn sparsity_loss(att: &[f64]) -> f64 {
    att.iter().map(|a| a.abs()).sum()
}

/// Classification loss plus `lambda` times the gate's L1 norm (zero when the mode has no gate).
pub fn total_loss(trace: &ForwardTrace<'_>, label: usize, cfg: &LossConfig) -> Result<f64> {
    let ce = cross_entropy(trace.y(), label)?;
    let ls = trace.att().map_or(0.0, sparsity_loss);
    Ok(ce + cfg.lambda * ls)
}

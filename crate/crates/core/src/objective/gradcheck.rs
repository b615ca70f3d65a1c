use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fusion::ClipDescriptorSet;
use crate::head::gcf_forward;
use crate::numerics::{finite_difference_grad, relative_error, Rng};
use crate::params::{GcfConfig, GcfParams, ParamSet};

use super::backward::backward_from_trace;
use super::loss::{total_loss, LossConfig};

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Denominator floor of the relative error, so coordinates whose true
/// gradient is zero are compared in absolute terms.
pub const REL_ERR_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub config: GcfConfig,
    pub lambda: f64,
    pub coordinates: usize,
    pub max_rel_err: f64,
    /// Tensor holding the worst coordinate.
    pub worst_tensor: String,
}

/// Compares the analytic gradient against central differences on one random
/// video with random parameters.
pub fn gradcheck(cfg: &GcfConfig, lambda: f64, seed: u64) -> Result<GradCheckReport> {
    let mut rng = Rng::new(seed);
    let params = GcfParams::init(*cfg, &mut rng)?;
    let v = ClipDescriptorSet::new(rng.normal_matrix(cfg.clips, cfg.input_dim, 1.0))?;
    let label = rng.below(cfg.classes);
    let loss = LossConfig { lambda };
    loss.validate()?;

    let trace = gcf_forward(&v, &params, cfg.mode)?;
    let analytic = backward_from_trace(&trace, label, &loss)?.flatten();
    let numeric = finite_difference_grad(
        |flat| {
            let mut q = params.clone();
            q.load_flat(flat).expect("same length");
            gcf_forward(&v, &q, cfg.mode)
                .and_then(|t| total_loss(&t, label, &loss))
                .unwrap_or(f64::NAN)
        },
        &params.flatten(),
        FD_STEP,
    )?;

    let mut names = Vec::with_capacity(analytic.len());
    for (name, t) in params.tensors() {
        names.extend(std::iter::repeat_n(name, t.len()));
    }
    let mut worst = (0.0, 0);
    for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
        let e = relative_error(*a, *n, REL_ERR_FLOOR);
        if e > worst.0 {
            worst = (e, i);
        }
    }
    Ok(GradCheckReport {
        config: *cfg,
        lambda,
        coordinates: analytic.len(),
        max_rel_err: worst.0,
        worst_tensor: names.get(worst.1).cloned().unwrap_or_default(),
    })
}

/// The full cross product of the small shapes used to validate gradients.
pub fn default_grid() -> Vec<(GcfConfig, f64)> {
    let mut grid = Vec::new();
    for c in [2, 4, 8] {
        for d in [3, 8] {
            for dd in [2, 6] {
                for k in [2, 5] {
                    for n in [1, 2] {
                        for lambda in [0.0, 0.01] {
                            let cfg = GcfConfig {
                                layers: n,
                                ..GcfConfig::small(c, d, dd, k)
                            };
                            grid.push((cfg, lambda));
                        }
                    }
                }
            }
        }
    }
    grid
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::GcfMode;

    #[test]
    fn small_configs_pass() {
        for (i, (cfg, lambda)) in default_grid().into_iter().step_by(7).enumerate() {
            let r = gradcheck(&cfg, lambda, i as u64).unwrap();
            assert!(r.max_rel_err < 1e-6, "{r:?}");
        }
    }

    #[test]
    fn every_mode_and_variant_passes() {
        for mode in GcfMode::ALL {
            for norm in [
                crate::fusion::AttentionNorm::Softmax,
                crate::fusion::AttentionNorm::Divisor,
            ] {
                let cfg = GcfConfig {
                    mode,
                    attention_norm: norm,
                    fusion_bias: true,
                    head_bias: true,
                    layers: 2,
                    gate_hidden: 3,
                    ..GcfConfig::small(4, 5, 3, 3)
                };
                let r = gradcheck(&cfg, 0.05, 3).unwrap();
                assert!(r.max_rel_err < 1e-6, "{r:?}");
            }
        }
    }

    #[test]
    fn grid_covers_requested_axes() {
        let g = default_grid();
        assert_eq!(g.len(), 96);
        assert!(g.iter().any(|(c, l)| c.clips == 8 && c.layers == 2 && *l == 0.01));
    }
}

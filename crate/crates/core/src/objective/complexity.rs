use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fusion::ClipDescriptorSet;
use crate::head::gcf_forward;
use crate::numerics::{count_macs, Rng};
use crate::params::{GcfConfig, GcfParams, ParamSet};

/// Parameter count of a typical 3D-CNN backbone, used as a size reference.
pub const REFERENCE_BACKBONE_PARAMS: u64 = 48_340_000;

/// Closed-form count of learnable scalars.
pub fn count_params(cfg: &GcfConfig) -> u64 {
    let (c, d, dd, k, h) = (
        cfg.clips as u64,
        cfg.input_dim as u64,
        cfg.fused_dim as u64,
        cfg.classes as u64,
        cfg.gate_hidden as u64,
    );
    let mut total = 0;
    if cfg.mode.uses_fusion() {
        let mut din = d;
        for _ in 0..cfg.layers {
            total += 3 * din * dd + dd * dd;
            if cfg.fusion_bias {
                total += 4 * dd;
            }
            din = dd;
        }
    }
    if cfg.mode.uses_gating() {
        total += 2 * h * c;
        if cfg.head_bias {
            total += h + c;
        }
    }
    total += k * cfg.head_width() as u64;
    if cfg.head_bias {
        total += k;
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlopCount {
    /// Multiply-accumulates per video.
    pub macs: u64,
    /// Two FLOPs per multiply-accumulate.
    pub flops: u64,
}

/// Closed-form multiply-accumulates of one forward pass over one video.
///
/// Only matrix products are counted; pooling, softmax and pointwise ops are not.
pub fn count_flops(cfg: &GcfConfig) -> FlopCount {
    let (c, d, dd, k, h) = (
        cfg.clips as u64,
        cfg.input_dim as u64,
        cfg.fused_dim as u64,
        cfg.classes as u64,
        cfg.gate_hidden as u64,
    );
    let mut macs = 0;
    if cfg.mode.uses_fusion() {
        let mut din = d;
        for _ in 0..cfg.layers {
            macs += 3 * c * din * dd + 2 * c * c * dd + c * dd * dd;
            din = dd;
        }
    }
    if cfg.mode.uses_gating() {
        macs += 2 * c * h;
    }
    macs += k * cfg.head_width() as u64;
    FlopCount { macs, flops: 2 * macs }
}

/// Counts measured on instantiated weights: entries of every tensor, and
/// multiply-accumulates performed by an actual forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasuredCounts {
    pub params: u64,
    pub macs: u64,
}

pub fn measure_counts(cfg: &GcfConfig, seed: u64) -> Result<MeasuredCounts> {
    let mut rng = Rng::new(seed);
    let params = GcfParams::init(*cfg, &mut rng)?;
    let v = ClipDescriptorSet::new(rng.normal_matrix(cfg.clips, cfg.input_dim, 1.0))?;
    let (trace, macs) = count_macs(|| gcf_forward(&v, &params, cfg.mode));
    trace?;
    Ok(MeasuredCounts {
        params: params.entry_count() as u64,
        macs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::GcfMode;

    #[test]
    fn hand_enumerated_example() {
        let cfg = GcfConfig::small(4, 8, 6, 3);
        assert_eq!(count_params(&cfg), 230);
        assert_eq!(measure_counts(&cfg, 1).unwrap().params, 230);
    }

    #[test]
    fn extra_layer_adds_four_d_squared() {
        let one = GcfConfig::small(4, 8, 6, 3);
        let two = GcfConfig { layers: 2, ..one };
        assert_eq!(count_params(&two) - count_params(&one), 4 * 36);
    }

    #[test]
    fn closed_forms_match_measurement() {
        for mode in GcfMode::ALL {
            for bias in [false, true] {
                for layers in [1, 3] {
                    let cfg = GcfConfig {
                        mode,
                        layers,
                        gate_hidden: 3,
                        fusion_bias: bias,
                        head_bias: bias,
                        ..GcfConfig::small(5, 7, 4, 6)
                    };
                    let m = measure_counts(&cfg, 2).unwrap();
                    assert_eq!(m.params, count_params(&cfg), "{cfg:?}");
                    assert_eq!(m.macs, count_flops(&cfg).macs, "{cfg:?}");
                }
            }
        }
    }

    #[test]
    fn bench_head_is_small() {
        let n = count_params(&GcfConfig::bench_s());
        assert_eq!(n, 3 * 64 * 32 + 32 * 32 + 200 + 640);
        assert!((n as f64) < 0.05 * REFERENCE_BACKBONE_PARAMS as f64);
        assert_eq!(
            count_flops(&GcfConfig::bench_s()).flops,
            2 * count_flops(&GcfConfig::bench_s()).macs
        );
    }
}

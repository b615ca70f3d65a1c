//! Model configuration and the learnable parameter containers.

use serde::{Deserialize, Serialize};

use crate::error::{GcfError, Result};
use crate::fusion::{AttentionNorm, FusionLayerParams};
use crate::head::{ClassifierParams, GatingParams};
use crate::numerics::{Matrix, Rng};

/// Which parts of the head are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GcfMode {
    /// Inter-clip fusion followed by gated clip-wise attention.
    #[default]
    Full,
    /// Fusion only; the video descriptor is the mean of the fused clips.
    InterClipOnly,
    /// Gating applied directly to the raw clip descriptors.
    ClipWiseOnly,
}

impl GcfMode {
    pub const ALL: [GcfMode; 3] = [GcfMode::Full, GcfMode::InterClipOnly, GcfMode::ClipWiseOnly];

    pub fn uses_fusion(self) -> bool {
        !matches!(self, GcfMode::ClipWiseOnly)
    }

    pub fn uses_gating(self) -> bool {
        !matches!(self, GcfMode::InterClipOnly)
    }

    pub fn name(self) -> &'static str {
        match self {
            GcfMode::Full => "full",
            GcfMode::InterClipOnly => "inter_clip_only",
            GcfMode::ClipWiseOnly => "clip_wise_only",
        }
    }
}

impl std::str::FromStr for GcfMode {
    type Err = GcfError;

    fn from_str(s: &str) -> Result<Self> {
        GcfMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| GcfError::InvalidConfig(format!("unknown mode `{s}`")))
    }
}

/// Shape and structural options of a GCF head.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GcfConfig {
    /// Clip count C; the gate is tied to it.
    pub clips: usize,
    /// Raw descriptor width d.
    pub input_dim: usize,
    /// Fused descriptor width D.
    pub fused_dim: usize,
    /// Class count K.
    pub classes: usize,
    /// Number of stacked fusion layers n.
    pub layers: usize,
    /// Gate hidden width h.
    pub gate_hidden: usize,
    pub mode: GcfMode,
    pub attention_norm: AttentionNorm,
    /// Bias vectors on the four fusion projections.
    pub fusion_bias: bool,
    /// Bias vectors on the gate and classifier.
    pub head_bias: bool,
}

impl Default for GcfConfig {
    fn default() -> Self {
        Self::bench_s()
    }
}

impl GcfConfig {
    /// Head used by the default synthetic benchmark.
    pub fn bench_s() -> Self {
        Self {
            clips: 10,
            input_dim: 64,
            fused_dim: 32,
            classes: 20,
            layers: 1,
            gate_hidden: 10,
            ..Self::small(10, 64, 32, 20)
        }
    }

    /// Bias-free full-mode config with one fusion layer and `h = C`.
    pub fn small(clips: usize, input_dim: usize, fused_dim: usize, classes: usize) -> Self {
        Self {
            clips,
            input_dim,
            fused_dim,
            classes,
            layers: 1,
            gate_hidden: clips,
            mode: GcfMode::Full,
            attention_norm: AttentionNorm::Softmax,
            fusion_bias: false,
            head_bias: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(GcfError::InvalidConfig(m.to_string()));
        if self.clips == 0 {
            return bad("clips must be >= 1");
        }
        if self.input_dim == 0 || self.fused_dim == 0 {
            return bad("descriptor widths must be >= 1");
        }
        if self.classes < 2 {
            return bad("classes must be >= 2");
        }
        if self.layers == 0 {
            return bad("at least one fusion layer is required");
        }
        if self.gate_hidden == 0 {
            return bad("gate_hidden must be >= 1");
        }
        Ok(())
    }

    /// Width of the descriptors entering the gate and classifier.
    pub fn head_width(&self) -> usize {
        if self.mode.uses_fusion() {
            self.fused_dim
        } else {
            self.input_dim
        }
    }
}

/// Named access to every learnable matrix in a fixed order.
///
/// The order defined by `tensors` is used for optimizer buffers, checkpoints and
/// flattening, so it must be stable for a given configuration.
pub trait ParamSet: Clone {
    fn tensors(&self) -> Vec<(String, &Matrix)>;

    fn tensors_mut(&mut self) -> Vec<(String, &mut Matrix)>;

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, t) in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    fn entry_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.entry_count());
        for (_, t) in self.tensors() {
            out.extend_from_slice(t.as_slice());
        }
        out
    }

    fn load_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.entry_count() {
            return Err(GcfError::DataLength {
                rows: 1,
                cols: self.entry_count(),
                got: flat.len(),
            });
        }
        let mut offset = 0;
        for (_, t) in self.tensors_mut() {
            let n = t.len();
            t.as_mut_slice().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// `self += alpha * other`, tensor by tensor.
    fn add_scaled(&mut self, other: &Self, alpha: f64) -> Result<()> {
        let theirs = other.tensors();
        for ((_, mine), (_, t)) in self.tensors_mut().into_iter().zip(theirs) {
            mine.add_scaled(t, alpha)?;
        }
        Ok(())
    }
}

/// All learnable weights of the head.
///
/// Only the matrices the configured mode uses are instantiated: `fusion` is
/// empty in clip-wise-only mode and `gating` is `None` in inter-clip-only mode.
#[derive(Debug, Clone, PartialEq)]
pub struct GcfParams {
    pub config: GcfConfig,
    pub fusion: Vec<FusionLayerParams>,
    pub gating: Option<GatingParams>,
    pub classifier: ClassifierParams,
}

impl GcfParams {
    /// Scale-balanced uniform initialization from the `Init` stream of `seed`.
    pub fn init(config: GcfConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let mut fusion = Vec::new();
        if config.mode.uses_fusion() {
            let mut width = config.input_dim;
            for _ in 0..config.layers {
                fusion.push(FusionLayerParams::init(
                    width,
                    config.fused_dim,
                    config.attention_norm,
                    config.fusion_bias,
                    rng,
                ));
                width = config.fused_dim;
            }
        }
        let gating = config
            .mode
            .uses_gating()
            .then(|| GatingParams::init(config.clips, config.gate_hidden, config.head_bias, rng));
        let classifier = ClassifierParams::init(config.classes, config.head_width(), config.head_bias, rng);
        Ok(Self {
            config,
            fusion,
            gating,
            classifier,
        })
    }

    /// Every parameter zero; shapes as `init` would produce.
    pub fn zeros(config: GcfConfig) -> Result<Self> {
        let mut rng = Rng::new(0);
        Ok(Self::init(config, &mut rng)?.zeros_like())
    }
}

impl ParamSet for GcfParams {
    fn tensors(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::new();
        for (i, layer) in self.fusion.iter().enumerate() {
            for (name, t) in layer.tensors() {
                out.push((format!("fusion.{i}.{name}"), t));
            }
        }
        if let Some(g) = &self.gating {
            for (name, t) in g.tensors() {
                out.push((format!("gating.{name}"), t));
            }
        }
        for (name, t) in self.classifier.tensors() {
            out.push((format!("classifier.{name}"), t));
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        let mut out = Vec::new();
        for (i, layer) in self.fusion.iter_mut().enumerate() {
            for (name, t) in layer.tensors_mut() {
                out.push((format!("fusion.{i}.{name}"), t));
            }
        }
        if let Some(g) = &mut self.gating {
            for (name, t) in g.tensors_mut() {
                out.push((format!("gating.{name}"), t));
            }
        }
        for (name, t) in self.classifier.tensors_mut() {
            out.push((format!("classifier.{name}"), t));
        }
        out
    }
}

/// Uniform `±sqrt(6 / (fan_in + fan_out))` initialization.
pub(crate) fn glorot(rows: usize, cols: usize, fan_in: usize, fan_out: usize, rng: &mut Rng) -> Matrix {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    rng.uniform_matrix(rows, cols, limit)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_names_are_stable() {
        let mut rng = Rng::new(1);
        let p = GcfParams::init(GcfConfig::small(3, 4, 2, 2), &mut rng).unwrap();
        let names: Vec<String> = p.tensors().into_iter().map(|(n, _)| n).collect();
        assert_eq!(
            names,
            [
                "fusion.0.w_q",
                "fusion.0.w_k",
                "fusion.0.w_v",
                "fusion.0.w_z",
                "gating.w1",
                "gating.w2",
                "classifier.w3"
            ]
        );
    }

    #[test]
    fn modes_instantiate_only_used_matrices() {
        let mut rng = Rng::new(1);
        let mut cfg = GcfConfig::small(3, 4, 2, 2);
        cfg.mode = GcfMode::InterClipOnly;
        let p = GcfParams::init(cfg, &mut rng).unwrap();
        assert!(p.gating.is_none());
        cfg.mode = GcfMode::ClipWiseOnly;
        let p = GcfParams::init(cfg, &mut rng).unwrap();
        assert!(p.fusion.is_empty());
        assert_eq!(p.classifier.w3.shape(), (2, 4));
    }

    #[test]
    fn flatten_round_trip() {
        let mut rng = Rng::new(4);
        let p = GcfParams::init(GcfConfig::small(3, 4, 2, 2), &mut rng).unwrap();
        let mut q = p.zeros_like();
        q.load_flat(&p.flatten()).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn init_respects_limit() {
        let mut rng = Rng::new(4);
        let p = GcfParams::init(GcfConfig::bench_s(), &mut rng).unwrap();
        let limit = (6.0f64 / (64 + 32) as f64).sqrt();
        assert!(p.fusion[0].w_q.as_slice().iter().all(|v| v.abs() <= limit));
    }

    #[test]
    fn rejects_zero_layers() {
        let mut cfg = GcfConfig::small(3, 4, 2, 2);
        cfg.layers = 0;
        assert!(cfg.validate().is_err());
    }
}

//! Gated clip-wise attention, residual re-weighting, video descriptor and
//! classifier, composed into the full forward pass.

use crate::error::{GcfError, Result};
use crate::fusion::{stacked_fusion_cached, BiDirectionalDescriptorSet, ClipDescriptorSet, FusionCache};
use crate::numerics::{argmax, col_means, matmul, relu, row_means, sigmoid, softmax, Matrix, Rng};
use crate::params::{glorot, GcfMode, GcfParams};

#[derive(Debug, Clone, PartialEq)]
pub struct GatingParams {
    /// h x C
    pub w1: Matrix,
    /// C x h
    pub w2: Matrix,
    /// h x 1
    pub b1: Option<Matrix>,
    /// C x 1
    pub b2: Option<Matrix>,
}

impl GatingParams {
    pub fn init(clips: usize, hidden: usize, bias: bool, rng: &mut Rng) -> Self {
        Self {
            w1: glorot(hidden, clips, clips, hidden, rng),
            w2: glorot(clips, hidden, hidden, clips, rng),
            b1: bias.then(|| Matrix::zeros(hidden, 1)),
            b2: bias.then(|| Matrix::zeros(clips, 1)),
        }
    }

    pub fn clips(&self) -> usize {
        self.w1.cols()
    }

    pub fn hidden(&self) -> usize {
        self.w1.rows()
    }

    pub fn tensors(&self) -> Vec<(&'static str, &Matrix)> {
        let mut out = vec![("w1", &self.w1), ("w2", &self.w2)];
        if let Some(b) = &self.b1 {
            out.push(("b1", b));
        }
        if let Some(b) = &self.b2 {
            out.push(("b2", b));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Matrix)> {
        let mut out = vec![("w1", &mut self.w1), ("w2", &mut self.w2)];
        if let Some(b) = &mut self.b1 {
            out.push(("b1", b));
        }
        if let Some(b) = &mut self.b2 {
            out.push(("b2", b));
        }
        out
    }

    fn validate(&self) -> Result<()> {
        let (h, c) = self.w1.shape();
        if self.w2.shape() != (c, h) {
            return Err(GcfError::stage(
                "gating",
                format!("w2 is {}x{}, expected {c}x{h}", self.w2.rows(), self.w2.cols()),
            ));
        }
        if self.b1.as_ref().is_some_and(|b| b.shape() != (h, 1))
            || self.b2.as_ref().is_some_and(|b| b.shape() != (c, 1))
        {
            return Err(GcfError::stage("gating", "bias shape mismatch"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierParams {
    /// K x D (K x d in clip-wise-only mode)
    pub w3: Matrix,
    /// K x 1
    pub b3: Option<Matrix>,
}

impl ClassifierParams {
    pub fn init(classes: usize, width: usize, bias: bool, rng: &mut Rng) -> Self {
        Self {
            w3: glorot(classes, width, width, classes, rng),
            b3: bias.then(|| Matrix::zeros(classes, 1)),
        }
    }

    pub fn classes(&self) -> usize {
        self.w3.rows()
    }

    pub fn tensors(&self) -> Vec<(&'static str, &Matrix)> {
        let mut out = vec![("w3", &self.w3)];
        if let Some(b) = &self.b3 {
            out.push(("b3", b));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Matrix)> {
        let mut out = vec![("w3", &mut self.w3)];
        if let Some(b) = &mut self.b3 {
            out.push(("b3", b));
        }
        out
    }
}

/// Gate intermediates: pooled summary, hidden pre-activation and activation, and the gate.
#[derive(Debug, Clone, PartialEq)]
pub struct GateTrace {
    pub g: Vec<f64>,
    pub hidden_pre: Vec<f64>,
    pub hidden: Vec<f64>,
    pub att: Vec<f64>,
}

/// Per-clip mean of each fused descriptor.
pub fn clip_summary(b: &BiDirectionalDescriptorSet) -> Vec<f64> {
    row_means(b.matrix()).expect("descriptor sets are non-empty")
}

fn column_vec(v: &[f64]) -> Matrix {
    Matrix::new(v.len(), 1, v.to_vec()).expect("finite vector")
}

fn add_bias(v: &mut Matrix, b: &Option<Matrix>) {
    if let Some(b) = b {
        v.add_scaled(b, 1.0).expect("bias shape checked");
    }
}

pub(crate) fn gate_forward(g: &[f64], p: &GatingParams) -> Result<GateTrace> {
    p.validate()?;
    if g.len() != p.clips() {
        return Err(GcfError::stage(
            "gating",
            format!("summary has {} clips, gate expects {}", g.len(), p.clips()),
        ));
    }
    let mut pre = matmul(&p.w1, &column_vec(g))?;
    add_bias(&mut pre, &p.b1);
    let hidden: Vec<f64> = pre.as_slice().iter().map(|&z| relu(z)).collect();
    let mut logits = matmul(&p.w2, &column_vec(&hidden))?;
    add_bias(&mut logits, &p.b2);
    let att = logits.as_slice().iter().map(|&u| sigmoid(u)).collect();
    Ok(GateTrace {
        g: g.to_vec(),
        hidden_pre: pre.into_vec(),
        hidden,
        att,
    })
}

/// `att = sigmoid(W2 relu(W1 g))`.
pub fn gated_attention(g: &[f64], p: &GatingParams) -> Result<Vec<f64>> {
    Ok(gate_forward(g, p)?.att)
}

/// `S = att ⊙ B` (row-wise) and the residual `R = B + S`.
pub fn rescale_and_residual(b: &Matrix, att: &[f64]) -> Result<(Matrix, Matrix)> {
    if att.len() != b.rows() {
        return Err(GcfError::shape("rescale_and_residual", b.shape(), (att.len(), 1)));
    }
    let mut s = b.clone();
    for (r, &a) in att.iter().enumerate() {
        s.row_mut(r).iter_mut().for_each(|v| *v *= a);
    }
    let r = b.add(&s)?;
    Ok((s, r))
}

/// Mean of the residual clip descriptors.
pub fn video_descriptor(r: &Matrix) -> Result<Vec<f64>> {
    col_means(r)
}

pub(crate) fn classifier_logits(v_prime: &[f64], p: &ClassifierParams) -> Result<Vec<f64>> {
    if p.w3.cols() != v_prime.len() {
        return Err(GcfError::stage(
            "classifier",
            format!(
                "w3 is {}x{} but the video descriptor has width {}",
                p.w3.rows(),
                p.w3.cols(),
                v_prime.len()
            ),
        ));
    }
    let mut logits = matmul(&p.w3, &column_vec(v_prime))?;
    add_bias(&mut logits, &p.b3);
    Ok(logits.into_vec())
}

/// `y = softmax(W3 v')`.
pub fn classify(v_prime: &[f64], p: &ClassifierParams) -> Result<Vec<f64>> {
    Ok(softmax(&classifier_logits(v_prime, p)?))
}

/// Every intermediate of one forward pass, plus what backward needs.
#[derive(Debug, Clone)]
pub struct ForwardTrace<'p> {
    pub(crate) params: &'p GcfParams,
    pub(crate) mode: GcfMode,
    pub(crate) fusion: Vec<FusionCache<'p>>,
    pub(crate) b: Matrix,
    pub(crate) gate: Option<GateTrace>,
    pub(crate) s: Option<Matrix>,
    pub(crate) r: Matrix,
    pub(crate) v_prime: Vec<f64>,
    pub(crate) logits: Vec<f64>,
    pub(crate) y: Vec<f64>,
}

impl<'p> ForwardTrace<'p> {
    pub fn mode(&self) -> GcfMode {
        self.mode
    }

    pub fn params(&self) -> &'p GcfParams {
        self.params
    }

    /// Fused descriptors (the raw descriptors in clip-wise-only mode).
    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn gate(&self) -> Option<&GateTrace> {
        self.gate.as_ref()
    }

    pub fn g(&self) -> Option<&[f64]> {
        self.gate.as_ref().map(|g| g.g.as_slice())
    }

    /// Gate values; `None` when the mode skips gating.
    pub fn att(&self) -> Option<&[f64]> {
        self.gate.as_ref().map(|g| g.att.as_slice())
    }

    /// Gate values, or all ones when gating is skipped.
    pub fn att_or_sentinel(&self) -> Vec<f64> {
        self.att()
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![1.0; self.b.rows()])
    }

    pub fn s(&self) -> Option<&Matrix> {
        self.s.as_ref()
    }

    pub fn r(&self) -> &Matrix {
        &self.r
    }

    pub fn v_prime(&self) -> &[f64] {
        &self.v_prime
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn fusion_caches(&self) -> &[FusionCache<'p>] {
        &self.fusion
    }

    pub fn predicted_class(&self) -> usize {
        argmax(&self.y)
    }
}

/// Full forward pass in the requested mode.
pub fn gcf_forward<'p>(v: &ClipDescriptorSet, params: &'p GcfParams, mode: GcfMode) -> Result<ForwardTrace<'p>> {
    let cfg = &params.config;
    if v.clips() != cfg.clips {
        return Err(GcfError::stage(
            "input",
            format!(
                "{} clips given, head is configured for {} (pad first)",
                v.clips(),
                cfg.clips
            ),
        ));
    }
    if v.dim() != cfg.input_dim {
        return Err(GcfError::stage(
            "input",
            format!(
                "descriptor width {} does not match configured {}",
                v.dim(),
                cfg.input_dim
            ),
        ));
    }

    let (b, fusion) = if mode.uses_fusion() {
        if params.fusion.is_empty() {
            return Err(GcfError::stage(
                "fusion",
                format!("mode {} needs fusion layers", mode.name()),
            ));
        }
        stacked_fusion_cached(v.matrix(), &params.fusion)?
    } else {
        (v.matrix().clone(), Vec::new())
    };

    let (gate, s, r) = if mode.uses_gating() {
        let gating = params
            .gating
            .as_ref()
            .ok_or_else(|| GcfError::stage("gating", format!("mode {} needs gating weights", mode.name())))?;
        let g = row_means(&b)?;
        let gate = gate_forward(&g, gating)?;
        let (s, r) = rescale_and_residual(&b, &gate.att)?;
        (Some(gate), Some(s), r)
    } else {
        (None, None, b.clone())
    };

    let v_prime = video_descriptor(&r)?;
    let logits = classifier_logits(&v_prime, &params.classifier)?;
    let y = softmax(&logits);
    Ok(ForwardTrace {
        params,
        mode,
        fusion,
        b,
        gate,
        s,
        r,
        v_prime,
        logits,
        y,
    })
}

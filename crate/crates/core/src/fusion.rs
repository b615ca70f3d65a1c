//! Bi-directional inter-clip fusion.
//!
//! Every clip descriptor is rewritten as an attention-weighted combination of
//! all clips in the video:
//!
//! ```text
//! Q = X W_q, K = X W_k, U = X W_v        (C x D each)
//! S = Q Kᵀ / sqrt(D)                      (C x C)
//! A = row_softmax(S)   or   A = S / C     (see AttentionNorm)
//! B = (A U) W_z                           (C x D)
//! ```
//!
//! No positional terms enter, so the layer is permutation-equivariant over clips.

use serde::{Deserialize, Serialize};

use crate::error::{GcfError, Result};
use crate::numerics::{matmul, row_softmax, Matrix, Rng};
use crate::params::glorot;

/// How the pairwise scores are normalized into mixing weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionNorm {
    /// Row-wise softmax of the scaled scores.
    #[default]
    Softmax,
    /// Scaled scores divided by the clip count; weights may be negative.
    Divisor,
}

/// Raw clip descriptors of one video, one row per clip.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipDescriptorSet(Matrix);

impl ClipDescriptorSet {
    pub fn new(v: Matrix) -> Result<Self> {
        if v.rows() == 0 || v.cols() == 0 {
            return Err(GcfError::Empty("clip descriptor set"));
        }
        Ok(Self(v))
    }

    pub fn clips(&self) -> usize {
        self.0.rows()
    }

    pub fn dim(&self) -> usize {
        self.0.cols()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }
}

/// Fused clip descriptors `B`, one row per clip.
#[derive(Debug, Clone, PartialEq)]
pub struct BiDirectionalDescriptorSet(Matrix);

impl BiDirectionalDescriptorSet {
    /// Wraps fused descriptors computed elsewhere.
    pub fn new(b: Matrix) -> Result<Self> {
        if b.rows() == 0 || b.cols() == 0 {
            return Err(GcfError::Empty("fused descriptor set"));
        }
        Ok(Self(b))
    }

    pub fn clips(&self) -> usize {
        self.0.rows()
    }

    pub fn dim(&self) -> usize {
        self.0.cols()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }
}

impl From<BiDirectionalDescriptorSet> for ClipDescriptorSet {
    fn from(b: BiDirectionalDescriptorSet) -> Self {
        ClipDescriptorSet(b.0)
    }
}

/// Optional row-vector biases (1 x D) for the four projections.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionBiases {
    pub b_q: Matrix,
    pub b_k: Matrix,
    pub b_v: Matrix,
    pub b_z: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionLayerParams {
    pub norm: AttentionNorm,
    /// d_in x D
    pub w_q: Matrix,
    /// d_in x D
    pub w_k: Matrix,
    /// d_in x D
    pub w_v: Matrix,
    /// D x D
    pub w_z: Matrix,
    pub biases: Option<FusionBiases>,
}

impl FusionLayerParams {
    pub fn init(input_dim: usize, fused_dim: usize, norm: AttentionNorm, bias: bool, rng: &mut Rng) -> Self {
        let w_q = glorot(input_dim, fused_dim, input_dim, fused_dim, rng);
        let w_k = glorot(input_dim, fused_dim, input_dim, fused_dim, rng);
        let w_v = glorot(input_dim, fused_dim, input_dim, fused_dim, rng);
        let w_z = glorot(fused_dim, fused_dim, fused_dim, fused_dim, rng);
        let biases = bias.then(|| FusionBiases {
            b_q: Matrix::zeros(1, fused_dim),
            b_k: Matrix::zeros(1, fused_dim),
            b_v: Matrix::zeros(1, fused_dim),
            b_z: Matrix::zeros(1, fused_dim),
        });
        Self {
            norm,
            w_q,
            w_k,
            w_v,
            w_z,
            biases,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_q.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.w_z.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let (din, d) = self.w_q.shape();
        for (name, m, want) in [
            ("w_k", &self.w_k, (din, d)),
            ("w_v", &self.w_v, (din, d)),
            ("w_z", &self.w_z, (d, d)),
        ] {
            if m.shape() != want {
                return Err(GcfError::stage(
                    "fusion",
                    format!("{name} is {}x{}, expected {}x{}", m.rows(), m.cols(), want.0, want.1),
                ));
            }
        }
        if let Some(b) = &self.biases {
            for (name, m) in [("b_q", &b.b_q), ("b_k", &b.b_k), ("b_v", &b.b_v), ("b_z", &b.b_z)] {
                if m.shape() != (1, d) {
                    return Err(GcfError::stage("fusion", format!("{name} must be 1x{d}")));
                }
            }
        }
        Ok(())
    }

    pub fn tensors(&self) -> Vec<(&'static str, &Matrix)> {
        let mut out = vec![
            ("w_q", &self.w_q),
            ("w_k", &self.w_k),
            ("w_v", &self.w_v),
            ("w_z", &self.w_z),
        ];
        if let Some(b) = &self.biases {
            out.extend([("b_q", &b.b_q), ("b_k", &b.b_k), ("b_v", &b.b_v), ("b_z", &b.b_z)]);
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Matrix)> {
        let mut out = vec![
            ("w_q", &mut self.w_q),
            ("w_k", &mut self.w_k),
            ("w_v", &mut self.w_v),
            ("w_z", &mut self.w_z),
        ];
        if let Some(b) = &mut self.biases {
            out.extend([
                ("b_q", &mut b.b_q),
                ("b_k", &mut b.b_k),
                ("b_v", &mut b.b_v),
                ("b_z", &mut b.b_z),
            ]);
        }
        out
    }

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, t) in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }
}

/// Intermediates of one fusion forward pass.
///
/// Borrows the parameters it was computed with, so the weights cannot change
/// while the cache is alive.
#[derive(Debug, Clone)]
pub struct FusionCache<'p> {
    params: &'p FusionLayerParams,
    input: Matrix,
    q: Matrix,
    k: Matrix,
    u: Matrix,
    attn: Matrix,
    mixed: Matrix,
}

impl FusionCache<'_> {
    /// Mixing weights `A` (C x C).
    pub fn attention(&self) -> &Matrix {
        &self.attn
    }

    pub fn params(&self) -> &FusionLayerParams {
        self.params
    }
}

/// Gradients of one fusion layer.
#[derive(Debug, Clone)]
pub struct FusionGrads {
    pub d_input: Matrix,
    /// Same layout as the layer's parameters.
    pub params: FusionLayerParams,
}

fn add_row_bias(m: &mut Matrix, bias: &Matrix) {
    for r in 0..m.rows() {
        for (v, &b) in m.row_mut(r).iter_mut().zip(bias.as_slice()) {
            *v += b;
        }
    }
}

fn column_sums(m: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(1, m.cols());
    for r in 0..m.rows() {
        for (o, &v) in out.as_mut_slice().iter_mut().zip(m.row(r)) {
            *o += v;
        }
    }
    out
}

pub(crate) fn fusion_forward_matrix<'p>(x: &Matrix, p: &'p FusionLayerParams) -> Result<(Matrix, FusionCache<'p>)> {
    p.validate()?;
    if x.cols() != p.input_dim() {
        return Err(GcfError::stage(
            "fusion",
            format!(
                "input width {} does not match layer input width {}",
                x.cols(),
                p.input_dim()
            ),
        ));
    }
    let clips = x.rows();
    let scale = 1.0 / (p.output_dim() as f64).sqrt();

    let mut q = matmul(x, &p.w_q)?;
    let mut k = matmul(x, &p.w_k)?;
    let mut u = matmul(x, &p.w_v)?;
    if let Some(b) = &p.biases {
        add_row_bias(&mut q, &b.b_q);
        add_row_bias(&mut k, &b.b_k);
        add_row_bias(&mut u, &b.b_v);
    }
    let scores = matmul(&q, &k.transpose())?.scale(scale);
    let attn = match p.norm {
        AttentionNorm::Softmax => row_softmax(&scores),
        AttentionNorm::Divisor => scores.scale(1.0 / clips as f64),
    };
    let mixed = matmul(&attn, &u)?;
    let mut out = matmul(&mixed, &p.w_z)?;
    if let Some(b) = &p.biases {
        add_row_bias(&mut out, &b.b_z);
    }
    Ok((
        out,
        FusionCache {
            params: p,
            input: x.clone(),
            q,
            k,
            u,
            attn,
            mixed,
        },
    ))
}

/// One fusion layer: `B = BA(V)`.
pub fn fusion_forward<'p>(
    v: &ClipDescriptorSet,
    p: &'p FusionLayerParams,
) -> Result<(BiDirectionalDescriptorSet, FusionCache<'p>)> {
    let (b, cache) = fusion_forward_matrix(v.matrix(), p)?;
    Ok((BiDirectionalDescriptorSet(b), cache))
}

/// Exact gradients of one fusion layer given the upstream gradient `dB`.
pub fn fusion_backward(cache: &FusionCache<'_>, d_out: &Matrix) -> Result<FusionGrads> {
    let p = cache.params;
    let expected = (cache.input.rows(), p.output_dim());
    if d_out.shape() != expected {
        return Err(GcfError::stage(
            "fusion backward",
            format!(
                "upstream gradient is {}x{}, cached forward produced {}x{}",
                d_out.rows(),
                d_out.cols(),
                expected.0,
                expected.1
            ),
        ));
    }
    let clips = cache.input.rows();
    let scale = 1.0 / (p.output_dim() as f64).sqrt();

    let d_wz = matmul(&cache.mixed.transpose(), d_out)?;
    let d_mixed = matmul(d_out, &p.w_z.transpose())?;
    let d_attn = matmul(&d_mixed, &cache.u.transpose())?;
    let d_u = matmul(&cache.attn.transpose(), &d_mixed)?;

    let d_scores = match p.norm {
        AttentionNorm::Softmax => {
            let mut ds = Matrix::zeros(clips, clips);
            for i in 0..clips {
                let a = cache.attn.row(i);
                let da = d_attn.row(i);
                let dot: f64 = a.iter().zip(da).map(|(x, y)| x * y).sum();
                for (j, o) in ds.row_mut(i).iter_mut().enumerate() {
                    *o = a[j] * (da[j] - dot);
                }
            }
            ds
        }
        AttentionNorm::Divisor => d_attn.scale(1.0 / clips as f64),
    }
    .scale(scale);

    let d_q = matmul(&d_scores, &cache.k)?;
    let d_k = matmul(&d_scores.transpose(), &cache.q)?;

    let x_t = cache.input.transpose();
    let d_wq = matmul(&x_t, &d_q)?;
    let d_wk = matmul(&x_t, &d_k)?;
    let d_wv = matmul(&x_t, &d_u)?;

    let mut d_input = matmul(&d_q, &p.w_q.transpose())?;
    d_input.add_scaled(&matmul(&d_k, &p.w_k.transpose())?, 1.0)?;
    d_input.add_scaled(&matmul(&d_u, &p.w_v.transpose())?, 1.0)?;

    let mut grads = p.zeros_like();
    grads.w_q = d_wq;
    grads.w_k = d_wk;
    grads.w_v = d_wv;
    grads.w_z = d_wz;
    if let Some(b) = &mut grads.biases {
        b.b_q = column_sums(&d_q);
        b.b_k = column_sums(&d_k);
        b.b_v = column_sums(&d_u);
        b.b_z = column_sums(d_out);
    }
    Ok(FusionGrads { d_input, params: grads })
}

/// `BA^n(V)`: layers applied in order, each consuming the previous output.
pub fn stacked_fusion(v: &ClipDescriptorSet, layers: &[FusionLayerParams]) -> Result<BiDirectionalDescriptorSet> {
    let (out, _) = stacked_fusion_cached(v.matrix(), layers)?;
    Ok(BiDirectionalDescriptorSet(out))
}

pub(crate) fn stacked_fusion_cached<'p>(
    x: &Matrix,
    layers: &'p [FusionLayerParams],
) -> Result<(Matrix, Vec<FusionCache<'p>>)> {
    if layers.is_empty() {
        return Err(GcfError::Empty("stacked fusion layer list"));
    }
    let mut caches = Vec::with_capacity(layers.len());
    let mut current = x.clone();
    for (i, layer) in layers.iter().enumerate() {
        if current.cols() != layer.input_dim() {
            return Err(GcfError::stage(
                "stacked fusion",
                format!(
                    "layer {i} expects width {} but receives width {}",
                    layer.input_dim(),
                    current.cols()
                ),
            ));
        }
        let (out, cache) = fusion_forward_matrix(&current, layer)?;
        caches.push(cache);
        current = out;
    }
    Ok((current, caches))
}

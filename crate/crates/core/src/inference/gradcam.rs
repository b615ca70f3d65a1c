use serde::{Deserialize, Serialize};

use crate::error::{GcfError, Result};
use crate::numerics::{relu, Matrix};

/// One frame's spatial map, `H x W`.
pub type HeatMap = Matrix;

/// Last-layer activations `A(t, i, j, k)` and optionally their gradients, stored
/// row-major in `(t, i, j, k)` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMapVolume {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub activations: Vec<f64>,
    pub grad: Option<Vec<f64>>,
}

impl FeatureMapVolume {
    pub fn new(
        frames: usize,
        height: usize,
        width: usize,
        channels: usize,
        activations: Vec<f64>,
        grad: Option<Vec<f64>>,
    ) -> Result<Self> {
        if frames == 0 || height == 0 || width == 0 || channels == 0 {
            return Err(GcfError::InvalidConfig("volume dimensions must be >= 1".into()));
        }
        let n = frames * height * width * channels;
        for (what, data) in [("activations", Some(&activations)), ("grad", grad.as_ref())] {
            let Some(data) = data else { continue };
            if data.len() != n {
                return Err(GcfError::InvalidConfig(format!(
                    "{what} has {} values, expected {n}",
                    data.len()
                )));
            }
            if data.iter().any(|v| !v.is_finite()) {
                return Err(GcfError::NonFinite {
                    context: what.to_string(),
                });
            }
        }
        Ok(Self {
            frames,
            height,
            width,
            channels,
            activations,
            grad,
        })
    }

    pub fn index(&self, t: usize, i: usize, j: usize, k: usize) -> usize {
        ((t * self.height + i) * self.width + j) * self.channels + k
    }

    pub fn at(&self, t: usize, i: usize, j: usize, k: usize) -> f64 {
        self.activations[self.index(t, i, j, k)]
    }
}

/// Spatially averaged gradients, `alpha[t, k]`.
pub fn grad_cam_weights(vol: &FeatureMapVolume) -> Result<Matrix> {
    let grad = vol
        .grad
        .as_ref()
        .ok_or_else(|| GcfError::InvalidConfig("volume carries no gradient".into()))?;
    let z = (vol.height * vol.width) as f64;
    let mut alpha = Matrix::zeros(vol.frames, vol.channels);
    for t in 0..vol.frames {
        let row = alpha.row_mut(t);
        for i in 0..vol.height {
            for j in 0..vol.width {
                let base = vol.index(t, i, j, 0);
                for (a, g) in row.iter_mut().zip(&grad[base..base + vol.channels]) {
                    *a += g;
                }
            }
        }
        row.iter_mut().for_each(|a| *a /= z);
    }
    Ok(alpha)
}

/// `M_t(i, j) = relu(sum_k alpha[t, k] A(t, i, j, k))`.
pub fn grad_cam_map(vol: &FeatureMapVolume, alpha: &Matrix) -> Result<Vec<HeatMap>> {
    if alpha.shape() != (vol.frames, vol.channels) {
        return Err(GcfError::shape(
            "grad_cam_map",
            alpha.shape(),
            (vol.frames, vol.channels),
        ));
    }
    let mut maps = Vec::with_capacity(vol.frames);
    for t in 0..vol.frames {
        let weights = alpha.row(t);
        let mut m = Matrix::zeros(vol.height, vol.width);
        for i in 0..vol.height {
            for j in 0..vol.width {
                let base = vol.index(t, i, j, 0);
                let s: f64 = weights
                    .iter()
                    .zip(&vol.activations[base..base + vol.channels])
                    .map(|(w, a)| w * a)
                    .sum();
                m.set(i, j, relu(s));
            }
        }
        maps.push(m);
    }
    Ok(maps)
}

/// Source coordinate for output index `o` with corners aligned.
fn source_coord(o: usize, out: usize, src: usize) -> f64 {
    if out == 1 {
        (src - 1) as f64 / 2.0
    } else {
        o as f64 * (src - 1) as f64 / (out - 1) as f64
    }
}

/// Bilinear resize with corner alignment: output corners sample input corners exactly.
/// A single output row or column samples the input's centre line.
pub fn resize_map(m: &HeatMap, out_h: usize, out_w: usize) -> Result<HeatMap> {
    if out_h == 0 || out_w == 0 || m.is_empty() {
        return Err(GcfError::InvalidConfig("map dimensions must be >= 1".into()));
    }
    let (h, w) = m.shape();
    let mut out = Matrix::zeros(out_h, out_w);
    for oy in 0..out_h {
        let y = source_coord(oy, out_h, h);
        let y0 = (y.floor() as usize).min(h - 1);
        let y1 = (y0 + 1).min(h - 1);
        let fy = y - y0 as f64;
        for ox in 0..out_w {
            let x = source_coord(ox, out_w, w);
            let x0 = (x.floor() as usize).min(w - 1);
            let x1 = (x0 + 1).min(w - 1);
            let fx = x - x0 as f64;
            let top = m.get(y0, x0) * (1.0 - fx) + m.get(y0, x1) * fx;
            let bottom = m.get(y1, x0) * (1.0 - fx) + m.get(y1, x1) * fx;
            out.set(oy, ox, top * (1.0 - fy) + bottom * fy);
        }
    }
    Ok(out)
}

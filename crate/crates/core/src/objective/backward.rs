use crate::error::{GcfError, Result};
use crate::fusion::fusion_backward;
use crate::head::ForwardTrace;
use crate::numerics::Matrix;
use crate::params::{GcfParams, ParamSet};

use super::loss::LossConfig;

/// `a b^T` for column vectors given as slices.
fn outer(a: &[f64], b: &[f64]) -> Matrix {
    let mut m = Matrix::zeros(a.len(), b.len());
    for (i, &x) in a.iter().enumerate() {
        for (o, &y) in m.row_mut(i).iter_mut().zip(b) {
            *o = x * y;
        }
    }
    m
}

/// `W^T x`.
fn transpose_times(w: &Matrix, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; w.cols()];
    for (r, &xr) in x.iter().enumerate() {
        for (o, &v) in out.iter_mut().zip(w.row(r)) {
            *o += v * xr;
        }
    }
    out
}

/// Exact gradient of the total loss of one video with respect to every parameter.
///
/// `params` must be the set the trace was computed with.
pub fn gcf_backward(trace: &ForwardTrace<'_>, label: usize, cfg: &LossConfig, params: &GcfParams) -> Result<GcfParams> {
    if !std::ptr::eq(trace.params(), params) && trace.params() != params {
        return Err(GcfError::stage(
            "backward",
            "trace was computed with different parameters",
        ));
    }
    backward_from_trace(trace, label, cfg)
}

pub(crate) fn backward_from_trace(trace: &ForwardTrace<'_>, label: usize, cfg: &LossConfig) -> Result<GcfParams> {
    let params = trace.params();
    let k = trace.y().len();
    if label >= k {
        return Err(GcfError::LabelOutOfRange { label, classes: k });
    }
    let mut grads = params.zeros_like();

    let mut d_logits = trace.y().to_vec();
    d_logits[label] -= 1.0;
    grads.classifier.w3 = outer(&d_logits, trace.v_prime());
    if let Some(b3) = &mut grads.classifier.b3 {
        b3.as_mut_slice().copy_from_slice(&d_logits);
    }
    let d_vp = transpose_times(&params.classifier.w3, &d_logits);

    let b = trace.b();
    let (clips, width) = b.shape();
    let d_r: Vec<f64> = d_vp.iter().map(|v| v / clips as f64).collect();

    let mut d_b = Matrix::zeros(clips, width);
    match (trace.gate(), params.gating.as_ref(), grads.gating.as_mut()) {
        (Some(gate), Some(gp), Some(gg)) => {
            let att = &gate.att;
            let mut d_u = vec![0.0; clips];
            for i in 0..clips {
                for (o, &dr) in d_b.row_mut(i).iter_mut().zip(&d_r) {
                    *o = (1.0 + att[i]) * dr;
                }
                let through_s: f64 = b.row(i).iter().zip(&d_r).map(|(x, y)| x * y).sum();
                let d_att = through_s + cfg.lambda * att[i].signum();
                d_u[i] = d_att * att[i] * (1.0 - att[i]);
            }
            gg.w2 = outer(&d_u, &gate.hidden);
            if let Some(b2) = &mut gg.b2 {
                b2.as_mut_slice().copy_from_slice(&d_u);
            }
            let d_z: Vec<f64> = transpose_times(&gp.w2, &d_u)
                .into_iter()
                .zip(&gate.hidden_pre)
                .map(|(d, &z)| if z > 0.0 { d } else { 0.0 })
                .collect();
            gg.w1 = outer(&d_z, &gate.g);
            if let Some(b1) = &mut gg.b1 {
                b1.as_mut_slice().copy_from_slice(&d_z);
            }
            let d_g = transpose_times(&gp.w1, &d_z);
            for (i, dg) in d_g.iter().enumerate() {
                let share = dg / width as f64;
                d_b.row_mut(i).iter_mut().for_each(|v| *v += share);
            }
        }
        (None, _, _) => {
            for i in 0..clips {
                d_b.row_mut(i).copy_from_slice(&d_r);
            }
        }
        _ => return Err(GcfError::stage("backward", "gate trace without gating parameters")),
    }

    let mut upstream = d_b;
    for (i, cache) in trace.fusion_caches().iter().enumerate().rev() {
        let g = fusion_backward(cache, &upstream)?;
        grads.fusion[i] = g.params;
        upstream = g.d_input;
    }
    Ok(grads)
}

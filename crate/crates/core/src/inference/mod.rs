//! Video-level prediction strategies, accuracy and temporal localization.

mod gradcam;

pub use gradcam::{grad_cam_map, grad_cam_weights, resize_map, FeatureMapVolume, HeatMap};

use serde::{Deserialize, Serialize};

use crate::error::{GcfError, Result};
use crate::fusion::ClipDescriptorSet;
use crate::head::gcf_forward;
use crate::numerics::{argmax, matmul, softmax, Matrix, Rng};
use crate::params::{glorot, GcfMode, GcfParams, ParamSet};

/// Repeats clips cyclically until there are `target` of them.
pub fn pad_clips(v: &ClipDescriptorSet, target: usize) -> Result<ClipDescriptorSet> {
    let c = v.clips();
    if target < c {
        return Err(GcfError::InvalidConfig(format!(
            "cannot pad {c} clips down to {target}; truncate explicitly"
        )));
    }
    let idx: Vec<usize> = (0..target).map(|t| t % c).collect();
    ClipDescriptorSet::new(v.matrix().select_rows(&idx))
}

/// Per-clip linear softmax classifier used by the central and dense baselines.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipClassifierParams {
    /// K x d
    pub w: Matrix,
}

impl ClipClassifierParams {
    pub fn init(classes: usize, dim: usize, rng: &mut Rng) -> Result<Self> {
        if classes < 2 {
            return Err(GcfError::InvalidConfig("classes must be >= 2".into()));
        }
        Ok(Self {
            w: glorot(classes, dim, dim, classes, rng),
        })
    }

    pub fn classes(&self) -> usize {
        self.w.rows()
    }

    pub fn dim(&self) -> usize {
        self.w.cols()
    }

    /// Class distribution for a single clip descriptor.
    pub fn clip_probs(&self, v: &ClipDescriptorSet, clip: usize) -> Result<Vec<f64>> {
        if v.dim() != self.dim() {
            return Err(GcfError::shape("clip_classifier", self.w.shape(), (v.dim(), 1)));
        }
        let x = Matrix::column(v.matrix().row(clip))?;
        Ok(softmax(matmul(&self.w, &x)?.as_slice()))
    }
}

impl ParamSet for ClipClassifierParams {
    fn tensors(&self) -> Vec<(String, &Matrix)> {
        vec![("clip_classifier.w".to_string(), &self.w)]
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        vec![("clip_classifier.w".to_string(), &mut self.w)]
    }
}

/// Index of the clip the central baseline looks at.
pub fn central_index(clips: usize) -> usize {
    clips / 2
}

pub fn central_clip_predict(v: &ClipDescriptorSet, clf: &ClipClassifierParams) -> Result<Vec<f64>> {
    clf.clip_probs(v, central_index(v.clips()))
}

/// Averages the middle `k` clips' predictions.
pub fn central_k_predict(v: &ClipDescriptorSet, clf: &ClipClassifierParams, k: usize) -> Result<Vec<f64>> {
    let c = v.clips();
    if k == 0 || k > c {
        return Err(GcfError::InvalidConfig(format!(
            "central-k must be in 1..={c}, got {k}"
        )));
    }
    let start = central_index(c) - k / 2;
    average_probs(v, clf, start..start + k)
}

fn average_probs(v: &ClipDescriptorSet, clf: &ClipClassifierParams, clips: std::ops::Range<usize>) -> Result<Vec<f64>> {
    // running mean, exact when every clip predicts the same distribution
    let mut acc = vec![0.0; clf.classes()];
    for (seen, t) in clips.enumerate() {
        let n = (seen + 1) as f64;
        for (a, p) in acc.iter_mut().zip(clf.clip_probs(v, t)?) {
            *a += (p - *a) / n;
        }
    }
    Ok(acc)
}

pub fn dense_clips_predict(v: &ClipDescriptorSet, clf: &ClipClassifierParams) -> Result<Vec<f64>> {
    average_probs(v, clf, 0..v.clips())
}

/// Class distribution and gate values (`None` without gating) for one video.
pub fn gcf_predict(v: &ClipDescriptorSet, params: &GcfParams, mode: GcfMode) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    let trace = gcf_forward(v, params, mode)?;
    Ok((trace.y().to_vec(), trace.att().map(<[f64]>::to_vec)))
}

pub fn top1_accuracy(predictions: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(GcfError::InvalidConfig(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if predictions.is_empty() {
        return Err(GcfError::Empty("predictions"));
    }
    let hits = predictions.iter().zip(labels).filter(|(y, &l)| argmax(y) == l).count();
    Ok(hits as f64 / labels.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationResult {
    pub relevant_clips: Vec<usize>,
    pub att: Vec<f64>,
    pub threshold: f64,
}

/// Clips whose gate value is strictly above `threshold`.
pub fn localize(att: &[f64], threshold: f64) -> LocalizationResult {
    LocalizationResult {
        relevant_clips: (0..att.len()).filter(|&i| att[i] > threshold).collect(),
        att: att.to_vec(),
        threshold,
    }
}

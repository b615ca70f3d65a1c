//! In-memory videos and the seeded synthetic benchmark generator.

use serde::{Deserialize, Serialize};

use crate::error::{GcfError, Result};
use crate::fusion::ClipDescriptorSet;
use crate::numerics::{Matrix, Rng, Stream};

/// One video's clip descriptors with optional label and relevance mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Video {
    pub descriptors: ClipDescriptorSet,
    pub label: Option<usize>,
    pub relevance: Option<Vec<bool>>,
}

impl Video {
    pub fn new(descriptors: ClipDescriptorSet, label: Option<usize>, relevance: Option<Vec<bool>>) -> Result<Self> {
        if let Some(mask) = &relevance {
            if mask.len() != descriptors.clips() {
                return Err(GcfError::InvalidConfig(format!(
                    "relevance mask has {} entries for {} clips",
                    mask.len(),
                    descriptors.clips()
                )));
            }
        }
        Ok(Self {
            descriptors,
            label,
            relevance,
        })
    }

    pub fn clips(&self) -> usize {
        self.descriptors.clips()
    }

    pub fn dim(&self) -> usize {
        self.descriptors.dim()
    }

    pub fn require_label(&self) -> Result<usize> {
        self.label
            .ok_or_else(|| GcfError::InvalidConfig("video has no label".into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    fn index(self) -> u8 {
        self as u8
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub train: Vec<Video>,
    pub val: Vec<Video>,
    pub test: Vec<Video>,
}

impl Dataset {
    pub fn split(&self, split: Split) -> &[Video] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn split_mut(&mut self, split: Split) -> &mut Vec<Video> {
        match split {
            Split::Train => &mut self.train,
            Split::Val => &mut self.val,
            Split::Test => &mut self.test,
        }
    }
}

/// What fills the clips outside the relevant run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackgroundMode {
    PureNoise,
    /// Noise, or with `distractor_probability` another class's prototype plus noise.
    #[default]
    DistractorPrototypes,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub num_classes: usize,
    pub clips_per_video: usize,
    pub descriptor_dim: usize,
    pub relevant_run_length: usize,
    pub prototype_noise_sigma: f64,
    pub background_mode: BackgroundMode,
    pub distractor_probability: f64,
    pub train_size: usize,
    pub val_size: usize,
    pub test_size: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self::bench_s(1)
    }
}

impl SynthConfig {
    pub fn bench_s(seed: u64) -> Self {
        Self {
            num_classes: 20,
            clips_per_video: 10,
            descriptor_dim: 64,
            relevant_run_length: 3,
            prototype_noise_sigma: 0.5,
            background_mode: BackgroundMode::DistractorPrototypes,
            distractor_probability: 0.5,
            train_size: 5000,
            val_size: 500,
            test_size: 1000,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(GcfError::InvalidConfig(m));
        if self.num_classes < 2 {
            return bad("num_classes must be >= 2".into());
        }
        if self.clips_per_video == 0 || self.descriptor_dim == 0 {
            return bad("clips_per_video and descriptor_dim must be >= 1".into());
        }
        if self.relevant_run_length == 0 || self.relevant_run_length > self.clips_per_video {
            return bad(format!(
                "relevant_run_length {} must be in 1..={}",
                self.relevant_run_length, self.clips_per_video
            ));
        }
        if !(self.prototype_noise_sigma >= 0.0 && self.prototype_noise_sigma.is_finite()) {
            return bad("prototype_noise_sigma must be >= 0".into());
        }
        if !(0.0..=1.0).contains(&self.distractor_probability) {
            return bad("distractor_probability must be in [0, 1]".into());
        }
        if self.train_size == 0 || self.val_size == 0 || self.test_size == 0 {
            return bad("split sizes must be >= 1".into());
        }
        Ok(())
    }

    pub fn size(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train_size,
            Split::Val => self.val_size,
            Split::Test => self.test_size,
        }
    }
}

/// One unit-norm prototype per class, drawn from the seed's data stream.
pub fn class_prototypes(cfg: &SynthConfig) -> Matrix {
    let mut rng = Rng::stream(cfg.seed, Stream::Data);
    let mut protos = rng.normal_matrix(cfg.num_classes, cfg.descriptor_dim, 1.0);
    for k in 0..cfg.num_classes {
        let row = protos.row_mut(k);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        row.iter_mut().for_each(|v| *v /= norm);
    }
    protos
}

fn synth_video(cfg: &SynthConfig, protos: &Matrix, split: Split, index: usize) -> Video {
    let mut rng = Rng::stream(
        cfg.seed,
        Stream::Video {
            split: split.index(),
            index: index as u32,
        },
    );
    let (c, d) = (cfg.clips_per_video, cfg.descriptor_dim);
    let label = rng.below(cfg.num_classes);
    let start = rng.below(c - cfg.relevant_run_length + 1);
    let mask: Vec<bool> = (0..c)
        .map(|t| t >= start && t < start + cfg.relevant_run_length)
        .collect();
    let mut m = Matrix::zeros(c, d);
    for (t, &relevant) in mask.iter().enumerate() {
        let base = if relevant {
            Some(label)
        } else if cfg.background_mode == BackgroundMode::DistractorPrototypes
            && rng.bernoulli(cfg.distractor_probability)
        {
            let other = rng.below(cfg.num_classes - 1);
            Some(if other >= label { other + 1 } else { other })
        } else {
            None
        };
        let row = m.row_mut(t);
        for (j, v) in row.iter_mut().enumerate() {
            let noise = cfg.prototype_noise_sigma * rng.normal();
            let x = base.map_or(0.0, |k| protos.get(k, j)) + noise;
            // stored as f32 on disk; keep memory and files identical
            *v = x as f32 as f64;
        }
    }
    Video {
        descriptors: ClipDescriptorSet::new(m).expect("non-empty"),
        label: Some(label),
        relevance: Some(mask),
    }
}

/// Deterministic train/val/test splits; each video has its own derived stream.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<Dataset> {
    cfg.validate()?;
    let protos = class_prototypes(cfg);
    let mut ds = Dataset::default();
    for split in Split::ALL {
        *ds.split_mut(split) = (0..cfg.size(split))
            .map(|i| synth_video(cfg, &protos, split, i))
            .collect();
    }
    Ok(ds)
}

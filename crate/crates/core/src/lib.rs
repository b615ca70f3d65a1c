//! Video-level fusion head over per-clip descriptors: inter-clip attention,
//! gated clip-wise re-weighting, training, baselines, localization and the
//! file formats the command-line tool reads and writes.

pub mod data;
pub mod error;
pub mod fusion;
pub mod head;
pub mod inference;
pub mod io;
pub mod numerics;
pub mod objective;
pub mod params;

pub use data::{generate_synthetic, Dataset, Split, SynthConfig, Video};
pub use error::{GcfError, Result};
pub use fusion::{AttentionNorm, BiDirectionalDescriptorSet, ClipDescriptorSet, FusionLayerParams};
pub use head::{gcf_forward, ClassifierParams, ForwardTrace, GatingParams};
pub use params::{GcfConfig, GcfMode, GcfParams, ParamSet};

//! `GCFK` checkpoint container.
//!
//! ```text
//! "GCFK" | version u32 LE | header length u64 LE | JSON header | f64 LE payload
//! ```
//!
//! The header describes the model, every tensor's name and shape, the optimizer,
//! schedule, shuffle stream and history; the payload holds the parameter
//! tensors followed by the momentum buffers, in header order.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{GcfError, Result};
use crate::inference::ClipClassifierParams;
use crate::numerics::{Matrix, Rng, RngState};
use crate::objective::{EpochRecord, PlateauScheduler, SgdConfig, SgdState, Trainer};
use crate::params::{GcfConfig, GcfParams, ParamSet};

use super::descriptor::write_bytes;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"GCFK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Parameter sets that can be rebuilt from a checkpoint header.
pub trait Checkpointable: ParamSet + Sized {
    const KIND: &'static str;

    fn model_config(&self) -> Value;

    /// Zero-valued parameters with the shapes described by `config`.
    fn from_model_config(config: &Value) -> Result<Self>;
}

impl Checkpointable for GcfParams {
    const KIND: &'static str = "gcf";

    fn model_config(&self) -> Value {
        serde_json::to_value(self.config).expect("config serializes")
    }

    fn from_model_config(config: &Value) -> Result<Self> {
        let cfg: GcfConfig = serde_json::from_value(config.clone())
            .map_err(|e| GcfError::InvalidConfig(format!("checkpoint model config: {e}")))?;
        GcfParams::zeros(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClipClassifierShape {
    pub classes: usize,
    pub dim: usize,
}

impl Checkpointable for ClipClassifierParams {
    const KIND: &'static str = "clip_classifier";

    fn model_config(&self) -> Value {
        serde_json::to_value(ClipClassifierShape {
            classes: self.classes(),
            dim: self.dim(),
        })
        .expect("shape serializes")
    }

    fn from_model_config(config: &Value) -> Result<Self> {
        let s: ClipClassifierShape = serde_json::from_value(config.clone())
            .map_err(|e| GcfError::InvalidConfig(format!("checkpoint model config: {e}")))?;
        if s.classes < 2 || s.dim == 0 {
            return Err(GcfError::InvalidConfig(format!(
                "bad classifier shape {}x{}",
                s.classes, s.dim
            )));
        }
        Ok(ClipClassifierParams {
            w: Matrix::zeros(s.classes, s.dim),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    kind: String,
    model: Value,
    tensors: Vec<TensorEntry>,
    sgd: SgdConfig,
    optimizer_steps: u64,
    scheduler: PlateauScheduler,
    rng: RngState,
    epoch: usize,
    finished: bool,
    history: Vec<EpochRecord>,
}

/// Compares two JSON objects key by key and names the first differing field.
fn first_difference(expected: &Value, found: &Value) -> Option<(String, String, String)> {
    match (expected, found) {
        (Value::Object(a), Value::Object(b)) => {
            for (k, va) in a {
                match b.get(k) {
                    None => return Some((k.clone(), va.to_string(), "missing".into())),
                    Some(vb) if va != vb => return Some((k.clone(), va.to_string(), vb.to_string())),
                    _ => {}
                }
            }
            b.keys()
                .find(|k| !a.contains_key(*k))
                .map(|k| (k.clone(), "absent".into(), b[k].to_string()))
        }
        _ if expected != found => Some(("model".into(), expected.to_string(), found.to_string())),
        _ => None,
    }
}

pub fn encode_checkpoint<P: Checkpointable>(t: &Trainer<P>) -> Result<Vec<u8>> {
    let tensors = t.params.tensors();
    let buffered = !t.optimizer.buffers.is_empty();
    if buffered && t.optimizer.buffers.len() != tensors.len() {
        return Err(GcfError::stage(
            "checkpoint",
            "optimizer buffers do not match parameters",
        ));
    }
    let header = Header {
        kind: P::KIND.to_string(),
        model: t.params.model_config(),
        tensors: tensors
            .iter()
            .map(|(n, m)| TensorEntry {
                name: n.clone(),
                rows: m.rows(),
                cols: m.cols(),
            })
            .collect(),
        sgd: t.sgd,
        optimizer_steps: t.optimizer.steps,
        scheduler: t.scheduler.clone(),
        rng: t.shuffle.state(),
        epoch: t.epoch,
        finished: t.finished,
        history: t.history.clone(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| GcfError::InvalidConfig(e.to_string()))?;
    let mut out = Vec::new();
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.push(buffered as u8);
    for (_, m) in &tensors {
        for v in m.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    for b in &t.optimizer.buffers {
        for v in b.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Parses a checkpoint; if `expected` is given the stored model config must equal it.
pub fn decode_checkpoint<P: Checkpointable>(bytes: &[u8], path: &Path, expected: Option<&Value>) -> Result<Trainer<P>> {
    let malformed = |offset: usize, detail: String| GcfError::Malformed {
        path: path.to_path_buf(),
        offset: offset as u64,
        detail,
    };
    let truncated = |offset: usize, expected: usize| GcfError::Truncated {
        path: path.to_path_buf(),
        offset: offset as u64,
        expected: expected as u64,
        actual: bytes.len() as u64,
    };
    if bytes.len() < 16 {
        return Err(truncated(0, 16));
    }
    if bytes[..4] != CHECKPOINT_MAGIC {
        return Err(GcfError::BadMagic {
            path: path.to_path_buf(),
            offset: 0,
            expected: CHECKPOINT_MAGIC,
            found: bytes[..4].try_into().expect("4 bytes"),
        });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(GcfError::Version {
            path: path.to_path_buf(),
            offset: 4,
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let hend = 16usize
        .checked_add(hlen)
        .filter(|&e| e < bytes.len())
        .ok_or_else(|| truncated(16, 16usize.saturating_add(hlen).saturating_add(1)))?;
    let header: Header = serde_json::from_slice(&bytes[16..hend]).map_err(|e| malformed(16, format!("header: {e}")))?;
    if header.kind != P::KIND {
        return Err(GcfError::CheckpointMismatch {
            field: "kind".into(),
            expected: P::KIND.into(),
            found: header.kind,
        });
    }
    if let Some(exp) = expected {
        if let Some((field, e, f)) = first_difference(exp, &header.model) {
            return Err(GcfError::CheckpointMismatch {
                field,
                expected: e,
                found: f,
            });
        }
    }
    let mut params = P::from_model_config(&header.model)?;
    {
        let tensors = params.tensors();
        let stored: Vec<(String, usize, usize)> = header
            .tensors
            .iter()
            .map(|t| (t.name.clone(), t.rows, t.cols))
            .collect();
        let built: Vec<(String, usize, usize)> = tensors.iter().map(|(n, m)| (n.clone(), m.rows(), m.cols())).collect();
        if stored != built {
            let field = stored
                .iter()
                .zip(&built)
                .find(|(a, b)| a != b)
                .map(|(a, _)| a.0.clone())
                .unwrap_or_else(|| "tensors".into());
            return Err(GcfError::CheckpointMismatch {
                field,
                expected: format!("{built:?}"),
                found: format!("{stored:?}"),
            });
        }
    }
    let buffered = match bytes[hend] {
        0 => false,
        1 => true,
        b => return Err(malformed(hend, format!("buffer flag must be 0 or 1, found {b}"))),
    };
    let n = params.entry_count();
    let total = n * if buffered { 2 } else { 1 };
    let payload = &bytes[hend + 1..];
    if payload.len() != 8 * total {
        if payload.len() < 8 * total {
            return Err(truncated(hend + 1, hend + 1 + 8 * total));
        }
        return Err(malformed(hend + 1 + 8 * total, "trailing bytes after payload".into()));
    }
    let mut values = Vec::with_capacity(total);
    for (i, chunk) in payload.chunks_exact(8).enumerate() {
        let v = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        if !v.is_finite() {
            return Err(malformed(hend + 1 + 8 * i, format!("non-finite value {v}")));
        }
        values.push(v);
    }
    params.load_flat(&values[..n])?;
    let buffers = if buffered {
        let mut b = params.zeros_like();
        b.load_flat(&values[n..])?;
        b.tensors().into_iter().map(|(_, m)| m.clone()).collect()
    } else {
        Vec::new()
    };
    let rng_state = header.rng;
    Ok(Trainer {
        params,
        sgd: header.sgd,
        optimizer: SgdState {
            steps: header.optimizer_steps,
            buffers,
        },
        scheduler: header.scheduler,
        shuffle: Rng::from_state(rng_state),
        epoch: header.epoch,
        history: header.history,
        finished: header.finished,
    })
}

pub fn write_checkpoint<P: Checkpointable>(t: &Trainer<P>, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), &encode_checkpoint(t)?)
}

pub fn read_checkpoint<P: Checkpointable>(path: impl AsRef<Path>, expected: Option<&Value>) -> Result<Trainer<P>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| GcfError::io(path, e))?;
    decode_checkpoint(&bytes, path, expected)
}

/// Kind tag and model config of a checkpoint, without loading tensors.
pub fn peek_checkpoint(path: impl AsRef<Path>) -> Result<(String, Value)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| GcfError::io(path, e))?;
    let gcf = decode_checkpoint::<GcfParams>(&bytes, path, None);
    match gcf {
        Ok(t) => Ok((GcfParams::KIND.into(), t.params.model_config())),
        Err(GcfError::CheckpointMismatch { field, found, .. }) if field == "kind" => {
            let t = decode_checkpoint::<ClipClassifierParams>(&bytes, path, None)?;
            let _ = found;
            Ok((ClipClassifierParams::KIND.into(), t.params.model_config()))
        }
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Stream;

    fn trainer() -> Trainer<GcfParams> {
        let mut rng = Rng::new(3);
        let p = GcfParams::init(GcfConfig::small(3, 4, 2, 3), &mut rng).unwrap();
        let mut t = Trainer::new(p.clone(), SgdConfig::default(), 5).unwrap();
        let mut g = p.zeros_like();
        for (_, m) in g.tensors_mut() {
            *m = rng.normal_matrix(m.rows(), m.cols(), 1.0);
        }
        crate::objective::sgd_step(&mut t.params, &g, &mut t.optimizer, &t.sgd, 0.1).unwrap();
        t.shuffle.shuffle(&mut [1, 2, 3, 4]);
        t.scheduler.observe(1.25);
        t.epoch = 1;
        t
    }

    #[test]
    fn round_trip_is_exact_and_idempotent() {
        let t = trainer();
        let bytes = encode_checkpoint(&t).unwrap();
        let back: Trainer<GcfParams> = decode_checkpoint(&bytes, Path::new("m"), None).unwrap();
        assert_eq!(back, t);
        assert_eq!(encode_checkpoint(&back).unwrap(), bytes);
    }

    #[test]
    fn fresh_trainer_has_no_buffers() {
        let p = ClipClassifierParams::init(3, 4, &mut Rng::stream(1, Stream::Init)).unwrap();
        let t = Trainer::new(p, SgdConfig::default(), 1).unwrap();
        let bytes = encode_checkpoint(&t).unwrap();
        let back: Trainer<ClipClassifierParams> = decode_checkpoint(&bytes, Path::new("m"), None).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn mismatched_config_names_field() {
        let t = trainer();
        let bytes = encode_checkpoint(&t).unwrap();
        let mut want = t.params.config;
        want.classes = 5;
        let exp = serde_json::to_value(want).unwrap();
        match decode_checkpoint::<GcfParams>(&bytes, Path::new("m"), Some(&exp)) {
            Err(GcfError::CheckpointMismatch { field, .. }) => assert_eq!(field, "classes"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            decode_checkpoint::<ClipClassifierParams>(&bytes, Path::new("m"), None),
            Err(GcfError::CheckpointMismatch { field, .. }) if field == "kind"
        ));
    }

    #[test]
    fn rejects_damage() {
        let bytes = encode_checkpoint(&trainer()).unwrap();
        let p = Path::new("m");
        let mut bad = bytes.clone();
        bad[1] = 0;
        assert!(matches!(
            decode_checkpoint::<GcfParams>(&bad, p, None),
            Err(GcfError::BadMagic { .. })
        ));
        assert!(matches!(
            decode_checkpoint::<GcfParams>(&bytes[..bytes.len() - 3], p, None),
            Err(GcfError::Truncated { .. })
        ));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(
            decode_checkpoint::<GcfParams>(&long, p, None),
            Err(GcfError::Malformed { .. })
        ));
        assert!(matches!(
            decode_checkpoint::<GcfParams>(&bytes[..10], p, None),
            Err(GcfError::Truncated { .. })
        ));
    }
}

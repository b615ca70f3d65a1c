//! `GCFD` clip-descriptor records.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "GCFD"
//! 4       4     format version, u32 LE (1)
//! 8       4     C, u32 LE
//! 12      4     d, u32 LE
//! 16      4     label, i32 LE (-1 = unlabelled)
//! 20      1     mask present (0/1)
//! 21      C     mask bytes (0/1), only if present
//! ..      4Cd   descriptors, f32 LE, row-major
//! ```
//!
//! A single-video file holds exactly one record; a pack file is records back to back.

use std::path::Path;

use crate::data::Video;
use crate::error::{GcfError, Result};
use crate::fusion::ClipDescriptorSet;
use crate::numerics::Matrix;

pub const DESCRIPTOR_MAGIC: [u8; 4] = *b"GCFD";
pub const DESCRIPTOR_VERSION: u32 = 1;
pub const DESCRIPTOR_HEADER_LEN: usize = 21;

/// Header fields of one record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DescriptorHeader {
    pub version: u32,
    pub clips: u32,
    pub dim: u32,
    pub label: i32,
    pub mask_present: bool,
}

impl DescriptorHeader {
    pub fn record_len(&self) -> u64 {
        let (c, d) = (self.clips as u64, self.dim as u64);
        DESCRIPTOR_HEADER_LEN as u64 + if self.mask_present { c } else { 0 } + 4 * c * d
    }
}

pub fn encode_video(video: &Video) -> Result<Vec<u8>> {
    let (c, d) = (video.clips(), video.dim());
    let clips = u32::try_from(c).map_err(|_| GcfError::InvalidConfig(format!("{c} clips do not fit u32")))?;
    let dim = u32::try_from(d).map_err(|_| GcfError::InvalidConfig(format!("width {d} does not fit u32")))?;
    let label = match video.label {
        None => -1,
        Some(l) => i32::try_from(l).map_err(|_| GcfError::InvalidConfig(format!("label {l} does not fit i32")))?,
    };
    let mut out = Vec::with_capacity(DESCRIPTOR_HEADER_LEN + c + 4 * c * d);
    out.extend_from_slice(&DESCRIPTOR_MAGIC);
    out.extend_from_slice(&DESCRIPTOR_VERSION.to_le_bytes());
    out.extend_from_slice(&clips.to_le_bytes());
    out.extend_from_slice(&dim.to_le_bytes());
    out.extend_from_slice(&label.to_le_bytes());
    out.push(video.relevance.is_some() as u8);
    if let Some(mask) = &video.relevance {
        out.extend(mask.iter().map(|&m| m as u8));
    }
    for &v in video.descriptors.matrix().as_slice() {
        let f = v as f32;
        if !f.is_finite() {
            return Err(GcfError::NonFinite {
                context: format!("descriptor value {v} as f32"),
            });
        }
        out.extend_from_slice(&f.to_le_bytes());
    }
    Ok(out)
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

fn truncated(path: &Path, offset: usize, expected: u64, actual: usize) -> GcfError {
    GcfError::Truncated {
        path: path.to_path_buf(),
        offset: offset as u64,
        expected,
        actual: actual as u64,
    }
}

/// Parses the header of the record starting at `offset`.
pub fn decode_header(bytes: &[u8], offset: usize, path: &Path) -> Result<DescriptorHeader> {
    let rest = &bytes[offset..];
    if rest.len() < 4 {
        return Err(truncated(path, offset, DESCRIPTOR_HEADER_LEN as u64, rest.len()));
    }
    if rest[..4] != DESCRIPTOR_MAGIC {
        return Err(GcfError::BadMagic {
            path: path.to_path_buf(),
            offset: offset as u64,
            expected: DESCRIPTOR_MAGIC,
            found: rest[..4].try_into().expect("4 bytes"),
        });
    }
    if rest.len() < 8 {
        return Err(truncated(path, offset, DESCRIPTOR_HEADER_LEN as u64, rest.len()));
    }
    let version = u32_at(rest, 4);
    if version != DESCRIPTOR_VERSION {
        return Err(GcfError::Version {
            path: path.to_path_buf(),
            offset: (offset + 4) as u64,
            found: version,
            expected: DESCRIPTOR_VERSION,
        });
    }
    if rest.len() < DESCRIPTOR_HEADER_LEN {
        return Err(truncated(path, offset, DESCRIPTOR_HEADER_LEN as u64, rest.len()));
    }
    let malformed = |at: usize, detail: String| GcfError::Malformed {
        path: path.to_path_buf(),
        offset: (offset + at) as u64,
        detail,
    };
    let clips = u32_at(rest, 8);
    let dim = u32_at(rest, 12);
    if clips == 0 || dim == 0 {
        return Err(malformed(8, format!("empty descriptor set {clips}x{dim}")));
    }
    let label = i32::from_le_bytes(rest[16..20].try_into().expect("4 bytes"));
    if label < -1 {
        return Err(malformed(16, format!("label {label} is neither -1 nor a class index")));
    }
    let mask_present = match rest[20] {
        0 => false,
        1 => true,
        b => return Err(malformed(20, format!("mask flag must be 0 or 1, found {b}"))),
    };
    Ok(DescriptorHeader {
        version,
        clips,
        dim,
        label,
        mask_present,
    })
}

/// Decodes the record at `offset`; returns it with the offset just past it.
pub fn decode_record(bytes: &[u8], offset: usize, path: &Path) -> Result<(Video, usize)> {
    let h = decode_header(bytes, offset, path)?;
    let len = h.record_len();
    let available = bytes.len() - offset;
    if (available as u64) < len {
        return Err(truncated(path, offset, len, available));
    }
    let (c, d) = (h.clips as usize, h.dim as usize);
    let mut at = offset + DESCRIPTOR_HEADER_LEN;
    let relevance = if h.mask_present {
        let mut mask = Vec::with_capacity(c);
        for (i, &b) in bytes[at..at + c].iter().enumerate() {
            match b {
                0 => mask.push(false),
                1 => mask.push(true),
                _ => {
                    return Err(GcfError::Malformed {
                        path: path.to_path_buf(),
                        offset: (at + i) as u64,
                        detail: format!("mask byte must be 0 or 1, found {b}"),
                    })
                }
            }
        }
        at += c;
        Some(mask)
    } else {
        None
    };
    let mut data = Vec::with_capacity(c * d);
    for i in 0..c * d {
        let p = at + 4 * i;
        let f = f32::from_le_bytes(bytes[p..p + 4].try_into().expect("4 bytes"));
        if !f.is_finite() {
            return Err(GcfError::Malformed {
                path: path.to_path_buf(),
                offset: p as u64,
                detail: format!("non-finite descriptor value {f}"),
            });
        }
        data.push(f as f64);
    }
    let descriptors = ClipDescriptorSet::new(Matrix::new(c, d, data)?)?;
    let label = (h.label >= 0).then_some(h.label as usize);
    let video = Video::new(descriptors, label, relevance)?;
    Ok((video, offset + len as usize))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| GcfError::io(path, e))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| GcfError::io(path, e))
}

/// Reads a file holding exactly one record.
pub fn read_descriptor_file(path: impl AsRef<Path>) -> Result<Video> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    let (video, end) = decode_record(&bytes, 0, path)?;
    if end != bytes.len() {
        return Err(GcfError::Malformed {
            path: path.to_path_buf(),
            offset: end as u64,
            detail: format!("{} trailing bytes after the record", bytes.len() - end),
        });
    }
    Ok(video)
}

pub fn write_descriptor_file(video: &Video, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), &encode_video(video)?)
}

/// Reads every record of a pack file.
pub fn read_descriptor_pack(path: impl AsRef<Path>) -> Result<Vec<Video>> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    let mut videos = Vec::new();
    let mut at = 0;
    while at < bytes.len() {
        let (v, next) = decode_record(&bytes, at, path)?;
        videos.push(v);
        at = next;
    }
    Ok(videos)
}

pub fn encode_pack(videos: &[Video]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for v in videos {
        out.extend(encode_video(v)?);
    }
    Ok(out)
}

pub fn write_descriptor_pack(videos: &[Video], path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), &encode_pack(videos)?)
}

/// Headers of every record in a file, with their byte offsets.
pub fn scan_headers(path: impl AsRef<Path>) -> Result<Vec<(u64, DescriptorHeader)>> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    let mut out = Vec::new();
    let mut at = 0;
    while at < bytes.len() {
        let h = decode_header(&bytes, at, path)?;
        let len = h.record_len();
        if ((bytes.len() - at) as u64) < len {
            return Err(truncated(path, at, len, bytes.len() - at));
        }
        out.push((at as u64, h));
        at += len as usize;
    }
    Ok(out)
}

//! File formats: descriptor records, checkpoints, configs, manifests and records.

mod checkpoint;
mod descriptor;
mod records;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, peek_checkpoint, read_checkpoint, write_checkpoint, Checkpointable,
    ClipClassifierShape, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use descriptor::{
    decode_header, decode_record, encode_pack, encode_video, read_descriptor_file, read_descriptor_pack, scan_headers,
    write_descriptor_file, write_descriptor_pack, DescriptorHeader, DESCRIPTOR_HEADER_LEN, DESCRIPTOR_MAGIC,
    DESCRIPTOR_VERSION,
};
pub use records::{
    append_jsonl, read_jsonl, read_toml, sha256_hex, ExperimentConfig, Manifest, ManifestEntry, ModelKind,
};

use gcf_core::io::{
    append_jsonl, read_checkpoint, read_descriptor_file, read_descriptor_pack, read_jsonl, sha256_hex,
    write_checkpoint, write_descriptor_file, write_descriptor_pack, Manifest, ManifestEntry,
};
use gcf_core::numerics::{Rng, Stream};
use gcf_core::objective::{EpochRecord, GcfObjective, LossConfig, SgdConfig, Trainer};
use gcf_core::{generate_synthetic, GcfConfig, GcfError, GcfParams, Split, SynthConfig};

fn tiny(seed: u64) -> SynthConfig {
    SynthConfig {
        num_classes: 3,
        clips_per_video: 4,
        descriptor_dim: 6,
        relevant_run_length: 2,
        train_size: 48,
        val_size: 12,
        test_size: 12,
        ..SynthConfig::bench_s(seed)
    }
}

#[test]
fn descriptor_file_round_trip_and_truncation() {
    let dir = tempfile::tempdir().unwrap();
    let ds = generate_synthetic(&tiny(3)).unwrap();
    let p = dir.path().join("v.gcfd");
    write_descriptor_file(&ds.train[0], &p).unwrap();
    let first = std::fs::read(&p).unwrap();
    assert_eq!(first.len(), 21 + 4 + 4 * 4 * 6);
    let back = read_descriptor_file(&p).unwrap();
    assert_eq!(back, ds.train[0]);
    write_descriptor_file(&back, &p).unwrap();
    assert_eq!(std::fs::read(&p).unwrap(), first);

    std::fs::write(&p, &first[..first.len() - 1]).unwrap();
    match read_descriptor_file(&p) {
        Err(GcfError::Truncated { expected, actual, .. }) => {
            assert_eq!(expected, first.len() as u64);
            assert_eq!(actual, first.len() as u64 - 1);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn synthetic_packs_are_byte_identical_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let mut sums = Vec::new();
    for run in 0..2 {
        let ds = generate_synthetic(&tiny(7)).unwrap();
        let p = dir.path().join(format!("train{run}.gcfd"));
        write_descriptor_pack(&ds.train, &p).unwrap();
        sums.push(sha256_hex(&std::fs::read(&p).unwrap()));
        assert_eq!(read_descriptor_pack(&p).unwrap(), ds.train);
    }
    assert_eq!(sums[0], sums[1]);
}

#[test]
fn manifest_round_trip_and_verify() {
    let dir = tempfile::tempdir().unwrap();
    let ds = generate_synthetic(&tiny(2)).unwrap();
    let mut files = Vec::new();
    for split in Split::ALL {
        let name = format!("{}.gcfd", split.name());
        let p = dir.path().join(&name);
        write_descriptor_pack(ds.split(split), &p).unwrap();
        files.push(ManifestEntry {
            split,
            path: name.into(),
            videos: ds.split(split).len(),
            sha256: sha256_hex(&std::fs::read(&p).unwrap()),
        });
    }
    let m = Manifest {
        format_version: 1,
        command: vec!["gcf".into(), "synth".into()],
        seed: 2,
        synth: Some(tiny(2)),
        files,
    };
    let mp = dir.path().join("manifest.json");
    m.write(&mp).unwrap();
    let back = Manifest::read(&mp).unwrap();
    assert_eq!(back, m);
    back.verify(dir.path()).unwrap();
    std::fs::write(dir.path().join("val.gcfd"), b"GCFD").unwrap();
    assert!(back.verify(dir.path()).is_err());
}

fn trainer(seed: u64, max_epochs: usize) -> Trainer<GcfParams> {
    let cfg = GcfConfig {
        gate_hidden: 4,
        ..GcfConfig::small(4, 6, 4, 3)
    };
    let p = GcfParams::init(cfg, &mut Rng::stream(seed, Stream::Init)).unwrap();
    let sgd = SgdConfig {
        batch_size: 8,
        max_epochs,
        ..SgdConfig::default()
    };
    Trainer::new(p, sgd, seed).unwrap()
}

#[test]
fn resume_through_checkpoint_file_is_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let ds = generate_synthetic(&tiny(5)).unwrap();
    let obj = GcfObjective {
        loss: LossConfig::default(),
    };

    let mut straight = trainer(5, 5);
    straight.run(&obj, &ds.train, &ds.val, Some(5), |_| {}).unwrap();

    let mut first = trainer(5, 5);
    first.run(&obj, &ds.train, &ds.val, Some(2), |_| {}).unwrap();
    let ck = dir.path().join("ck.gcfk");
    write_checkpoint(&first, &ck).unwrap();
    let mut resumed: Trainer<GcfParams> = read_checkpoint(&ck, None).unwrap();
    assert_eq!(resumed, first);
    resumed.run(&obj, &ds.train, &ds.val, Some(5), |_| {}).unwrap();
    assert_eq!(resumed, straight);

    let a = dir.path().join("a.gcfk");
    let b = dir.path().join("b.gcfk");
    write_checkpoint(&straight, &a).unwrap();
    write_checkpoint(&resumed, &b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    // save -> load -> save
    let reread: Trainer<GcfParams> = read_checkpoint(&a, None).unwrap();
    write_checkpoint(&reread, &b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn history_lines_parse_back() {
    let dir = tempfile::tempdir().unwrap();
    let ds = generate_synthetic(&tiny(6)).unwrap();
    let obj = GcfObjective {
        loss: LossConfig::default(),
    };
    let p = dir.path().join("history.jsonl");
    let mut t = trainer(6, 3);
    t.run(&obj, &ds.train, &ds.val, None, |r| append_jsonl(&p, r).unwrap())
        .unwrap();
    let back: Vec<EpochRecord> = read_jsonl(&p).unwrap();
    assert_eq!(back, t.history);
    for line in std::fs::read_to_string(&p).unwrap().lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v.get("val_loss").is_some());
    }
}

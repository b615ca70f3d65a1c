use std::io::Write as _;
use std::path::{Path, PathBuf};

use gcf_core::data::BackgroundMode;
use gcf_core::inference;
use gcf_core::inference::{
    central_k_predict, dense_clips_predict, gcf_predict, grad_cam_map, grad_cam_weights, pad_clips, resize_map,
    top1_accuracy, ClipClassifierParams, FeatureMapVolume,
};
use gcf_core::io::{
    append_jsonl, encode_pack, peek_checkpoint, read_checkpoint, read_descriptor_pack, read_toml, scan_headers,
    sha256_hex, write_checkpoint, Checkpointable, ExperimentConfig, Manifest, ManifestEntry, ModelKind,
    CHECKPOINT_MAGIC, DESCRIPTOR_MAGIC,
};
use gcf_core::numerics::Rng;
use gcf_core::numerics::Stream;
use gcf_core::objective::{
    count_flops, count_params, default_grid, measure_counts, ClipObjective, EpochRecord, GcfObjective, Objective,
    Trainer, REFERENCE_BACKBONE_PARAMS,
};
use gcf_core::{generate_synthetic, GcfConfig, GcfError, GcfParams, ParamSet, Split, SynthConfig, Video};
use serde_json::{json, Value};

use crate::failure::Failure;
use crate::{
    CountArgs, EvalArgs, GradcheckArgs, InputArgs, InspectArgs, LocalizeArgs, ModelArg, PredictArgs, ShapeArgs,
    SplitArg, StrategyArg, SynthArgs, TrainArgs,
};

/// Writes one stdout line; a closed pipe ends the process quietly.
macro_rules! out {
    ($($arg:tt)*) => {
        emit(format_args!($($arg)*))?
    };
}

fn emit(args: std::fmt::Arguments<'_>) -> Result<(), Failure> {
    match writeln!(std::io::stdout().lock(), "{args}") {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => std::process::exit(0),
        Err(e) => Err(io_err(Path::new("<stdout>"), e)),
    }
}

const MANIFEST_FILE: &str = "manifest.json";
const MANIFEST_VERSION: u32 = 1;

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure {
        kind: "io".into(),
        ..Failure::validation(format!("{}: {e}", path.display()))
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Accepts either a dataset directory or a manifest path.
fn open_manifest(data: &Path) -> Result<(PathBuf, Manifest), Failure> {
    let (dir, file) = if data.is_dir() {
        (data.to_path_buf(), data.join(MANIFEST_FILE))
    } else {
        (
            data.parent().unwrap_or(Path::new(".")).to_path_buf(),
            data.to_path_buf(),
        )
    };
    let manifest = Manifest::read(&file)?;
    if manifest.format_version != MANIFEST_VERSION {
        return Err(Failure::validation(format!(
            "{}: manifest format_version {} (expected {MANIFEST_VERSION})",
            file.display(),
            manifest.format_version
        )));
    }
    Ok((dir, manifest))
}

fn load_split(dir: &Path, manifest: &Manifest, split: Split) -> Result<Vec<Video>, Failure> {
    let entry = manifest
        .entry(split)
        .ok_or_else(|| Failure::validation(format!("manifest has no {} split", split.name())))?;
    let path = dir.join(&entry.path);
    let bytes = std::fs::read(&path).map_err(|e| io_err(&path, e))?;
    let found = sha256_hex(&bytes);
    if found != entry.sha256 {
        return Err(Failure::validation(format!(
            "{}: checksum {found} does not match manifest {}",
            path.display(),
            entry.sha256
        )));
    }
    let videos = read_descriptor_pack(&path)?;
    if videos.len() != entry.videos {
        return Err(Failure::validation(format!(
            "{}: {} videos, manifest lists {}",
            path.display(),
            videos.len(),
            entry.videos
        )));
    }
    Ok(videos)
}

fn load_input(input: &InputArgs) -> Result<Vec<Video>, Failure> {
    match (&input.input, &input.data) {
        (Some(p), _) => Ok(read_descriptor_pack(p)?),
        (None, Some(d)) => {
            let (dir, m) = open_manifest(d)?;
            load_split(&dir, &m, input.split.into())
        }
        (None, None) => Err(Failure::usage("one of --input or --data is required")),
    }
}

fn labels(videos: &[Video]) -> Result<Vec<usize>, Failure> {
    videos
        .iter()
        .map(|v| v.require_label().map_err(Failure::from))
        .collect()
}

pub fn synth(a: SynthArgs) -> Result<(), Failure> {
    let mut cfg = match &a.config {
        Some(p) => read_toml::<SynthConfig>(p)?,
        None => SynthConfig::bench_s(1),
    };
    macro_rules! set {
        ($($flag:ident => $field:ident),*) => {$(
            if let Some(v) = a.$flag { cfg.$field = v; }
        )*};
    }
    set!(seed => seed, classes => num_classes, clips => clips_per_video, dim => descriptor_dim,
         run_length => relevant_run_length, sigma => prototype_noise_sigma,
         distractor_probability => distractor_probability, train_size => train_size,
         val_size => val_size, test_size => test_size);
    if a.pure_noise {
        cfg.background_mode = BackgroundMode::PureNoise;
    }
    let data = generate_synthetic(&cfg)?;
    std::fs::create_dir_all(&a.out).map_err(|e| io_err(&a.out, e))?;
    let mut files = Vec::new();
    for split in Split::ALL {
        let videos = data.split(split);
        let bytes = encode_pack(videos)?;
        let name = format!("{}.gcfd", split.name());
        let path = a.out.join(&name);
        std::fs::write(&path, &bytes).map_err(|e| io_err(&path, e))?;
        files.push(ManifestEntry {
            split,
            path: PathBuf::from(name),
            videos: videos.len(),
            sha256: sha256_hex(&bytes),
        });
    }
    let manifest = Manifest {
        format_version: MANIFEST_VERSION,
        command: std::env::args().collect(),
        seed: cfg.seed,
        synth: Some(cfg),
        files,
    };
    manifest.write(a.out.join(MANIFEST_FILE))?;
    for e in &manifest.files {
        out!("{} {} videos sha256={}", e.path.display(), e.videos, e.sha256);
    }
    Ok(())
}

fn experiment_config(a: &TrainArgs, train: &[Video], manifest: &Manifest) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &a.config {
        Some(p) => ExperimentConfig::read(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(m) = a.model {
        cfg.model_kind = match m {
            ModelArg::Gcf => ModelKind::Gcf,
            ModelArg::ClipClassifier => ModelKind::ClipClassifier,
        };
    }
    let first = train
        .first()
        .ok_or_else(|| Failure::validation("training split is empty"))?;
    cfg.model.input_dim = first.dim();
    cfg.model.classes = match manifest.synth {
        Some(s) => s.num_classes,
        None => labels(train)?.into_iter().max().map_or(0, |k| k + 1),
    };
    if a.config.is_none() {
        cfg.model.clips = train.iter().map(Video::clips).max().unwrap_or(1);
        cfg.model.gate_hidden = cfg.model.clips;
    }
    if let Some(v) = a.mode {
        cfg.model.mode = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.lambda {
        cfg.loss.lambda = v;
    }
    if let Some(v) = a.lr {
        cfg.sgd.lr = v;
    }
    if let Some(v) = a.max_epochs {
        cfg.sgd.max_epochs = v;
    }
    if let Some(v) = a.batch_size {
        cfg.sgd.batch_size = v;
    }
    if let Some(v) = a.clips {
        cfg.model.clips = v;
    }
    if let Some(v) = a.fused_dim {
        cfg.model.fused_dim = v;
    }
    if let Some(v) = a.layers {
        cfg.model.layers = v;
    }
    if let Some(v) = a.gate_hidden {
        cfg.model.gate_hidden = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn fit<P: Checkpointable, O: Objective<Params = P>>(
    a: &TrainArgs,
    obj: &O,
    fresh: impl FnOnce() -> Result<P, GcfError>,
    expected: Value,
    cfg: &ExperimentConfig,
    train: &[Video],
    val: &[Video],
) -> Result<Trainer<P>, Failure> {
    let history = a.out.join("history.jsonl");
    let mut trainer = match &a.resume {
        Some(p) => {
            let mut t = read_checkpoint::<P>(p, Some(&expected))?;
            if let Some(e) = a.max_epochs {
                t.sgd.max_epochs = e;
            }
            t
        }
        None => {
            if history.exists() {
                std::fs::remove_file(&history).map_err(|e| io_err(&history, e))?;
            }
            Trainer::new(fresh()?, cfg.sgd, cfg.seed)?
        }
    };
    let mut failed = None;
    trainer.run(obj, train, val, None, |r: &EpochRecord| {
        if !a.quiet {
            eprintln!(
                "epoch {:>3} lr {:.0e} train_loss {:.4} train_acc {:.3} val_loss {:.4} val_acc {:.3}",
                r.epoch, r.lr, r.train_loss, r.train_acc, r.val_loss, r.val_acc
            );
        }
        if failed.is_none() {
            failed = append_jsonl(&history, r).err();
        }
    })?;
    if let Some(e) = failed {
        return Err(e.into());
    }
    write_checkpoint(&trainer, a.out.join("checkpoint.gcfk"))?;
    Ok(trainer)
}

pub fn train(a: TrainArgs) -> Result<(), Failure> {
    let (dir, manifest) = open_manifest(&a.data)?;
    let train = load_split(&dir, &manifest, Split::Train)?;
    let val = load_split(&dir, &manifest, Split::Val)?;
    let cfg = experiment_config(&a, &train, &manifest)?;
    std::fs::create_dir_all(&a.out).map_err(|e| io_err(&a.out, e))?;
    if let Some(v) = train.iter().chain(&val).find(|v| v.dim() != cfg.model.input_dim) {
        return Err(Failure::validation(format!(
            "descriptor width {} differs from {}",
            v.dim(),
            cfg.model.input_dim
        )));
    }
    let summary = match cfg.model_kind {
        ModelKind::Gcf => {
            if let Some(v) = train.iter().chain(&val).find(|v| v.clips() > cfg.model.clips) {
                return Err(Failure::validation(format!(
                    "video has {} clips but the head takes {}",
                    v.clips(),
                    cfg.model.clips
                )));
            }
            let mut rng = Rng::stream(cfg.seed, Stream::Init);
            let expected = json!(cfg.model);
            let t = fit(
                &a,
                &GcfObjective { loss: cfg.loss },
                || GcfParams::init(cfg.model, &mut rng),
                expected,
                &cfg,
                &train,
                &val,
            )?;
            (t.epoch, t.history.last().cloned(), t.params.entry_count())
        }
        ModelKind::ClipClassifier => {
            let mut rng = Rng::stream(cfg.seed, Stream::Init);
            let (k, d) = (cfg.model.classes, cfg.model.input_dim);
            let expected = json!({ "classes": k, "dim": d });
            let t = fit(
                &a,
                &ClipObjective,
                || ClipClassifierParams::init(k, d, &mut rng),
                expected,
                &cfg,
                &train,
                &val,
            )?;
            (t.epoch, t.history.last().cloned(), t.params.entry_count())
        }
    };
    let (epochs, last, params) = summary;
    let run = json!({
        "command": std::env::args().collect::<Vec<_>>(),
        "config": cfg,
        "data_seed": manifest.seed,
        "epochs": epochs,
        "params": params,
        "final": last,
    });
    write_text(&a.out.join("run.json"), &format!("{:#}\n", run))?;
    match last {
        Some(r) => out!("epochs={epochs} val_loss={:.6} val_acc={:.4}", r.val_loss, r.val_acc),
        None => out!("epochs={epochs}"),
    }
    Ok(())
}

fn gcf_probs(params: &GcfParams, v: &Video) -> Result<(Vec<f64>, Option<Vec<f64>>), Failure> {
    let padded = pad_clips(&v.descriptors, params.config.clips)?;
    Ok(gcf_predict(&padded, params, params.config.mode)?)
}

pub fn eval(a: EvalArgs) -> Result<(), Failure> {
    if a.gcf.is_none() && a.baseline.is_none() {
        return Err(Failure::usage("eval needs --gcf, --baseline or both"));
    }
    if a.gate && (a.gcf.is_none() || a.baseline.is_none()) {
        return Err(Failure::usage(
            "--gate compares the gcf and dense rows; pass both checkpoints",
        ));
    }
    let (dir, manifest) = open_manifest(&a.data)?;
    let videos = load_split(&dir, &manifest, a.split.into())?;
    let ys = labels(&videos)?;
    let mut rows: Vec<(String, f64)> = Vec::new();
    if let Some(p) = &a.baseline {
        let clf = read_checkpoint::<ClipClassifierParams>(p, None)?.params;
        let central: Vec<_> = videos
            .iter()
            .map(|v| central_k_predict(&v.descriptors, &clf, a.central_k))
            .collect::<Result<_, _>>()?;
        let dense: Vec<_> = videos
            .iter()
            .map(|v| dense_clips_predict(&v.descriptors, &clf))
            .collect::<Result<_, _>>()?;
        rows.push(("central".into(), top1_accuracy(&central, &ys)?));
        rows.push(("dense".into(), top1_accuracy(&dense, &ys)?));
    }
    if let Some(p) = &a.gcf {
        let params = read_checkpoint::<GcfParams>(p, None)?.params;
        let preds: Vec<_> = videos
            .iter()
            .map(|v| gcf_probs(&params, v).map(|(y, _)| y))
            .collect::<Result<_, _>>()?;
        rows.push((
            format!("gcf[{}]", params.config.mode.name()),
            top1_accuracy(&preds, &ys)?,
        ));
    }
    if a.json {
        for (name, acc) in &rows {
            out!(
                "{}",
                json!({ "strategy": name, "split": Split::from(a.split).name(), "top1": acc, "videos": videos.len() })
            );
        }
    } else {
        out!("{:<24} {:>8}", "strategy", "top-1");
        for (name, acc) in &rows {
            out!("{name:<24} {:>7.2}%", acc * 100.0);
        }
    }
    if a.gate {
        let dense = rows.iter().find(|r| r.0 == "dense").map(|r| r.1).unwrap_or(0.0);
        let gcf = rows.last().map(|r| r.1).unwrap_or(0.0);
        if gcf < dense {
            return Err(Failure::gate(format!(
                "gcf top-1 {gcf:.4} below dense top-1 {dense:.4}"
            )));
        }
    }
    Ok(())
}

pub fn predict(a: PredictArgs) -> Result<(), Failure> {
    let videos = load_input(&a.input)?;
    let (kind, _) = peek_checkpoint(&a.model)?;
    let probs: Vec<Vec<f64>> = if kind == GcfParams::KIND {
        let params = read_checkpoint::<GcfParams>(&a.model, None)?.params;
        videos
            .iter()
            .map(|v| gcf_probs(&params, v).map(|(y, _)| y))
            .collect::<Result<_, _>>()?
    } else {
        let clf = read_checkpoint::<ClipClassifierParams>(&a.model, None)?.params;
        videos
            .iter()
            .map(|v| match a.strategy {
                StrategyArg::Central => central_k_predict(&v.descriptors, &clf, 1),
                StrategyArg::Dense => dense_clips_predict(&v.descriptors, &clf),
            })
            .collect::<Result<_, _>>()?
    };
    for (i, y) in probs.iter().enumerate() {
        let class = gcf_core::numerics::argmax(y);
        let line = json!({ "index": i, "class": class, "prob": y[class], "probs": y });
        out!("{line}");
    }
    Ok(())
}

fn parse_size(s: &str) -> Result<(usize, usize), Failure> {
    let bad = || Failure::usage(format!("--resize expects HEIGHTxWIDTH, got `{s}`"));
    let (h, w) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    let h: usize = h.trim().parse().map_err(|_| bad())?;
    let w: usize = w.trim().parse().map_err(|_| bad())?;
    if h == 0 || w == 0 {
        return Err(bad());
    }
    Ok((h, w))
}

pub fn localize(a: LocalizeArgs) -> Result<(), Failure> {
    if !(0.0..=1.0).contains(&a.threshold) {
        return Err(Failure::validation(format!("threshold {} outside [0, 1]", a.threshold)));
    }
    if let Some(vol_path) = &a.volume {
        let text = std::fs::read_to_string(vol_path).map_err(|e| io_err(vol_path, e))?;
        let raw: FeatureMapVolume =
            serde_json::from_str(&text).map_err(|e| Failure::validation(format!("{}: {e}", vol_path.display())))?;
        let vol = FeatureMapVolume::new(
            raw.frames,
            raw.height,
            raw.width,
            raw.channels,
            raw.activations,
            raw.grad,
        )?;
        let alpha = grad_cam_weights(&vol)?;
        let mut maps = grad_cam_map(&vol, &alpha)?;
        if let Some(s) = &a.resize {
            let (h, w) = parse_size(s)?;
            maps = maps.iter().map(|m| resize_map(m, h, w)).collect::<Result<_, _>>()?;
        }
        let frames: Vec<Vec<Vec<f64>>> = maps
            .iter()
            .map(|m| (0..m.rows()).map(|r| m.row(r).to_vec()).collect())
            .collect();
        let record = json!({ "frames": frames.len(), "maps": frames });
        match &a.out {
            Some(p) => write_text(p, &format!("{record}\n"))?,
            None => out!("{record}"),
        }
        return Ok(());
    }
    let model = a.model.as_ref().expect("clap requires --model or --volume");
    let params = read_checkpoint::<GcfParams>(model, None)?.params;
    if !params.config.mode.uses_gating() {
        return Err(Failure::validation(format!(
            "mode {} has no gate to localize with",
            params.config.mode.name()
        )));
    }
    let videos = load_input(&a.input)?;
    for (i, v) in videos.iter().enumerate() {
        let (_, att) = gcf_probs(&params, v)?;
        let att = att.expect("gating modes report att");
        let r = inference::localize(&att, a.threshold);
        out!(
            "{}",
            json!({ "index": i, "relevant_clips": r.relevant_clips, "att": r.att })
        );
    }
    Ok(())
}

fn shape_config(s: &ShapeArgs) -> Result<GcfConfig, Failure> {
    let mut cfg = match &s.config {
        Some(p) => ExperimentConfig::read(p)?.model,
        None => GcfConfig::bench_s(),
    };
    if let Some(v) = s.clips {
        cfg.clips = v;
        if s.gate_hidden.is_none() && s.config.is_none() {
            cfg.gate_hidden = v;
        }
    }
    if let Some(v) = s.dim {
        cfg.input_dim = v;
    }
    if let Some(v) = s.fused_dim {
        cfg.fused_dim = v;
    }
    if let Some(v) = s.classes {
        cfg.classes = v;
    }
    if let Some(v) = s.layers {
        cfg.layers = v;
    }
    if let Some(v) = s.gate_hidden {
        cfg.gate_hidden = v;
    }
    if let Some(v) = s.mode {
        cfg.mode = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn shape_given(s: &ShapeArgs) -> bool {
    s.config.is_some()
        || s.clips.is_some()
        || s.dim.is_some()
        || s.fused_dim.is_some()
        || s.classes.is_some()
        || s.layers.is_some()
        || s.gate_hidden.is_some()
        || s.mode.is_some()
}

pub fn gradcheck(a: GradcheckArgs) -> Result<(), Failure> {
    if a.grid && shape_given(&a.shape) {
        return Err(Failure::usage("--grid cannot be combined with shape flags"));
    }
    let cases = if a.grid {
        default_grid()
    } else if shape_given(&a.shape) {
        vec![(shape_config(&a.shape)?, a.lambda)]
    } else {
        vec![(GcfConfig::small(4, 3, 2, 3), a.lambda)]
    };
    let mut worst = 0.0f64;
    let mut worst_tensor = String::new();
    let mut coordinates = 0;
    for (cfg, lambda) in &cases {
        let r = gcf_core::objective::gradcheck(cfg, *lambda, a.seed)?;
        coordinates += r.coordinates;
        if r.max_rel_err > worst || worst_tensor.is_empty() {
            worst = worst.max(r.max_rel_err);
            worst_tensor = r.worst_tensor;
        }
    }
    let verdict = if worst < a.tol { "<" } else { ">=" };
    out!(
        "configs={} coordinates={coordinates} worst_tensor={worst_tensor} max_rel_err={worst:.3e} {verdict} {:e}",
        cases.len(),
        a.tol
    );
    if worst >= a.tol {
        return Err(Failure::gate(format!(
            "max_rel_err {worst:.3e} in {worst_tensor} exceeds {:e}",
            a.tol
        )));
    }
    Ok(())
}

pub fn count(a: CountArgs) -> Result<(), Failure> {
    let cfg = shape_config(&a.shape)?;
    let params = count_params(&cfg);
    let flops = count_flops(&cfg);
    let measured = measure_counts(&cfg, 0)?;
    let ratio = params as f64 / REFERENCE_BACKBONE_PARAMS as f64;
    out!("{:<16} {:>14} {:>14}", "", "analytic", "enumerated");
    out!("{:<16} {:>14} {:>14}", "params", params, measured.params);
    out!("{:<16} {:>14} {:>14}", "macs", flops.macs, measured.macs);
    out!("{:<16} {:>14} {:>14}", "flops", flops.flops, 2 * measured.macs);
    out!(
        "head / {:.2}M backbone = {:.4}%",
        REFERENCE_BACKBONE_PARAMS as f64 / 1e6,
        ratio * 100.0
    );
    if params != measured.params || flops.macs != measured.macs {
        return Err(Failure::validation("analytic and enumerated counts disagree"));
    }
    Ok(())
}

pub fn inspect(a: InspectArgs) -> Result<(), Failure> {
    let mut magic = [0u8; 4];
    let head = {
        let mut f = std::fs::File::open(&a.file).map_err(|e| io_err(&a.file, e))?;
        std::io::Read::read(&mut f, &mut magic).map_err(|e| io_err(&a.file, e))?
    };
    if head == 4 && magic == DESCRIPTOR_MAGIC {
        for (offset, h) in scan_headers(&a.file)? {
            out!(
                "{}",
                json!({
                    "offset": offset,
                    "version": h.version,
                    "clips": h.clips,
                    "dim": h.dim,
                    "label": h.label,
                    "mask_present": h.mask_present,
                    "record_bytes": h.record_len(),
                })
            );
        }
    } else if head == 4 && magic == CHECKPOINT_MAGIC {
        let (kind, header) = peek_checkpoint(&a.file)?;
        out!("{}", json!({ "kind": kind, "header": header }));
    } else {
        let m = Manifest::read(&a.file)?;
        out!("{:#}", serde_json::to_value(&m).expect("manifest serializes"));
    }
    Ok(())
}

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use headpose::data::{
    crop_record, export_synthetic, filter_pose_range, load_annotations, make_synthetic_dataset, validate_images, write_annotations,
    AnnotationFormat, InMemoryDataset, PoseDataset, PseudoLabelStore, RecordDataset, SampleRecord,
};
use headpose::eval::{draw_axes, evaluate, read_predictions, scatter_export, write_predictions, Angle, EvalReport, ReferenceResults};
use headpose::geometry::{crop_and_resize, square_box, BoundingBox, EulerPose, Image};
use headpose::model::PoseModel;
use headpose::selftest;
use headpose::train::{
    compute_pseudo_labels, load_teachers, mean_absolute_error, PseudoMode, Targets, TrainConfig, TrainMode, Trainer, BEST_CHECKPOINT,
    LAST_CHECKPOINT, METRICS_FILE,
};
use serde_json::json;

use crate::config::Config;
use crate::{Cli, Command, EvalArgs, Format, Global, OverlayArgs, PlotCommand, PredictArgs, PrepareArgs, Source, TrainArgs, Usage};

pub const PSEUDO_LABEL_FILE: &str = "pseudo_labels.bin";
pub const REPORT_FILE: &str = "report.json";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
const DEFAULT_SYNTHETIC_TEST_FRACTION: usize = 11;

pub fn run(cli: Cli) -> anyhow::Result<u8> {
    let g = &cli.global;
    match &cli.command {
        Command::Selftest => return Ok(selftest_cmd(g)),
        Command::Eval(a) if a.source.predictions.is_some() => return eval(g, None, a),
        Command::Predict(a) => return predict(g, a),
        Command::Plot(PlotCommand::Overlay(a)) => return overlay(g, a),
        Command::Plot(PlotCommand::Scatter(s)) if s.predictions.is_some() => return scatter(g, None, s),
        _ => {}
    }
    let cfg = Config::load(g.config.as_deref(), &g.overrides, g.seed)?;
    match &cli.command {
        Command::Prepare(a) => prepare(g, &cfg, a),
        Command::TrainTeacher(a) => train(g, &cfg, a, TrainMode::Hard),
        Command::Distill(a) => train(g, &cfg, a, TrainMode::Distill),
        Command::PseudoLabel => pseudo_label(g, &cfg),
        Command::Eval(a) => eval(g, Some(&cfg), a),
        Command::Plot(PlotCommand::Scatter(s)) => scatter(g, Some(&cfg), s),
        Command::Selftest | Command::Predict(_) | Command::Plot(PlotCommand::Overlay(_)) => unreachable!("handled above"),
    }
}

fn out_dir(g: &Global) -> anyhow::Result<&Path> {
    let dir = g.out.as_deref().ok_or_else(|| Usage("cli: this command needs --out DIR".into()))?;
    std::fs::create_dir_all(dir).with_context(|| format!("cli: cannot create {}", dir.display()))?;
    Ok(dir)
}

fn emit(g: &Global, table: &str, value: &serde_json::Value) {
    match g.format {
        Format::Table => print!("{table}"),
        Format::Json => println!("{}", serde_json::to_string_pretty(value).expect("json value")),
    }
}

fn parse_floats<const N: usize>(what: &str, s: &str) -> anyhow::Result<[f64; N]> {
    let v: Vec<f64> = s.split(',').map(|p| p.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|e| Usage(format!("cli: {what} `{s}`: {e}")))?;
    v.try_into().map_err(|_| Usage(format!("cli: {what} `{s}` needs {N} comma-separated numbers")).into())
}

fn parse_box(s: Option<&str>, image: &Image) -> anyhow::Result<BoundingBox> {
    match s {
        None => Ok(BoundingBox::new(0, 0, image.width() as i64, image.height() as i64)?),
        Some(s) => {
            let [x1, y1, x2, y2] = parse_floats::<4>("box", s)?;
            Ok(BoundingBox::new(x1.round() as i64, y1.round() as i64, x2.round() as i64, y2.round() as i64)?)
        }
    }
}

fn read_records(path: &Path, filter_range: Option<f64>) -> anyhow::Result<Vec<SampleRecord>> {
    let ann = load_annotations(path, AnnotationFormat::from_path(path))?;
    for w in &ann.warnings {
        log::warn!("{}: {w}", path.display());
    }
    let mut records = ann.into_strict(path)?;
    if let Some(limit) = filter_range {
        let (kept, dropped) = filter_pose_range(records, limit);
        if dropped > 0 {
            log::info!("{}: dropped {dropped} samples outside +-{limit} degrees", path.display());
        }
        records = kept;
    }
    if let Some((i, e)) = validate_images(&records).into_iter().next() {
        bail!(Usage(format!("data: {} row for `{}` has an unreadable image: {e}", path.display(), records[i].id)));
    }
    if records.is_empty() {
        bail!(Usage(format!("data: {} contains no usable samples", path.display())));
    }
    Ok(records)
}

/// Annotated crops, decoded up front unless `data.preload = false`.
fn dataset(cfg: &Config, path: &Path) -> anyhow::Result<Box<dyn PoseDataset>> {
    let limit = cfg.data.filter_range.then(|| cfg.model.range[1].max(-cfg.model.range[0]));
    let records = read_records(path, limit)?;
    let lazy = RecordDataset::new(records, cfg.model.input_size);
    if cfg.data.preload.unwrap_or(true) {
        log::info!("decoding {} crops from {}", lazy.len(), path.display());
        Ok(Box::new(InMemoryDataset::materialize(&lazy)?))
    } else {
        Ok(Box::new(lazy))
    }
}

fn required<'a>(p: &'a Option<PathBuf>, key: &str) -> anyhow::Result<&'a Path> {
    p.as_deref().ok_or_else(|| Usage(format!("cli: config key {key} is not set")).into())
}

fn prepare(g: &Global, cfg: &Config, a: &PrepareArgs) -> anyhow::Result<u8> {
    let out = out_dir(g)?;
    if let Some(n) = a.synthetic {
        let test_count = a.test_count.unwrap_or(n / DEFAULT_SYNTHETIC_TEST_FRACTION);
        if test_count >= n {
            bail!(Usage(format!("cli: --test-count {test_count} leaves no training samples out of {n}")));
        }
        let ds = make_synthetic_dataset(n, cfg.train.seed)?;
        let records = export_synthetic(&ds, &out.join("images"), test_count)?;
        let (test, train): (Vec<_>, Vec<_>) = records.into_iter().partition(|r| r.split == headpose::data::Split::Test);
        write_annotations(&out.join("train.csv"), &train)?;
        write_annotations(&out.join("test.csv"), &test)?;
        let summary = json!({"train": train.len(), "test": test.len(), "dir": out});
        emit(g, &format!("wrote {} train and {} test samples to {}\n", train.len(), test.len(), out.display()), &summary);
        return Ok(0);
    }
    let path = a.annotations.as_deref().expect("clap requires --annotations");
    let ann = load_annotations(path, AnnotationFormat::from_path(path))?;
    let mut problems: Vec<String> = ann.rejected.iter().map(|r| format!("line {}: {}", r.line, r.message)).collect();
    let unreadable = validate_images(&ann.records);
    problems.extend(unreadable.iter().map(|(i, e)| format!("`{}`: {e}", ann.records[*i].id)));
    if !problems.is_empty() && !a.skip_invalid {
        for p in &problems {
            eprintln!("{}: {p}", path.display());
        }
        bail!(Usage(format!("data: {} has {} invalid rows (use --skip-invalid to drop them)", path.display(), problems.len())));
    }
    let bad: std::collections::HashSet<usize> = unreadable.iter().map(|(i, _)| *i).collect();
    let size = cfg.model.input_size;
    let crops_dir = out.join("crops");
    std::fs::create_dir_all(&crops_dir).with_context(|| format!("cli: cannot create {}", crops_dir.display()))?;
    let mut written = Vec::new();
    for (i, r) in ann.records.iter().enumerate().filter(|(i, _)| !bad.contains(i)) {
        let crop = crop_record(&Image::open(&r.image_path)?, r, size)?;
        let name = format!("crops/{i:06}.png");
        crop.save(&out.join(&name))?;
        written.push(SampleRecord {
            id: name.clone(),
            image_path: out.join(&name),
            bbox: BoundingBox::new(0, 0, size as i64, size as i64)?,
            ..r.clone()
        });
    }
    write_annotations(&out.join("annotations.csv"), &written)?;
    let summary = json!({"written": written.len(), "skipped": problems.len(), "dir": out});
    emit(g, &format!("wrote {} crops to {} ({} rows skipped)\n", written.len(), crops_dir.display(), problems.len()), &summary);
    Ok(0)
}

fn train(g: &Global, cfg: &Config, a: &TrainArgs, mode: TrainMode) -> anyhow::Result<u8> {
    let out = out_dir(g)?;
    // The subcommand decides the mode.
    let tc = TrainConfig { mode, ..cfg.train.clone() };
    tc.validate()?;
    let data = dataset(cfg, required(&cfg.data.train, "data.train")?)?;
    let grid = cfg.model.grid()?;
    let teachers;
    let store;
    let targets = match mode {
        TrainMode::Hard => Targets::Hard,
        TrainMode::Distill => match tc.pseudo_mode {
            PseudoMode::Precomputed => {
                store = PseudoLabelStore::read(required(&tc.pseudo_store, "train.pseudo_store")?, &grid)?;
                Targets::Store(&store)
            }
            PseudoMode::OnTheFly => {
                teachers = load_teachers(&tc.teacher_checkpoints, &grid)?;
                Targets::Teachers(&teachers)
            }
        },
    };
    std::fs::write(out.join("config.toml"), toml::to_string(&Config { train: tc.clone(), ..cfg.clone() })?)
        .with_context(|| format!("cli: cannot write config to {}", out.display()))?;
    let aug = cfg.augmentation();
    let mut trainer = if a.resume {
        Trainer::resume(out, tc, aug, data.as_ref(), targets)?
    } else {
        Trainer::new(cfg.model.build(cfg.train.seed)?, tc, aug, data.as_ref(), targets)?.with_output_dir(out)?
    };
    trainer.fit()?;
    let last = trainer.history().last().cloned();
    let mut summary = json!({
        "epochs": trainer.epoch(),
        "final_loss": last.as_ref().map(|m| m.loss),
        "val_mae": last.as_ref().and_then(|m| m.val_mae),
        "checkpoint": out.join(LAST_CHECKPOINT),
        "metrics": out.join(METRICS_FILE),
    });
    let mut table = format!(
        "trained {} epochs, final loss {:.4}\ncheckpoint {}\n",
        trainer.epoch(),
        last.as_ref().map_or(f64::NAN, |m| m.loss),
        out.join(LAST_CHECKPOINT).display()
    );
    if out.join(BEST_CHECKPOINT).exists() {
        table.push_str(&format!("best-validation checkpoint {}\n", out.join(BEST_CHECKPOINT).display()));
    }
    if let Some(test_path) = &cfg.data.test {
        let test = dataset(cfg, test_path)?;
        let idx: Vec<usize> = (0..test.len()).collect();
        let mae = mean_absolute_error(trainer.model(), test.as_ref(), &idx)?;
        summary["test_mae"] = json!(mae);
        table.push_str(&format!("test MAE {mae:.4} deg over {} samples\n", test.len()));
    }
    emit(g, &table, &summary);
    Ok(0)
}

fn pseudo_label(g: &Global, cfg: &Config) -> anyhow::Result<u8> {
    let out = out_dir(g)?;
    if cfg.train.teacher_checkpoints.is_empty() {
        bail!(Usage("cli: pseudo-label needs train.teacher_checkpoints".into()));
    }
    let grid = cfg.model.grid()?;
    let teachers = load_teachers(&cfg.train.teacher_checkpoints, &grid)?;
    let names = cfg.train.teacher_checkpoints.iter().map(|p| p.display().to_string()).collect();
    let data = dataset(cfg, required(&cfg.data.train, "data.train")?)?;
    let store = compute_pseudo_labels(&teachers, names, data.as_ref(), cfg.train.temperature)?;
    let path = out.join(PSEUDO_LABEL_FILE);
    store.write(&path, &grid)?;
    let summary = json!({"count": store.labels.len(), "teachers": store.teacher_names, "path": path});
    emit(g, &format!("wrote {} pseudo-labels from {} teachers to {}\n", store.labels.len(), teachers.len(), path.display()), &summary);
    Ok(0)
}

fn report_from(cfg: Option<&Config>, s: &Source) -> anyhow::Result<EvalReport> {
    if let Some(p) = &s.predictions {
        return Ok(EvalReport::from_predictions(read_predictions(p)?)?);
    }
    let cfg = cfg.expect("config loaded for checkpoint evaluation");
    let ckpt = s.checkpoint.as_deref().expect("clap requires --checkpoint");
    let model = PoseModel::load(ckpt)?;
    let ann = match &s.annotations {
        Some(p) => p.as_path(),
        None => required(&cfg.data.test, "data.test (or --annotations)")?,
    };
    let cfg = Config {
        model: crate::config::ModelSection {
            input_size: model.input_size(),
            ..cfg.model.clone()
        },
        ..cfg.clone()
    };
    let data = dataset(&cfg, ann)?;
    Ok(evaluate(&model, data.as_ref())?)
}

fn eval(g: &Global, cfg: Option<&Config>, a: &EvalArgs) -> anyhow::Result<u8> {
    let report = report_from(cfg, &a.source)?;
    if let Some(dir) = &g.out {
        std::fs::create_dir_all(dir).with_context(|| format!("cli: cannot create {}", dir.display()))?;
        std::fs::write(dir.join(REPORT_FILE), report.to_json()).with_context(|| format!("cli: cannot write {}", dir.join(REPORT_FILE).display()))?;
        write_predictions(&dir.join(PREDICTIONS_FILE), &report)?;
    }
    let reference = a.reference.then(ReferenceResults::bundled);
    let mut table = report.to_table();
    let mut value = serde_json::to_value(&report)?;
    if let Some(r) = &reference {
        table.push('\n');
        table.push_str(&r.render());
        value = json!({"report": value, "reference": r});
    }
    emit(g, &table, &value);
    Ok(0)
}

fn predict(g: &Global, a: &PredictArgs) -> anyhow::Result<u8> {
    let model = PoseModel::load(&a.checkpoint)?;
    let image = Image::open(&a.image)?;
    let bbox = parse_box(a.bbox.as_deref(), &image)?;
    let pose = predict_one(&model, &image, &bbox)?;
    let value = json!({"yaw": pose.yaw, "pitch": pose.pitch, "roll": pose.roll});
    emit(g, &format!("yaw {:.2}\npitch {:.2}\nroll {:.2}\n", pose.yaw, pose.pitch, pose.roll), &value);
    Ok(0)
}

fn predict_one(model: &PoseModel, image: &Image, bbox: &BoundingBox) -> anyhow::Result<EulerPose> {
    let crop = crop_and_resize(image, &square_box(bbox)?, model.input_size())?;
    if crop.empty_intersection {
        bail!(Usage(format!("geometry: box {bbox:?} lies outside the {}x{} image", image.width(), image.height())));
    }
    Ok(model.predict_pose(&crop.image)?)
}

fn scatter(g: &Global, cfg: Option<&Config>, s: &Source) -> anyhow::Result<u8> {
    let out = out_dir(g)?;
    let report = report_from(cfg, s)?;
    let mut files = Vec::new();
    for angle in Angle::ALL {
        let f = scatter_export(&report, angle, &out.join(format!("{}_error", angle.name())))?;
        files.push(f);
    }
    let listing: String = files.iter().map(|f| format!("{}\n{}\n", f.csv.display(), f.svg.display())).collect();
    emit(g, &listing, &json!(files.iter().map(|f| json!({"csv": f.csv, "svg": f.svg})).collect::<Vec<_>>()));
    Ok(0)
}

fn overlay(g: &Global, a: &OverlayArgs) -> anyhow::Result<u8> {
    let out = out_dir(g)?;
    let image = Image::open(&a.image)?;
    let bbox = parse_box(a.bbox.as_deref(), &image)?;
    let pose = match (&a.pose, &a.checkpoint) {
        (Some(p), _) => EulerPose::from_array(parse_floats::<3>("pose", p)?),
        (None, Some(c)) => predict_one(&PoseModel::load(c)?, &image, &bbox)?,
        (None, None) => unreachable!("clap requires --pose or --checkpoint"),
    };
    let stem = a.image.file_stem().and_then(|s| s.to_str()).unwrap_or("image");
    let path = out.join(format!("{stem}_axes.png"));
    draw_axes(&image, &bbox, &pose).save(&path)?;
    let value = json!({"path": path, "pose": {"yaw": pose.yaw, "pitch": pose.pitch, "roll": pose.roll}});
    emit(g, &format!("{}\n", path.display()), &value);
    Ok(0)
}

fn selftest_cmd(g: &Global) -> u8 {
    let results = selftest::run_all(g.seed.unwrap_or(0));
    let passed = results.iter().all(|r| r.passed);
    let table: String = results.iter().map(|r| r.line() + "\n").collect();
    let value = json!(results.iter().map(|r| json!({"name": r.name, "passed": r.passed, "detail": r.detail})).collect::<Vec<_>>());
    emit(g, &table, &value);
    if passed {
        0
    } else {
        2
    }
}

use std::fmt::Write as _;
use std::path::Path;
use std::process::ExitCode;

use anyhow::{bail, Context};
use traj_anticipation::config::RunConfig;
use traj_anticipation::datasets::{build_dataset, load_dataset, write_dataset, Boundary, DatasetConfig, SpriteSource, SupervisionRegime};
use traj_anticipation::eval::{
    detections_to_jsonl, evaluate, ground_truth_to_jsonl, report_to_csv, speed_accuracy_sweep, sweep_to_csv, EvalConfig, EvalMode, SweepConfig,
};
use traj_anticipation::model::{load_model, save_model, train as train_model, KeyframeCorrection, LossKind, ModelConfig, TrainConfig};
use traj_anticipation::verify::{run_all, Fault, VerifyConfig};
use traj_anticipation::Error;

use crate::resolve::{flags, Resolver, RESOLVED_CONFIG};
use crate::{EvalArgs, GenDataArgs, SweepArgs, TrainArgs, TrainingFlags, VerifyArgs};

pub const EXIT_PROPERTY_FAILURE: u8 = 1;
pub const EXIT_BAD_INPUT: u8 = 2;
pub const EXIT_DIVERGED: u8 = 3;

pub fn exit_code(e: &anyhow::Error) -> ExitCode {
    match e.downcast_ref::<Error>() {
        Some(Error::Diverged { .. }) => ExitCode::from(EXIT_DIVERGED),
        _ => ExitCode::from(EXIT_BAD_INPUT),
    }
}

fn s<T: ToString>(v: &Option<T>) -> Option<String> {
    v.as_ref().map(ToString::to_string)
}

fn p(v: &Option<std::path::PathBuf>) -> Option<String> {
    v.as_ref().map(|p| p.display().to_string())
}

fn create_out(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(())
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> anyhow::Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn save_resolved(dir: &Path, cfg: &RunConfig) -> anyhow::Result<()> {
    cfg.save(&dir.join(RESOLVED_CONFIG))?;
    Ok(())
}

fn parse<T: std::str::FromStr<Err = Error>>(v: String) -> anyhow::Result<T> {
    Ok(v.parse::<T>()?)
}

pub fn gen_data(a: &GenDataArgs) -> anyhow::Result<ExitCode> {
    let layer = flags([
        ("seed", s(&a.common.seed)),
        ("out", p(&a.out)),
        ("n_train", s(&a.n_train)),
        ("n_test", s(&a.n_test)),
        ("boundary", a.boundary.clone()),
        ("sprite_scale", s(&a.sprite_scale)),
        ("n_frames", s(&a.n_frames)),
        ("mnist_images", p(&a.mnist_images)),
        ("mnist_labels", p(&a.mnist_labels)),
    ])?;
    let mut r = Resolver::new("gen-data", a.common.config.as_deref(), layer)?;
    let d = DatasetConfig::default();
    let out = r.path("out")?;
    let source = match (r.optional::<String>("mnist_images")?, r.optional::<String>("mnist_labels")?) {
        (Some(images), Some(labels)) => SpriteSource::MnistIdx { images, labels },
        (None, None) => SpriteSource::Procedural,
        _ => return Err(Error::InvalidArgument("--mnist-images and --mnist-labels go together".into()).into()),
    };
    let cfg = DatasetConfig {
        seed: r.get("seed", d.seed)?,
        n_train: r.get("n_train", d.n_train)?,
        n_test: r.get("n_test", d.n_test)?,
        boundary: parse::<Boundary>(r.get("boundary", d.boundary.as_str().to_string())?)?,
        sprite_scale: r.get("sprite_scale", d.sprite_scale)?,
        n_frames: r.get("n_frames", d.n_frames)?,
        source,
        ..d
    };
    let resolved = r.finish()?;
    let ds = build_dataset(&cfg)?;
    create_out(&out)?;
    let manifest = write_dataset(&out, &ds)?;
    save_resolved(&out, &resolved)?;
    println!("wrote {} train / {} test videos to {}", ds.train.len(), ds.test.len(), out.display());
    debug_assert_eq!(manifest.videos.len(), ds.train.len() + ds.test.len());
    Ok(ExitCode::SUCCESS)
}

fn training_layer(t: &TrainingFlags) -> [(&'static str, Option<String>); 11] {
    [
        ("loss", t.loss.clone()),
        ("supervision", t.supervision.clone()),
        ("iterations", s(&t.iterations)),
        ("lr", s(&t.lr)),
        ("batch_size", s(&t.batch_size)),
        ("jitter", s(&t.jitter)),
        ("hidden_dim", s(&t.hidden_dim)),
        ("embed_dim", s(&t.embed_dim)),
        ("keyframe_correction", t.keyframe_correction.clone()),
        ("use_box_input", s(&t.use_box_input)),
        ("use_feature_input", s(&t.use_feature_input)),
    ]
}

/// Training settings shared by `train` and `sweep`; `horizon` is set by the caller.
fn resolve_training(r: &mut Resolver) -> anyhow::Result<TrainConfig> {
    let d = TrainConfig::default();
    let m = ModelConfig::default();
    let model = ModelConfig {
        hidden_dim: r.get("hidden_dim", m.hidden_dim)?,
        embed_dim: r.get("embed_dim", m.embed_dim)?,
        output_unit: r.get("output_unit", m.output_unit)?,
        keyframe: parse::<KeyframeCorrection>(r.get("keyframe_correction", m.keyframe.as_str().to_string())?)?,
        use_box_input: r.get("use_box_input", m.use_box_input)?,
        use_feature_input: r.get("use_feature_input", m.use_feature_input)?,
        ..m
    };
    Ok(TrainConfig {
        seed: r.get("seed", d.seed)?,
        loss: parse::<LossKind>(r.get("loss", d.loss.as_str().to_string())?)?,
        supervision: parse::<SupervisionRegime>(r.get("supervision", d.supervision.as_str().to_string())?)?,
        iterations: r.get("iterations", d.iterations)?,
        learning_rate: r.get("lr", d.learning_rate)?,
        batch_size: r.get("batch_size", d.batch_size)?,
        jitter_sigma: r.get("jitter", d.jitter_sigma)?,
        smooth_l1_beta: r.get("beta", d.smooth_l1_beta)?,
        model,
        ..d
    })
}

fn load_data(dir: &Path) -> anyhow::Result<traj_anticipation::datasets::Dataset> {
    load_dataset(dir).with_context(|| format!("loading dataset from {}", dir.display()))
}

pub fn train(a: &TrainArgs) -> anyhow::Result<ExitCode> {
    let mut pairs = vec![("seed", s(&a.common.seed)), ("data", p(&a.data)), ("out", p(&a.out)), ("t", s(&a.horizon))];
    pairs.extend(training_layer(&a.training));
    let mut r = Resolver::new("train", a.common.config.as_deref(), flags(pairs)?)?;
    let data = r.path("data")?;
    let out = r.path("out")?;
    let horizon = r.get("t", TrainConfig::default().horizon)?;
    let cfg = TrainConfig { horizon, ..resolve_training(&mut r)? };
    let resolved = r.finish()?;
    cfg.validate()?;
    let ds = load_data(&data)?;
    let result = train_model(&ds.train, &cfg)?;
    create_out(&out)?;
    save_model(&out.join("model.json"), &result.model)?;
    let mut curve = String::from("iteration,loss\n");
    for (i, l) in result.loss_curve.iter().enumerate() {
        let _ = writeln!(curve, "{i},{l}");
    }
    write(&out.join("loss_curve.csv"), curve)?;
    save_resolved(&out, &resolved)?;
    let k = (result.loss_curve.len() / 10).max(1);
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let (first, last) = (mean(&result.loss_curve[..k]), mean(&result.loss_curve[result.loss_curve.len() - k..]));
    println!(
        "trained {} iterations: mean loss {first:.4} (first {k}) -> {last:.4} (last {k}); model written to {}",
        cfg.iterations,
        out.join("model.json").display()
    );
    Ok(ExitCode::SUCCESS)
}

pub fn eval(a: &EvalArgs) -> anyhow::Result<ExitCode> {
    let layer = flags([
        ("seed", s(&a.common.seed)),
        ("data", p(&a.data)),
        ("model", p(&a.model)),
        ("out", p(&a.out)),
        ("mode", a.mode.clone()),
        ("metric", a.metric.clone()),
        ("t", s(&a.horizon)),
        ("jitter", s(&a.jitter)),
        ("split", a.split.clone()),
    ])?;
    let mut r = Resolver::new("eval", a.common.config.as_deref(), layer)?;
    let d = EvalConfig::default();
    let data = r.path("data")?;
    let model_path = r.path("model")?;
    let out = r.path("out")?;
    let cfg = EvalConfig {
        mode: parse::<EvalMode>(r.get("mode", d.mode.as_str().to_string())?)?,
        horizon: r.get("t", d.horizon)?,
        jitter_sigma: r.get("jitter", d.jitter_sigma)?,
        seed: r.get("seed", d.seed)?,
    };
    let metric = r.get("metric", "map".to_string())?;
    if metric != "map" && metric != "traj-iou" {
        bail!(Error::InvalidArgument(format!("unknown metric '{metric}' (expected map or traj-iou)")));
    }
    let split = r.get("split", "test".to_string())?;
    let resolved = r.finish()?;
    let model = load_model(&model_path).with_context(|| format!("loading model {}", model_path.display()))?;
    let ds = load_data(&data)?;
    let videos = match split.as_str() {
        "test" => &ds.test,
        "train" => &ds.train,
        other => bail!(Error::InvalidArgument(format!("unknown split '{other}'"))),
    };
    let ev = evaluate(&model, videos, &cfg)?;
    create_out(&out)?;
    let summary = serde_json::json!({
        "mode": cfg.mode.as_str(),
        "metric": metric,
        "horizon": cfg.horizon,
        "split": split,
        "grand_map": ev.report.grand_map,
        "trajectory_iou": ev.trajectory_iou,
        "baseline_trajectory_iou": ev.baseline_trajectory_iou,
        "frames": ev.frames,
        "keyframes": ev.keyframes,
        "feature_extractions": ev.feature_extractions,
        "report": ev.report,
    });
    write(&out.join("report.json"), serde_json::to_vec_pretty(&summary)?)?;
    write(&out.join("report.csv"), report_to_csv(&ev.report))?;
    write(&out.join("detections.jsonl"), detections_to_jsonl(&ev.detections)?)?;
    write(&out.join("ground_truth.jsonl"), ground_truth_to_jsonl(&ev.ground_truth)?)?;
    save_resolved(&out, &resolved)?;
    let fmt = |v: Option<f64>| v.map_or("absent".to_string(), |v| format!("{v:.4}"));
    if metric == "traj-iou" {
        println!("trajectory IoU {} (no anticipation {})", fmt(ev.trajectory_iou), fmt(ev.baseline_trajectory_iou));
    } else {
        println!("{} mAP@[0.50:0.95] {:.2}", cfg.mode.as_str(), 100.0 * ev.report.grand_map);
    }
    Ok(ExitCode::SUCCESS)
}

fn parse_horizons(list: &str) -> anyhow::Result<Vec<usize>> {
    let hs = list
        .split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|e| Error::InvalidArgument(format!("bad T-list entry '{t}': {e}"))))
        .collect::<Result<Vec<_>, _>>()?;
    if hs.is_empty() || hs.contains(&0) {
        bail!(Error::InvalidArgument("T-list entries must be positive".into()));
    }
    Ok(hs)
}

pub fn sweep(a: &SweepArgs) -> anyhow::Result<ExitCode> {
    let mut pairs = vec![
        ("seed", s(&a.common.seed)),
        ("data", p(&a.data)),
        ("out", p(&a.out)),
        ("t_list", a.horizons.clone()),
        ("timing_repeats", s(&a.timing_repeats)),
    ];
    pairs.extend(training_layer(&a.training));
    let mut r = Resolver::new("sweep", a.common.config.as_deref(), flags(pairs)?)?;
    let data = r.path("data")?;
    let out = r.path("out")?;
    let horizons = parse_horizons(&r.get("t_list", "2,4,8,16".to_string())?)?;
    let timing_repeats = r.get("timing_repeats", 5usize)?;
    let train = resolve_training(&mut r)?;
    let resolved = r.finish()?;
    train.validate()?;
    let ds = load_data(&data)?;
    let cfg = SweepConfig { horizons, jitter_sigma: train.jitter_sigma, train, timing_repeats };
    let result = speed_accuracy_sweep(&ds.train, &ds.test, &cfg)?;
    create_out(&out)?;
    write(&out.join("sweep.csv"), sweep_to_csv(&result))?;
    save_resolved(&out, &resolved)?;
    for e in &result.entries {
        println!("T={:<3} cost {:.4}  mAP {:.2}  extraction {:.6}s", e.horizon, e.cost_proxy, 100.0 * e.map, e.extraction_seconds);
    }
    Ok(ExitCode::SUCCESS)
}

pub fn verify(a: &VerifyArgs) -> anyhow::Result<ExitCode> {
    let layer = flags([
        ("seed", s(&a.common.seed)),
        ("trials", s(&a.trials)),
        ("gradient_trials", s(&a.gradient_trials)),
        ("out", p(&a.out)),
        ("inject_fault", a.inject_fault.clone()),
    ])?;
    let mut r = Resolver::new("verify", a.common.config.as_deref(), layer)?;
    let d = VerifyConfig::default();
    let fault = match r.optional::<String>("inject_fault")?.as_deref() {
        None => None,
        Some("sign-flip") => Some(Fault::FlipLossGradientSign),
        Some(other) => bail!(Error::InvalidArgument(format!("unknown fault '{other}'"))),
    };
    let cfg = VerifyConfig {
        seed: r.get("seed", d.seed)?,
        trials: r.get("trials", d.trials)?,
        gradient_trials: r.get("gradient_trials", d.gradient_trials)?,
        fault,
    };
    let out = r.optional::<String>("out")?;
    let resolved = r.finish()?;
    let report = run_all(&cfg)?;
    for c in &report.checks {
        let tag = if c.passed { "PASS" } else { "FAIL" };
        println!("{tag} {:<22} n={:<5} max deviation {:.3e} (tolerance {:.0e})", c.name, c.instances, c.max_deviation, c.tolerance);
    }
    if let Some(out) = out {
        let out = Path::new(&out);
        create_out(out)?;
        write(&out.join("verify.json"), serde_json::to_vec_pretty(&report)?)?;
        save_resolved(out, &resolved)?;
    }
    if report.passed() {
        println!("all {} checks passed", report.checks.len());
        Ok(ExitCode::SUCCESS)
    } else {
        let names: Vec<&str> = report.failures().map(|c| c.name.as_str()).collect();
        eprintln!("failed checks: {}", names.join(", "));
        Ok(ExitCode::from(EXIT_PROPERTY_FAILURE))
    }
}

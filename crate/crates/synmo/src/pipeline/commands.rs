//! Command-level orchestration: each function backs one CLI verb and works
//! purely through the filesystem, so runs are reproducible from the config
//! file, the seed, and the input directories.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffusion::{
    finetune, load_checkpoint, sample, save_checkpoint, train, write_loss_curves, Checkpoint,
    Condition, DenoiserConfig, FinetuneReport, TrainMeta,
};
use crate::error::{Result, SynmoError};
use crate::eval::{
    assign_category, balanced_accuracy, extract_features, loss_delta_report, merge_windows,
    predict_dataset, project_2d, segment_windows, train_classifier, write_confusion_csv,
    write_delta_csv, write_eval_report_json, write_projection_csv, CategorySet, ClassifierHyper,
    ConfusionMatrix, DeltaReport, EmbeddingTable, EvalReport, ProjPoint, WindowedDataset,
    DEFAULT_CATEGORIES, OTHER_LABEL,
};
use crate::imu::{
    attach_sensors, read_imu_with_manifest, resample, synthesize_imu, write_imu_with_manifest,
    ImuManifest, ImuSignal,
};
use crate::motion::{read_motion_file, write_motion_file, MotionSequence};

use super::corpus::{default_skeleton, gen_corpus, load_corpus, CorpusManifest, SyntheticCorpusSpec};
use super::PipelineConfig;

/// Build the category set in the pipeline's embedding space: stored
/// embeddings when the table has them, the deterministic stub otherwise.
fn category_set(config: &PipelineConfig, table: &EmbeddingTable) -> Result<CategorySet> {
    let names: Vec<String> = DEFAULT_CATEGORIES.iter().map(|s| s.to_string()).collect();
    let embeddings = names
        .iter()
        .map(|n| table.embed_or_stub(n, config.embed_dim))
        .collect::<Result<Vec<_>>>()?;
    CategorySet::new(
        names,
        embeddings,
        config.category_threshold,
        OTHER_LABEL.into(),
    )
}

/// Generate the synthetic corpus into `out_dir`.
pub fn cmd_gen_corpus(
    config: &PipelineConfig,
    spec: &SyntheticCorpusSpec,
    out_dir: &Path,
) -> Result<CorpusManifest> {
    gen_corpus(spec, out_dir, Some(config.config_hash()))
}

fn denoiser_config_for(config: &PipelineConfig, corpus: &super::LoadedCorpus) -> Result<DenoiserConfig> {
    let first = corpus
        .items
        .first()
        .ok_or_else(|| SynmoError::Data("corpus has no items".into()))?;
    let (_, joints, dim) = first.motion.dims();
    Ok(DenoiserConfig {
        n_frames: config.train_frames,
        joints,
        dim,
        cond_dim: corpus.manifest.embed_dim,
        hidden_width: config.denoiser.hidden_width,
        hidden_blocks: config.denoiser.hidden_blocks,
        time_embed_dim: config.denoiser.time_embed_dim,
        fps: first.motion.fps,
        joint_names: first.motion.joint_names.clone(),
    })
}

/// Train the base model on the corpus; writes `base.ckpt.json` and
/// `base_curves.csv` under the checkpoint directory.
pub fn cmd_train(config: &PipelineConfig) -> Result<PathBuf> {
    let corpus = load_corpus(&config.corpus_dir)?;
    let items = corpus.to_train_items(config.train_frames)?;
    let denoiser = denoiser_config_for(config, &corpus)?;
    let schedule = config.schedule.build()?;
    let mut hyper = config.train;
    hyper.seed = config.seed;
    let (params, curves) = train(&items, &config.train_weights, &hyper, &schedule, &denoiser)?;
    fs::create_dir_all(&config.checkpoint_dir)?;
    let ckpt = Checkpoint::from_params(
        &params,
        config.schedule,
        TrainMeta {
            steps: hyper.steps,
            seed: hyper.seed,
            weights: config.train_weights,
        },
    );
    let path = config.checkpoint_dir.join("base.ckpt.json");
    save_checkpoint(&path, &ckpt)?;
    write_loss_curves(&config.checkpoint_dir.join("base_curves.csv"), &curves)?;
    Ok(path)
}

/// Continue training a base checkpoint with the acceleration term active;
/// writes `refined.ckpt.json`, `refined_curves.csv`, and
/// `finetune_report.json`.
pub fn cmd_finetune(
    config: &PipelineConfig,
    base_path: &Path,
    allow_zero_acc: bool,
) -> Result<(PathBuf, FinetuneReport)> {
    if config.finetune_weights.lambda_acc <= 0.0 && !allow_zero_acc {
        return Err(SynmoError::Config(
            "finetune weights have lambda_acc = 0; pass --allow-zero-acc to proceed".into(),
        ));
    }
    let base_ckpt = load_checkpoint(base_path)?;
    if base_ckpt.meta.weights.lambda_acc != 0.0 {
        return Err(SynmoError::Config(format!(
            "base checkpoint {} was trained with lambda_acc = {}; finetuning starts from a \
             lambda_acc = 0 run",
            base_path.display(),
            base_ckpt.meta.weights.lambda_acc
        )));
    }
    let params = base_ckpt.params()?;
    let corpus = load_corpus(&config.corpus_dir)?;
    let items = corpus.to_train_items(config.train_frames)?;
    // deterministic holdout: every fourth item
    let mut train_set = Vec::new();
    let mut holdout = Vec::new();
    for (i, item) in items.into_iter().enumerate() {
        if i % 4 == 3 {
            holdout.push(item);
        } else {
            train_set.push(item);
        }
    }
    if holdout.is_empty() {
        holdout = train_set.clone();
    }
    let schedule = config.schedule.build()?;
    let mut hyper = config.finetune;
    hyper.seed = config.seed.wrapping_add(1);
    let (refined, curves, report) = finetune(
        &params,
        &train_set,
        &holdout,
        &config.finetune_weights,
        &hyper,
        &schedule,
    )?;
    fs::create_dir_all(&config.checkpoint_dir)?;
    let ckpt = Checkpoint::from_params(
        &refined,
        config.schedule,
        TrainMeta {
            steps: base_ckpt.meta.steps + hyper.steps,
            seed: hyper.seed,
            weights: config.finetune_weights,
        },
    );
    let path = config.checkpoint_dir.join("refined.ckpt.json");
    save_checkpoint(&path, &ckpt)?;
    write_loss_curves(&config.checkpoint_dir.join("refined_curves.csv"), &curves)?;
    fs::write(
        config.checkpoint_dir.join("finetune_report.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    Ok((path, report))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleItem {
    pub file: String,
    pub prompt: String,
    pub assigned_label: String,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleOutput {
    pub checkpoint: String,
    pub config_hash: String,
    pub seed: u64,
    pub items: Vec<SampleItem>,
}

fn slugify(text: &str) -> String {
    let mut slug: String = text
        .to_lowercase()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect();
    slug.truncate(32);
    slug
}

/// Sample one motion per prompt line; writes motion files and
/// `samples_manifest.json` into `out_dir`.
pub fn cmd_sample(
    config: &PipelineConfig,
    checkpoint_path: &Path,
    prompts_path: &Path,
    frames: Option<usize>,
    out_dir: &Path,
) -> Result<SampleOutput> {
    let ckpt = load_checkpoint(checkpoint_path)?;
    let params = ckpt.params()?;
    let n_frames = frames.unwrap_or(ckpt.denoiser.n_frames);
    let schedule = ckpt.schedule.build()?;
    let text = fs::read_to_string(prompts_path)
        .map_err(|e| SynmoError::Data(format!("{}: {e}", prompts_path.display())))?;
    let prompts: Vec<String> = text
        .lines()
        .map(|l| l.trim())
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.to_string())
        .collect();
    if prompts.is_empty() {
        return Err(SynmoError::Data(format!(
            "{}: no prompts found",
            prompts_path.display()
        )));
    }
    // embeddings: sidecar next to the prompts file, else corpus table, else stub
    let mut table = EmbeddingTable::default();
    for candidate in [
        prompts_path.with_file_name("embeddings.json"),
        config.corpus_dir.join("embeddings.json"),
    ] {
        if candidate.exists() {
            table = EmbeddingTable::load(&candidate)?;
            break;
        }
    }
    let cats = category_set(config, &table)?;
    let skeleton = default_skeleton();
    fs::create_dir_all(out_dir)?;
    let mut items = Vec::new();
    for (i, prompt) in prompts.iter().enumerate() {
        let embedding = table.embed_or_stub(prompt, ckpt.denoiser.cond_dim)?;
        let label = assign_category(&embedding, &cats)?;
        let cond = Condition::new(embedding, Some(label.clone()));
        let seed = config.seed.wrapping_add(i as u64);
        let motion = sample(&params, &cond, n_frames, &schedule, seed)?;
        let file = format!("{i:03}_{}.motion", slugify(prompt));
        let skel = if motion.num_joints() == skeleton.num_joints() {
            Some(&skeleton)
        } else {
            None
        };
        write_motion_file(&out_dir.join(&file), &motion, skel)?;
        items.push(SampleItem {
            file,
            prompt: prompt.clone(),
            assigned_label: label,
            seed,
        });
    }
    let output = SampleOutput {
        checkpoint: checkpoint_path.display().to_string(),
        config_hash: config.config_hash(),
        seed: config.seed,
        items,
    };
    fs::write(
        out_dir.join("samples_manifest.json"),
        serde_json::to_string_pretty(&output)?,
    )?;
    Ok(output)
}

/// Labels for motion files, from whichever manifest the directory carries.
fn motion_labels(dir: &Path) -> BTreeMap<String, String> {
    let mut labels = BTreeMap::new();
    if let Ok(text) = fs::read_to_string(dir.join("manifest.json")) {
        if let Ok(manifest) = serde_json::from_str::<CorpusManifest>(&text) {
            for item in manifest.items {
                labels.insert(item.motion_file, item.label);
            }
        }
    }
    if let Ok(text) = fs::read_to_string(dir.join("samples_manifest.json")) {
        if let Ok(manifest) = serde_json::from_str::<SampleOutput>(&text) {
            for item in manifest.items {
                labels.insert(item.file, item.assigned_label);
            }
        }
    }
    labels
}

/// Synthesize IMU signals for every motion file in `motion_dir` at every
/// configured placement. Returns the number of signal files written.
pub fn cmd_imu(config: &PipelineConfig, motion_dir: &Path, out_dir: &Path) -> Result<usize> {
    let mut motion_files: Vec<PathBuf> = fs::read_dir(motion_dir)
        .map_err(|e| SynmoError::Data(format!("{}: {e}", motion_dir.display())))?
        .filter_map(|entry| {
            let path = entry.ok()?.path();
            if path.extension().and_then(|e| e.to_str()) == Some("motion") {
                Some(path)
            } else {
                None
            }
        })
        .collect();
    motion_files.sort();
    if motion_files.is_empty() {
        return Err(SynmoError::Data(format!(
            "{}: no .motion files",
            motion_dir.display()
        )));
    }
    let labels = motion_labels(motion_dir);
    let fallback_skeleton = default_skeleton();
    fs::create_dir_all(out_dir)?;
    let mut written = 0;
    for path in &motion_files {
        let (motion, skeleton) = read_motion_file(path)?;
        let skeleton = match skeleton {
            Some(s) => s,
            None if motion.num_joints() == fallback_skeleton.num_joints() => {
                fallback_skeleton.clone()
            }
            None => {
                return Err(SynmoError::Data(format!(
                    "{}: motion file carries no skeleton and has {} joints",
                    path.display(),
                    motion.num_joints()
                )))
            }
        };
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("motion")
            .to_string();
        let file_name = path
            .file_name()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string();
        let label = labels.get(&file_name).cloned();
        let trajectories = attach_sensors(&motion, &skeleton, &config.placements)?;
        for traj in &trajectories {
            let mut signal = synthesize_imu(traj, &config.gravity)?;
            if let Some(target) = config.imu_target_fps {
                signal = resample(&signal, target)?;
            }
            let out_stem = format!("{stem}__{}", traj.placement_name);
            let manifest = ImuManifest {
                fps: signal.fps,
                placement: traj.placement_name.clone(),
                source_motion: file_name.clone(),
                gravity_config: config.gravity,
                label: label.clone(),
                seed: Some(config.seed),
                config_hash: Some(config.config_hash()),
            };
            write_imu_with_manifest(out_dir, &out_stem, &signal, &manifest)?;
            written += 1;
        }
    }
    Ok(written)
}

/// One labeled signal loaded for evaluation.
struct LoadedSignal {
    signal: ImuSignal,
    label: String,
    placement: String,
    stem: String,
}

fn load_signal_dir(dir: &Path, label_map: &BTreeMap<String, String>) -> Result<Vec<LoadedSignal>> {
    let mut stems: Vec<String> = fs::read_dir(dir)
        .map_err(|e| SynmoError::Data(format!("{}: {e}", dir.display())))?
        .filter_map(|entry| {
            let name = entry.ok()?.file_name().into_string().ok()?;
            name.strip_suffix(".manifest.json").map(|s| s.to_string())
        })
        .collect();
    stems.sort();
    if stems.is_empty() {
        return Err(SynmoError::Data(format!(
            "{}: no signal manifests found",
            dir.display()
        )));
    }
    let mut out = Vec::with_capacity(stems.len());
    for stem in stems {
        let (signal, manifest) = read_imu_with_manifest(dir, &stem)?;
        let raw_label = manifest.label.ok_or_else(|| {
            SynmoError::Data(format!("{dir:?}/{stem}: manifest carries no label"))
        })?;
        let label = label_map.get(&raw_label).cloned().unwrap_or(raw_label);
        out.push(LoadedSignal {
            signal,
            label,
            placement: manifest.placement,
            stem,
        });
    }
    Ok(out)
}

fn windows_of(signals: &[LoadedSignal], config: &PipelineConfig) -> Result<WindowedDataset> {
    let mut sets = Vec::new();
    for s in signals {
        if s.signal.len() < config.window_len {
            continue;
        }
        sets.push(segment_windows(
            &s.signal,
            config.window_len,
            config.window_overlap,
            &s.label,
            &s.stem,
        )?);
    }
    if sets.is_empty() {
        return Err(SynmoError::Data(
            "no signal is long enough for a single window".into(),
        ));
    }
    merge_windows(sets)
}

/// Stratified seeded subsample of windows (about `frac` per class).
fn subsample(data: &WindowedDataset, frac: f64, seed: u64) -> WindowedDataset {
    let mut by_class: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, w) in data.windows.iter().enumerate() {
        by_class.entry(w.label.clone()).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = Vec::new();
    for (_, mut idxs) in by_class {
        idxs.shuffle(&mut rng);
        let take = ((idxs.len() as f64 * frac).ceil() as usize).max(1);
        keep.extend(idxs.into_iter().take(take));
    }
    keep.sort_unstable();
    WindowedDataset {
        windows: keep.iter().map(|&i| data.windows[i].clone()).collect(),
        window_len: data.window_len,
        overlap: data.overlap,
    }
}

pub struct EvalArgs {
    pub synthetic_dir: PathBuf,
    pub real_dir: PathBuf,
    pub base_checkpoint: Option<PathBuf>,
    pub refined_checkpoint: Option<PathBuf>,
    pub corpus_dir: Option<PathBuf>,
}

/// Train on synthetic windows only, evaluate on real windows, and write
/// the report files into the output directory. Repetitions retrain the
/// classifier on seeded stratified subsamples.
pub fn cmd_eval(config: &PipelineConfig, args: &EvalArgs) -> Result<EvalReport> {
    let synthetic = load_signal_dir(&args.synthetic_dir, &BTreeMap::new())?;
    let real = load_signal_dir(&args.real_dir, &config.label_map)?;
    let synth_classes: BTreeSet<&str> = synthetic.iter().map(|s| s.label.as_str()).collect();
    let real_classes: BTreeSet<&str> = real.iter().map(|s| s.label.as_str()).collect();
    if !real_classes.is_subset(&synth_classes) {
        let missing: Vec<&str> = real_classes.difference(&synth_classes).cloned().collect();
        return Err(SynmoError::Data(format!(
            "real corpus has classes {missing:?} absent from the synthetic corpus; add \
             label_map entries to reconcile them"
        )));
    }
    let synth_windows = windows_of(&synthetic, config)?;
    let real_windows = windows_of(&real, config)?;
    let mut runs = Vec::with_capacity(config.repetitions);
    let mut confusion: Option<ConfusionMatrix> = None;
    for rep in 0..config.repetitions {
        let rep_seed = config.seed.wrapping_add(rep as u64);
        let train_set = if config.repetitions > 1 {
            subsample(&synth_windows, 0.8, rep_seed)
        } else {
            synth_windows.clone()
        };
        let hyper = ClassifierHyper {
            seed: rep_seed,
            ..ClassifierHyper::default()
        };
        let model = train_classifier(&train_set, &hyper)?;
        let (preds, truth) = predict_dataset(&model, &real_windows)?;
        runs.push(balanced_accuracy(&preds, &truth)?);
        let cm = ConfusionMatrix::from_predictions(&preds, &truth)?;
        match confusion.as_mut() {
            None => confusion = Some(cm),
            Some(total) => total.accumulate(&cm)?,
        }
    }
    // 2-D projection of head-placement features (all placements if none)
    let mut projection = Vec::new();
    {
        let mut feats = Vec::new();
        let mut tags: Vec<(String, String)> = Vec::new();
        let has_head = synthetic
            .iter()
            .chain(real.iter())
            .any(|s| s.placement == "head");
        for (signals, source) in [(&synthetic, "synthetic"), (&real, "real")] {
            for s in signals.iter() {
                if has_head && s.placement != "head" {
                    continue;
                }
                if s.signal.len() < config.window_len {
                    continue;
                }
                let ds = segment_windows(
                    &s.signal,
                    config.window_len,
                    config.window_overlap,
                    &s.label,
                    &s.stem,
                )?;
                for w in &ds.windows {
                    let accel = w.data.slice(ndarray::s![.., 0..3]).to_owned();
                    feats.push(extract_features(&accel)?);
                    tags.push((source.to_string(), w.label.clone()));
                }
            }
        }
        if feats.len() >= 2 {
            for (xy, (source, label)) in project_2d(&feats)?.into_iter().zip(tags) {
                projection.push(ProjPoint {
                    x: xy[0],
                    y: xy[1],
                    source,
                    label,
                });
            }
        }
    }
    let delta = match (&args.base_checkpoint, &args.refined_checkpoint, &args.corpus_dir) {
        (Some(base), Some(refined), Some(corpus_dir)) => {
            Some(delta_report_from_paths(config, base, refined, corpus_dir)?)
        }
        _ => None,
    };
    let report = EvalReport::from_runs(
        runs,
        confusion.expect("at least one repetition"),
        delta,
        projection,
    )?;
    fs::create_dir_all(&config.output_dir)?;
    write_eval_report_json(&config.output_dir.join("eval_report.json"), &report)?;
    write_confusion_csv(&config.output_dir.join("confusion.csv"), &report.confusion)?;
    write_projection_csv(&config.output_dir.join("projection.csv"), &report.projection)?;
    if let Some(d) = &report.delta {
        write_delta_csv(&config.output_dir.join("delta.csv"), d)?;
    }
    Ok(report)
}

fn delta_report_from_paths(
    config: &PipelineConfig,
    base_path: &Path,
    refined_path: &Path,
    corpus_dir: &Path,
) -> Result<DeltaReport> {
    let base = load_checkpoint(base_path)?;
    let refined = load_checkpoint(refined_path)?;
    if base.denoiser != refined.denoiser {
        return Err(SynmoError::Data(
            "checkpoints have different denoiser shapes; deltas are not comparable".into(),
        ));
    }
    let base_params = base.params()?;
    let refined_params = refined.params()?;
    let corpus = load_corpus(corpus_dir)?;
    let n_frames = base.denoiser.n_frames;
    let eval_set: Vec<(MotionSequence, Condition)> = corpus
        .items
        .iter()
        .map(|item| {
            let motion = item.motion.crop(n_frames)?;
            Ok((
                motion,
                Condition::new(item.embedding.clone(), Some(item.label.clone())),
            ))
        })
        .collect::<Result<_>>()?;
    let table = EmbeddingTable::load(&corpus_dir.join("embeddings.json")).unwrap_or_default();
    let cats = category_set(config, &table)?;
    let schedule = base.schedule.build()?;
    loss_delta_report(
        &base_params,
        &refined_params,
        &eval_set,
        &cats,
        &schedule,
        config.seed,
    )
}

/// Standalone per-category acceleration-loss delta report; writes
/// `delta.csv` and `delta.json` into the output directory.
pub fn cmd_report(
    config: &PipelineConfig,
    base_path: &Path,
    refined_path: &Path,
    corpus_dir: &Path,
) -> Result<DeltaReport> {
    let report = delta_report_from_paths(config, base_path, refined_path, corpus_dir)?;
    fs::create_dir_all(&config.output_dir)?;
    write_delta_csv(&config.output_dir.join("delta.csv"), &report)?;
    fs::write(
        config.output_dir.join("delta.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    Ok(report)
}

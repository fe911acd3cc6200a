//! Synthetic desk-scale motion corpus: parametric per-class generators
//! over a 22-joint skeleton, with prompts, contact masks, and condition
//! embeddings, all written to disk with a reconstructable manifest.
//!
//! The families are deliberately coarse: what matters is that high-dynamic
//! classes carry far more second-difference (acceleration) energy than
//! low-dynamic ones and that every class is recognizably distinct in
//! feature space.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffusion::{Condition, TrainItem};
use crate::error::{Result, SynmoError};
use crate::eval::EmbeddingTable;
use crate::motion::{
    derive_foot_contact, read_contact_file, read_motion_file, write_contact_file,
    write_motion_file, FootContactMask, FootContactParams, MotionSequence, Representation,
    Skeleton,
};

/// Joint names of the default skeleton, in index order.
pub const DEFAULT_JOINT_NAMES: [&str; 22] = [
    "pelvis",
    "l_hip",
    "r_hip",
    "spine1",
    "l_knee",
    "r_knee",
    "spine2",
    "l_ankle",
    "r_ankle",
    "spine3",
    "l_foot",
    "r_foot",
    "neck",
    "l_collar",
    "r_collar",
    "head",
    "l_shoulder",
    "r_shoulder",
    "l_elbow",
    "r_elbow",
    "l_wrist",
    "r_wrist",
];

const PARENTS: [i64; 22] = [
    -1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19,
];

/// Standing rest pose, +Y up, meters.
fn standing_pose() -> [[f64; 3]; 22] {
    [
        [0.00, 0.95, 0.00],  // pelvis
        [0.09, 0.91, 0.00],  // l_hip
        [-0.09, 0.91, 0.00], // r_hip
        [0.00, 1.05, 0.00],  // spine1
        [0.10, 0.50, 0.00],  // l_knee
        [-0.10, 0.50, 0.00], // r_knee
        [0.00, 1.18, 0.00],  // spine2
        [0.10, 0.08, 0.00],  // l_ankle
        [-0.10, 0.08, 0.00], // r_ankle
        [0.00, 1.30, 0.00],  // spine3
        [0.11, 0.02, 0.12],  // l_foot
        [-0.11, 0.02, 0.12], // r_foot
        [0.00, 1.45, 0.00],  // neck
        [0.05, 1.42, 0.00],  // l_collar
        [-0.05, 1.42, 0.00], // r_collar
        [0.00, 1.62, 0.00],  // head
        [0.18, 1.40, 0.00],  // l_shoulder
        [-0.18, 1.40, 0.00], // r_shoulder
        [0.42, 1.38, 0.00],  // l_elbow
        [-0.42, 1.38, 0.00], // r_elbow
        [0.65, 1.36, 0.00],  // l_wrist
        [-0.65, 1.36, 0.00], // r_wrist
    ]
}

/// Seated rest pose: pelvis dropped, shins forward.
fn seated_pose() -> [[f64; 3]; 22] {
    let mut pose = standing_pose();
    let drop = 0.40;
    // upper body sinks with the pelvis
    for idx in [0, 1, 2, 3, 6, 9, 12, 13, 14, 15, 16, 17, 18, 19, 20, 21] {
        pose[idx][1] -= drop;
    }
    // knees forward at seat height, shins down, feet under knees
    pose[4] = [0.10, 0.50, 0.35];
    pose[5] = [-0.10, 0.50, 0.35];
    pose[7] = [0.10, 0.08, 0.38];
    pose[8] = [-0.10, 0.08, 0.38];
    pose[10] = [0.11, 0.02, 0.50];
    pose[11] = [-0.11, 0.02, 0.50];
    pose
}

pub fn default_skeleton() -> Skeleton {
    let pose = standing_pose();
    let offsets: Vec<[f64; 3]> = (0..22)
        .map(|j| {
            let p = PARENTS[j];
            if p < 0 {
                [0.0; 3]
            } else {
                let parent = pose[p as usize];
                [
                    pose[j][0] - parent[0],
                    pose[j][1] - parent[1],
                    pose[j][2] - parent[2],
                ]
            }
        })
        .collect();
    Skeleton::new(PARENTS.to_vec(), offsets).expect("static skeleton is valid")
}

/// Parametric motion family of one activity class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MotionFamily {
    /// Arms and legs oscillate with optional whole-body bounce and forward
    /// travel; high acceleration energy (running, jumping).
    LimbOscillation {
        freq_hz: f64,
        amplitude: f64,
        bounce: f64,
        forward_speed: f64,
    },
    /// Whole-body periodic translation with small limb swing (walking).
    PeriodicTranslation {
        freq_hz: f64,
        stride: f64,
        speed: f64,
    },
    /// Slow drift and sway around a rest pose (sitting, standing).
    NearStaticDrift {
        drift_speed: f64,
        sway_amplitude: f64,
        sway_freq_hz: f64,
        seated: bool,
    },
}

impl MotionFamily {
    pub fn running() -> Self {
        MotionFamily::LimbOscillation {
            freq_hz: 3.0,
            amplitude: 0.25,
            bounce: 0.05,
            forward_speed: 2.5,
        }
    }

    pub fn jumping() -> Self {
        MotionFamily::LimbOscillation {
            freq_hz: 1.8,
            amplitude: 0.30,
            bounce: 0.25,
            forward_speed: 0.0,
        }
    }

    pub fn walking() -> Self {
        MotionFamily::PeriodicTranslation {
            freq_hz: 1.5,
            stride: 0.15,
            speed: 1.2,
        }
    }

    pub fn sitting() -> Self {
        MotionFamily::NearStaticDrift {
            drift_speed: 0.005,
            sway_amplitude: 0.010,
            sway_freq_hz: 0.25,
            seated: true,
        }
    }

    pub fn standing() -> Self {
        MotionFamily::NearStaticDrift {
            drift_speed: 0.010,
            sway_amplitude: 0.012,
            sway_freq_hz: 0.30,
            seated: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub label: String,
    pub family: MotionFamily,
    pub count: usize,
    pub prompts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCorpusSpec {
    pub classes: Vec<ClassSpec>,
    /// Clip length range in seconds.
    pub length_range_s: (f64, f64),
    pub fps: f64,
    /// Standard deviation of white position noise in meters.
    pub noise_std: f64,
    /// Condition/category embedding length.
    pub embed_dim: usize,
    pub seed: u64,
}

impl SyntheticCorpusSpec {
    /// Three-class default: running / walking / sitting.
    pub fn default_three_class(count: usize, seed: u64) -> Self {
        SyntheticCorpusSpec {
            classes: vec![
                ClassSpec {
                    label: "running".into(),
                    family: MotionFamily::running(),
                    count,
                    prompts: vec![
                        "person running".into(),
                        "running fast".into(),
                        "person running quickly".into(),
                    ],
                },
                ClassSpec {
                    label: "walking".into(),
                    family: MotionFamily::walking(),
                    count,
                    prompts: vec![
                        "person walking".into(),
                        "walking forward".into(),
                        "person walking slowly".into(),
                    ],
                },
                ClassSpec {
                    label: "sitting".into(),
                    family: MotionFamily::sitting(),
                    count,
                    prompts: vec![
                        "person sitting".into(),
                        "sitting quietly".into(),
                        "person sitting calmly".into(),
                    ],
                },
            ],
            length_range_s: (3.0, 10.0),
            fps: 20.0,
            noise_std: 0.002,
            embed_dim: 256,
            seed,
        }
    }

    /// Adds the remaining high/low-dynamic pair: jumping and standing.
    pub fn default_five_class(count: usize, seed: u64) -> Self {
        let mut spec = Self::default_three_class(count, seed);
        spec.classes.push(ClassSpec {
            label: "jumping".into(),
            family: MotionFamily::jumping(),
            count,
            prompts: vec![
                "person jumping".into(),
                "jumping repeatedly".into(),
                "person jumping high".into(),
            ],
        });
        spec.classes.push(ClassSpec {
            label: "standing".into(),
            family: MotionFamily::standing(),
            count,
            prompts: vec![
                "person standing".into(),
                "standing upright".into(),
                "person standing still".into(),
            ],
        });
        spec
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(SynmoError::Config("corpus spec lists no classes".into()));
        }
        for c in &self.classes {
            if c.count < 1 {
                return Err(SynmoError::Config(format!(
                    "class '{}' has count 0",
                    c.label
                )));
            }
            if c.prompts.is_empty() {
                return Err(SynmoError::Config(format!(
                    "class '{}' has no prompts",
                    c.label
                )));
            }
        }
        let (lo, hi) = self.length_range_s;
        if !(lo > 0.0 && lo <= hi) {
            return Err(SynmoError::Config(format!(
                "bad length range ({lo}, {hi})"
            )));
        }
        if !(self.fps > 0.0) || self.embed_dim == 0 {
            return Err(SynmoError::Config("fps and embed_dim must be positive".into()));
        }
        Ok(())
    }
}

const LIMB_JOINTS: [(usize, f64); 8] = [
    // joint index, phase offset in half-cycles (left/right alternate)
    (18, 0.0), // l_elbow
    (19, 1.0), // r_elbow
    (20, 0.0), // l_wrist
    (21, 1.0), // r_wrist
    (4, 1.0),  // l_knee
    (5, 0.0),  // r_knee
    (7, 1.0),  // l_ankle
    (8, 0.0),  // r_ankle
];

/// Generate one clip of a family. Deterministic per (family, n, fps, seed).
pub fn generate_motion(
    family: &MotionFamily,
    n: usize,
    fps: f64,
    noise_std: f64,
    seed: u64,
) -> MotionSequence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tau = std::f64::consts::TAU;
    let phase: f64 = rng.random_range(0.0..tau);
    let freq_jitter: f64 = rng.random_range(0.9..1.1);
    let amp_jitter: f64 = rng.random_range(0.85..1.15);
    let rest = match family {
        MotionFamily::NearStaticDrift { seated: true, .. } => seated_pose(),
        _ => standing_pose(),
    };
    let mut frames = Array3::zeros((n, 22, 3));
    for i in 0..n {
        let t = i as f64 / fps;
        for j in 0..22 {
            let mut p = rest[j];
            match *family {
                MotionFamily::LimbOscillation {
                    freq_hz,
                    amplitude,
                    bounce,
                    forward_speed,
                } => {
                    let f = freq_hz * freq_jitter;
                    let a = amplitude * amp_jitter;
                    p[0] += forward_speed * t;
                    p[1] += bounce * amp_jitter * (tau * f * 0.5 * t + phase).sin().abs();
                    if let Some(&(_, half_cycles)) =
                        LIMB_JOINTS.iter().find(|(idx, _)| *idx == j)
                    {
                        let arg = tau * f * t + phase + half_cycles * std::f64::consts::PI;
                        p[2] += a * arg.sin();
                        p[1] += 0.5 * a * arg.cos().abs();
                    }
                }
                MotionFamily::PeriodicTranslation {
                    freq_hz,
                    stride,
                    speed,
                } => {
                    let f = freq_hz * freq_jitter;
                    let s = stride * amp_jitter;
                    p[0] += speed * t;
                    p[1] += 0.02 * (tau * f * t + phase).sin();
                    if let Some(&(_, half_cycles)) =
                        LIMB_JOINTS.iter().find(|(idx, _)| *idx == j)
                    {
                        let arg = tau * f * 0.5 * t + phase + half_cycles * std::f64::consts::PI;
                        p[2] += s * arg.sin();
                    }
                }
                MotionFamily::NearStaticDrift {
                    drift_speed,
                    sway_amplitude,
                    sway_freq_hz,
                    ..
                } => {
                    let f = sway_freq_hz * freq_jitter;
                    p[0] += drift_speed * t;
                    p[2] += sway_amplitude * amp_jitter * (tau * f * t + phase).sin();
                }
            }
            for k in 0..3 {
                let noise: f64 = rng.random_range(-1.0..1.0) * noise_std * 1.732;
                frames[[i, j, k]] = p[k] + noise;
            }
        }
    }
    MotionSequence {
        frames,
        fps,
        representation: Representation::JointPositions3D,
        joint_names: DEFAULT_JOINT_NAMES.iter().map(|s| s.to_string()).collect(),
    }
}

pub const FOOT_JOINTS: [usize; 4] = [7, 8, 10, 11];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusItem {
    pub id: String,
    pub label: String,
    pub prompt: String,
    pub motion_file: String,
    pub contact_file: String,
    pub n_frames: usize,
    pub fps: f64,
    pub item_seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub seed: u64,
    pub fps: f64,
    pub embed_dim: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    pub items: Vec<CorpusItem>,
}

fn fnv1a_str(s: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// One generated item before any file is written.
pub struct GeneratedItem {
    pub id: String,
    pub label: String,
    pub prompt: String,
    pub item_seed: u64,
    pub motion: MotionSequence,
    pub mask: FootContactMask,
    pub embedding: Vec<f64>,
}

/// Generate every item of the spec in memory, in manifest order.
pub fn generate_corpus_items(spec: &SyntheticCorpusSpec) -> Result<Vec<GeneratedItem>> {
    spec.validate()?;
    let mut items = Vec::new();
    let mut embeddings = EmbeddingTable::default();
    for class in &spec.classes {
        for idx in 0..class.count {
            let id = format!("{}_{idx:03}", class.label);
            let item_seed = spec.seed ^ fnv1a_str(&id);
            let mut rng = ChaCha8Rng::seed_from_u64(item_seed);
            let (lo, hi) = spec.length_range_s;
            let seconds: f64 = if lo == hi { lo } else { rng.random_range(lo..hi) };
            let n = ((seconds * spec.fps).round() as usize).max(3);
            let motion =
                generate_motion(&class.family, n, spec.fps, spec.noise_std, item_seed);
            let mask = derive_foot_contact(
                &motion,
                &FootContactParams::new(FOOT_JOINTS.to_vec()),
            )?;
            let prompt = class.prompts[idx % class.prompts.len()].clone();
            let embedding = embeddings.embed_or_stub(&prompt, spec.embed_dim)?;
            embeddings.insert(&prompt, embedding.clone());
            items.push(GeneratedItem {
                id,
                label: class.label.clone(),
                prompt,
                item_seed,
                motion,
                mask,
                embedding,
            });
        }
    }
    Ok(items)
}

impl GeneratedItem {
    /// Package for training, cropped to `n_frames`.
    pub fn to_train_item(&self, n_frames: usize) -> Result<TrainItem> {
        let motion = self.motion.crop(n_frames)?;
        let mask = FootContactMask {
            mask: self.mask.mask.slice(ndarray::s![..n_frames, ..]).to_owned(),
            foot_joints: self.mask.foot_joints.clone(),
        };
        Ok(TrainItem {
            motion,
            cond: Condition::new(self.embedding.clone(), Some(self.label.clone())),
            mask,
        })
    }
}

/// Write motions, contact masks, prompt embeddings, and the manifest.
pub fn gen_corpus(
    spec: &SyntheticCorpusSpec,
    out_dir: &Path,
    config_hash: Option<String>,
) -> Result<CorpusManifest> {
    let generated = generate_corpus_items(spec)?;
    fs::create_dir_all(out_dir)?;
    let skeleton = default_skeleton();
    let mut items = Vec::new();
    let mut embeddings = EmbeddingTable::default();
    for item in &generated {
        let motion_file = format!("{}.motion", item.id);
        let contact_file = format!("{}.contact.csv", item.id);
        write_motion_file(&out_dir.join(&motion_file), &item.motion, Some(&skeleton))?;
        write_contact_file(&out_dir.join(&contact_file), &item.mask)?;
        embeddings.insert(&item.prompt, item.embedding.clone());
        items.push(CorpusItem {
            id: item.id.clone(),
            label: item.label.clone(),
            prompt: item.prompt.clone(),
            motion_file,
            contact_file,
            n_frames: item.motion.num_frames(),
            fps: spec.fps,
            item_seed: item.item_seed,
        });
    }
    embeddings.save(&out_dir.join("embeddings.json"))?;
    let manifest = CorpusManifest {
        seed: spec.seed,
        fps: spec.fps,
        embed_dim: spec.embed_dim,
        config_hash,
        items,
    };
    fs::write(
        out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(manifest)
}

/// A corpus item loaded back from disk.
#[derive(Debug, Clone)]
pub struct LoadedItem {
    pub motion: MotionSequence,
    pub mask: FootContactMask,
    pub label: String,
    pub prompt: String,
    pub embedding: Vec<f64>,
}

pub struct LoadedCorpus {
    pub manifest: CorpusManifest,
    pub items: Vec<LoadedItem>,
    pub skeleton: Option<Skeleton>,
    pub paths: Vec<PathBuf>,
}

pub fn load_corpus(dir: &Path) -> Result<LoadedCorpus> {
    let manifest_path = dir.join("manifest.json");
    let text = fs::read_to_string(&manifest_path)
        .map_err(|e| SynmoError::Data(format!("{}: {e}", manifest_path.display())))?;
    let manifest: CorpusManifest = serde_json::from_str(&text)?;
    let embeddings = EmbeddingTable::load(&dir.join("embeddings.json")).unwrap_or_default();
    let mut items = Vec::with_capacity(manifest.items.len());
    let mut skeleton = None;
    let mut paths = Vec::new();
    for item in &manifest.items {
        let motion_path = dir.join(&item.motion_file);
        let (motion, skel) = read_motion_file(&motion_path)?;
        if skeleton.is_none() {
            skeleton = skel;
        }
        let mask = read_contact_file(&dir.join(&item.contact_file))?;
        let embedding = embeddings.embed_or_stub(&item.prompt, manifest.embed_dim)?;
        paths.push(motion_path);
        items.push(LoadedItem {
            motion,
            mask,
            label: item.label.clone(),
            prompt: item.prompt.clone(),
            embedding,
        });
    }
    Ok(LoadedCorpus {
        manifest,
        items,
        skeleton,
        paths,
    })
}

impl LoadedCorpus {
    /// Crop every item to `n_frames` and package for training.
    pub fn to_train_items(&self, n_frames: usize) -> Result<Vec<TrainItem>> {
        self.items
            .iter()
            .map(|item| {
                let motion = item.motion.crop(n_frames).map_err(|_| {
                    SynmoError::Data(format!(
                        "item with prompt '{}' has {} frames, training needs {n_frames}",
                        item.prompt,
                        item.motion.num_frames()
                    ))
                })?;
                let mask = FootContactMask {
                    mask: item.mask.mask.slice(ndarray::s![..n_frames, ..]).to_owned(),
                    foot_joints: item.mask.foot_joints.clone(),
                };
                Ok(TrainItem {
                    motion,
                    cond: Condition::new(item.embedding.clone(), Some(item.label.clone())),
                    mask,
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::finite_diff_acceleration;

    #[test]
    fn default_skeleton_is_consistent() {
        let s = default_skeleton();
        assert_eq!(s.num_joints(), 22);
        assert_eq!(s.parent_of(0), None);
        assert_eq!(s.parent_of(15), Some(12));
    }

    #[test]
    fn running_has_much_larger_acceleration_than_standing() {
        let n = 100;
        let fps = 20.0;
        let run = generate_motion(&MotionFamily::running(), n, fps, 0.002, 7);
        let stand = generate_motion(&MotionFamily::standing(), n, fps, 0.002, 7);
        let mean_abs = |m: &MotionSequence| {
            let acc = finite_diff_acceleration(m).unwrap();
            acc.iter().map(|v| v.abs()).sum::<f64>() / acc.len() as f64
        };
        let r = mean_abs(&run);
        let s = mean_abs(&stand);
        assert!(r >= 5.0 * s, "running {r} vs standing {s}");
    }

    #[test]
    fn generator_is_deterministic() {
        let a = generate_motion(&MotionFamily::walking(), 50, 20.0, 0.002, 9);
        let b = generate_motion(&MotionFamily::walking(), 50, 20.0, 0.002, 9);
        assert_eq!(a.frames, b.frames);
    }

    #[test]
    fn gen_corpus_counts_and_reload() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SyntheticCorpusSpec::default_three_class(4, 11);
        let manifest = gen_corpus(&spec, dir.path(), None).unwrap();
        assert_eq!(manifest.items.len(), 12);
        let loaded = load_corpus(dir.path()).unwrap();
        assert_eq!(loaded.items.len(), 12);
        assert!(loaded.skeleton.is_some());
        // every item long enough for a 3 s crop
        let items = loaded.to_train_items(60).unwrap();
        assert_eq!(items.len(), 12);
        for item in &items {
            assert_eq!(item.motion.num_frames(), 60);
            assert_eq!(item.cond.embedding.len(), spec.embed_dim);
        }
    }

    #[test]
    fn gen_corpus_same_seed_byte_identical() {
        let spec = SyntheticCorpusSpec::default_three_class(2, 5);
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        gen_corpus(&spec, dir_a.path(), None).unwrap();
        gen_corpus(&spec, dir_b.path(), None).unwrap();
        let mut names: Vec<String> = fs::read_dir(dir_a.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        names.sort();
        assert!(!names.is_empty());
        for name in names {
            let a = fs::read(dir_a.path().join(&name)).unwrap();
            let b = fs::read(dir_b.path().join(&name)).unwrap();
            assert_eq!(a, b, "file {name} differs");
        }
    }

    #[test]
    fn stub_prompts_bucket_to_their_categories() {
        use crate::eval::{assign_category, stub_embedding, CategorySet};
        let dim = 256;
        let cats = CategorySet::default_with_stub(dim).unwrap();
        let spec = SyntheticCorpusSpec::default_five_class(1, 0);
        for class in &spec.classes {
            for prompt in &class.prompts {
                let q = stub_embedding(prompt, dim).unwrap();
                let assigned = assign_category(&q, &cats).unwrap().to_lowercase();
                assert_eq!(assigned, class.label, "prompt '{prompt}'");
            }
        }
    }
}

//! Pipeline configuration and command-level orchestration for the CLI
//! and the runnable examples.

mod commands;
mod corpus;
mod ingest;

pub use commands::{
    cmd_eval, cmd_finetune, cmd_gen_corpus, cmd_imu, cmd_report, cmd_sample, cmd_train,
    EvalArgs, SampleOutput,
};
pub use corpus::{
    default_skeleton, gen_corpus, generate_corpus_items, generate_motion, load_corpus,
    ClassSpec, CorpusItem, CorpusManifest, GeneratedItem, LoadedCorpus, LoadedItem,
    MotionFamily, SyntheticCorpusSpec, DEFAULT_JOINT_NAMES, FOOT_JOINTS,
};
pub use ingest::{cmd_ingest_realworld, IngestConfig, IngestSummary, TimeUnit};

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diffusion::{ScheduleConfig, TrainHyper};
use crate::error::{Result, SynmoError};
use crate::imu::{default_placements, GravityConfig, SensorPlacement};
use crate::loss::LossWeights;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Fast,
    Full,
}

/// Denoiser architecture knobs exposed through the config file; shape
/// fields (frames, joints, condition length) come from the corpus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DenoiserKnobs {
    pub hidden_width: usize,
    pub hidden_blocks: usize,
    pub time_embed_dim: usize,
}

impl Default for DenoiserKnobs {
    fn default() -> Self {
        DenoiserKnobs {
            hidden_width: 64,
            hidden_blocks: 1,
            time_embed_dim: 8,
        }
    }
}

/// The single JSON configuration consumed by every command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub corpus_dir: PathBuf,
    pub checkpoint_dir: PathBuf,
    pub output_dir: PathBuf,
    pub schedule: ScheduleConfig,
    pub denoiser: DenoiserKnobs,
    /// Frames per training window (motions are cropped to this length).
    pub train_frames: usize,
    pub motion_fps: f64,
    /// Embedding length shared by conditions and category assignment.
    pub embed_dim: usize,
    pub train: TrainHyper,
    pub finetune: TrainHyper,
    pub train_weights: LossWeights,
    pub finetune_weights: LossWeights,
    pub placements: Vec<SensorPlacement>,
    pub gravity: GravityConfig,
    pub window_len: usize,
    pub window_overlap: f64,
    /// Resample IMU output to this rate; None keeps the motion rate.
    pub imu_target_fps: Option<f64>,
    pub category_threshold: f64,
    /// Evaluation repetitions (distinct classifier seeds).
    pub repetitions: usize,
    /// Real-corpus label renames applied during evaluation.
    pub label_map: BTreeMap<String, String>,
    pub ingest: IngestConfig,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            corpus_dir: PathBuf::from("corpus"),
            checkpoint_dir: PathBuf::from("checkpoints"),
            output_dir: PathBuf::from("out"),
            schedule: ScheduleConfig::desk_test(),
            denoiser: DenoiserKnobs::default(),
            train_frames: 60,
            motion_fps: 20.0,
            embed_dim: 256,
            train: TrainHyper {
                steps: 2000,
                batch: 4,
                lr: 1e-3,
                momentum: 0.9,
                seed: 0,
            },
            finetune: TrainHyper {
                steps: 1000,
                batch: 4,
                lr: 1e-3,
                momentum: 0.9,
                seed: 0,
            },
            train_weights: LossWeights::default().without_acc(),
            finetune_weights: LossWeights::default(),
            placements: default_placements(),
            gravity: GravityConfig::default(),
            window_len: 40,
            window_overlap: 0.5,
            imu_target_fps: None,
            category_threshold: crate::eval::DEFAULT_THRESHOLD,
            repetitions: 10,
            label_map: BTreeMap::new(),
            ingest: IngestConfig::default(),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    /// Load from JSON, then apply path overrides from the environment
    /// (SYNMO_CORPUS_DIR, SYNMO_CHECKPOINT_DIR, SYNMO_OUTPUT_DIR).
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SynmoError::Config(format!("{}: {e}", path.display())))?;
        let mut config: PipelineConfig = serde_json::from_str(&text)
            .map_err(|e| SynmoError::Config(format!("{}: {e}", path.display())))?;
        config.apply_env_overrides();
        config.validate()?;
        Ok(config)
    }

    pub fn apply_env_overrides(&mut self) {
        if let Ok(v) = std::env::var("SYNMO_CORPUS_DIR") {
            self.corpus_dir = PathBuf::from(v);
        }
        if let Ok(v) = std::env::var("SYNMO_CHECKPOINT_DIR") {
            self.checkpoint_dir = PathBuf::from(v);
        }
        if let Ok(v) = std::env::var("SYNMO_OUTPUT_DIR") {
            self.output_dir = PathBuf::from(v);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.train_frames < 3 {
            return Err(SynmoError::Config("train_frames must be >= 3".into()));
        }
        if self.window_len < 1 || !(0.0..1.0).contains(&self.window_overlap) {
            return Err(SynmoError::Config(
                "window_len must be >= 1 and overlap in [0, 1)".into(),
            ));
        }
        if !(self.category_threshold > 0.0 && self.category_threshold < 1.0) {
            return Err(SynmoError::Config("category threshold outside (0, 1)".into()));
        }
        if self.repetitions == 0 {
            return Err(SynmoError::Config("repetitions must be >= 1".into()));
        }
        if self.embed_dim == 0 {
            return Err(SynmoError::Config("embed_dim must be >= 1".into()));
        }
        self.train_weights
            .validate()
            .map_err(|e| SynmoError::Config(e.to_string()))?;
        self.finetune_weights
            .validate()
            .map_err(|e| SynmoError::Config(e.to_string()))?;
        self.gravity
            .validate()
            .map_err(|e| SynmoError::Config(e.to_string()))?;
        Ok(())
    }

    /// Fast: 100-step schedule, 3 repetitions, shorter training. Full:
    /// 1000-step schedule, 10 repetitions, longer training.
    pub fn apply_profile(&mut self, profile: Profile) {
        match profile {
            Profile::Fast => {
                self.schedule = ScheduleConfig::desk_test();
                self.repetitions = 3;
                self.train.steps = 1500;
                self.finetune.steps = 800;
            }
            Profile::Full => {
                self.schedule = ScheduleConfig::desk_full();
                self.repetitions = 10;
                self.train.steps = 4000;
                self.finetune.steps = 2000;
            }
        }
    }

    /// Hex SHA-256 of the canonical JSON serialization.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips() {
        let config = PipelineConfig::default();
        let json = serde_json::to_string_pretty(&config).unwrap();
        let back: PipelineConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, config);
    }

    #[test]
    fn partial_config_file_fills_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.json");
        std::fs::write(&path, r#"{"seed": 42, "window_len": 20}"#).unwrap();
        let config = PipelineConfig::load(&path).unwrap();
        assert_eq!(config.seed, 42);
        assert_eq!(config.window_len, 20);
        assert_eq!(config.embed_dim, PipelineConfig::default().embed_dim);
    }

    #[test]
    fn config_hash_changes_with_content() {
        let a = PipelineConfig::default();
        let mut b = a.clone();
        b.seed = 1;
        assert_ne!(a.config_hash(), b.config_hash());
        assert_eq!(a.config_hash(), PipelineConfig::default().config_hash());
    }

    #[test]
    fn bad_config_rejected() {
        let mut config = PipelineConfig::default();
        config.window_overlap = 1.0;
        assert!(config.validate().is_err());
    }

    #[test]
    fn profile_adjusts_repetitions() {
        let mut config = PipelineConfig::default();
        config.apply_profile(Profile::Fast);
        assert_eq!(config.repetitions, 3);
        config.apply_profile(Profile::Full);
        assert_eq!(config.repetitions, 10);
        assert_eq!(config.schedule.steps, 1000);
    }
}

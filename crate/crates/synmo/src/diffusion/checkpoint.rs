//! Versioned JSON checkpoints and loss-curve CSV export.
//!
//! Parameters are stored as base64 of their little-endian IEEE-754 bytes,
//! so save/load round-trips are bit-exact.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SynmoError};
use crate::loss::{LossBreakdown, LossWeights};

use super::denoiser::{DenoiserConfig, DenoiserParams};
use super::ScheduleConfig;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainMeta {
    pub steps: usize,
    pub seed: u64,
    pub weights: LossWeights,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub schedule: ScheduleConfig,
    pub denoiser: DenoiserConfig,
    /// base64 of little-endian f64 parameter bytes, flat layout.
    pub params_b64: String,
    pub meta: TrainMeta,
}

impl Checkpoint {
    pub fn from_params(
        params: &DenoiserParams,
        schedule: ScheduleConfig,
        meta: TrainMeta,
    ) -> Self {
        let flat = params.to_flat();
        let mut bytes = Vec::with_capacity(flat.len() * 8);
        for v in flat {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        Checkpoint {
            version: CHECKPOINT_VERSION,
            schedule,
            denoiser: params.config().clone(),
            params_b64: B64.encode(bytes),
            meta,
        }
    }

    pub fn params(&self) -> Result<DenoiserParams> {
        let bytes = B64
            .decode(&self.params_b64)
            .map_err(|e| SynmoError::Data(format!("bad checkpoint parameter block: {e}")))?;
        if bytes.len() % 8 != 0 {
            return Err(SynmoError::Data(
                "checkpoint parameter block is not a whole number of f64s".into(),
            ));
        }
        let flat: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        DenoiserParams::from_flat(self.denoiser.clone(), &flat)
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let json = serde_json::to_string_pretty(ckpt)?;
    fs::write(path, json)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(path)
        .map_err(|e| SynmoError::Data(format!("{}: {e}", path.display())))?;
    let ckpt: Checkpoint = serde_json::from_str(&text)?;
    if ckpt.version != CHECKPOINT_VERSION {
        return Err(SynmoError::Data(format!(
            "{}: checkpoint version {} (this build reads {})",
            path.display(),
            ckpt.version,
            CHECKPOINT_VERSION
        )));
    }
    Ok(ckpt)
}

/// CSV export of a loss history: step,simple,pos,foot,vel,acc,total.
pub fn write_loss_curves(path: &Path, curves: &[LossBreakdown]) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "step,simple,pos,foot,vel,acc,total")?;
    for (step, b) in curves.iter().enumerate() {
        writeln!(
            w,
            "{step},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
            b.simple, b.pos, b.foot, b.vel, b.acc, b.total
        )?;
    }
    w.flush()?;
    Ok(())
}

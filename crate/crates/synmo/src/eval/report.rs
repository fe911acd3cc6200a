//! Evaluation reports: per-category acceleration-loss deltas between two
//! checkpoints, confusion matrices, and the aggregate report files.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diffusion::{acc_loss_on_grid, Condition, DenoiserParams, NoiseSchedule};
use crate::error::{Result, SynmoError};
use crate::motion::MotionSequence;

use super::{assign_category, CategorySet};

/// Acceleration-loss comparison for one category bucket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryDelta {
    pub label: String,
    pub count: usize,
    pub base_mean: f64,
    pub refined_mean: f64,
    /// refined − base; negative means the refined model fits accelerations
    /// better.
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaReport {
    pub categories: Vec<CategoryDelta>,
    pub overall_base: f64,
    pub overall_refined: f64,
    pub overall_delta: f64,
    /// overall_delta / overall_base (0 when the base loss is 0).
    pub overall_relative_change: f64,
}

/// Mean acceleration loss of each model per assigned category, evaluated
/// on identical noised inputs over the fixed timestep grid. Categories
/// with no samples are absent from the table.
pub fn loss_delta_report(
    model_base: &DenoiserParams,
    model_refined: &DenoiserParams,
    eval_set: &[(MotionSequence, Condition)],
    cats: &CategorySet,
    schedule: &NoiseSchedule,
    base_seed: u64,
) -> Result<DeltaReport> {
    if eval_set.is_empty() {
        return Err(SynmoError::Data("delta report needs a non-empty set".into()));
    }
    let mut buckets: BTreeMap<String, (usize, f64, f64)> = BTreeMap::new();
    let mut overall = (0.0, 0.0);
    for (i, (motion, cond)) in eval_set.iter().enumerate() {
        let label = assign_category(&cond.embedding, cats)?;
        let item_seed = base_seed.wrapping_add((i as u64).wrapping_mul(1_000_003));
        let base = acc_loss_on_grid(model_base, motion, cond, schedule, item_seed)?;
        let refined = acc_loss_on_grid(model_refined, motion, cond, schedule, item_seed)?;
        let entry = buckets.entry(label).or_insert((0, 0.0, 0.0));
        entry.0 += 1;
        entry.1 += base;
        entry.2 += refined;
        overall.0 += base;
        overall.1 += refined;
    }
    let n = eval_set.len() as f64;
    let categories = buckets
        .into_iter()
        .map(|(label, (count, base_sum, refined_sum))| {
            let base_mean = base_sum / count as f64;
            let refined_mean = refined_sum / count as f64;
            CategoryDelta {
                label,
                count,
                base_mean,
                refined_mean,
                delta: refined_mean - base_mean,
            }
        })
        .collect();
    let overall_base = overall.0 / n;
    let overall_refined = overall.1 / n;
    let overall_delta = overall_refined - overall_base;
    Ok(DeltaReport {
        categories,
        overall_base,
        overall_refined,
        overall_delta,
        overall_relative_change: if overall_base != 0.0 {
            overall_delta / overall_base
        } else {
            0.0
        },
    })
}

/// Row-per-truth-class counts over the union of observed labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    /// matrix[truth][pred]
    pub matrix: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn from_predictions(preds: &[String], truth: &[String]) -> Result<Self> {
        if preds.len() != truth.len() {
            return Err(SynmoError::Dimension(format!(
                "{} predictions for {} truths",
                preds.len(),
                truth.len()
            )));
        }
        if preds.is_empty() {
            return Err(SynmoError::Data("empty prediction list".into()));
        }
        let classes: Vec<String> = preds
            .iter()
            .chain(truth.iter())
            .cloned()
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        let index: BTreeMap<&str, usize> = classes
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i))
            .collect();
        let k = classes.len();
        let mut matrix = vec![vec![0usize; k]; k];
        for (p, t) in preds.iter().zip(truth.iter()) {
            matrix[index[t.as_str()]][index[p.as_str()]] += 1;
        }
        Ok(ConfusionMatrix { classes, matrix })
    }

    /// Sum over all runs of another matrix with the same classes.
    pub fn accumulate(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if self.classes != other.classes {
            return Err(SynmoError::Dimension(
                "confusion matrices cover different class sets".into(),
            ));
        }
        for (row, orow) in self.matrix.iter_mut().zip(other.matrix.iter()) {
            for (v, ov) in row.iter_mut().zip(orow.iter()) {
                *v += ov;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjPoint {
    pub x: f64,
    pub y: f64,
    /// "real" or "synthetic".
    pub source: String,
    pub label: String,
}

/// Aggregate output of an evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub balanced_accuracy_runs: Vec<f64>,
    pub balanced_accuracy_mean: f64,
    pub balanced_accuracy_std: f64,
    pub confusion: ConfusionMatrix,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<DeltaReport>,
    pub projection: Vec<ProjPoint>,
}

impl EvalReport {
    pub fn from_runs(
        runs: Vec<f64>,
        confusion: ConfusionMatrix,
        delta: Option<DeltaReport>,
        projection: Vec<ProjPoint>,
    ) -> Result<Self> {
        if runs.is_empty() {
            return Err(SynmoError::Data("report needs at least one run".into()));
        }
        let n = runs.len() as f64;
        let mean = runs.iter().sum::<f64>() / n;
        let std = if runs.len() > 1 {
            (runs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Ok(EvalReport {
            balanced_accuracy_runs: runs,
            balanced_accuracy_mean: mean,
            balanced_accuracy_std: std,
            confusion,
            delta,
            projection,
        })
    }
}

pub fn write_eval_report_json(path: &Path, report: &EvalReport) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(report)?)?;
    Ok(())
}

pub fn write_delta_csv(path: &Path, report: &DeltaReport) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "label,count,base_mean,refined_mean,delta")?;
    for c in &report.categories {
        writeln!(
            w,
            "{},{},{:.17e},{:.17e},{:.17e}",
            c.label, c.count, c.base_mean, c.refined_mean, c.delta
        )?;
    }
    writeln!(
        w,
        "OVERALL,{},{:.17e},{:.17e},{:.17e}",
        report.categories.iter().map(|c| c.count).sum::<usize>(),
        report.overall_base,
        report.overall_refined,
        report.overall_delta
    )?;
    w.flush()?;
    Ok(())
}

pub fn write_confusion_csv(path: &Path, confusion: &ConfusionMatrix) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "truth\\pred,{}", confusion.classes.join(","))?;
    for (class, row) in confusion.classes.iter().zip(confusion.matrix.iter()) {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{class},{}", cells.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_projection_csv(path: &Path, points: &[ProjPoint]) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "x,y,source,label")?;
    for p in points {
        writeln!(w, "{:.17e},{:.17e},{},{}", p.x, p.y, p.source, p.label)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{DenoiserConfig, ScheduleConfig};
    use crate::eval::stub_embedding;
    use crate::motion::Representation;
    use ndarray::Array3;

    fn tiny_denoiser(seed: u64) -> DenoiserParams {
        DenoiserParams::init(
            DenoiserConfig {
                n_frames: 6,
                joints: 2,
                dim: 3,
                cond_dim: 16,
                hidden_width: 8,
                hidden_blocks: 1,
                time_embed_dim: 4,
                fps: 20.0,
                joint_names: Vec::new(),
            },
            seed,
        )
        .unwrap()
    }

    fn eval_item(prompt: &str, scale: f64) -> (MotionSequence, Condition) {
        let frames = Array3::from_shape_fn((6, 2, 3), |(i, j, k)| {
            scale * ((i + j + k) as f64 * 0.8).sin()
        });
        let motion = MotionSequence {
            frames,
            fps: 20.0,
            representation: Representation::JointPositions3D,
            joint_names: vec!["a".into(), "b".into()],
        };
        let cond = Condition::new(stub_embedding(prompt, 16).unwrap(), None);
        (motion, cond)
    }

    #[test]
    fn identical_models_give_zero_deltas() {
        let model = tiny_denoiser(3);
        let cats = CategorySet::default_with_stub(16).unwrap();
        let set = vec![
            eval_item("person running", 1.0),
            eval_item("person sitting", 0.1),
        ];
        let schedule = ScheduleConfig::desk_test().build().unwrap();
        let report = loss_delta_report(&model, &model, &set, &cats, &schedule, 5).unwrap();
        for c in &report.categories {
            assert_eq!(c.delta, 0.0);
        }
        assert_eq!(report.overall_delta, 0.0);
        assert_eq!(report.overall_relative_change, 0.0);
    }

    #[test]
    fn empty_buckets_are_absent() {
        let model = tiny_denoiser(4);
        let cats = CategorySet::default_with_stub(16).unwrap();
        let set = vec![eval_item("person running", 1.0)];
        let schedule = ScheduleConfig::desk_test().build().unwrap();
        let report = loss_delta_report(&model, &model, &set, &cats, &schedule, 5).unwrap();
        assert_eq!(report.categories.len(), 1);
        assert_eq!(report.categories[0].label, "Running");
        assert_eq!(report.categories[0].count, 1);
    }

    #[test]
    fn confusion_row_sums_match_class_counts() {
        let truth: Vec<String> = ["a", "a", "b", "c", "c", "c"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let preds: Vec<String> = ["a", "b", "b", "c", "a", "c"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let cm = ConfusionMatrix::from_predictions(&preds, &truth).unwrap();
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for t in &truth {
            *counts.entry(t.as_str()).or_default() += 1;
        }
        for (class, row) in cm.classes.iter().zip(cm.matrix.iter()) {
            let expect = counts.get(class.as_str()).copied().unwrap_or(0);
            assert_eq!(row.iter().sum::<usize>(), expect, "class {class}");
        }
    }

    #[test]
    fn report_mean_std_and_files() {
        let cm = ConfusionMatrix::from_predictions(
            &["a".to_string(), "b".to_string()],
            &["a".to_string(), "b".to_string()],
        )
        .unwrap();
        let report = EvalReport::from_runs(
            vec![0.8, 0.9, 1.0],
            cm,
            None,
            vec![ProjPoint {
                x: 0.1,
                y: -0.2,
                source: "real".into(),
                label: "walking".into(),
            }],
        )
        .unwrap();
        assert!((report.balanced_accuracy_mean - 0.9).abs() < 1e-12);
        assert!((report.balanced_accuracy_std - 0.1).abs() < 1e-12);
        let dir = tempfile::tempdir().unwrap();
        write_eval_report_json(&dir.path().join("report.json"), &report).unwrap();
        write_confusion_csv(&dir.path().join("confusion.csv"), &report.confusion).unwrap();
        write_projection_csv(&dir.path().join("projection.csv"), &report.projection).unwrap();
        let text = std::fs::read_to_string(dir.path().join("projection.csv")).unwrap();
        assert!(text.starts_with("x,y,source,label"));
        assert!(text.contains("real,walking"));
    }
}

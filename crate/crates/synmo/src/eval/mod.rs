//! Evaluation harness: activity-category assignment via embedding
//! similarity, high/low-dynamic partitioning, sliding-window segmentation,
//! per-axis feature extraction, a deterministic 2-D projection, a baseline
//! classifier, balanced accuracy, and the per-category acceleration-loss
//! delta report.

mod classifier;
mod features;
mod project;
mod report;
mod windows;

pub use classifier::{predict_dataset, train_classifier, ClassifierHyper, ClassifierModel};
pub use features::{axis_features, extract_features, FEATURES_PER_AXIS};
pub use project::project_2d;
pub use report::{
    loss_delta_report, write_confusion_csv, write_delta_csv, write_eval_report_json,
    write_projection_csv, CategoryDelta, ConfusionMatrix, DeltaReport, EvalReport, ProjPoint,
};
pub use windows::{merge_windows, segment_windows, Window, WindowedDataset};

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SynmoError};

/// Default activity categories shared by the evaluation harness.
pub const DEFAULT_CATEGORIES: [&str; 8] = [
    "Dancing",
    "Jumping",
    "Lying",
    "Running",
    "Sitting",
    "Stair climbing",
    "Standing",
    "Walking",
];

pub const DEFAULT_THRESHOLD: f64 = 0.45;
pub const OTHER_LABEL: &str = "Other";

/// Named categories with unit reference embeddings and a similarity
/// threshold below which queries fall through to `other_label`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorySet {
    pub names: Vec<String>,
    pub embeddings: Vec<Vec<f64>>,
    pub threshold: f64,
    pub other_label: String,
}

impl CategorySet {
    pub fn new(
        names: Vec<String>,
        embeddings: Vec<Vec<f64>>,
        threshold: f64,
        other_label: String,
    ) -> Result<Self> {
        if names.len() != embeddings.len() {
            return Err(SynmoError::Dimension(format!(
                "{} names for {} embeddings",
                names.len(),
                embeddings.len()
            )));
        }
        if names.is_empty() {
            return Err(SynmoError::InvalidValue("category set is empty".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for name in &names {
            if !seen.insert(name.clone()) {
                return Err(SynmoError::InvalidValue(format!(
                    "duplicate category name '{name}'"
                )));
            }
        }
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(SynmoError::InvalidValue(format!(
                "threshold {threshold} outside (0, 1)"
            )));
        }
        let embeddings = embeddings
            .into_iter()
            .enumerate()
            .map(|(i, e)| {
                normalize(&e).ok_or_else(|| {
                    SynmoError::InvalidValue(format!("category '{}' has a zero embedding", names[i]))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CategorySet {
            names,
            embeddings,
            threshold,
            other_label,
        })
    }

    /// The default eight categories embedded with the hashed-token stub.
    pub fn default_with_stub(dim: usize) -> Result<Self> {
        let names: Vec<String> = DEFAULT_CATEGORIES.iter().map(|s| s.to_string()).collect();
        let embeddings = names
            .iter()
            .map(|n| stub_embedding(n, dim))
            .collect::<Result<Vec<_>>>()?;
        CategorySet::new(names, embeddings, DEFAULT_THRESHOLD, OTHER_LABEL.into())
    }
}

fn normalize(v: &[f64]) -> Option<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        None
    } else {
        Some(v.iter().map(|x| x / norm).collect())
    }
}

/// Pick the category with the highest cosine similarity to the query.
/// A maximum below the threshold falls through to the other label;
/// similarity exactly at the threshold passes. Ties keep the earlier
/// category.
pub fn assign_category(text_embedding: &[f64], cats: &CategorySet) -> Result<String> {
    let query = normalize(text_embedding)
        .ok_or_else(|| SynmoError::InvalidValue("query embedding is zero".into()))?;
    if query.len() != cats.embeddings[0].len() {
        return Err(SynmoError::Dimension(format!(
            "query has {} dims, categories {}",
            query.len(),
            cats.embeddings[0].len()
        )));
    }
    let mut best = f64::NEG_INFINITY;
    let mut best_name = cats.other_label.clone();
    for (name, emb) in cats.names.iter().zip(cats.embeddings.iter()) {
        let sim: f64 = query.iter().zip(emb.iter()).map(|(a, b)| a * b).sum();
        if sim > best {
            best = sim;
            best_name = name.clone();
        }
    }
    if best >= cats.threshold {
        Ok(best_name)
    } else {
        Ok(cats.other_label.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DynamicClass {
    High,
    Low,
}

/// Partition of the category set: running, jumping and dancing carry large
/// accelerations and rapid orientation changes; the rest are low-dynamic.
pub fn dynamic_class(label: &str) -> Result<DynamicClass> {
    match label.to_lowercase().as_str() {
        "running" | "jumping" | "dancing" => Ok(DynamicClass::High),
        "lying" | "walking" | "stair climbing" | "sitting" | "standing" | "other" => {
            Ok(DynamicClass::Low)
        }
        other => Err(SynmoError::InvalidValue(format!(
            "unknown activity label '{other}'"
        ))),
    }
}

/// Deterministic non-semantic text embedding: each lowercase alphanumeric
/// token is hashed (FNV-1a) and the hash seeds a dense pseudo-random unit
/// signature; token signatures are summed and L2-normalized. Texts sharing
/// tokens get correlated vectors; nothing more is promised.
pub fn stub_embedding(text: &str, dim: usize) -> Result<Vec<f64>> {
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    if dim == 0 {
        return Err(SynmoError::InvalidValue("embedding dim must be > 0".into()));
    }
    let mut v = vec![0.0; dim];
    let mut any = false;
    for token in text
        .to_lowercase()
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|t| !t.is_empty())
    {
        any = true;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(fnv1a(token.as_bytes()));
        let mut signature = vec![0.0; dim];
        for s in signature.iter_mut() {
            *s = StandardNormal.sample(&mut rng);
        }
        let sig = normalize(&signature).expect("Gaussian signature is nonzero");
        for (vi, si) in v.iter_mut().zip(sig.iter()) {
            *vi += si;
        }
    }
    if !any {
        return Err(SynmoError::InvalidValue(format!(
            "text '{text}' has no tokens to embed"
        )));
    }
    normalize(&v).ok_or_else(|| {
        SynmoError::InvalidValue(format!("tokens of '{text}' cancelled to a zero embedding"))
    })
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Text → embedding map backed by a JSON file, with the stub as fallback.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EmbeddingTable {
    pub entries: BTreeMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| SynmoError::Data(format!("{}: {e}", path.display())))?;
        let entries: BTreeMap<String, Vec<f64>> = serde_json::from_str(&text)?;
        Ok(EmbeddingTable { entries })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(&self.entries)?)?;
        Ok(())
    }

    pub fn get(&self, text: &str) -> Option<&Vec<f64>> {
        self.entries.get(text)
    }

    pub fn insert(&mut self, text: &str, embedding: Vec<f64>) {
        self.entries.insert(text.to_string(), embedding);
    }

    /// Stored embedding if present, otherwise the deterministic stub.
    pub fn embed_or_stub(&self, text: &str, dim: usize) -> Result<Vec<f64>> {
        match self.get(text) {
            Some(v) => Ok(v.clone()),
            None => stub_embedding(text, dim),
        }
    }
}

/// Mean of per-class recalls over the classes present in the truth.
pub fn balanced_accuracy(preds: &[String], truth: &[String]) -> Result<f64> {
    if preds.is_empty() || truth.is_empty() {
        return Err(SynmoError::Data("empty prediction or truth list".into()));
    }
    if preds.len() != truth.len() {
        return Err(SynmoError::Dimension(format!(
            "{} predictions for {} truths",
            preds.len(),
            truth.len()
        )));
    }
    let mut per_class: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for (p, t) in preds.iter().zip(truth.iter()) {
        let entry = per_class.entry(t.as_str()).or_insert((0, 0));
        entry.1 += 1;
        if p == t {
            entry.0 += 1;
        }
    }
    let recalls: Vec<f64> = per_class
        .values()
        .map(|&(hit, total)| hit as f64 / total as f64)
        .collect();
    Ok(recalls.iter().sum::<f64>() / recalls.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(dim: usize, idx: usize) -> Vec<f64> {
        let mut v = vec![0.0; dim];
        v[idx] = 1.0;
        v
    }

    fn small_cats() -> CategorySet {
        CategorySet::new(
            vec!["Running".into(), "Sitting".into(), "Walking".into()],
            vec![unit(4, 0), unit(4, 1), unit(4, 2)],
            0.45,
            OTHER_LABEL.into(),
        )
        .unwrap()
    }

    #[test]
    fn exact_category_embedding_maps_to_it() {
        let cats = small_cats();
        assert_eq!(assign_category(&unit(4, 1), &cats).unwrap(), "Sitting");
    }

    #[test]
    fn orthogonal_query_maps_to_other() {
        let cats = small_cats();
        assert_eq!(assign_category(&unit(4, 3), &cats).unwrap(), OTHER_LABEL);
    }

    #[test]
    fn cosine_half_to_running_wins() {
        // query at cosine 0.5 to Running, 0.3 to the others
        let cats = small_cats();
        let mut q = vec![0.0; 4];
        q[0] = 0.5;
        q[1] = 0.3;
        q[2] = 0.3;
        q[3] = (1.0f64 - 0.25 - 0.09 - 0.09).sqrt();
        assert_eq!(assign_category(&q, &cats).unwrap(), "Running");
    }

    #[test]
    fn assignment_scale_invariant() {
        let cats = small_cats();
        let q = vec![0.4, 0.1, 0.0, 0.2];
        let a = assign_category(&q, &cats).unwrap();
        let scaled: Vec<f64> = q.iter().map(|v| v * 371.0).collect();
        let b = assign_category(&scaled, &cats).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn similarity_at_threshold_passes() {
        let cats = CategorySet::new(
            vec!["A".into()],
            vec![unit(2, 0)],
            0.45,
            OTHER_LABEL.into(),
        )
        .unwrap();
        // cosine exactly 0.45
        let q = vec![0.45, (1.0f64 - 0.45 * 0.45).sqrt()];
        assert_eq!(assign_category(&q, &cats).unwrap(), "A");
    }

    #[test]
    fn zero_query_rejected() {
        let cats = small_cats();
        assert!(assign_category(&[0.0; 4], &cats).is_err());
    }

    #[test]
    fn tie_breaks_by_category_order() {
        let cats = CategorySet::new(
            vec!["First".into(), "Second".into()],
            vec![unit(3, 0), unit(3, 1)],
            0.2,
            OTHER_LABEL.into(),
        )
        .unwrap();
        let q = vec![0.6, 0.6, 0.0];
        assert_eq!(assign_category(&q, &cats).unwrap(), "First");
    }

    #[test]
    fn dynamic_classes_match_partition() {
        assert_eq!(dynamic_class("running").unwrap(), DynamicClass::High);
        assert_eq!(dynamic_class("Jumping").unwrap(), DynamicClass::High);
        assert_eq!(dynamic_class("dancing").unwrap(), DynamicClass::High);
        assert_eq!(dynamic_class("sitting").unwrap(), DynamicClass::Low);
        assert_eq!(dynamic_class("Stair climbing").unwrap(), DynamicClass::Low);
        assert_eq!(dynamic_class("other").unwrap(), DynamicClass::Low);
        assert!(dynamic_class("swimming").is_err());
    }

    #[test]
    fn stub_embedding_is_deterministic_and_unit() {
        let a = stub_embedding("person running on a track", 64).unwrap();
        let b = stub_embedding("person running on a track", 64).unwrap();
        assert_eq!(a, b);
        let norm: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stub_prompts_with_shared_token_assign_to_category() {
        let dim = 256;
        let cats = CategorySet::default_with_stub(dim).unwrap();
        let q = stub_embedding("person running", dim).unwrap();
        assert_eq!(assign_category(&q, &cats).unwrap(), "Running");
        let other = stub_embedding("quantum flux capacitor maintenance", dim).unwrap();
        assert_eq!(assign_category(&other, &cats).unwrap(), OTHER_LABEL);
    }

    #[test]
    fn balanced_accuracy_perfect_and_hand_values() {
        let t: Vec<String> = ["a", "a", "b", "b"].iter().map(|s| s.to_string()).collect();
        assert_eq!(balanced_accuracy(&t, &t).unwrap(), 1.0);
        // recalls 1.0 and 0.5 -> 0.75
        let p: Vec<String> = ["a", "a", "b", "a"].iter().map(|s| s.to_string()).collect();
        assert_eq!(balanced_accuracy(&p, &t).unwrap(), 0.75);
    }

    #[test]
    fn balanced_accuracy_constant_predictor_four_classes() {
        let truth: Vec<String> = ["a", "b", "c", "d", "a", "b", "c", "d"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let preds: Vec<String> = vec!["a".into(); 8];
        assert_eq!(balanced_accuracy(&preds, &truth).unwrap(), 0.25);
    }

    #[test]
    fn balanced_accuracy_relabel_invariant() {
        let truth: Vec<String> = ["x", "x", "y", "z", "z", "y"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let preds: Vec<String> = ["x", "y", "y", "z", "x", "y"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let base = balanced_accuracy(&preds, &truth).unwrap();
        let relabel = |s: &str| -> String {
            match s {
                "x" => "q".into(),
                "y" => "r".into(),
                _ => "s".into(),
            }
        };
        let truth2: Vec<String> = truth.iter().map(|s| relabel(s)).collect();
        let preds2: Vec<String> = preds.iter().map(|s| relabel(s)).collect();
        assert_eq!(balanced_accuracy(&preds2, &truth2).unwrap(), base);
    }

    #[test]
    fn embedding_table_round_trip_and_fallback() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("embeddings.json");
        let mut table = EmbeddingTable::default();
        table.insert("custom prompt", vec![0.0, 1.0]);
        table.save(&path).unwrap();
        let loaded = EmbeddingTable::load(&path).unwrap();
        assert_eq!(loaded.get("custom prompt"), Some(&vec![0.0, 1.0]));
        let stub = loaded.embed_or_stub("person walking", 32).unwrap();
        assert_eq!(stub, stub_embedding("person walking", 32).unwrap());
    }
}

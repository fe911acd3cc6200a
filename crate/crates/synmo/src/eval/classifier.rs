//! Baseline window classifier: multinomial logistic regression over the
//! 66-dimensional accelerometer feature vectors.
//!
//! Training canonicalizes the window order (by label, source, start) and
//! uses full-batch gradient descent with momentum, so the fitted model is
//! a pure function of the window multiset and the hyperparameters. The
//! model lives behind a plain struct + hyper pair so stronger classifiers
//! can be swapped in without touching the harness.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SynmoError};

use super::features::extract_features;
use super::windows::{Window, WindowedDataset};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierHyper {
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub l2: f64,
    pub seed: u64,
}

impl Default for ClassifierHyper {
    fn default() -> Self {
        ClassifierHyper {
            epochs: 400,
            lr: 0.5,
            momentum: 0.9,
            l2: 1e-4,
            seed: 0,
        }
    }
}

/// Softmax regression weights plus the feature standardization fitted on
/// the training windows.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub classes: Vec<String>,
    /// K×(F+1); the last column is the bias.
    pub weights: Array2<f64>,
    pub feat_mean: Vec<f64>,
    pub feat_std: Vec<f64>,
}

fn window_features(window: &Window) -> Result<Vec<f64>> {
    let accel = window.data.slice(ndarray::s![.., 0..3]).to_owned();
    extract_features(&accel)
}

fn standardize(features: &[f64], mean: &[f64], std: &[f64]) -> Array1<f64> {
    let f = features.len();
    let mut out = Array1::zeros(f + 1);
    for i in 0..f {
        out[i] = (features[i] - mean[i]) / std[i];
    }
    out[f] = 1.0; // bias input
    out
}

fn softmax(logits: &Array1<f64>) -> Array1<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps = logits.mapv(|v| (v - max).exp());
    let sum = exps.sum();
    exps / sum
}

/// Fit the baseline classifier on labeled windows.
pub fn train_classifier(
    train: &WindowedDataset,
    hyper: &ClassifierHyper,
) -> Result<ClassifierModel> {
    let mut classes: Vec<String> = train
        .windows
        .iter()
        .map(|w| w.label.clone())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    classes.sort();
    if classes.len() < 2 {
        return Err(SynmoError::Data(format!(
            "classifier needs >= 2 classes, got {}",
            classes.len()
        )));
    }
    // canonical training order: independent of input permutation
    let mut order: Vec<usize> = (0..train.windows.len()).collect();
    order.sort_by(|&a, &b| {
        let wa = &train.windows[a];
        let wb = &train.windows[b];
        (&wa.label, &wa.source, wa.start).cmp(&(&wb.label, &wb.source, wb.start))
    });
    let features: Vec<Vec<f64>> = order
        .iter()
        .map(|&i| window_features(&train.windows[i]))
        .collect::<Result<_>>()?;
    let labels: Vec<usize> = order
        .iter()
        .map(|&i| {
            classes
                .iter()
                .position(|c| c == &train.windows[i].label)
                .expect("label collected above")
        })
        .collect();
    let f = features[0].len();
    let n = features.len();
    let mut mean = vec![0.0; f];
    for row in &features {
        for (m, v) in mean.iter_mut().zip(row.iter()) {
            *m += v / n as f64;
        }
    }
    let mut std = vec![0.0; f];
    for row in &features {
        for (s, (v, m)) in std.iter_mut().zip(row.iter().zip(mean.iter())) {
            *s += (v - m) * (v - m) / n as f64;
        }
    }
    for s in std.iter_mut() {
        *s = s.sqrt().max(1e-9);
    }
    let inputs: Vec<Array1<f64>> = features
        .iter()
        .map(|row| standardize(row, &mean, &std))
        .collect();
    let k = classes.len();
    let mut weights: Array2<f64> = Array2::zeros((k, f + 1));
    let mut velocity: Array2<f64> = Array2::zeros((k, f + 1));
    for _epoch in 0..hyper.epochs {
        let mut grad: Array2<f64> = Array2::zeros((k, f + 1));
        for (x, &y) in inputs.iter().zip(labels.iter()) {
            let logits = weights.dot(x);
            let probs = softmax(&logits);
            for c in 0..k {
                let err = probs[c] - if c == y { 1.0 } else { 0.0 };
                for (gi, xi) in grad.row_mut(c).iter_mut().zip(x.iter()) {
                    *gi += err * xi;
                }
            }
        }
        grad /= n as f64;
        grad.scaled_add(hyper.l2, &weights);
        velocity *= hyper.momentum;
        velocity += &grad;
        weights.scaled_add(-hyper.lr, &velocity);
    }
    if weights.iter().any(|v| !v.is_finite()) {
        return Err(SynmoError::Divergence(
            "classifier weights became non-finite".into(),
        ));
    }
    Ok(ClassifierModel {
        classes,
        weights,
        feat_mean: mean,
        feat_std: std,
    })
}

impl ClassifierModel {
    pub fn predict(&self, window: &Window) -> Result<String> {
        let features = window_features(window)?;
        if features.len() != self.feat_mean.len() {
            return Err(SynmoError::Dimension(format!(
                "window produced {} features, model fitted on {}",
                features.len(),
                self.feat_mean.len()
            )));
        }
        let x = standardize(&features, &self.feat_mean, &self.feat_std);
        let logits = self.weights.dot(&x);
        let mut best = 0;
        for (c, v) in logits.iter().enumerate() {
            if *v > logits[best] {
                best = c;
            }
        }
        Ok(self.classes[best].clone())
    }
}

/// Predict every window; returns (predictions, truths) in dataset order.
pub fn predict_dataset(
    model: &ClassifierModel,
    data: &WindowedDataset,
) -> Result<(Vec<String>, Vec<String>)> {
    let mut preds = Vec::with_capacity(data.windows.len());
    let mut truth = Vec::with_capacity(data.windows.len());
    for w in &data.windows {
        preds.push(model.predict(w)?);
        truth.push(w.label.clone());
    }
    Ok((preds, truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::balanced_accuracy;
    use ndarray::Array2 as NdArray2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// windows whose x-axis is a sine of class-specific frequency+amplitude
    fn labeled_window(
        rng: &mut ChaCha8Rng,
        label: &str,
        amp: f64,
        freq: f64,
        source: &str,
        start: usize,
    ) -> Window {
        let w = 40;
        let mut data = NdArray2::zeros((w, 6));
        let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        for i in 0..w {
            let t = i as f64;
            data[[i, 0]] = amp * (freq * t + phase).sin() + rng.random_range(-0.05..0.05);
            data[[i, 1]] = amp * 0.5 * (freq * t).cos();
            data[[i, 2]] = 9.81 + rng.random_range(-0.05..0.05);
        }
        Window {
            data,
            label: label.into(),
            source: source.into(),
            start,
        }
    }

    fn two_class_set(seed: u64, per_class: usize) -> WindowedDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut windows = Vec::new();
        for i in 0..per_class {
            windows.push(labeled_window(&mut rng, "fast", 2.0, 1.2, "a", i));
            windows.push(labeled_window(&mut rng, "slow", 0.3, 0.15, "b", i));
        }
        WindowedDataset {
            windows,
            window_len: 40,
            overlap: 0.5,
        }
    }

    #[test]
    fn separable_classes_reach_high_training_accuracy() {
        let data = two_class_set(5, 20);
        let model = train_classifier(&data, &ClassifierHyper::default()).unwrap();
        let (preds, truth) = predict_dataset(&model, &data).unwrap();
        let hits = preds.iter().zip(truth.iter()).filter(|(p, t)| p == t).count();
        assert!(
            hits as f64 / preds.len() as f64 >= 0.99,
            "accuracy {}",
            hits as f64 / preds.len() as f64
        );
    }

    #[test]
    fn training_order_permutation_gives_identical_model() {
        let data = two_class_set(7, 10);
        let mut permuted = data.clone();
        permuted.windows.reverse();
        let a = train_classifier(&data, &ClassifierHyper::default()).unwrap();
        let b = train_classifier(&permuted, &ClassifierHyper::default()).unwrap();
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.classes, b.classes);
    }

    #[test]
    fn shuffled_labels_score_near_chance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut train_set = two_class_set(13, 30);
        // destroy the label-feature association
        for w in train_set.windows.iter_mut() {
            w.label = if rng.random_bool(0.5) {
                "fast".into()
            } else {
                "slow".into()
            };
        }
        let test_set = two_class_set(99, 20);
        let model = train_classifier(&train_set, &ClassifierHyper::default()).unwrap();
        let (preds, truth) = predict_dataset(&model, &test_set).unwrap();
        let ba = balanced_accuracy(&preds, &truth).unwrap();
        assert!((ba - 0.5).abs() <= 0.1 + 1e-12, "balanced accuracy {ba}");
    }

    #[test]
    fn single_class_rejected() {
        let mut data = two_class_set(3, 4);
        for w in data.windows.iter_mut() {
            w.label = "only".into();
        }
        assert!(train_classifier(&data, &ClassifierHyper::default()).is_err());
    }
}

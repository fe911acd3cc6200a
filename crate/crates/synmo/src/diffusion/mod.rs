//! Forward diffusion, reverse sampling, and the training loop for the
//! motion denoiser.
//!
//! The forward chain multiplies the signal by √α_t and adds (1−α_t)
//! Gaussian noise per step; its t-step composition has the closed form
//! N(√ᾱ_t·x0, (1−ᾱ_t)I). Sampling runs the denoiser to predict the clean
//! motion at every step and then draws from the standard Gaussian posterior
//! q(x_{t−1} | x_t, x̂0).

mod checkpoint;
mod denoiser;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, write_loss_curves, Checkpoint, TrainMeta};
pub use denoiser::{DenoiserConfig, DenoiserGrads, DenoiserParams};
pub use train::{
    acc_loss_on_grid, denoiser_grad_check, finetune, holdout_mean_acc_loss, train,
    FinetuneReport, TrainHyper, TrainItem,
};

use ndarray::Array3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SynmoError};
use crate::motion::MotionSequence;

/// Per-step retention factors α_t and their running products ᾱ_t.
/// Steps are 1-indexed: `alpha(1)` is the first noising step.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScheduleKind {
    Linear,
    Cosine,
}

/// Serializable recipe for a [`NoiseSchedule`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub steps: usize,
    pub kind: ScheduleKind,
    pub beta_min: f64,
    pub beta_max: f64,
}

impl ScheduleConfig {
    /// Short schedule for unit tests. The beta range is scaled so that
    /// ᾱ_T is already near zero after 100 steps and sampling can start
    /// from pure noise.
    pub fn desk_test() -> Self {
        ScheduleConfig {
            steps: 100,
            kind: ScheduleKind::Linear,
            beta_min: 1e-3,
            beta_max: 0.12,
        }
    }

    /// Default experiment schedule.
    pub fn desk_full() -> Self {
        ScheduleConfig {
            steps: 1000,
            kind: ScheduleKind::Linear,
            beta_min: 1e-4,
            beta_max: 0.02,
        }
    }

    /// 6000-step preset. Impractically long for desk runs; provided as a
    /// named configuration only.
    pub fn reference() -> Self {
        ScheduleConfig {
            steps: 6000,
            kind: ScheduleKind::Linear,
            beta_min: 1e-4,
            beta_max: 0.02,
        }
    }

    pub fn build(&self) -> Result<NoiseSchedule> {
        make_schedule(self.steps, self.kind, self.beta_min, self.beta_max)
    }
}

impl NoiseSchedule {
    /// Build from explicit per-step α values in (0, 1].
    pub fn from_alphas(alphas: Vec<f64>) -> Result<Self> {
        if alphas.is_empty() {
            return Err(SynmoError::InvalidValue("schedule needs T >= 1".into()));
        }
        for (i, &a) in alphas.iter().enumerate() {
            if !(a > 0.0 && a <= 1.0 && a.is_finite()) {
                return Err(SynmoError::InvalidValue(format!(
                    "alpha[{i}] = {a} outside (0, 1]"
                )));
            }
        }
        let mut alpha_bars = Vec::with_capacity(alphas.len());
        let mut prod = 1.0;
        for &a in &alphas {
            prod *= a;
            alpha_bars.push(prod);
        }
        Ok(NoiseSchedule { alphas, alpha_bars })
    }

    pub fn num_steps(&self) -> usize {
        self.alphas.len()
    }

    /// α_t for 1-indexed t.
    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[t - 1]
    }

    /// ᾱ_t for 1-indexed t; ᾱ_0 = 1 by the empty product.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bars[t - 1]
        }
    }

    fn check_t(&self, t: usize) -> Result<()> {
        if t < 1 || t > self.num_steps() {
            return Err(SynmoError::Index(format!(
                "step t = {t} outside 1..={}",
                self.num_steps()
            )));
        }
        Ok(())
    }
}

/// Build a schedule of T steps with α_t = 1 − β_t.
///
/// Linear: β linearly spaced from `beta_min` to `beta_max`. Cosine: the
/// squared-cosine cumulative schedule with the usual 0.008 offset; β values
/// are clipped to at most 0.999 and the beta range arguments are ignored
/// beyond validation.
pub fn make_schedule(
    steps: usize,
    kind: ScheduleKind,
    beta_min: f64,
    beta_max: f64,
) -> Result<NoiseSchedule> {
    if steps < 1 {
        return Err(SynmoError::InvalidValue("schedule needs T >= 1".into()));
    }
    if !(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0) {
        return Err(SynmoError::InvalidValue(format!(
            "beta range ({beta_min}, {beta_max}) must satisfy 0 < min <= max < 1"
        )));
    }
    let alphas = match kind {
        ScheduleKind::Linear => (0..steps)
            .map(|t| {
                let frac = if steps == 1 {
                    0.0
                } else {
                    t as f64 / (steps - 1) as f64
                };
                1.0 - (beta_min + frac * (beta_max - beta_min))
            })
            .collect(),
        ScheduleKind::Cosine => {
            let s = 0.008;
            let f = |t: f64| {
                let x = (t / steps as f64 + s) / (1.0 + s) * std::f64::consts::FRAC_PI_2;
                x.cos().powi(2)
            };
            let f0 = f(0.0);
            (0..steps)
                .map(|t| {
                    let bar_prev = f(t as f64) / f0;
                    let bar = f((t + 1) as f64) / f0;
                    let beta = (1.0 - bar / bar_prev).min(0.999);
                    1.0 - beta
                })
                .collect()
        }
    };
    NoiseSchedule::from_alphas(alphas)
}

/// Conditioning input: an embedding vector and an optional label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub embedding: Vec<f64>,
    pub label: Option<String>,
}

impl Condition {
    pub fn new(embedding: Vec<f64>, label: Option<String>) -> Self {
        Condition { embedding, label }
    }

    pub fn unlabeled(embedding: Vec<f64>) -> Self {
        Condition {
            embedding,
            label: None,
        }
    }
}

fn gaussian_like(
    shape: (usize, usize, usize),
    rng: &mut ChaCha8Rng,
) -> Array3<f64> {
    let (n, j, d) = shape;
    let mut out = Array3::zeros((n, j, d));
    for v in out.iter_mut() {
        *v = StandardNormal.sample(rng);
    }
    out
}

fn with_frames(template: &MotionSequence, frames: Array3<f64>) -> MotionSequence {
    MotionSequence {
        frames,
        fps: template.fps,
        representation: template.representation,
        joint_names: template.joint_names.clone(),
    }
}

/// One forward noising step: a sample of N(√α_t·x_prev, (1−α_t)I).
pub fn q_step(
    x_prev: &MotionSequence,
    t: usize,
    schedule: &NoiseSchedule,
    rng_seed: u64,
) -> Result<MotionSequence> {
    schedule.check_t(t)?;
    let alpha = schedule.alpha(t);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let noise = gaussian_like(x_prev.dims(), &mut rng);
    let frames = &x_prev.frames * alpha.sqrt() + &noise * (1.0 - alpha).sqrt();
    Ok(with_frames(x_prev, frames))
}

/// Closed-form t-step noising: a sample of N(√ᾱ_t·x0, (1−ᾱ_t)I).
pub fn q_marginal(
    x0: &MotionSequence,
    t: usize,
    schedule: &NoiseSchedule,
    rng_seed: u64,
) -> Result<MotionSequence> {
    schedule.check_t(t)?;
    let bar = schedule.alpha_bar(t);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let noise = gaussian_like(x0.dims(), &mut rng);
    let frames = &x0.frames * bar.sqrt() + &noise * (1.0 - bar).sqrt();
    Ok(with_frames(x0, frames))
}

/// Predict the clean motion from a noised motion. Deterministic.
pub fn denoise_predict(
    params: &DenoiserParams,
    x_t: &MotionSequence,
    t: usize,
    cond: &Condition,
) -> Result<MotionSequence> {
    let frames = params.forward(&x_t.frames, t, &cond.embedding)?;
    Ok(with_frames(x_t, frames))
}

/// One reverse step: a sample of the Gaussian posterior
/// q(x_{t−1} | x_t, x̂0) with
/// mean = (√ᾱ_{t−1}·β_t/(1−ᾱ_t))·x̂0 + (√α_t·(1−ᾱ_{t−1})/(1−ᾱ_t))·x_t and
/// variance β_t·(1−ᾱ_{t−1})/(1−ᾱ_t). At t = 1 the posterior mean is
/// returned without noise.
pub fn posterior_step(
    x_t: &MotionSequence,
    x_hat0: &MotionSequence,
    t: usize,
    schedule: &NoiseSchedule,
    rng_seed: u64,
) -> Result<MotionSequence> {
    schedule.check_t(t)?;
    if x_t.dims() != x_hat0.dims() {
        return Err(SynmoError::Dimension(format!(
            "posterior inputs differ in shape: {:?} vs {:?}",
            x_t.dims(),
            x_hat0.dims()
        )));
    }
    let alpha = schedule.alpha(t);
    let bar_t = schedule.alpha_bar(t);
    let bar_prev = schedule.alpha_bar(t - 1);
    let beta = 1.0 - alpha;
    let denom = 1.0 - bar_t;
    if denom <= 0.0 {
        // alpha_bar == 1 up to step t means no noise was ever added; the
        // posterior collapses onto the clean prediction.
        return Ok(x_hat0.clone());
    }
    let coef_x0 = bar_prev.sqrt() * beta / denom;
    let coef_xt = alpha.sqrt() * (1.0 - bar_prev) / denom;
    let mean = &x_hat0.frames * coef_x0 + &x_t.frames * coef_xt;
    if t == 1 {
        return Ok(with_frames(x_t, mean));
    }
    let var = beta * (1.0 - bar_prev) / denom;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let noise = gaussian_like(x_t.dims(), &mut rng);
    Ok(with_frames(x_t, mean + &noise * var.sqrt()))
}

/// Generate a motion: start from x_T ~ N(0, I) and iterate predict +
/// posterior from t = T down to 1. The requested frame count must match
/// the denoiser's configured window.
pub fn sample(
    params: &DenoiserParams,
    cond: &Condition,
    n_frames: usize,
    schedule: &NoiseSchedule,
    rng_seed: u64,
) -> Result<MotionSequence> {
    if n_frames < 3 {
        return Err(SynmoError::Length(format!(
            "sampling needs N >= 3, got {n_frames}"
        )));
    }
    let cfg = params.config();
    if n_frames != cfg.n_frames {
        return Err(SynmoError::Dimension(format!(
            "requested {n_frames} frames but the denoiser is built for {}",
            cfg.n_frames
        )));
    }
    let shape = (cfg.n_frames, cfg.joints, cfg.dim);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut x = MotionSequence {
        frames: gaussian_like(shape, &mut rng),
        fps: cfg.fps,
        representation: crate::motion::Representation::JointPositions3D,
        joint_names: cfg.joint_names(),
    };
    let t_total = schedule.num_steps();
    for t in (1..=t_total).rev() {
        let x_hat0 = denoise_predict(params, &x, t, cond)?;
        let step_seed = rng_seed
            .wrapping_mul(6364136223846793005)
            .wrapping_add(t as u64);
        x = posterior_step(&x, &x_hat0, t, schedule, step_seed)?;
    }
    if x.frames.iter().any(|v| !v.is_finite()) {
        return Err(SynmoError::Divergence(
            "sampling produced non-finite values".into(),
        ));
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::Representation;

    fn names(j: usize) -> Vec<String> {
        (0..j).map(|k| format!("j{k}")).collect()
    }

    fn constant_motion(n: usize, j: usize, d: usize, value: f64) -> MotionSequence {
        MotionSequence {
            frames: Array3::from_elem((n, j, d), value),
            fps: 20.0,
            representation: Representation::JointPositions3D,
            joint_names: names(j),
        }
    }

    #[test]
    fn single_step_schedule() {
        let s = make_schedule(1, ScheduleKind::Linear, 0.1, 0.1).unwrap();
        assert_eq!(s.alpha(1), 0.9);
        assert_eq!(s.alpha_bar(1), 0.9);
    }

    #[test]
    fn alpha_bars_non_increasing_and_positive() {
        for kind in [ScheduleKind::Linear, ScheduleKind::Cosine] {
            let s = make_schedule(200, kind, 1e-4, 0.02).unwrap();
            let mut prev = 1.0;
            for t in 1..=200 {
                let bar = s.alpha_bar(t);
                assert!(bar > 0.0);
                assert!(bar <= prev + 1e-15);
                prev = bar;
            }
        }
    }

    #[test]
    fn alpha_bar_consistency_with_product() {
        let s = make_schedule(50, ScheduleKind::Linear, 1e-3, 0.05).unwrap();
        let mut prod = 1.0;
        for t in 1..=50 {
            prod *= s.alpha(t);
            assert!((s.alpha_bar(t) - prod).abs() < 1e-12);
        }
    }

    #[test]
    fn ddpm_reference_alpha_bar() {
        // linear beta 1e-4..0.02 over 1000 steps: final ᾱ ≈ 4.0e-5
        let s = make_schedule(1000, ScheduleKind::Linear, 1e-4, 0.02).unwrap();
        let last = s.alpha_bar(1000);
        assert!(
            (last - 4.0e-5).abs() / 4.0e-5 < 0.10,
            "alpha_bar[T] = {last}"
        );
    }

    #[test]
    fn bad_beta_range_rejected() {
        assert!(make_schedule(10, ScheduleKind::Linear, 0.0, 0.1).is_err());
        assert!(make_schedule(10, ScheduleKind::Linear, 0.2, 0.1).is_err());
        assert!(make_schedule(10, ScheduleKind::Linear, 0.1, 1.0).is_err());
        assert!(make_schedule(0, ScheduleKind::Linear, 0.1, 0.2).is_err());
    }

    #[test]
    fn q_step_alpha_one_is_identity() {
        let s = NoiseSchedule::from_alphas(vec![1.0, 0.9]).unwrap();
        let x = constant_motion(4, 2, 3, 0.37);
        let out = q_step(&x, 1, &s, 123).unwrap();
        for (a, b) in out.frames.iter().zip(x.frames.iter()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn q_step_deterministic_under_seed() {
        let s = make_schedule(10, ScheduleKind::Linear, 0.01, 0.1).unwrap();
        let x = constant_motion(4, 2, 3, 1.0);
        let a = q_step(&x, 3, &s, 42).unwrap();
        let b = q_step(&x, 3, &s, 42).unwrap();
        assert_eq!(a.frames, b.frames);
        let c = q_step(&x, 3, &s, 43).unwrap();
        assert_ne!(a.frames, c.frames);
    }

    #[test]
    fn q_step_t_out_of_range() {
        let s = make_schedule(5, ScheduleKind::Linear, 0.01, 0.1).unwrap();
        let x = constant_motion(3, 1, 3, 0.0);
        assert!(q_step(&x, 0, &s, 1).is_err());
        assert!(q_step(&x, 6, &s, 1).is_err());
    }

    #[test]
    fn q_step_variance_monte_carlo() {
        // 10,000 draws at alpha = 0.9 around x_prev = 0: per-element
        // variance 0.1 within 3 Monte-Carlo standard errors.
        let s = NoiseSchedule::from_alphas(vec![0.9]).unwrap();
        let x = constant_motion(3, 1, 1, 0.0);
        let draws = 10_000;
        let mut vals = Vec::with_capacity(draws * 3);
        for i in 0..draws {
            let out = q_step(&x, 1, &s, 1000 + i as u64).unwrap();
            vals.extend(out.frames.iter().copied());
        }
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        let se_var = 0.1 * (2.0 / (n - 1.0)).sqrt();
        assert!(
            (var - 0.1).abs() < 3.0 * se_var,
            "var {var}, tol {}",
            3.0 * se_var
        );
    }

    #[test]
    fn q_marginal_alpha_bar_one_is_identity() {
        let s = NoiseSchedule::from_alphas(vec![1.0, 1.0]).unwrap();
        let x = constant_motion(3, 2, 3, -0.8);
        let out = q_marginal(&x, 2, &s, 9).unwrap();
        assert_eq!(out.frames, x.frames);
    }

    #[test]
    fn q_marginal_zero_input_moments() {
        let s = make_schedule(20, ScheduleKind::Linear, 0.01, 0.2).unwrap();
        let t = 7;
        let x = constant_motion(4, 2, 3, 0.0);
        let draws = 4000;
        let mut vals = Vec::new();
        for i in 0..draws {
            let out = q_marginal(&x, t, &s, 777 + i as u64).unwrap();
            vals.extend(out.frames.iter().copied());
        }
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        let sigma2 = 1.0 - s.alpha_bar(t);
        let se_mean = sigma2.sqrt() / n.sqrt();
        let se_var = sigma2 * (2.0 / (n - 1.0)).sqrt();
        assert!(mean.abs() < 3.0 * se_mean, "mean {mean}");
        assert!((var - sigma2).abs() < 3.0 * se_var, "var {var} vs {sigma2}");
    }

    #[test]
    fn posterior_t1_is_deterministic_clean_prediction() {
        let s = make_schedule(10, ScheduleKind::Linear, 0.01, 0.1).unwrap();
        let x_t = constant_motion(3, 1, 3, 0.5);
        let x0 = constant_motion(3, 1, 3, -0.25);
        let a = posterior_step(&x_t, &x0, 1, &s, 1).unwrap();
        let b = posterior_step(&x_t, &x0, 1, &s, 2).unwrap();
        assert_eq!(a.frames, b.frames);
        // at t = 1: coef_x0 = beta_1/(1-alpha_bar_1) = 1, coef_xt = 0
        for v in (&a.frames - &x0.frames).iter() {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn posterior_matches_independent_formula() {
        // independently coded posterior mean/variance for comparison
        let s = make_schedule(10, ScheduleKind::Linear, 0.05, 0.3).unwrap();
        let t = 6;
        let x_t = constant_motion(3, 1, 1, 0.8);
        let x0 = constant_motion(3, 1, 1, 0.2);
        let alpha = s.alpha(t);
        let bar_t = s.alpha_bar(t);
        let bar_prev = s.alpha_bar(t - 1);
        let beta = 1.0 - alpha;
        let mean_ref = (bar_prev.sqrt() * beta / (1.0 - bar_t)) * 0.2
            + (alpha.sqrt() * (1.0 - bar_prev) / (1.0 - bar_t)) * 0.8;
        let var_ref = beta * (1.0 - bar_prev) / (1.0 - bar_t);
        let draws = 20_000;
        let mut vals = Vec::with_capacity(draws * 3);
        for i in 0..draws {
            let out = posterior_step(&x_t, &x0, t, &s, 31 + i as u64).unwrap();
            vals.extend(out.frames.iter().copied());
        }
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        let se_mean = var_ref.sqrt() / n.sqrt();
        let se_var = var_ref * (2.0 / (n - 1.0)).sqrt();
        assert!((mean - mean_ref).abs() < 3.0 * se_mean);
        assert!((var - var_ref).abs() < 3.0 * se_var);
    }

    #[test]
    fn posterior_deterministic_under_seed() {
        let s = make_schedule(10, ScheduleKind::Linear, 0.01, 0.1).unwrap();
        let x_t = constant_motion(3, 1, 3, 0.5);
        let x0 = constant_motion(3, 1, 3, -0.25);
        let a = posterior_step(&x_t, &x0, 5, &s, 77).unwrap();
        let b = posterior_step(&x_t, &x0, 5, &s, 77).unwrap();
        assert_eq!(a.frames, b.frames);
    }
}

//! Training and finetuning loops for the denoiser.
//!
//! Each step samples a batch, a uniform timestep t in [1, T], noises the
//! clean motion with the closed-form marginal, predicts x̂0, evaluates the
//! weighted total loss against the ground truth, and updates the parameters
//! with momentum SGD. Runs are single-threaded with a fixed reduction order
//! so a seed reproduces parameters bit for bit.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SynmoError};
use crate::loss::{grad_total, loss_acc, total_loss, LossBreakdown, LossWeights};
use crate::motion::{FootContactMask, MotionSequence, Representation};

use super::denoiser::{DenoiserConfig, DenoiserGrads, DenoiserParams};
use super::{denoise_predict, q_marginal, Condition, NoiseSchedule};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainHyper {
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub momentum: f64,
    pub seed: u64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        TrainHyper {
            steps: 1000,
            batch: 4,
            lr: 1e-3,
            momentum: 0.9,
            seed: 0,
        }
    }
}

/// One training sample: clean motion, its condition, and a contact mask.
#[derive(Debug, Clone)]
pub struct TrainItem {
    pub motion: MotionSequence,
    pub cond: Condition,
    pub mask: FootContactMask,
}

fn check_dataset(dataset: &[TrainItem], config: &DenoiserConfig) -> Result<()> {
    if dataset.is_empty() {
        return Err(SynmoError::Data("training dataset is empty".into()));
    }
    let shape = (config.n_frames, config.joints, config.dim);
    for (i, item) in dataset.iter().enumerate() {
        if item.motion.dims() != shape {
            return Err(SynmoError::Dimension(format!(
                "dataset item {i} has shape {:?}, denoiser expects {:?}",
                item.motion.dims(),
                shape
            )));
        }
        if item.motion.representation != Representation::JointPositions3D {
            return Err(SynmoError::InvalidValue(
                "training requires position-representation motion".into(),
            ));
        }
        if item.cond.embedding.len() != config.cond_dim {
            return Err(SynmoError::Dimension(format!(
                "dataset item {i} condition length {} vs configured {}",
                item.cond.embedding.len(),
                config.cond_dim
            )));
        }
    }
    Ok(())
}

fn run_updates(
    params: &mut DenoiserParams,
    dataset: &[TrainItem],
    weights: &LossWeights,
    hyper: &TrainHyper,
    schedule: &NoiseSchedule,
) -> Result<Vec<LossBreakdown>> {
    weights.validate()?;
    if hyper.batch == 0 {
        return Err(SynmoError::InvalidValue("batch size must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let t_max = schedule.num_steps();
    let mut velocity = DenoiserGrads::zeros(params.config());
    let mut curves = Vec::with_capacity(hyper.steps);
    for step in 0..hyper.steps {
        let mut grad_sum = DenoiserGrads::zeros(params.config());
        let mut mean = LossBreakdown {
            simple: 0.0,
            pos: 0.0,
            foot: 0.0,
            vel: 0.0,
            acc: 0.0,
            total: 0.0,
            weights: *weights,
        };
        for _ in 0..hyper.batch {
            let idx = rng.random_range(0..dataset.len());
            let t = rng.random_range(1..=t_max);
            let noise_seed = rng.next_u64();
            let item = &dataset[idx];
            let x_t = q_marginal(&item.motion, t, schedule, noise_seed)?;
            let (x_hat0, cache) =
                params.forward_cached(&x_t.frames, t, &item.cond.embedding)?;
            let prediction = MotionSequence {
                frames: x_hat0,
                fps: item.motion.fps,
                representation: item.motion.representation,
                joint_names: item.motion.joint_names.clone(),
            };
            let breakdown = total_loss(&item.motion, &prediction, &item.mask, None, weights)?;
            if !breakdown.total.is_finite() {
                return Err(SynmoError::Divergence(format!(
                    "non-finite loss at step {step} (t = {t}, item {idx})"
                )));
            }
            let d_pred = grad_total(&item.motion, &prediction, &item.mask, weights)?;
            let grads = params.backward(&cache, &d_pred);
            grad_sum.add_assign(&grads);
            mean.simple += breakdown.simple;
            mean.pos += breakdown.pos;
            mean.foot += breakdown.foot;
            mean.vel += breakdown.vel;
            mean.acc += breakdown.acc;
            mean.total += breakdown.total;
        }
        let inv = 1.0 / hyper.batch as f64;
        grad_sum.scale(inv);
        mean.simple *= inv;
        mean.pos *= inv;
        mean.foot *= inv;
        mean.vel *= inv;
        mean.acc *= inv;
        mean.total *= inv;
        velocity.accumulate_momentum(&grad_sum, hyper.momentum);
        params.step(&velocity, hyper.lr);
        if !params.is_finite() {
            return Err(SynmoError::Divergence(format!(
                "parameters became non-finite after step {step}"
            )));
        }
        curves.push(mean);
    }
    Ok(curves)
}

/// Train a fresh denoiser. Returns the parameters and the per-step loss
/// history (batch means).
pub fn train(
    dataset: &[TrainItem],
    weights: &LossWeights,
    hyper: &TrainHyper,
    schedule: &NoiseSchedule,
    config: &DenoiserConfig,
) -> Result<(DenoiserParams, Vec<LossBreakdown>)> {
    check_dataset(dataset, config)?;
    let mut params = DenoiserParams::init(config.clone(), hyper.seed)?;
    let curves = run_updates(&mut params, dataset, weights, hyper, schedule)?;
    Ok((params, curves))
}

/// Held-out acceleration-loss summary recorded by [`finetune`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FinetuneReport {
    pub holdout_acc_before: f64,
    pub holdout_acc_after: f64,
}

/// Mean acceleration loss of a model's clean-motion predictions for one
/// item, over the fixed timestep grid {T/10, 2T/10, ..., T}. The noising
/// seed is a deterministic function of (item_seed, t), so two models are
/// compared on identical noised inputs.
pub fn acc_loss_on_grid(
    params: &DenoiserParams,
    motion: &MotionSequence,
    cond: &Condition,
    schedule: &NoiseSchedule,
    item_seed: u64,
) -> Result<f64> {
    let t_max = schedule.num_steps();
    let grid: Vec<usize> = (1..=10).map(|k| (k * t_max / 10).max(1)).collect();
    let mut sum = 0.0;
    for &t in &grid {
        let noise_seed = item_seed.wrapping_add(t as u64);
        let x_t = q_marginal(motion, t, schedule, noise_seed)?;
        let x_hat0 = denoise_predict(params, &x_t, t, cond)?;
        sum += loss_acc(motion, &x_hat0)?;
    }
    Ok(sum / grid.len() as f64)
}

/// Mean acceleration loss of a model's clean-motion predictions over a
/// held-out set (see [`acc_loss_on_grid`]).
pub fn holdout_mean_acc_loss(
    params: &DenoiserParams,
    holdout: &[TrainItem],
    schedule: &NoiseSchedule,
    base_seed: u64,
) -> Result<f64> {
    if holdout.is_empty() {
        return Err(SynmoError::Data("held-out set is empty".into()));
    }
    let mut sum = 0.0;
    for (i, item) in holdout.iter().enumerate() {
        let item_seed = base_seed.wrapping_add((i as u64).wrapping_mul(1_000_003));
        sum += acc_loss_on_grid(params, &item.motion, &item.cond, schedule, item_seed)?;
    }
    Ok(sum / holdout.len() as f64)
}

/// Continue training existing parameters, normally with a nonzero
/// acceleration weight. The optimizer state is re-initialized. Held-out
/// mean acceleration loss is recorded before and after.
pub fn finetune(
    params: &DenoiserParams,
    dataset: &[TrainItem],
    holdout: &[TrainItem],
    weights: &LossWeights,
    hyper: &TrainHyper,
    schedule: &NoiseSchedule,
) -> Result<(DenoiserParams, Vec<LossBreakdown>, FinetuneReport)> {
    check_dataset(dataset, params.config())?;
    let before = holdout_mean_acc_loss(params, holdout, schedule, hyper.seed)?;
    let mut refined = params.clone();
    let curves = run_updates(&mut refined, dataset, weights, hyper, schedule)?;
    let after = holdout_mean_acc_loss(&refined, holdout, schedule, hyper.seed)?;
    Ok((
        refined,
        curves,
        FinetuneReport {
            holdout_acc_before: before,
            holdout_acc_after: after,
        },
    ))
}

/// Check the training gradient of the total loss with respect to every
/// denoiser parameter against central finite differences; returns the max
/// relative error.
pub fn denoiser_grad_check(
    params: &DenoiserParams,
    item: &TrainItem,
    weights: &LossWeights,
    schedule: &NoiseSchedule,
    t: usize,
    noise_seed: u64,
    h: f64,
) -> Result<f64> {
    let x_t = q_marginal(&item.motion, t, schedule, noise_seed)?;
    let loss_of = |p: &DenoiserParams| -> Result<f64> {
        let x_hat0 = denoise_predict(p, &x_t, t, &item.cond)?;
        Ok(total_loss(&item.motion, &x_hat0, &item.mask, None, weights)?.total)
    };
    let (x_hat0, cache) = params.forward_cached(&x_t.frames, t, &item.cond.embedding)?;
    let prediction = MotionSequence {
        frames: x_hat0,
        fps: item.motion.fps,
        representation: item.motion.representation,
        joint_names: item.motion.joint_names.clone(),
    };
    let d_pred = grad_total(&item.motion, &prediction, &item.mask, weights)?;
    let analytic = params.backward(&cache, &d_pred).to_flat();
    let flat = params.to_flat();
    let config = params.config().clone();
    let mut worst: f64 = 0.0;
    for i in 0..flat.len() {
        let mut up = flat.clone();
        up[i] += h;
        let mut dn = flat.clone();
        dn[i] -= h;
        let fu = loss_of(&DenoiserParams::from_flat(config.clone(), &up)?)?;
        let fd = loss_of(&DenoiserParams::from_flat(config.clone(), &dn)?)?;
        let numeric = (fu - fd) / (2.0 * h);
        let rel = (numeric - analytic[i]).abs() / (numeric.abs() + analytic[i].abs()).max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{sample, ScheduleConfig};
    use ndarray::Array3;

    fn names(j: usize) -> Vec<String> {
        (0..j).map(|k| format!("j{k}")).collect()
    }

    fn small_config() -> DenoiserConfig {
        DenoiserConfig {
            n_frames: 8,
            joints: 2,
            dim: 3,
            cond_dim: 4,
            hidden_width: 32,
            hidden_blocks: 1,
            time_embed_dim: 8,
            fps: 20.0,
            joint_names: Vec::new(),
        }
    }

    fn sine_item(freq: f64, amp: f64, cond: Vec<f64>) -> TrainItem {
        let cfg = small_config();
        let frames = Array3::from_shape_fn((cfg.n_frames, cfg.joints, cfg.dim), |(i, j, k)| {
            amp * (freq * i as f64 + j as f64 + 0.3 * k as f64).sin()
        });
        let motion = MotionSequence {
            frames,
            fps: 20.0,
            representation: Representation::JointPositions3D,
            joint_names: names(cfg.joints),
        };
        let mask = FootContactMask::zeros(cfg.n_frames, cfg.joints);
        TrainItem {
            motion,
            cond: Condition::unlabeled(cond),
            mask,
        }
    }

    #[test]
    fn zero_lr_leaves_params_unchanged() {
        let schedule = ScheduleConfig::desk_test().build().unwrap();
        let data = vec![sine_item(0.7, 0.5, vec![1.0, 0.0, 0.0, 0.0])];
        let hyper = TrainHyper {
            steps: 20,
            batch: 2,
            lr: 0.0,
            momentum: 0.9,
            seed: 5,
        };
        let (params, curves) = train(&data, &LossWeights::default(), &hyper, &schedule, &small_config())
            .unwrap();
        let fresh = DenoiserParams::init(small_config(), 5).unwrap();
        assert_eq!(params, fresh);
        // flat loss curve: every step sees the same (stochastic) scale
        assert_eq!(curves.len(), 20);
    }

    #[test]
    fn training_is_deterministic() {
        let schedule = ScheduleConfig::desk_test().build().unwrap();
        let data = vec![
            sine_item(0.7, 0.5, vec![1.0, 0.0, 0.0, 0.0]),
            sine_item(0.2, 0.8, vec![0.0, 1.0, 0.0, 0.0]),
        ];
        let hyper = TrainHyper {
            steps: 60,
            batch: 2,
            lr: 1e-3,
            momentum: 0.9,
            seed: 9,
        };
        let (a, _) = train(&data, &LossWeights::default(), &hyper, &schedule, &small_config())
            .unwrap();
        let (b, _) = train(&data, &LossWeights::default(), &hyper, &schedule, &small_config())
            .unwrap();
        assert_eq!(a.to_flat(), b.to_flat());
    }

    #[test]
    fn overfit_single_sample_halves_loss() {
        let schedule = ScheduleConfig::desk_test().build().unwrap();
        let data = vec![sine_item(0.9, 0.6, vec![1.0, 0.0, 0.0, 0.0])];
        let hyper = TrainHyper {
            steps: 2000,
            batch: 4,
            lr: 2e-3,
            momentum: 0.9,
            seed: 2,
        };
        let (_, curves) = train(&data, &LossWeights::default(), &hyper, &schedule, &small_config())
            .unwrap();
        let early: f64 = curves[..50].iter().map(|b| b.total).sum::<f64>() / 50.0;
        let late: f64 = curves[curves.len() - 50..]
            .iter()
            .map(|b| b.total)
            .sum::<f64>()
            / 50.0;
        assert!(
            late <= 0.5 * early,
            "training loss went {early} -> {late}, expected >= 50% drop"
        );
    }

    #[test]
    fn overfit_prediction_matches_constant_motion() {
        // constant-motion dataset: prediction near that constant for t near T
        let cfg = small_config();
        let frames = Array3::from_elem((cfg.n_frames, cfg.joints, cfg.dim), 0.5);
        let motion = MotionSequence {
            frames,
            fps: 20.0,
            representation: Representation::JointPositions3D,
            joint_names: names(cfg.joints),
        };
        let item = TrainItem {
            motion: motion.clone(),
            cond: Condition::unlabeled(vec![1.0, 0.0, 0.0, 0.0]),
            mask: FootContactMask::zeros(cfg.n_frames, cfg.joints),
        };
        let schedule = ScheduleConfig::desk_test().build().unwrap();
        let hyper = TrainHyper {
            steps: 2500,
            batch: 4,
            lr: 2e-3,
            momentum: 0.9,
            seed: 4,
        };
        let (params, _) = train(
            &[item.clone()],
            &LossWeights::default(),
            &hyper,
            &schedule,
            &cfg,
        )
        .unwrap();
        let t = schedule.num_steps();
        let x_t = q_marginal(&motion, t, &schedule, 555).unwrap();
        let pred = denoise_predict(&params, &x_t, t, &item.cond).unwrap();
        let rmse = ((&pred.frames - &motion.frames).mapv(|v| v * v).sum()
            / motion.frames.len() as f64)
            .sqrt();
        assert!(rmse < 0.1, "rmse {rmse}");
    }

    #[test]
    fn finetune_with_zero_acc_continues_training() {
        let schedule = ScheduleConfig::desk_test().build().unwrap();
        let data = vec![
            sine_item(0.7, 0.5, vec![1.0, 0.0, 0.0, 0.0]),
            sine_item(0.2, 0.8, vec![0.0, 1.0, 0.0, 0.0]),
        ];
        let weights = LossWeights::default().without_acc();
        let hyper = TrainHyper {
            steps: 100,
            batch: 2,
            lr: 1e-3,
            momentum: 0.9,
            seed: 7,
        };
        let (base, _) = train(&data, &weights, &hyper, &schedule, &small_config()).unwrap();
        let (refined, curves, report) =
            finetune(&base, &data, &data, &weights, &hyper, &schedule).unwrap();
        assert_eq!(curves.len(), 100);
        assert!(report.holdout_acc_before.is_finite());
        assert!(report.holdout_acc_after.is_finite());
        assert_ne!(base.to_flat(), refined.to_flat());
    }

    fn tiny_config() -> DenoiserConfig {
        DenoiserConfig {
            n_frames: 4,
            joints: 2,
            dim: 3,
            cond_dim: 4,
            hidden_width: 6,
            hidden_blocks: 1,
            time_embed_dim: 4,
            fps: 20.0,
            joint_names: Vec::new(),
        }
    }

    #[test]
    fn training_gradient_matches_finite_differences() {
        let cfg = tiny_config();
        let frames = Array3::from_shape_fn((4, 2, 3), |(i, j, k)| {
            0.4 * ((i + 2 * j + 3 * k) as f64).sin()
        });
        let motion = MotionSequence {
            frames,
            fps: 20.0,
            representation: Representation::JointPositions3D,
            joint_names: names(2),
        };
        let mut mask_arr = ndarray::Array2::zeros((4, 2));
        mask_arr[[1, 0]] = 1.0;
        mask_arr[[2, 0]] = 1.0;
        let item = TrainItem {
            motion,
            cond: Condition::unlabeled(vec![0.2, -0.4, 0.9, 0.0]),
            mask: FootContactMask::new(mask_arr, vec![0]).unwrap(),
        };
        let schedule = ScheduleConfig::desk_test().build().unwrap();
        let params = DenoiserParams::init(cfg, 13).unwrap();
        assert!(params.param_count() <= 500);
        let err = denoiser_grad_check(
            &params,
            &item,
            &LossWeights::default(),
            &schedule,
            40,
            99,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-3, "max rel error {err}");
    }

    #[test]
    fn conditioned_sampling_separates_two_classes() {
        // two distinguishable constant motions; conditioned samples must land
        // closer (L2) to their own class mean than to the other class mean
        let cfg = small_config();
        let mk = |value: f64, cond: Vec<f64>| {
            let frames = Array3::from_elem((cfg.n_frames, cfg.joints, cfg.dim), value);
            TrainItem {
                motion: MotionSequence {
                    frames,
                    fps: 20.0,
                    representation: Representation::JointPositions3D,
                    joint_names: names(cfg.joints),
                },
                cond: Condition::unlabeled(cond),
                mask: FootContactMask::zeros(cfg.n_frames, cfg.joints),
            }
        };
        let class_a = mk(0.8, vec![1.0, 0.0, 0.0, 0.0]);
        let class_b = mk(-0.8, vec![0.0, 1.0, 0.0, 0.0]);
        let schedule = ScheduleConfig::desk_test().build().unwrap();
        let hyper = TrainHyper {
            steps: 3000,
            batch: 4,
            lr: 2e-3,
            momentum: 0.9,
            seed: 21,
        };
        let (params, _) = train(
            &[class_a.clone(), class_b.clone()],
            &LossWeights::default(),
            &hyper,
            &schedule,
            &cfg,
        )
        .unwrap();
        let dist = |m: &MotionSequence, target: f64| -> f64 {
            m.frames.iter().map(|v| (v - target) * (v - target)).sum::<f64>().sqrt()
        };
        let mut hits = 0;
        let total = 20;
        for s in 0..total {
            let m = sample(&params, &class_a.cond, cfg.n_frames, &schedule, 1000 + s).unwrap();
            if dist(&m, 0.8) < dist(&m, -0.8) {
                hits += 1;
            }
            let m = sample(&params, &class_b.cond, cfg.n_frames, &schedule, 2000 + s).unwrap();
            if dist(&m, -0.8) < dist(&m, 0.8) {
                hits += 1;
            }
        }
        assert!(
            hits * 10 >= 2 * total * 9,
            "only {hits}/{} samples landed nearer their class mean",
            2 * total
        );
    }

    #[test]
    fn sampling_is_deterministic_and_finite() {
        let cfg = small_config();
        let schedule = ScheduleConfig::desk_test().build().unwrap();
        let params = DenoiserParams::init(cfg.clone(), 77).unwrap();
        let cond = Condition::unlabeled(vec![0.1, 0.2, 0.3, 0.4]);
        let a = sample(&params, &cond, cfg.n_frames, &schedule, 5).unwrap();
        let b = sample(&params, &cond, cfg.n_frames, &schedule, 5).unwrap();
        assert_eq!(a.frames, b.frames);
        assert!(a.frames.iter().all(|v| v.is_finite()));
        assert_eq!(a.dims(), (cfg.n_frames, cfg.joints, cfg.dim));
    }

    #[test]
    fn q_step_composition_matches_marginal_moments() {
        // five sequential q_step draws vs one q_marginal draw at t = 5
        let schedule = ScheduleConfig::desk_test().build().unwrap();
        let cfg = small_config();
        let frames = Array3::from_elem((cfg.n_frames, cfg.joints, cfg.dim), 0.7);
        let x0 = MotionSequence {
            frames,
            fps: 20.0,
            representation: Representation::JointPositions3D,
            joint_names: names(cfg.joints),
        };
        let t = 5;
        let draws = 10_000;
        let mut composed = Vec::new();
        let mut marginal = Vec::new();
        for d in 0..draws {
            let mut x = x0.clone();
            for step in 1..=t {
                x = super::super::q_step(&x, step, &schedule, (d * 31 + step) as u64).unwrap();
            }
            composed.push(x.frames[[0, 0, 0]]);
            let m = q_marginal(&x0, t, &schedule, 900_000 + d as u64).unwrap();
            marginal.push(m.frames[[0, 0, 0]]);
        }
        let stats = |v: &[f64]| {
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
            (mean, var, n)
        };
        let (m1, v1, n) = stats(&composed);
        let (m2, v2, _) = stats(&marginal);
        let se_mean = ((v1 + v2) / n).sqrt();
        let se_var = (v1 * v1 + v2 * v2).sqrt() * (2.0 / (n - 1.0)).sqrt();
        assert!((m1 - m2).abs() < 3.0 * se_mean, "means {m1} vs {m2}");
        assert!((v1 - v2).abs() < 3.0 * se_var, "vars {v1} vs {v2}");
    }
}

// Scratch experiment for tuning the finetune/HAR pipeline. Not part of the
// deliverable surface; prints metrics for several seeds.

use std::time::Instant;

use synmo::diffusion::{
    finetune, sample, train, Condition, DenoiserConfig, ScheduleConfig, TrainHyper, TrainItem,
};
use synmo::eval::{
    balanced_accuracy, loss_delta_report, merge_windows, predict_dataset, segment_windows,
    train_classifier, CategorySet, ClassifierHyper, DynamicClass,
};
use synmo::imu::{add_noise, attach_sensors, default_placements, synthesize_imu, GravityConfig};
use synmo::loss::LossWeights;
use synmo::motion::MotionSequence;
use synmo::pipeline::{default_skeleton, generate_corpus_items, SyntheticCorpusSpec};

fn main() {
    let t0 = Instant::now();
    let train_frames = 60;
    let schedule_cfg = ScheduleConfig::desk_test();
    let schedule = schedule_cfg.build().unwrap();

    // -------- criterion 4/5 experiment: five-class corpus --------
    let mut reductions = Vec::new();
    let mut high_mag = Vec::new();
    let mut low_mag = Vec::new();
    for &seed in &[11u64, 22, 33, 44, 55] {
        let spec = SyntheticCorpusSpec::default_five_class(6, seed);
        let items = generate_corpus_items(&spec).unwrap();
        let all: Vec<TrainItem> = items
            .iter()
            .map(|it| it.to_train_item(train_frames).unwrap())
            .collect();
        let mut train_set = Vec::new();
        let mut holdout = Vec::new();
        for (i, item) in all.iter().enumerate() {
            if i % 4 == 3 {
                holdout.push(item.clone());
            } else {
                train_set.push(item.clone());
            }
        }
        let denoiser = DenoiserConfig {
            n_frames: train_frames,
            joints: 22,
            dim: 3,
            cond_dim: spec.embed_dim,
            hidden_width: 64,
            hidden_blocks: 1,
            time_embed_dim: 8,
            fps: 20.0,
            joint_names: items[0].motion.joint_names.clone(),
        };
        let base_hyper = TrainHyper {
            steps: 1200,
            batch: 4,
            lr: 1e-3,
            momentum: 0.9,
            seed,
        };
        let (base, _) = train(
            &train_set,
            &LossWeights::default().without_acc(),
            &base_hyper,
            &schedule,
            &denoiser,
        )
        .unwrap();
        let ft_hyper = TrainHyper {
            steps: 800,
            batch: 4,
            lr: 1e-3,
            momentum: 0.9,
            seed: seed + 1,
        };
        let (refined, _, report) = finetune(
            &base,
            &train_set,
            &holdout,
            &LossWeights::default(),
            &ft_hyper,
            &schedule,
        )
        .unwrap();
        let rel = (report.holdout_acc_before - report.holdout_acc_after)
            / report.holdout_acc_before;
        println!(
            "seed {seed}: holdout L_acc {:.5} -> {:.5} ({:+.1}%)",
            report.holdout_acc_before,
            report.holdout_acc_after,
            -100.0 * rel
        );
        reductions.push(rel);

        // delta report on the full corpus
        let eval_set: Vec<(MotionSequence, Condition)> = all
            .iter()
            .map(|it| (it.motion.clone(), it.cond.clone()))
            .collect();
        let cats = CategorySet::default_with_stub(spec.embed_dim).unwrap();
        let delta =
            loss_delta_report(&base, &refined, &eval_set, &cats, &schedule, seed).unwrap();
        let mut hi = Vec::new();
        let mut lo = Vec::new();
        for c in &delta.categories {
            match synmo::eval::dynamic_class(&c.label).unwrap() {
                DynamicClass::High => hi.push(c.delta.abs()),
                DynamicClass::Low => lo.push(c.delta.abs()),
            }
            println!("   {}: delta {:+.5} (n={})", c.label, c.delta, c.count);
        }
        let hi_mean = hi.iter().sum::<f64>() / hi.len() as f64;
        let lo_mean = lo.iter().sum::<f64>() / lo.len() as f64;
        println!("   high |delta| {hi_mean:.5} vs low |delta| {lo_mean:.5}");
        high_mag.push(hi_mean);
        low_mag.push(lo_mean);
    }
    let mean_red = reductions.iter().sum::<f64>() / reductions.len() as f64;
    println!("C4 mean reduction {:.1}% (need >= 5%)", 100.0 * mean_red);
    println!(
        "C5 high {:.5} low {:.5} over seeds",
        high_mag.iter().sum::<f64>() / 5.0,
        low_mag.iter().sum::<f64>() / 5.0
    );
    println!("elapsed {:?}", t0.elapsed());

    // -------- criterion 9 experiment: three-class HAR --------
    let gravity = GravityConfig::default();
    let placements = default_placements();
    let skeleton = default_skeleton();
    let mut refined_scores = Vec::new();
    let mut base_scores = Vec::new();
    for &seed in &[101u64, 202, 303, 404, 505] {
        let spec = SyntheticCorpusSpec::default_three_class(6, seed);
        let items = generate_corpus_items(&spec).unwrap();
        let train_set: Vec<TrainItem> = items
            .iter()
            .map(|it| it.to_train_item(train_frames).unwrap())
            .collect();
        let denoiser = DenoiserConfig {
            n_frames: train_frames,
            joints: 22,
            dim: 3,
            cond_dim: spec.embed_dim,
            hidden_width: 64,
            hidden_blocks: 1,
            time_embed_dim: 8,
            fps: 20.0,
            joint_names: items[0].motion.joint_names.clone(),
        };
        let (base, _) = train(
            &train_set,
            &LossWeights::default().without_acc(),
            &TrainHyper {
                steps: 1200,
                batch: 4,
                lr: 1e-3,
                momentum: 0.9,
                seed,
            },
            &schedule,
            &denoiser,
        )
        .unwrap();
        let (refined, _, _) = finetune(
            &base,
            &train_set,
            &train_set,
            &LossWeights::default(),
            &TrainHyper {
                steps: 800,
                batch: 4,
                lr: 1e-3,
                momentum: 0.9,
                seed: seed + 1,
            },
            &schedule,
        )
        .unwrap();

        // real-like corpus: unseen seeds + accel noise
        let mut real_spec = SyntheticCorpusSpec::default_three_class(4, seed + 1000);
        real_spec.length_range_s = (3.0, 10.0);
        let real_items = generate_corpus_items(&real_spec).unwrap();
        let mut real_sets = Vec::new();
        for (i, item) in real_items.iter().enumerate() {
            let trajs = attach_sensors(&item.motion, &skeleton, &placements).unwrap();
            for traj in &trajs {
                let signal = synthesize_imu(traj, &gravity).unwrap();
                let noisy = add_noise(&signal, 0.5, 0.0, seed + i as u64).unwrap();
                if noisy.len() < 40 {
                    continue;
                }
                real_sets.push(
                    segment_windows(
                        &noisy,
                        40,
                        0.5,
                        &item.label,
                        &format!("real_{}_{}", item.id, traj.placement_name),
                    )
                    .unwrap(),
                );
            }
        }
        let real_windows = merge_windows(real_sets).unwrap();

        // per model: sample per prompt, synthesize, window, train, score
        let mut score_of = |params: &synmo::diffusion::DenoiserParams, tag: &str| -> f64 {
            let mut sets = Vec::new();
            for (ci, class) in spec.classes.iter().enumerate() {
                for k in 0..6usize {
                    let prompt = &class.prompts[k % class.prompts.len()];
                    let emb = synmo::eval::stub_embedding(prompt, spec.embed_dim).unwrap();
                    let cond = Condition::new(emb, Some(class.label.clone()));
                    let m = sample(
                        params,
                        &cond,
                        train_frames,
                        &schedule,
                        seed + (ci * 100 + k) as u64,
                    )
                    .unwrap();
                    let trajs = attach_sensors(&m, &skeleton, &placements).unwrap();
                    for traj in &trajs {
                        let signal = synthesize_imu(traj, &gravity).unwrap();
                        if signal.len() < 40 {
                            continue;
                        }
                        sets.push(
                            segment_windows(
                                &signal,
                                40,
                                0.5,
                                &class.label,
                                &format!("{tag}_{}_{}_{}", class.label, k, traj.placement_name),
                            )
                            .unwrap(),
                        );
                    }
                }
            }
            let train_windows = merge_windows(sets).unwrap();
            let model = train_classifier(
                &train_windows,
                &ClassifierHyper {
                    seed,
                    ..ClassifierHyper::default()
                },
            )
            .unwrap();
            let (preds, truth) = predict_dataset(&model, &real_windows).unwrap();
            balanced_accuracy(&preds, &truth).unwrap()
        };
        let r = score_of(&refined, "ref");
        let b = score_of(&base, "base");
        println!("seed {seed}: refined {r:.4} base {b:.4}");
        refined_scores.push(r);
        base_scores.push(b);
    }
    let mean_ref = refined_scores.iter().sum::<f64>() / 5.0;
    let wins = refined_scores
        .iter()
        .zip(base_scores.iter())
        .filter(|(r, b)| r >= b)
        .count();
    println!("C9 refined mean {mean_ref:.4} (need >= 0.9), refined >= base on {wins}/5 seeds");
    println!("total elapsed {:?}", t0.elapsed());
}

use layercap_core::field::FieldConfig;
use layercap_core::losses::LossWeights;
use layercap_core::render::{RenderConfig, RenderMode};
use layercap_core::synth::{default_spec, generate_scene, SceneData};
use layercap_core::train::{train, write_log, TrackedPoses, TrainConfig, Trainer};
use layercap_core::Error;

fn small_scene() -> SceneData {
    let mut spec = default_spec();
    spec.num_frames = 2;
    spec.body_script.truncate(2);
    spec.object_script.truncate(2);
    spec.num_cameras = 6;
    spec.width = 48;
    spec.height = 48;
    spec.focal = 70.0;
    generate_scene(&spec).unwrap()
}

fn tiny_field() -> FieldConfig {
    FieldConfig {
        pos_levels: 2,
        dir_levels: 1,
        density_hidden: vec![12],
        color_hidden: vec![8],
        deform_hidden: vec![8],
        feat_dim: 4,
        latent_dim: 2,
        deform_scale: 0.1,
    }
}

fn tiny_render() -> RenderConfig {
    RenderConfig {
        human_bins: 6,
        object_bins: 3,
        ..RenderConfig::default()
    }
}

fn tiny_weights() -> LossWeights {
    LossWeights {
        object_samples: 64,
        human_samples: 64,
        ..LossWeights::default()
    }
}

fn tiny_train(total_steps: u64, seed: u64) -> TrainConfig {
    TrainConfig {
        total_steps,
        batch_rays: 64,
        seed,
        pseudo_fraction: 0.5,
        ..TrainConfig::default()
    }
}

fn param_groups(f: &layercap_core::field::LayeredField<f32>) -> [&[f32]; 7] {
    [
        &f.human.density.params,
        &f.human.color.params,
        &f.human.deform.params,
        &f.human.latents,
        &f.object.density.params,
        &f.object.color.params,
        &f.object.latents,
    ]
}

fn assert_fields_bit_identical(
    a: &layercap_core::field::LayeredField<f32>,
    b: &layercap_core::field::LayeredField<f32>,
) {
    for (ga, gb) in param_groups(a).iter().zip(param_groups(b)) {
        assert_eq!(ga.len(), gb.len());
        for (x, y) in ga.iter().zip(gb.iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}

#[test]
fn learning_rate_follows_the_exact_exponential_schedule() {
    let cfg = TrainConfig::default();
    assert_eq!(cfg.lr(0).to_bits(), cfg.lr0.to_bits());
    let halved = cfg.lr(2000);
    assert!(
        (halved - cfg.lr0 / 2.0).abs() < 1e-12 * cfg.lr0,
        "lr(2000) = {halved}, expected half of {}",
        cfg.lr0
    );
    for n in [1u64, 17, 500, 1999, 12_345] {
        assert_eq!(cfg.lr(n).to_bits(), (cfg.lr0 * cfg.decay.powi(n as i32)).to_bits());
    }
    for n in 0..100 {
        assert!(cfg.lr(n + 1) < cfg.lr(n));
    }
}

#[test]
fn config_validation_rejects_bad_fields() {
    let ok = TrainConfig::default();
    assert!(ok.validate().is_ok());
    for (name, cfg) in [
        ("lr0", TrainConfig { lr0: 0.0, ..ok.clone() }),
        ("lr0", TrainConfig { lr0: f64::NAN, ..ok.clone() }),
        ("decay", TrainConfig { decay: 0.0, ..ok.clone() }),
        ("decay", TrainConfig { decay: 1.5, ..ok.clone() }),
        ("batch", TrainConfig { batch_rays: 0, ..ok.clone() }),
        ("beta1", TrainConfig { beta1: 1.0, ..ok.clone() }),
        ("eps", TrainConfig { eps: 0.0, ..ok.clone() }),
        ("fraction", TrainConfig { pseudo_fraction: 1.5, ..ok.clone() }),
        ("workers", TrainConfig { workers: 0, ..ok.clone() }),
    ] {
        assert!(cfg.validate().is_err(), "{name} accepted an invalid value");
    }
}

#[test]
fn trainer_rejects_mismatched_inputs() {
    let data = small_scene();
    let mut poses = TrackedPoses::ground_truth(&data);
    poses.bodies.pop();
    let err = Trainer::new(
        &data,
        &poses,
        tiny_field(),
        tiny_render(),
        tiny_weights(),
        tiny_train(10, 0),
        None,
    )
    .err().expect("mismatched poses must be rejected");
    assert!(matches!(err, Error::Config(_)));

    let poses = TrackedPoses::ground_truth(&data);
    let cfg = TrainConfig {
        holdout_view: Some(6),
        ..tiny_train(10, 0)
    };
    let err = Trainer::new(
        &data,
        &poses,
        tiny_field(),
        tiny_render(),
        tiny_weights(),
        cfg,
        None,
    )
    .err().expect("out-of-range holdout must be rejected");
    assert!(err.to_string().contains("holdout"));
}

#[test]
fn zero_step_training_returns_the_untouched_initialization() {
    let data = small_scene();
    let poses = TrackedPoses::ground_truth(&data);
    let fresh = Trainer::new(
        &data,
        &poses,
        tiny_field(),
        tiny_render(),
        tiny_weights(),
        tiny_train(0, 5),
        None,
    )
    .unwrap();
    let (field, log) = train(
        &data,
        &poses,
        tiny_field(),
        tiny_render(),
        tiny_weights(),
        tiny_train(0, 5),
        None,
    )
    .unwrap();
    assert!(log.is_empty());
    assert_fields_bit_identical(&fresh.field, &field);
    let img_a = fresh.render(0, 0, RenderMode::Full, None);
    let img_b = fresh.render(0, 0, RenderMode::Full, None);
    assert_eq!(img_a.color, img_b.color);
}

#[test]
fn same_seed_runs_are_bitwise_identical() {
    let data = small_scene();
    let poses = TrackedPoses::ground_truth(&data);
    let mut a = Trainer::new(
        &data,
        &poses,
        tiny_field(),
        tiny_render(),
        tiny_weights(),
        tiny_train(8, 21),
        None,
    )
    .unwrap();
    let mut b = Trainer::new(
        &data,
        &poses,
        tiny_field(),
        tiny_render(),
        tiny_weights(),
        tiny_train(8, 21),
        None,
    )
    .unwrap();
    a.run_to(8).unwrap();
    b.run_to(8).unwrap();
    assert_eq!(a.log, b.log);
    assert_fields_bit_identical(&a.field, &b.field);
}

#[test]
fn training_reduces_the_loss_on_a_short_run() {
    let data = small_scene();
    let poses = TrackedPoses::ground_truth(&data);
    let mut t = Trainer::new(
        &data,
        &poses,
        tiny_field(),
        tiny_render(),
        tiny_weights(),
        TrainConfig {
            batch_rays: 128,
            ..tiny_train(400, 3)
        },
        None,
    )
    .unwrap();
    t.run_to(400).unwrap();
    let mean = |recs: &[layercap_core::train::StepRecord]| {
        recs.iter().map(|r| r.total).sum::<f64>() / recs.len() as f64
    };
    let first = mean(&t.log[..100]);
    let last = mean(&t.log[300..]);
    assert!(
        last < first,
        "loss failed to trend down: first 100 mean {first}, last 100 mean {last}"
    );
    let lc_first = t.log[..100].iter().map(|r| r.losses.l_c).sum::<f64>();
    let lc_last = t.log[300..].iter().map(|r| r.losses.l_c).sum::<f64>();
    assert!(lc_last < lc_first, "photometric term did not improve");
    for r in &t.log {
        assert_eq!(r.lr.to_bits(), t.cfg.lr(r.step).to_bits());
        assert!(r.total.is_finite());
        if r.step < t.cfg.pseudo_step() {
            assert_eq!(r.losses.l_s, 0.0, "semantic loss active before the transition");
        }
    }
}

#[test]
fn checkpoints_resume_bit_for_bit() {
    let data = small_scene();
    let poses = TrackedPoses::ground_truth(&data);
    let dir = tempfile::tempdir().unwrap();
    let maps_a = dir.path().join("maps_a");
    let maps_b = dir.path().join("maps_b");
    let ck_path = dir.path().join("mid.ck");
    let cfg = tiny_train(30, 77);

    let mut unbroken = Trainer::new(
        &data,
        &poses,
        tiny_field(),
        tiny_render(),
        tiny_weights(),
        cfg.clone(),
        Some(&maps_a),
    )
    .unwrap();
    unbroken.run_to(30).unwrap();

    let mut first_leg = Trainer::new(
        &data,
        &poses,
        tiny_field(),
        tiny_render(),
        tiny_weights(),
        cfg.clone(),
        Some(&maps_b),
    )
    .unwrap();
    first_leg.run_to(20).unwrap();
    first_leg.save_checkpoint(&ck_path).unwrap();
    assert!(maps_b.join("pseudo_f000_c00.pgm").is_file());
    drop(first_leg);

    let mut resumed = Trainer::from_checkpoint(
        &ck_path,
        &data,
        &poses,
        tiny_field(),
        tiny_render(),
        tiny_weights(),
        cfg.clone(),
        Some(&maps_b),
    )
    .unwrap();
    assert_eq!(resumed.step_count(), 20);
    resumed.run_to(30).unwrap();

    assert_eq!(resumed.log.as_slice(), &unbroken.log[20..]);
    assert_fields_bit_identical(&resumed.field, &unbroken.field);

    let final_a = dir.path().join("final_a.ck");
    let final_b = dir.path().join("final_b.ck");
    unbroken.save_checkpoint(&final_a).unwrap();
    resumed.save_checkpoint(&final_b).unwrap();
    assert_eq!(
        std::fs::read(&final_a).unwrap(),
        std::fs::read(&final_b).unwrap(),
        "checkpoint bytes differ between unbroken and resumed runs"
    );
}

#[test]
fn checkpoint_refuses_a_different_config() {
    let data = small_scene();
    let poses = TrackedPoses::ground_truth(&data);
    let dir = tempfile::tempdir().unwrap();
    let ck_path = dir.path().join("a.ck");
    let mut t = Trainer::new(
        &data,
        &poses,
        tiny_field(),
        tiny_render(),
        tiny_weights(),
        tiny_train(10, 1),
        None,
    )
    .unwrap();
    t.run_to(3).unwrap();
    t.save_checkpoint(&ck_path).unwrap();
    let other_weights = LossWeights {
        w_c: 2.0,
        ..tiny_weights()
    };
    let err = Trainer::from_checkpoint(
        &ck_path,
        &data,
        &poses,
        tiny_field(),
        tiny_render(),
        other_weights,
        tiny_train(10, 1),
        None,
    )
    .err().expect("config change must refuse the checkpoint");
    assert!(err.to_string().contains("config hash mismatch"));
}

#[test]
fn resuming_past_the_transition_without_maps_is_refused() {
    let data = small_scene();
    let poses = TrackedPoses::ground_truth(&data);
    let dir = tempfile::tempdir().unwrap();
    let ck_path = dir.path().join("late.ck");
    let cfg = tiny_train(30, 4);
    let mut t = Trainer::new(
        &data,
        &poses,
        tiny_field(),
        tiny_render(),
        tiny_weights(),
        cfg.clone(),
        None,
    )
    .unwrap();
    t.run_to(20).unwrap();
    t.save_checkpoint(&ck_path).unwrap();
    let err = Trainer::from_checkpoint(
        &ck_path,
        &data,
        &poses,
        tiny_field(),
        tiny_render(),
        tiny_weights(),
        cfg,
        None,
    )
    .err().expect("resume without maps must fail");
    assert!(err.to_string().contains("persisted maps"));
}

#[test]
fn divergent_learning_rates_abort_with_a_diagnostic() {
    let data = small_scene();
    let poses = TrackedPoses::ground_truth(&data);
    // Large enough that the first update overflows f32 activations, so every
    // later loss is non-finite and the watchdog's streak fills.
    let cfg = TrainConfig {
        lr0: 1e30,
        batch_rays: 32,
        ..tiny_train(400, 2)
    };
    let weights = LossWeights {
        object_samples: 32,
        human_samples: 32,
        ..LossWeights::default()
    };
    let mut t = Trainer::new(
        &data,
        &poses,
        tiny_field(),
        tiny_render(),
        weights,
        cfg,
        None,
    )
    .unwrap();
    let err = t.run_to(400).unwrap_err();
    assert!(matches!(err, Error::Training(_)));
    assert!(err.to_string().contains("diverged"), "got: {err}");
}

#[test]
fn two_workers_agree_with_single_worker_losses() {
    let data = small_scene();
    let poses = TrackedPoses::ground_truth(&data);
    let run = |workers: usize| {
        let cfg = TrainConfig {
            workers,
            ..tiny_train(6, 9)
        };
        let mut t = Trainer::new(
            &data,
            &poses,
            tiny_field(),
            tiny_render(),
            tiny_weights(),
            cfg,
            None,
        )
        .unwrap();
        t.run_to(6).unwrap();
        t.log
    };
    let solo = run(1);
    let duo = run(2);
    for (a, b) in solo.iter().zip(&duo) {
        let tol = 1e-5 * a.total.abs().max(1.0);
        assert!(
            (a.total - b.total).abs() <= tol,
            "step {}: single {} vs dual {}",
            a.step,
            a.total,
            b.total
        );
    }
}

#[test]
fn holdout_view_shrinks_the_pixel_pool_and_trains() {
    let data = small_scene();
    let poses = TrackedPoses::ground_truth(&data);
    let cfg = TrainConfig {
        holdout_view: Some(2),
        ..tiny_train(3, 6)
    };
    let mut t = Trainer::new(
        &data,
        &poses,
        tiny_field(),
        tiny_render(),
        tiny_weights(),
        cfg,
        None,
    )
    .unwrap();
    t.run_to(3).unwrap();
    assert_eq!(t.log.len(), 3);
    let held = t.render(2, 0, RenderMode::Full, None);
    assert_eq!(held.color.width, 48);
}

#[test]
fn loss_log_round_trips_through_csv() {
    let data = small_scene();
    let poses = TrackedPoses::ground_truth(&data);
    let mut t = Trainer::new(
        &data,
        &poses,
        tiny_field(),
        tiny_render(),
        tiny_weights(),
        tiny_train(4, 12),
        None,
    )
    .unwrap();
    t.run_to(4).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("log.csv");
    write_log(&t.log, &path).unwrap();
    let mut rdr = csv::Reader::from_path(&path).unwrap();
    assert_eq!(
        rdr.headers().unwrap(),
        &csv::StringRecord::from(vec!["step", "lr", "L_c", "L_o", "L_h", "L_s", "total"])
    );
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 4);
    for (row, rec) in rows.iter().zip(&t.log) {
        assert_eq!(row[0].parse::<u64>().unwrap(), rec.step);
        assert_eq!(row[1].parse::<f64>().unwrap().to_bits(), rec.lr.to_bits());
        assert_eq!(row[6].parse::<f64>().unwrap().to_bits(), rec.total.to_bits());
    }
}

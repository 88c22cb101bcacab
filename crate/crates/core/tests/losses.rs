//! Loss contracts: closed-form values, finite-difference gradient checks
//! through the full render chain, the inside/outside subset-sum oracle, the
//! pseudo-segmentation precision bound, and weight linearity.

mod common;

use common::{assert_close_to_fd, encoded_dir, jitter, scene, small_cfg, AnalyticField, FrameGeom};
use layercap_core::field::{
    HumanField, HumanGrads, HumanSample, ObjectField, ObjectFrameCtx, ObjectGrads, ObjectSample,
};
use layercap_core::geometry::{point_inside_mesh, InsideTester, Ray, V3};
use layercap_core::losses::{
    backward_ray, contact_term, forward_ray, generate_pseudo_segmentation, load_pseudo_seg,
    loss_human_contact, loss_object_template, loss_photometric, loss_semantic, sample_points,
    save_pseudo_seg, template_term, LossBreakdown, LossWeights, PseudoSegMap, RayForward,
    OBJECT_LABEL,
};
use layercap_core::render::{human_bounds, Entity, FrameBounds, MergedSample, RenderConfig};
use layercap_core::rng::{stream, Stage};
use rand::Rng;

#[test]
fn photometric_is_zero_on_matching_batches_and_counts_squared_error() {
    let batch = vec![[0.2, 0.4, 0.6], [0.1, 0.9, 0.5]];
    let (l, d) = loss_photometric(&batch, &batch);
    assert_eq!(l, 0.0);
    assert!(d.iter().all(|g| *g == [0.0; 3]));

    let (l, d) = loss_photometric(&[[0.2, 0.4, 0.6]], &[[0.1, 0.4, 0.6]]);
    assert!((l - 0.01).abs() < 1e-15, "got {l}");
    assert!((d[0][0] - 0.2).abs() < 1e-15);
    assert_eq!(d[0][1], 0.0);
    assert_eq!(d[0][2], 0.0);
}

#[test]
fn semantic_loss_matches_hand_arithmetic() {
    let (l, _) = loss_semantic(&[[0.3, 0.7]], &[OBJECT_LABEL]);
    assert!((l - 0.18).abs() < 1e-15, "got {l}");

    let (l, d) = loss_semantic(&[[0.0, 1.0]], &[OBJECT_LABEL]);
    assert_eq!(l, 0.0);
    assert_eq!(d[0], [0.0; 2]);

    let (l, d) = loss_semantic(&[], &[]);
    assert_eq!(l, 0.0);
    assert!(d.is_empty());
}

#[test]
fn template_terms_hit_their_closed_forms() {
    assert_eq!(template_term(0.0, true), (1.0, -2.0));
    assert_eq!(template_term(0.0, false), (0.0, 0.0));
    let (v, _) = template_term(5.0, true);
    assert!((v - (-10.0f64).exp()).abs() < 1e-18, "got {v}");
    assert_eq!(contact_term(0.0), (0.0, 0.0));
    let (v, dv) = contact_term(1.5);
    assert_eq!(v, 2.25);
    assert_eq!(dv, 3.0);
}

#[test]
fn every_loss_is_nonnegative_on_random_inputs() {
    let mut rng = stream(31, Stage::Train, 0);
    for _ in 0..200 {
        let a = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
        let b = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
        assert!(loss_photometric(&[a], &[b]).0 >= 0.0);
        let s = [rng.gen_range(-1.0..2.0), rng.gen_range(-1.0..2.0)];
        assert!(loss_semantic(&[s], &[OBJECT_LABEL]).0 >= 0.0);
        let sigma = rng.gen_range(0.0..50.0);
        assert!(template_term(sigma, true).0 >= 0.0);
        assert!(template_term(sigma, false).0 >= 0.0);
        assert!(contact_term(sigma).0 >= 0.0);
    }
}

#[test]
fn total_loss_is_linear_in_the_weights() {
    let b = LossBreakdown {
        l_c: 0.7,
        l_o: 1.3,
        l_h: 0.25,
        l_s: 2.0,
    };
    let w = LossWeights::default();
    let base = b.total(&w);
    assert!((base - (1.0 * 0.7 + 0.1 * 1.3 + 0.1 * 0.25 + 0.05 * 2.0)).abs() < 1e-15);

    let bumps: [(fn(&mut LossWeights) -> &mut f64, f64); 4] = [
        (|w| &mut w.w_c, b.l_c),
        (|w| &mut w.w_o, b.l_o),
        (|w| &mut w.w_h, b.l_h),
        (|w| &mut w.w_s, b.l_s),
    ];
    for (get, term) in bumps {
        let mut w2 = w.clone();
        *get(&mut w2) += 0.5;
        assert!((b.total(&w2) - base - 0.5 * term).abs() < 1e-12);
    }

    let zero = LossWeights {
        w_c: 0.0,
        w_o: 0.0,
        w_h: 0.0,
        w_s: 0.0,
        ..w
    };
    assert_eq!(b.total(&zero), 0.0);

    assert!(LossWeights { w_o: -0.1, ..LossWeights::default() }.validate().is_err());
    assert!(LossWeights::default().validate().is_ok());
}

/// Two-sample ray (one human, one object) rendered through both fields; the
/// photometric gradient must match central differences for every parameter
/// group of both fields.
#[test]
fn photometric_gradient_matches_finite_differences_through_a_rendered_ray() {
    let data = scene();
    let mut rng = stream(32, Stage::Train, 0);
    let mut human: HumanField<f64> = HumanField::new(&small_cfg(), data.proxy.clone(), 3, &mut rng);
    let mut object: ObjectField<f64> = ObjectField::new(&small_cfg(), 3, &mut rng);
    jitter(&mut human.density.params, &mut rng, 0.2);
    jitter(&mut human.color.params, &mut rng, 0.3);
    jitter(&mut human.deform.params, &mut rng, 0.3);
    jitter(&mut human.latents, &mut rng, 0.5);
    jitter(&mut object.density.params, &mut rng, 0.2);
    jitter(&mut object.color.params, &mut rng, 0.3);
    jitter(&mut object.latents, &mut rng, 0.5);

    let frame = 1;
    let hctx = human.frame_ctx(&data.frames[frame].body);
    let octx = ObjectFrameCtx::new(&data.frames[frame].object_pose);
    let target = hctx.posed.pos[3];
    let origin = target + V3::new(0.9, 0.4, 1.1);
    let ray = Ray::new(origin, (target - origin).normalize());
    let dir = encoded_dir::<f64>(&human.dir_enc, &ray.dir);
    let merged = [
        MergedSample { depth: 1.0, entity: Entity::Human, delta: 0.4 },
        MergedSample { depth: 1.3, entity: Entity::Object, delta: 0.25 },
    ];
    let observed = [[0.9, 0.1, 0.4]];

    let loss = |h: &HumanField<f64>, o: &ObjectField<f64>| -> f64 {
        let mut fwd = RayForward::default();
        forward_ray(h, o, &hctx, &octx, frame, &ray, &merged, &dir, &mut fwd);
        loss_photometric(&[fwd.rgb], &observed).0
    };

    let mut hg = HumanGrads::zeros(&human);
    let mut og = ObjectGrads::zeros(&object);
    {
        let mut fwd = RayForward::default();
        forward_ray(&human, &object, &hctx, &octx, frame, &ray, &merged, &dir, &mut fwd);
        let (_, d) = loss_photometric(&[fwd.rgb], &observed);
        backward_ray(&human, &object, &mut fwd, &d[0], 0.0, &[0.0; 2], &mut hg, &mut og);
    }

    let h = 1e-5;
    let hgroups: [(fn(&mut HumanField<f64>) -> &mut Vec<f64>, &Vec<f64>); 4] = [
        (|f| &mut f.density.params, &hg.density),
        (|f| &mut f.color.params, &hg.color),
        (|f| &mut f.deform.params, &hg.deform),
        (|f| &mut f.latents, &hg.latents),
    ];
    for (get, ana) in hgroups {
        let len = get(&mut human).len();
        let mut num = vec![0.0; len];
        for i in 0..len {
            let orig = get(&mut human)[i];
            get(&mut human)[i] = orig + h;
            let up = loss(&human, &object);
            get(&mut human)[i] = orig - h;
            let dn = loss(&human, &object);
            get(&mut human)[i] = orig;
            num[i] = (up - dn) / (2.0 * h);
        }
        assert_close_to_fd(&num, ana);
    }
    let ogroups: [(fn(&mut ObjectField<f64>) -> &mut Vec<f64>, &Vec<f64>); 3] = [
        (|f| &mut f.density.params, &og.density),
        (|f| &mut f.color.params, &og.color),
        (|f| &mut f.latents, &og.latents),
    ];
    for (get, ana) in ogroups {
        let len = get(&mut object).len();
        let mut num = vec![0.0; len];
        for i in 0..len {
            let orig = get(&mut object)[i];
            get(&mut object)[i] = orig + h;
            let up = loss(&human, &object);
            get(&mut object)[i] = orig - h;
            let dn = loss(&human, &object);
            get(&mut object)[i] = orig;
            num[i] = (up - dn) / (2.0 * h);
        }
        assert_close_to_fd(&num, ana);
    }
}

/// Labels depend on density alone, so the semantic gradient must match
/// finite differences on the density-side groups and vanish identically on
/// the color-side ones.
#[test]
fn semantic_gradient_matches_finite_differences_on_a_three_sample_ray() {
    let data = scene();
    let mut rng = stream(33, Stage::Train, 0);
    let mut human: HumanField<f64> = HumanField::new(&small_cfg(), data.proxy.clone(), 3, &mut rng);
    let mut object: ObjectField<f64> = ObjectField::new(&small_cfg(), 3, &mut rng);
    jitter(&mut human.density.params, &mut rng, 0.25);
    jitter(&mut human.deform.params, &mut rng, 0.3);
    jitter(&mut object.density.params, &mut rng, 0.25);

    let frame = 0;
    let hctx = human.frame_ctx(&data.frames[frame].body);
    let octx = ObjectFrameCtx::new(&data.frames[frame].object_pose);
    let target = hctx.posed.pos[2];
    let origin = target + V3::new(-0.8, 0.5, 1.2);
    let ray = Ray::new(origin, (target - origin).normalize());
    let dir = encoded_dir::<f64>(&human.dir_enc, &ray.dir);
    let merged = [
        MergedSample { depth: 0.9, entity: Entity::Human, delta: 0.3 },
        MergedSample { depth: 1.15, entity: Entity::Object, delta: 0.2 },
        MergedSample { depth: 1.4, entity: Entity::Human, delta: 0.35 },
    ];
    let pseudo = [OBJECT_LABEL];

    let loss = |h: &HumanField<f64>, o: &ObjectField<f64>| -> f64 {
        let mut fwd = RayForward::default();
        forward_ray(h, o, &hctx, &octx, frame, &ray, &merged, &dir, &mut fwd);
        loss_semantic(&[fwd.label], &pseudo).0
    };

    let mut hg = HumanGrads::zeros(&human);
    let mut og = ObjectGrads::zeros(&object);
    {
        let mut fwd = RayForward::default();
        forward_ray(&human, &object, &hctx, &octx, frame, &ray, &merged, &dir, &mut fwd);
        let (_, d) = loss_semantic(&[fwd.label], &pseudo);
        backward_ray(&human, &object, &mut fwd, &[0.0; 3], 0.0, &d[0], &mut hg, &mut og);
    }
    assert!(hg.color.iter().all(|g| *g == 0.0), "labels must not reach color params");
    assert!(hg.latents.iter().all(|g| *g == 0.0));
    assert!(og.color.iter().all(|g| *g == 0.0));
    assert!(og.latents.iter().all(|g| *g == 0.0));

    let h = 1e-5;
    let hgroups: [(fn(&mut HumanField<f64>) -> &mut Vec<f64>, &Vec<f64>); 2] = [
        (|f| &mut f.density.params, &hg.density),
        (|f| &mut f.deform.params, &hg.deform),
    ];
    for (get, ana) in hgroups {
        let len = get(&mut human).len();
        let mut num = vec![0.0; len];
        for i in 0..len {
            let orig = get(&mut human)[i];
            get(&mut human)[i] = orig + h;
            let up = loss(&human, &object);
            get(&mut human)[i] = orig - h;
            let dn = loss(&human, &object);
            get(&mut human)[i] = orig;
            num[i] = (up - dn) / (2.0 * h);
        }
        assert_close_to_fd(&num, ana);
    }
    let len = object.density.params.len();
    let mut num = vec![0.0; len];
    for i in 0..len {
        let orig = object.density.params[i];
        object.density.params[i] = orig + h;
        let up = loss(&human, &object);
        object.density.params[i] = orig - h;
        let dn = loss(&human, &object);
        object.density.params[i] = orig;
        num[i] = (up - dn) / (2.0 * h);
    }
    assert_close_to_fd(&num, &og.density);
}

#[test]
fn object_template_gradient_matches_finite_differences() {
    let data = scene();
    let mut rng = stream(34, Stage::Train, 0);
    let mut object: ObjectField<f64> = ObjectField::new(&small_cfg(), 3, &mut rng);
    jitter(&mut object.density.params, &mut rng, 0.25);
    let tester = InsideTester::new(&data.template).unwrap();
    let samples = sample_points(
        &data.template.aabb().dilated(0.5 * data.spec.template_size),
        48,
        &mut stream(34, Stage::Train, 1),
    );
    let inside = samples.iter().filter(|p| tester.contains(p)).count();
    assert!(inside > 4 && inside < samples.len() - 4, "degenerate split: {inside}");

    let mut og = ObjectGrads::zeros(&object);
    let base = loss_object_template(&object, &tester, &samples, 1.0, &mut og);
    assert!(base > 0.0);
    assert!(og.color.iter().all(|g| *g == 0.0));
    assert!(og.latents.iter().all(|g| *g == 0.0));

    let h = 1e-5;
    let len = object.density.params.len();
    let mut num = vec![0.0; len];
    let mut scratch = ObjectGrads::zeros(&object);
    for i in 0..len {
        let orig = object.density.params[i];
        object.density.params[i] = orig + h;
        let up = loss_object_template(&object, &tester, &samples, 1.0, &mut scratch);
        object.density.params[i] = orig - h;
        let dn = loss_object_template(&object, &tester, &samples, 1.0, &mut scratch);
        object.density.params[i] = orig;
        num[i] = (up - dn) / (2.0 * h);
    }
    assert_close_to_fd(&num, &og.density);
}

/// Minimizing the template loss alone on a fixed sample set must saturate
/// the inside of the template and empty its complement.
#[test]
fn object_template_loss_drives_density_into_the_template() {
    let data = scene();
    let mut rng = stream(35, Stage::Train, 0);
    let mut object: ObjectField<f64> = ObjectField::new(&small_cfg(), 3, &mut rng);
    let tester = InsideTester::new(&data.template).unwrap();
    let samples = sample_points(
        &data.template.aabb().dilated(0.5 * data.spec.template_size),
        256,
        &mut stream(35, Stage::Train, 1),
    );
    let inside: Vec<bool> = samples.iter().map(|p| tester.contains(p)).collect();
    let n_in = inside.iter().filter(|b| **b).count();
    assert!(n_in > 20 && n_in < samples.len() - 20, "degenerate split: {n_in}");

    let n = object.density.params.len();
    let (mut m, mut v) = (vec![0.0; n], vec![0.0; n]);
    let mut g = ObjectGrads::zeros(&object);
    for step in 1..=500 {
        g.clear();
        loss_object_template(&object, &tester, &samples, 1.0, &mut g);
        let bc1 = 1.0 - 0.9f64.powi(step);
        let bc2 = 1.0 - 0.999f64.powi(step);
        for i in 0..n {
            m[i] = 0.9 * m[i] + 0.1 * g.density[i];
            v[i] = 0.999 * v[i] + 0.001 * g.density[i] * g.density[i];
            object.density.params[i] -= 0.05 * (m[i] / bc1) / ((v[i] / bc2).sqrt() + 1e-8);
        }
    }

    let mut s = ObjectSample::default();
    let (mut sum_in, mut sum_out) = (0.0, 0.0);
    for (p, ins) in samples.iter().zip(&inside) {
        let sigma = object.density_canonical(p, &mut s);
        if *ins {
            sum_in += sigma;
        } else {
            sum_out += sigma;
        }
    }
    let mean_in = sum_in / n_in as f64;
    let mean_out = sum_out / (samples.len() - n_in) as f64;
    assert!(mean_in > 5.0, "inside density only reached {mean_in:.3}");
    assert!(mean_out < 1e-2, "outside density stuck at {mean_out:.3e}");
}

#[test]
fn human_contact_matches_the_subset_sum_oracle_and_vanishes_when_clear() {
    let data = scene();
    let mut rng = stream(36, Stage::Train, 0);
    let mut human: HumanField<f64> = HumanField::new(&small_cfg(), data.proxy.clone(), 3, &mut rng);
    jitter(&mut human.density.params, &mut rng, 0.3);
    jitter(&mut human.deform.params, &mut rng, 0.3);
    let frame = 1;
    let hctx = human.frame_ctx(&data.frames[frame].body);
    let posed = data.template.transformed(&data.frames[frame].object_pose);
    let tester = InsideTester::new(&posed).unwrap();
    let samples = sample_points(&posed.aabb().dilated(0.1), 200, &mut stream(36, Stage::Train, 1));

    let mut hg = HumanGrads::zeros(&human);
    let loss = loss_human_contact(&human, &hctx, frame, &tester, &samples, 1.0, &mut hg);

    let mut s = HumanSample::default();
    let mut oracle = 0.0;
    let mut n_in = 0;
    for p in &samples {
        if point_inside_mesh(p, &posed).unwrap() {
            let sigma = human.density_at(&hctx, frame, p, &mut s);
            oracle += sigma * sigma;
            n_in += 1;
        }
    }
    assert!(n_in > 10, "oracle found only {n_in} inside points");
    assert!(
        (loss - oracle).abs() <= 1e-12 * oracle.max(1.0),
        "loss {loss} vs oracle {oracle}"
    );
    assert!(hg.density.iter().any(|g| *g != 0.0));

    // Far from the template every sample is outside, so the loss and its
    // gradients vanish identically.
    let far: Vec<V3> = samples.iter().map(|p| p + V3::new(50.0, 0.0, 0.0)).collect();
    let mut hg2 = HumanGrads::zeros(&human);
    let l2 = loss_human_contact(&human, &hctx, frame, &tester, &far, 1.0, &mut hg2);
    assert_eq!(l2, 0.0);
    assert!(hg2.density.iter().all(|g| *g == 0.0));
    assert!(hg2.deform.iter().all(|g| *g == 0.0));
}

#[test]
fn human_contact_gradient_matches_finite_differences() {
    let data = scene();
    let mut rng = stream(37, Stage::Train, 0);
    let mut human: HumanField<f64> = HumanField::new(&small_cfg(), data.proxy.clone(), 3, &mut rng);
    jitter(&mut human.density.params, &mut rng, 0.3);
    jitter(&mut human.deform.params, &mut rng, 0.3);
    let frame = 2;
    let hctx = human.frame_ctx(&data.frames[frame].body);
    let posed = data.template.transformed(&data.frames[frame].object_pose);
    let tester = InsideTester::new(&posed).unwrap();
    let samples = sample_points(&posed.aabb(), 32, &mut stream(37, Stage::Train, 1));

    let mut hg = HumanGrads::zeros(&human);
    loss_human_contact(&human, &hctx, frame, &tester, &samples, 1.0, &mut hg);
    assert!(hg.color.iter().all(|g| *g == 0.0));
    assert!(hg.latents.iter().all(|g| *g == 0.0));

    let h = 1e-5;
    let mut scratch = HumanGrads::zeros(&human);
    let groups: [(fn(&mut HumanField<f64>) -> &mut Vec<f64>, &Vec<f64>); 2] = [
        (|f| &mut f.density.params, &hg.density),
        (|f| &mut f.deform.params, &hg.deform),
    ];
    for (get, ana) in groups {
        let len = get(&mut human).len();
        let mut num = vec![0.0; len];
        for i in 0..len {
            let orig = get(&mut human)[i];
            get(&mut human)[i] = orig + h;
            let up = loss_human_contact(&human, &hctx, frame, &tester, &samples, 1.0, &mut scratch);
            get(&mut human)[i] = orig - h;
            let dn = loss_human_contact(&human, &hctx, frame, &tester, &samples, 1.0, &mut scratch);
            get(&mut human)[i] = orig;
            num[i] = (up - dn) / (2.0 * h);
        }
        assert_close_to_fd(&num, ana);
    }
}

/// With an exact reconstruction standing in for the trained model, the
/// pseudo labels must hit the visible-object mask almost perfectly.
#[test]
fn pseudo_segmentation_is_precise_against_the_ground_truth_mask() {
    let data = scene();
    let frame = 0;
    let fg = FrameGeom::new(&data, frame);
    let field = AnalyticField { geom: fg.geometry() };
    let bounds = FrameBounds::new(human_bounds(&fg.caps, 0.05), &fg.posed);
    let cfg = RenderConfig::default();
    for cam_i in [0usize, 4, 9] {
        let cam = &data.cameras[cam_i];
        let captured = &data.frames[frame].images[cam_i];
        let union = &data.frames[frame].union_masks[cam_i];
        let gt_object = &data.frames[frame].object_masks[cam_i];
        let gt_human = &data.frames[frame].human_masks[cam_i];
        let map = generate_pseudo_segmentation(&field, cam, frame, &bounds, &cfg, captured, union, 0.05);

        assert!(map.labeled.is_subset_of(union), "labels escaped the union mask");
        let labeled = map.labeled.count();
        assert!(labeled > 50, "only {labeled} pixels labeled in cam {cam_i}");
        let mut correct = 0;
        for y in 0..cam.height {
            for x in 0..cam.width {
                if map.labeled.get(x, y) {
                    if gt_object.get(x, y) {
                        correct += 1;
                    }
                    assert!(map.confidence.get(x, y) > 0.0);
                } else {
                    assert_eq!(map.confidence.get(x, y), 0.0);
                    // Unoccluded object pixels reconstruct exactly, so they
                    // must all be labeled.
                    assert!(
                        !(gt_object.get(x, y) && !gt_human.get(x, y)),
                        "missed clean object pixel ({x},{y}) in cam {cam_i}"
                    );
                }
            }
        }
        let precision = correct as f64 / labeled as f64;
        assert!(precision > 0.9, "cam {cam_i} precision {precision:.4}");
    }
}

#[test]
fn pseudo_seg_round_trips_through_pgm_and_csv() {
    let data = scene();
    let frame = 2;
    let cam_i = 6;
    let fg = FrameGeom::new(&data, frame);
    let field = AnalyticField { geom: fg.geometry() };
    let bounds = FrameBounds::new(human_bounds(&fg.caps, 0.05), &fg.posed);
    let map = generate_pseudo_segmentation(
        &field,
        &data.cameras[cam_i],
        frame,
        &bounds,
        &RenderConfig::default(),
        &data.frames[frame].images[cam_i],
        &data.frames[frame].union_masks[cam_i],
        0.05,
    );
    assert!(map.labeled.count() > 0);

    let dir = tempfile::tempdir().unwrap();
    let pgm = dir.path().join("seg.pgm");
    let csv = dir.path().join("seg.csv");
    save_pseudo_seg(&map, &pgm, &csv).unwrap();
    let loaded: PseudoSegMap = load_pseudo_seg(&pgm, &csv).unwrap();
    assert_eq!(loaded, map, "round trip must be exact");
}

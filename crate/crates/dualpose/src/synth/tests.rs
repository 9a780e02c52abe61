use super::*;
use crate::pipeline::{decode_pose, STRIDE};

fn default_config() -> SceneConfig {
    SceneConfig::default()
}

#[test]
fn same_seed_gives_bit_identical_scenes() {
    let cfg = default_config();
    let a = generate_scene(17, &cfg).unwrap();
    let b = generate_scene(17, &cfg).unwrap();
    assert_eq!(a.persons.len(), b.persons.len());
    assert!(a.image.iter().zip(&b.image).all(|(x, y)| x.to_bits() == y.to_bits()));
    for (pa, pb) in a.persons.iter().zip(&b.persons) {
        assert_eq!(pa.center, pb.center);
        assert_eq!(pa.joints, pb.joints);
    }
}

#[test]
fn joints_stay_inside_the_image() {
    let cfg = default_config();
    for seed in 0..200 {
        let scene = generate_scene(seed, &cfg).unwrap();
        for p in &scene.persons {
            for &(x, y) in &p.joints {
                assert!(x >= 0.0 && x < cfg.width as f64, "seed {seed}: x {x}");
                assert!(y >= 0.0 && y < cfg.height as f64, "seed {seed}: y {y}");
            }
        }
    }
}

#[test]
fn instance_counts_cover_the_whole_range() {
    let cfg = default_config();
    let mut seen = vec![0usize; cfg.n_max + 1];
    for seed in 0..1000 {
        let scene = generate_scene(seed, &cfg).unwrap();
        seen[scene.persons.len()] += 1;
    }
    assert_eq!(seen[0], 0);
    for n in 1..=cfg.n_max {
        assert!(seen[n] > 0, "no scene with {n} instances in 1000 seeds");
    }
}

#[test]
fn rendered_peak_is_exactly_one_at_the_joint_pixel() {
    let cfg = default_config();
    let scene = generate_scene(3, &cfg).unwrap();
    let (_, heatmaps) = render_targets::<f64>(&scene, 1.5, STRIDE).unwrap();
    let maps = heatmaps.unwrap();
    let (h, w) = (cfg.height / STRIDE, cfg.width / STRIDE);
    for (ni, p) in scene.persons.iter().enumerate() {
        for (ki, &(jx, jy)) in p.joints.iter().enumerate() {
            let (fx, fy) = ((jx as usize) / STRIDE, (jy as usize) / STRIDE);
            let v = maps.data()[((ni * p.joints.len() + ki) * h + fy) * w + fx];
            assert_eq!(v, 1.0);
        }
    }
}

#[test]
fn rendered_value_at_one_sigma() {
    let mut scene = generate_scene(3, &default_config()).unwrap();
    // One person, one joint, away from the border.
    scene.persons.truncate(1);
    scene.persons[0].joints = vec![(32.0, 32.0)];
    scene.persons[0].center = (32.0, 32.0);
    let (_, heatmaps) = render_targets::<f64>(&scene, 1.0, STRIDE).unwrap();
    let maps = heatmaps.unwrap();
    let (h, w) = (16, 16);
    assert_eq!(h * w, maps.numel());
    // Feature pixel (9,8) is exactly sigma = 1 away from the peak (8,8).
    let v = maps.data()[8 * w + 9];
    assert!((v - (-0.5f64).exp()).abs() < 1e-12, "{v}");
    assert!((v - 0.6065).abs() < 1e-4);
}

#[test]
fn empty_regions_render_to_zero() {
    let mut scene = generate_scene(5, &default_config()).unwrap();
    scene.persons.truncate(1);
    scene.persons[0].joints = vec![(8.0, 8.0)];
    scene.persons[0].center = (8.0, 8.0);
    let (center, heatmaps) = render_targets::<f64>(&scene, 1.0, STRIDE).unwrap();
    let maps = heatmaps.unwrap();
    // The far corner is dozens of sigmas away; exp underflows to zero.
    assert_eq!(maps.data()[16 * 16 - 1], 0.0);
    assert_eq!(center.data()[16 * 16 - 1], 0.0);
}

#[test]
fn gt_joints_decode_back_exactly_when_separated() {
    let cfg = default_config();
    let mut checked = 0;
    for seed in 0..40 {
        let scene = generate_scene(seed, &cfg).unwrap();
        // The exact-roundtrip contract holds when peaks are at least two
        // sigmas apart within each map; joints of one person always live in
        // their own map, so check within persons.
        let sigma = 1.5;
        let separated = scene.persons.iter().all(|p| {
            p.joints.iter().enumerate().all(|(i, &(ax, ay))| {
                p.joints.iter().skip(i + 1).all(|&(bx, by)| {
                    let d = ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt() / STRIDE as f64;
                    d >= 2.0 * sigma
                })
            })
        });
        if !separated {
            continue;
        }
        checked += 1;
        let (_, heatmaps) = render_targets::<f64>(&scene, sigma, STRIDE).unwrap();
        let poses = decode_pose(&heatmaps.unwrap()).unwrap();
        for (p, decoded) in scene.persons.iter().zip(&poses) {
            for (&(gx, gy), &(dx, dy)) in p.joints.iter().zip(decoded) {
                assert_eq!((gx, gy), (dx, dy), "seed {seed}");
            }
        }
    }
    assert!(checked > 5, "only {checked} separated scenes in sample");
}

#[test]
fn pck_perfect_prediction_is_one() {
    let scene = generate_scene(11, &default_config()).unwrap();
    let preds: Vec<Vec<(f64, f64)>> = scene.persons.iter().map(|p| p.joints.clone()).collect();
    let report = pck_evaluate(&preds, &scene, 0.1).unwrap();
    assert_eq!(report.pck, 1.0);
}

#[test]
fn pck_total_miss_is_zero() {
    let scene = generate_scene(12, &default_config()).unwrap();
    let k = scene.persons[0].joints.len();
    let preds: Vec<Vec<(f64, f64)>> =
        scene.persons.iter().map(|_| vec![(0.0, 0.0); k]).collect();
    let report = pck_evaluate(&preds, &scene, 0.05).unwrap();
    assert_eq!(report.pck, 0.0);
}

#[test]
fn pck_half_miss_is_exactly_half() {
    let mut scene = generate_scene(13, &default_config()).unwrap();
    scene.persons.truncate(1);
    scene.persons[0].joints = vec![(20.0, 20.0), (28.0, 20.0), (20.0, 28.0), (28.0, 28.0)];
    scene.persons[0].center = (24.0, 24.0);
    let mut preds = vec![scene.persons[0].joints.clone()];
    // Displace two of four joints far beyond any radius.
    preds[0][1] = (60.0, 60.0);
    preds[0][3] = (60.0, 0.0);
    let report = pck_evaluate(&preds, &scene, 0.1).unwrap();
    assert_eq!(report.pck, 0.5);
    assert_eq!(report.per_joint_hits, vec![1, 0, 1, 0]);
}

#[test]
fn pck_is_invariant_to_prediction_order() {
    let cfg = SceneConfig { n_max: 4, ..default_config() };
    let scene = generate_scene(40, &cfg).unwrap();
    let mut preds: Vec<Vec<(f64, f64)>> = scene
        .persons
        .iter()
        .map(|p| p.joints.iter().map(|&(x, y)| (x + 2.0, y)).collect())
        .collect();
    let a = pck_evaluate(&preds, &scene, 0.25).unwrap();
    preds.reverse();
    let b = pck_evaluate(&preds, &scene, 0.25).unwrap();
    assert_eq!(a.pck, b.pck);
    assert_eq!(a.per_joint_hits, b.per_joint_hits);
}

#[test]
fn pck_requires_ground_truth() {
    let mut scene = generate_scene(1, &default_config()).unwrap();
    scene.persons.clear();
    assert!(pck_evaluate(&[], &scene, 0.1).is_err());
}

#[test]
fn accumulator_merges_reports() {
    let scene = generate_scene(21, &default_config()).unwrap();
    let preds: Vec<Vec<(f64, f64)>> = scene.persons.iter().map(|p| p.joints.clone()).collect();
    let report = pck_evaluate(&preds, &scene, 0.1).unwrap();
    let mut acc = PckAccumulator::default();
    acc.add(&report);
    acc.add(&report);
    let merged = acc.finish();
    assert_eq!(merged.pck, 1.0);
    let total: usize = merged.per_joint_total.iter().sum();
    assert_eq!(total, 2 * scene.persons.len() * scene.persons[0].joints.len());
}

#[test]
fn forced_overlap_scenes_actually_overlap() {
    let cfg = SceneConfig { overlap_prob: 1.0, ..default_config() };
    let mut overlapping = 0;
    let mut multi = 0;
    for seed in 0..100 {
        let scene = generate_scene(seed, &cfg).unwrap();
        if scene.persons.len() >= 2 {
            multi += 1;
            if super::overlap_fraction(&scene.persons[0], &scene.persons[1]) >= 0.3 {
                overlapping += 1;
            }
        }
    }
    assert!(multi > 20);
    assert_eq!(overlapping, multi, "every multi-person scene must overlap");
}

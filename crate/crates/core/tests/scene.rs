use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use cinectx::geometry::{look_at, Trajectory, Vec3};
use cinectx::io::{read_json, read_mask_png, RawTensor};
use cinectx::panorama::equirect_to_perspective;
use cinectx::scene::{
    build_dataset, build_scene, load_manifest, load_sample_pair, make_sample_pair, render_frame, render_panorama,
    render_video, DatasetConfig, FrameFormat, PairConfig, SampleMeta,
};
use cinectx::trajectory_gen::{MovementKind, MovementSpec, Direction, pan};

fn tiny_pair() -> PairConfig {
    PairConfig {
        frames: 5,
        width: 16,
        height: 16,
        pano_h: 16,
        ..PairConfig::default()
    }
}

#[test]
fn layouts_vary_with_seed() {
    let hashes: HashSet<u64> = (0..100).map(|s| build_scene(s).layout_hash()).collect();
    assert!(hashes.len() >= 90, "{} distinct layouts", hashes.len());
}

#[test]
fn panorama_matches_direct_render() {
    let scene = build_scene(21);
    let eye = scene.subject.focus() + Vec3::new(3.0, 0.0, 2.6);
    let pano = render_panorama(&scene, &eye, 512).unwrap();
    assert_eq!(pano.width(), 1024);
    for yaw in [0.0f64, 77.0, -140.0] {
        let target = eye + Vec3::new(yaw.to_radians().sin(), 0.0, -yaw.to_radians().cos());
        let pose = look_at(eye, target, Vec3::y()).unwrap();
        let direct = render_frame(&scene, &pose, 0, false, 256, 256, 90.0).unwrap();
        let view = equirect_to_perspective(&pano, yaw, 0.0, 90.0, 256, 256).unwrap();
        let err = view.image.mean_abs_diff(&direct.image).unwrap();
        println!("yaw {yaw}: mean abs error {:.5}", err);
        assert!(err < 3.0 / 255.0, "yaw {yaw}: {err}");
    }
}

#[test]
fn first_context_view_matches_first_frame() {
    let cfg = PairConfig {
        frames: 3,
        width: 64,
        height: 64,
        pano_h: 256,
        ..PairConfig::default()
    };
    for i in 0..4 {
        let pair = make_sample_pair(40 + i, 7 + i, &cfg).unwrap();
        let ctx = pair.context(4, 64, 64).unwrap();
        let err = ctx.views[0].image.mean_abs_diff(&pair.video_without_subject.frames()[0]).unwrap();
        assert!(err < 3.0 / 255.0, "pair {i}: {err}");
    }
}

#[test]
fn static_camera_and_subject_give_identical_frames() {
    let mut scene = build_scene(3);
    scene.subject.period = None;
    let pose = look_at(scene.subject.focus() + Vec3::new(0.0, 0.0, 4.0), scene.subject.focus(), Vec3::y()).unwrap();
    let traj = Trajectory::constant(pose, 4).unwrap();
    let v = render_video(&scene, &traj, true, 24, 24, 90.0).unwrap();
    for f in v.video.frames() {
        assert_eq!(f, &v.video.frames()[0]);
    }
    let again = render_video(&scene, &traj, true, 24, 24, 90.0).unwrap();
    assert_eq!(v, again);
}

#[test]
fn pan_changes_every_frame() {
    let scene = build_scene(9);
    let start = look_at(scene.subject.focus() + Vec3::new(0.0, 0.0, 4.0), scene.subject.focus(), Vec3::y()).unwrap();
    let spec = MovementSpec::new(MovementKind::Pan, Direction::Right, 75.0, start).with_frames(8);
    let v = render_video(&scene, &pan(&spec).unwrap(), false, 32, 32, 90.0).unwrap();
    for w in v.video.frames().windows(2) {
        assert!(w[0].mean_abs_diff(&w[1]).unwrap() > 0.0);
    }
}

#[test]
fn movement_kinds_cover_taxonomy_over_700_pairs() {
    let cfg = DatasetConfig {
        pairs: 700,
        pair: PairConfig {
            frames: 2,
            width: 4,
            height: 4,
            pano_h: 4,
            ..PairConfig::default()
        },
        ..DatasetConfig::default()
    };
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for i in 0..cfg.pairs {
        let pair = make_sample_pair(cfg.scene_seed(i), cfg.movement_seed(i), &cfg.pair).unwrap();
        *counts.entry(pair.movement.kind.name()).or_default() += 1;
    }
    assert_eq!(counts.len(), 7, "{counts:?}");
    assert!(counts.values().all(|&c| c >= 50), "{counts:?}");
}

#[test]
fn subject_masks_mostly_non_empty_for_orbiting_kinds() {
    let cfg = PairConfig {
        frames: 9,
        width: 32,
        height: 32,
        pano_h: 8,
        ..PairConfig::default()
    };
    let dcfg = DatasetConfig::default();
    let mut per_kind: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for i in 0..140 {
        let pair = make_sample_pair(dcfg.scene_seed(i), dcfg.movement_seed(i), &cfg).unwrap();
        let key = format!("{}/{}", pair.movement.kind.name(), pair.movement.direction.name());
        let e = per_kind.entry(key).or_default();
        for m in &pair.subject_masks {
            e.0 += usize::from(!m.is_empty());
            e.1 += 1;
        }
    }
    for (kind, (hit, total)) in &per_kind {
        let rate = *hit as f64 / *total as f64;
        println!("{kind}: {hit}/{total} frames with subject");
        if kind.starts_with("arc") || kind.starts_with("dolly") {
            assert!(rate >= 0.95, "{kind}: {rate}");
        }
    }
}

fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().display().to_string();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn dataset_build_is_byte_identical_and_loadable() {
    for format in [FrameFormat::Tensor, FrameFormat::Png] {
        let cfg = DatasetConfig {
            pairs: 4,
            scenes: 2,
            seed: 7,
            pair: tiny_pair(),
            frame_format: format,
        };
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let m = build_dataset(&cfg, a.path()).unwrap();
        build_dataset(&cfg, b.path()).unwrap();
        assert_eq!(tree(a.path()), tree(b.path()));
        assert_eq!(m.entries.len(), 4);
        let loaded = load_manifest(a.path()).unwrap();
        assert_eq!(loaded, m);
        for e in &loaded.entries {
            let f = &e.files;
            for p in f.masks.iter() {
                read_mask_png(a.path().join(p)).unwrap();
            }
            Trajectory::read(a.path().join(&f.trajectory)).unwrap();
            let _: SampleMeta = read_json(a.path().join(&f.meta)).unwrap();
            if format == FrameFormat::Tensor {
                RawTensor::read(a.path().join(&f.video_with[0])).unwrap();
            }
            let pair = load_sample_pair(a.path(), e).unwrap();
            assert_eq!(pair.trajectory.frame_count(), 5);
            if format == FrameFormat::Tensor {
                assert!(pair.audit().is_empty(), "{:?}", pair.audit());
                let fresh = make_sample_pair(e.scene_seed, e.movement_seed, &cfg.pair).unwrap();
                assert_eq!(pair, fresh);
            }
        }
    }
}

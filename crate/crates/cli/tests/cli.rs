use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn cinectx(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cinectx"))
        .args(args)
        .output()
        .expect("spawn cinectx")
}

fn ok(args: &[&str]) -> String {
    let out = cinectx(args);
    assert!(
        out.status.success(),
        "cinectx {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    cinectx(args).status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

fn small_dataset(out: &Path, pairs: &str, seed: &str) {
    ok(&[
        "dataset", "--out", s(out), "--pairs", pairs, "--seed", seed, "--scenes", "2", "--frames", "3", "--width",
        "32", "--height", "32", "--pano-h", "64",
    ]);
}

#[test]
fn dataset_is_deterministic_and_creates_out() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("nested/a");
    let b = tmp.path().join("b");
    small_dataset(&a, "4", "7");
    small_dataset(&b, "4", "7");
    let ta = tree(&a);
    assert!(ta.contains_key(Path::new("manifest.json")));
    assert!(ta.contains_key(Path::new("config.json")));
    assert_eq!(ta, tree(&b));
    let m = json(&a.join("manifest.json"));
    assert_eq!(m["entries"].as_array().unwrap().len(), 4);
}

#[test]
fn bad_resolution_fails_before_writing() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("ds");
    assert_eq!(code(&["dataset", "--out", s(&out), "--pairs", "1", "--width", "40"]), 1);
    assert!(!out.exists());
    assert_eq!(code(&["dataset", "--out", s(&out), "--pairs", "1", "--height", "0"]), 1);
    assert!(!out.exists());
}

#[test]
fn project_writes_evenly_spaced_views() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    ok(&[
        "dataset", "--out", s(&ds), "--pairs", "1", "--frames", "2", "--width", "16", "--height", "16", "--pano-h",
        "64", "--format", "png",
    ]);
    let pano = ds.join("pair_0000/panorama.png");
    let out = tmp.path().join("views");
    ok(&["project", "--panorama", s(&pano), "--out", s(&out)]);
    let index = json(&out.join("views.json"));
    let views = index["views"].as_array().unwrap();
    assert_eq!(views.len(), 20);
    for (i, v) in views.iter().enumerate() {
        assert!((v["yaw"].as_f64().unwrap() - 18.0 * i as f64).abs() < 1e-9);
        assert_eq!(v["fov"].as_f64().unwrap(), 90.0);
        assert!(out.join(v["file"].as_str().unwrap()).is_file());
    }
    let pngs = fs::read_dir(&out)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "png"))
        .count();
    assert_eq!(pngs, 20);

    let four = tmp.path().join("four");
    ok(&["project", "--panorama", s(&pano), "--out", s(&four), "--views", "4", "--start-yaw", "-30"]);
    let views = json(&four.join("views.json"))["views"].as_array().unwrap().clone();
    assert_eq!(views.len(), 4);
    let yaws: Vec<f64> = views.iter().map(|v| v["yaw"].as_f64().unwrap()).collect();
    for (i, y) in yaws.iter().enumerate() {
        let want = (-30.0 + 90.0 * i as f64).rem_euclid(360.0);
        let d = (y - want).rem_euclid(360.0);
        assert!(d.min(360.0 - d) < 1e-9, "{yaws:?}");
    }
}

#[test]
fn corrupt_panorama_is_a_user_error() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.png");
    fs::write(&bad, b"not a png at all").unwrap();
    assert_eq!(code(&["project", "--panorama", s(&bad), "--out", s(&tmp.path().join("o"))]), 1);
    let missing = tmp.path().join("missing.png");
    assert_eq!(code(&["project", "--panorama", s(&missing), "--out", s(&tmp.path().join("p"))]), 1);
}

#[test]
fn gen_traj_pan_default() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&["gen-traj", "--kind", "pan", "--out", s(tmp.path())]);
    let meta = json(&tmp.path().join("trajectory_meta.json"));
    assert_eq!(meta["magnitude"].as_f64().unwrap(), 75.0);
    assert_eq!(meta["frames"].as_u64().unwrap(), 77);
    let traj = cinectx::geometry::Trajectory::read(tmp.path().join("trajectory.json")).unwrap();
    assert_eq!(traj.frame_count(), 77);
    let first = traj.poses()[0].clone();
    let last = traj.poses()[76].clone();
    for p in traj.poses() {
        assert!((p.eye() - first.eye()).norm() < 1e-9);
    }
    let angle = cinectx::geometry::geodesic_angle(first.rotation(), last.rotation()).unwrap().to_degrees();
    assert!((angle - 75.0).abs() < 1e-6, "{angle}");
}

#[test]
fn gen_traj_rejects_illegal_direction() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&["gen-traj", "--kind", "pan", "--direction", "forward", "--out", s(tmp.path())]), 1);
    assert_eq!(code(&["gen-traj", "--kind", "zoom", "--out", s(tmp.path())]), 1);
}

#[test]
fn exit_codes() {
    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["--version"]), 0);
    assert_eq!(code(&[]), 1);
    assert_eq!(code(&["no-such-command"]), 1);
    assert_eq!(code(&["dataset"]), 1);
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(
        code(&["eval", "--generated", "x", "--reference", "y", "--gen-traj", "t", "--out", s(tmp.path())]),
        1
    );
}

const TINY: &str = r#"{
  "model": { "hidden": 16, "layers": 1, "heads": 2, "context_views": 4 },
  "train": { "batch_size": 2, "lr": 0.002, "warmup": 10 }
}"#;

#[test]
fn end_to_end_smoke() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let ds = root.join("ds");
    small_dataset(&ds, "4", "3");

    let cfg = root.join("tiny.json");
    fs::write(&cfg, TINY).unwrap();
    let run = root.join("run");
    let ckpt = run.join("model.ctb");
    ok(&[
        "train", "--dataset", s(&ds), "--config", s(&cfg), "--steps", "200", "--log-every", "50", "--ckpt-out",
        s(&ckpt),
    ]);
    assert!(ckpt.is_file());
    let log = fs::read_to_string(run.join("train_log.jsonl")).unwrap();
    let losses: Vec<f64> = log
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap()["loss"].as_f64().unwrap())
        .collect();
    assert_eq!(losses.len(), 4);
    assert!(losses.iter().all(|l| l.is_finite()));

    let meta = json(&ds.join("pair_0000/meta.json"));
    let start_yaw = meta["start_yaw_deg"].as_f64().unwrap().to_string();
    let views = root.join("views");
    ok(&[
        "project", "--panorama", s(&ds.join("pair_0000/panorama.ctn")), "--out", s(&views), "--views", "4",
        "--width", "32", "--height", "32", "--start-yaw", &start_yaw,
    ]);

    let traj = ds.join("pair_0000/trajectory.json");
    let sample_args = |out: &Path| -> Vec<String> {
        [
            "sample", "--ckpt", s(&ckpt), "--trajectory", s(&traj), "--context-dir", s(&views), "--steps", "8",
            "--seed", "9", "--out", s(out),
        ]
        .iter()
        .map(|a| a.to_string())
        .collect()
    };
    let s1 = root.join("s1");
    let s2 = root.join("s2");
    ok(&sample_args(&s1).iter().map(String::as_str).collect::<Vec<_>>());
    ok(&sample_args(&s2).iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(fs::read(s1.join("video.ctn")).unwrap(), fs::read(s2.join("video.ctn")).unwrap());
    assert_eq!(tree(&s1.join("frames")).len(), 3);

    let reference = ds.join("pair_0000/video_with.ctn");
    let ev = root.join("eval");
    let line = ok(&[
        "eval", "--generated", s(&s1.join("frames")), "--reference", s(&reference), "--gen-traj", s(&traj),
        "--ref-traj", s(&traj), "--out", s(&ev),
    ]);
    assert!(line.starts_with("eval: psnr"), "{line}");
    let report = json(&ev.join("report.json"));
    assert!(report["psnr"].as_f64().unwrap().is_finite());
    let ssim = report["ssim"].as_f64().unwrap();
    assert!((-1.0..=1.0).contains(&ssim));
    assert!(report["pose"]["rot_err"].as_f64().unwrap().abs() < 1e-9);

    // Rerunning a snapshot reproduces the run byte for byte.
    let again = root.join("again");
    ok(&["rerun", "--config", s(&run.join("config.json")), "--out", s(&again)]);
    assert_eq!(tree(&run), tree(&again));
    let again = root.join("s3");
    ok(&["rerun", "--config", s(&s1.join("config.json")), "--out", s(&again)]);
    assert_eq!(tree(&s1), tree(&again));
}

#[test]
fn eval_on_self_is_infinite() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    small_dataset(&ds, "1", "0");
    let v = ds.join("pair_0000/video_with.ctn");
    let out = tmp.path().join("ev");
    let line = ok(&["eval", "--generated", s(&v), "--reference", s(&v), "--out", s(&out)]);
    assert!(line.contains("psnr inf dB"), "{line}");
    let report = json(&out.join("report.json"));
    assert_eq!(report["psnr"], Value::String("inf".into()));
    assert_eq!(report["ssim"].as_f64().unwrap(), 1.0);
}

#[test]
fn rerun_dataset_and_bad_snapshot() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    small_dataset(&a, "2", "5");
    let b = tmp.path().join("b");
    ok(&["rerun", "--config", s(&a.join("config.json")), "--out", s(&b)]);
    assert_eq!(tree(&a), tree(&b));

    let bad = tmp.path().join("bad.json");
    fs::write(&bad, r#"{"format_version": 99, "run": {"command": "gen-traj"}}"#).unwrap();
    assert_eq!(code(&["rerun", "--config", s(&bad), "--out", s(&tmp.path().join("c"))]), 1);
}

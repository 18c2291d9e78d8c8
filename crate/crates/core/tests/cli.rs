use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::json;
use tempfile::TempDir;

use surround_reid::ablate::{scenario, Study};
use surround_reid::io::{read_jsonl, DatasetRecord, ResultsRecord};
use surround_reid::mct::Decision;
use surround_reid::sct::TrackEvent;
use surround_reid::sim::{generate_world, NoiseConfig, OcclusionEpisode};
use surround_reid::types::{GlobalId, GtId};
use surround_reid::RunConfig;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_surround-reid")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stderr.is_empty(), "stderr on success: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    let out = run(args);
    assert!(!out.stderr.is_empty(), "failures explain themselves");
    out.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_config(dir: &TempDir, name: &str, cfg: &RunConfig) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, cfg.to_toml_string()).unwrap();
    path
}

fn write_lines(dir: &TempDir, name: &str, lines: &[serde_json::Value]) -> PathBuf {
    let path = dir.path().join(name);
    let text: String = lines.iter().map(|l| l.to_string() + "\n").collect();
    std::fs::write(&path, text).unwrap();
    path
}

fn noiseless(n: usize) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.sim.n_vehicles = n;
    cfg.sim.noise = NoiseConfig::noiseless();
    cfg.sim.embedding.identity_sigma = 0.0;
    cfg.sim.embedding.camera_view_sigma = 0.0;
    for cam in [&mut cfg.projection.rig.left, &mut cfg.projection.rig.front, &mut cfg.projection.rig.right] {
        cam.calib_noise_sigma = 0.0;
    }
    cfg
}

/// Simulates and tracks `cfg`, returning the dataset and results paths.
fn simulate_and_track(dir: &TempDir, cfg: &RunConfig) -> (PathBuf, PathBuf) {
    let config = write_config(dir, "run.toml", cfg);
    let data = dir.path().join("data.jsonl");
    let results = dir.path().join("results.jsonl");
    ok(&["simulate", "--config", s(&config), "--out", s(&data)]);
    ok(&["track", "--dataset", s(&data), "--config", s(&config), "--out", s(&results)]);
    (data, results)
}

fn box_json(cx: f64) -> serde_json::Value {
    json!([cx, 360.0, 80.0, 60.0])
}

/// One front-camera vehicle over `frames` frames.
fn single_vehicle_dataset(frames: u32) -> Vec<serde_json::Value> {
    (0..frames)
        .map(|f| {
            json!({
                "seq": "hand", "camera": "front", "frame": f,
                "detections": [{"bbox": box_json(400.0), "conf": 0.9, "keypoints": null, "embedding": null, "gt_id": 1}],
                "truth": [{"gt_id": 1, "bbox": box_json(400.0), "occluded": false}],
            })
        })
        .collect()
}

fn results_with_ids(ids: impl Iterator<Item = u64>) -> Vec<serde_json::Value> {
    ids.enumerate()
        .map(|(f, id)| {
            json!({
                "type": "frame", "seq": "hand", "camera": "front", "frame": f,
                "outputs": [{"id": id, "bbox": box_json(401.0), "c_r": 0.8}],
                "events": [],
            })
        })
        .collect()
}

#[test]
fn simulate_writes_one_record_per_visible_camera_frame() {
    let dir = TempDir::new().unwrap();
    let mut cfg = RunConfig::default();
    cfg.sim.n_vehicles = 4;
    cfg.sim.duration_frames = 300;
    let config = write_config(&dir, "sim.toml", &cfg);
    let data = dir.path().join("data.jsonl");
    let stdout = ok(&["simulate", "--config", s(&config), "--out", s(&data)]);
    let records: Vec<DatasetRecord> = read_jsonl(&data).unwrap();
    let world = generate_world(&cfg.sim, &cfg.rig()).unwrap();
    assert_eq!(records.len(), world.visibility_count());
    assert!(stdout.contains(&format!("{} records", records.len())), "{stdout}");
    assert!(records.iter().all(|r| r.seq == "sim-7"));
}

#[test]
fn seed_flag_overrides_the_config() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    ok(&["simulate", "--seed", "11", "--out", s(&a)]);
    ok(&["simulate", "--seed", "12", "--out", s(&b)]);
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let first: Vec<DatasetRecord> = read_jsonl(&a).unwrap();
    assert_eq!(first[0].seq, "sim-11");
}

#[test]
fn noiseless_pipeline_is_perfect() {
    let dir = TempDir::new().unwrap();
    let cfg = noiseless(6);
    let config = write_config(&dir, "run.toml", &cfg);
    let data = dir.path().join("data.jsonl");
    let results = dir.path().join("results.jsonl");
    ok(&["simulate", "--config", s(&config), "--out", s(&data)]);
    let stdout = ok(&["track", "--dataset", s(&data), "--config", s(&config), "--out", s(&results)]);
    assert!(stdout.contains(" 0 template updates, 0 deletions,"), "{stdout}");
    let report = dir.path().join("report.json");
    let stdout = ok(&["evaluate", "--results", s(&results), "--dataset", s(&data), "--out", s(&report)]);
    assert!(stdout.starts_with("IDSW 0\n"), "{stdout}");
    assert!(stdout.contains("IC 1.0000"), "{stdout}");
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(json["ic"], 1.0);
}

#[test]
fn evaluate_counts_a_single_switch() {
    let dir = TempDir::new().unwrap();
    let data = write_lines(&dir, "data.jsonl", &single_vehicle_dataset(100));
    let perfect = write_lines(&dir, "perfect.jsonl", &results_with_ids(std::iter::repeat_n(5, 100)));
    let stdout = ok(&["evaluate", "--results", s(&perfect), "--dataset", s(&data)]);
    assert!(stdout.contains("IC 1.0000"), "{stdout}");
    assert!(dir.path().join("perfect.jsonl.report.json").exists());

    let switched = write_lines(&dir, "switched.jsonl", &results_with_ids((0..100).map(|f| if f < 40 { 5 } else { 6 })));
    let stdout = ok(&["evaluate", "--results", s(&switched), "--dataset", s(&data)]);
    assert!(stdout.contains("IDSW 1\nID 100\nIC 0.9900"), "{stdout}");

    let csv = ok(&["evaluate", "--results", s(&switched), "--dataset", s(&data), "--format", "csv"]);
    assert_eq!(csv, "camera,idsw,id,ic\nfront,1,100,0.9900\ntotal,1,100,0.9900\n");
}

#[test]
fn evaluate_without_ground_truth_reports_undefined() {
    let dir = TempDir::new().unwrap();
    let lines: Vec<_> = (0..3)
        .map(|f| {
            json!({"seq": "hand", "camera": "left", "frame": f,
                "detections": [{"bbox": box_json(300.0), "conf": 0.5, "keypoints": null, "embedding": null, "gt_id": null}]})
        })
        .collect();
    let data = write_lines(&dir, "data.jsonl", &lines);
    let results = write_lines(&dir, "results.jsonl", &results_with_ids(std::iter::repeat_n(1, 3)).into_iter().map(|mut r| {
        r["camera"] = json!("left");
        r
    }).collect::<Vec<_>>());
    let stdout = ok(&["evaluate", "--results", s(&results), "--dataset", s(&data)]);
    assert!(stdout.contains("IC undefined (no ground truth)"), "{stdout}");
}

#[test]
fn scripted_occlusion_deletes_once_at_the_nth_frame() {
    let dir = TempDir::new().unwrap();
    let mut cfg = noiseless(4);
    cfg.quality.n_occl = 4;
    cfg.sim.noise.occlusion_ramp = 1;
    cfg.sim.noise.occlusions = vec![OcclusionEpisode { vehicle: 1, occluder: 0, start: 100, length: 6 }];
    let (_, results) = simulate_and_track(&dir, &cfg);
    let records: Vec<ResultsRecord> = read_jsonl(&results).unwrap();

    let mut gt_of: BTreeMap<GlobalId, GtId> = BTreeMap::new();
    for r in &records {
        if let ResultsRecord::Association { assigned, gt_id: Some(g), .. } = r {
            gt_of.insert(*assigned, *g);
        }
    }
    // Deletions while the target is still reported by the tracker, i.e. not exits.
    let mut occlusion_deletes = Vec::new();
    for r in &records {
        if let ResultsRecord::Frame { frame, events, .. } = r {
            for e in events {
                if let TrackEvent::TrackDeleted(id) = e {
                    if !events.contains(&TrackEvent::TrackLost(*id)) {
                        occlusion_deletes.push((*frame, gt_of[id]));
                    }
                }
            }
        }
    }
    // Vehicle index 1 carries ground-truth id 2.
    assert_eq!(occlusion_deletes, vec![(103, GtId(2))]);
}

#[test]
fn handoff_inherits_across_cameras_with_logged_scores() {
    let dir = TempDir::new().unwrap();
    let cfg = RunConfig { sim: scenario(Study::Table3, 1000), ..RunConfig::default() };
    let (_, results) = simulate_and_track(&dir, &cfg);
    let records: Vec<ResultsRecord> = read_jsonl(&results).unwrap();
    let handoffs: Vec<_> = records
        .iter()
        .filter_map(|r| match r {
            ResultsRecord::Association { camera, decision: Decision::Inherit { id, s }, candidates, .. } => candidates
                .iter()
                .find(|c| c.id == *id && c.camera != *camera && c.s == Some(*s))
                .cloned(),
            _ => None,
        })
        .collect();
    assert!(!handoffs.is_empty(), "no cross-camera inheritance");
    for c in &handoffs {
        let s1 = c.s1.expect("s1 logged");
        // Without both wheel categories the spatial score drops out of the fusion.
        let want = c.s2.map_or(s1, |s2| (s1 + s2) / 2.0);
        assert!((c.s.unwrap() - want).abs() < 1e-12, "{c:?}");
    }
    assert!(handoffs.iter().any(|c| c.s2.is_some()), "no handoff scored with keypoints");
}

#[test]
fn configuration_errors_exit_with_2() {
    let dir = TempDir::new().unwrap();
    let broken = dir.path().join("broken.toml");
    std::fs::write(&broken, "[quality\nr_side = 32").unwrap();
    assert_eq!(code(&["simulate", "--config", s(&broken), "--out", s(&dir.path().join("x"))]), 2);

    let invalid = dir.path().join("invalid.toml");
    std::fs::write(&invalid, "[quality]\nt1 = 2.0\n").unwrap();
    assert_eq!(code(&["simulate", "--config", s(&invalid), "--out", s(&dir.path().join("x"))]), 2);

    let unknown = dir.path().join("unknown.toml");
    std::fs::write(&unknown, "[quality]\nwindow = 3\n").unwrap();
    assert_eq!(code(&["simulate", "--config", s(&unknown), "--out", s(&dir.path().join("x"))]), 2);

    assert_eq!(code(&["ablate", "table9"]), 2);
}

#[test]
fn mixed_embedding_dimensions_exit_with_3() {
    let dir = TempDir::new().unwrap();
    let det = |dim: usize| {
        json!({"bbox": box_json(400.0), "conf": 0.9, "keypoints": null, "embedding": vec![0.5; dim], "gt_id": null})
    };
    let lines = vec![
        json!({"seq": "m", "camera": "front", "frame": 0, "detections": [det(4)]}),
        json!({"seq": "m", "camera": "front", "frame": 1, "detections": [det(3)]}),
    ];
    let data = write_lines(&dir, "data.jsonl", &lines);
    assert_eq!(code(&["track", "--dataset", s(&data), "--out", s(&dir.path().join("r"))]), 3);
}

#[test]
fn sequence_mismatches_exit_with_4() {
    let dir = TempDir::new().unwrap();
    let data = write_lines(&dir, "data.jsonl", &single_vehicle_dataset(5));
    let mut other = results_with_ids(std::iter::repeat_n(1, 5));
    for r in &mut other {
        r["seq"] = json!("elsewhere");
    }
    let results = write_lines(&dir, "results.jsonl", &other);
    assert_eq!(code(&["evaluate", "--results", s(&results), "--dataset", s(&data)]), 4);

    let mut shuffled = single_vehicle_dataset(3);
    shuffled.swap(0, 2);
    let data = write_lines(&dir, "shuffled.jsonl", &shuffled);
    assert_eq!(code(&["track", "--dataset", s(&data), "--out", s(&dir.path().join("r"))]), 4);
}

#[test]
fn malformed_records_name_the_line() {
    let dir = TempDir::new().unwrap();
    let mut lines = single_vehicle_dataset(2);
    lines.push(json!({"seq": "hand"}));
    let data = write_lines(&dir, "data.jsonl", &lines);
    let out = run(&["track", "--dataset", s(&data), "--out", s(&dir.path().join("r"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("data.jsonl:3:"));
}

#[test]
fn ablate_writes_a_machine_readable_table() {
    let dir = TempDir::new().unwrap();
    let mut cfg = RunConfig::default();
    cfg.ablate.seeds = 2;
    cfg.ablate.bootstrap_resamples = 50;
    let config = write_config(&dir, "ablate.toml", &cfg);
    let table = dir.path().join("table.json");
    let csv = ok(&["ablate", "table3", "--config", s(&config), "--format", "csv", "--out", s(&table)]);
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("variant,ic,"));
    assert_eq!(lines.count(), 3);
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&table).unwrap()).unwrap();
    assert_eq!(json["study"], "table3");
    assert_eq!(json["rows"].as_array().unwrap().len(), 3);
}

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use skinkit::snr::CaptureTrace;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn skinkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skinkit")).args(args).output().expect("spawn skinkit")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Golden config with `edit` applied, written next to a copy of the mesh.
fn config_in(dir: &Path, edit: impl Fn(String) -> String) -> PathBuf {
    std::fs::copy(fixtures().join("plate.obj"), dir.join("plate.obj")).unwrap();
    let path = dir.join("config.toml");
    std::fs::write(&path, edit(std::fs::read_to_string(fixtures().join("golden.toml")).unwrap())).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn generate_writes_artifacts_and_json_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = skinkit(&["generate", "-c", s(&fixtures().join("golden.toml")), "-o", s(&out), "--json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["units"][0]["name"], "plate");
    for name in ["plate_body.stl", "plate_conductive.stl", "plate_manifest.json", "plate_splines.json", "report.json"] {
        assert!(out.join(name).is_file(), "{name}");
    }
    let o = skinkit(&["characterize", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = String::from_utf8(o.stdout).unwrap();
    let nodules = report["units"][0]["nodules"].as_u64().unwrap();
    assert!(table.lines().nth(1).unwrap().split_whitespace().nth(1) == Some(&nodules.to_string()), "{table}");
}

#[test]
fn overrides_change_the_layout() {
    let tmp = tempfile::tempdir().unwrap();
    let config = fixtures().join("golden.toml");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(skinkit(&["generate", "-c", s(&config), "-o", s(&a)]).status.success());
    let o = skinkit(&["generate", "-c", s(&config), "-o", s(&b), "--seed", "8", "--minimum-distribution-distance", "0.07"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let read = |d: &Path| skinkit::SensorManifest::from_json(&std::fs::read_to_string(d.join("plate_manifest.json")).unwrap()).unwrap();
    let (ma, mb) = (read(&a), read(&b));
    assert_eq!(mb.parameters.sampling.seed, 8);
    assert_eq!(mb.parameters.sampling.d_min, 0.07);
    assert_ne!(ma.layout_sha256, mb.layout_sha256);
    assert_eq!(ma.mesh_sha256, mb.mesh_sha256);
}

#[test]
fn exit_codes_follow_the_failing_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = skinkit(&["generate", "-c", s(&tmp.path().join("none.toml"))]);
    assert_eq!(missing.status.code(), Some(2), "{}", stderr(&missing));

    let bad_key = config_in(tmp.path(), |t| t + "\nunknown_key = 1\n");
    assert_eq!(skinkit(&["generate", "-c", s(&bad_key)]).status.code(), Some(2));

    let empty = config_in(tmp.path(), |t| t.replace("strength = 1.0", "strength = 0.0"));
    let o = skinkit(&["generate", "-c", s(&empty)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("skin-cutout stage failed: cutout empty"), "{}", stderr(&o));

    let greedy = config_in(tmp.path(), |t| t + "\n[filament]\nmargin = 5000.0\n");
    let o = skinkit(&["generate", "-c", s(&greedy)]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(stderr(&o).contains("rc-chain-designer stage failed"), "{}", stderr(&o));

    let below_floor = config_in(tmp.path(), |t| t + "\n[filament]\nmin_nodule_spacing = 0.008\n");
    assert_eq!(skinkit(&["generate", "-c", s(&below_floor)]).status.code(), Some(2));

    let broken = config_in(tmp.path(), |t| t);
    std::fs::write(tmp.path().join("plate.obj"), "v 0 0 0\nf 1 2 3\n").unwrap();
    assert_eq!(skinkit(&["generate", "-c", s(&broken)]).status.code(), Some(3));
}

#[test]
fn optimize_needs_contacts_and_writes_the_new_map() {
    let tmp = tempfile::tempdir().unwrap();
    let plain = config_in(tmp.path(), |t| t);
    let o = skinkit(&["optimize", "-c", s(&plain)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("contact source"), "{}", stderr(&o));

    let swept = config_in(tmp.path(), |t| {
        t + "\n[contacts.sweep]\ncollider = 0.04\nwaypoints = [[0.12, 0.12, 0.004], [0.18, 0.18, 0.004]]\nstep = 0.002\n"
    });
    let out = tmp.path().join("opt");
    let o = skinkit(&["optimize", "-c", s(&swept), "-o", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("optimized:"));
    assert!(out.join("density_optimized.hmap").is_file());
    let m = skinkit::SensorManifest::from_json(&std::fs::read_to_string(out.join("plate_manifest.json")).unwrap()).unwrap();
    assert!(m.parameters.optimization.is_some());
}

fn write_trial(dir: &Path, offsets: &[f64]) {
    std::fs::create_dir_all(dir).unwrap();
    for (id, off) in offsets.iter().enumerate() {
        let samples = (0..900)
            .map(|i| {
                let t = i as f64 * 0.01;
                let noise = if i % 2 == 0 { 1.0 } else { -1.0 };
                (t, 100.0 + noise + if (3.0..6.0).contains(&t) { *off } else { 0.0 })
            })
            .collect();
        let trace = CaptureTrace { nodule_id: id, samples };
        std::fs::write(dir.join(format!("n{id}.txt")), trace.to_text(100.0)).unwrap();
    }
}

#[test]
fn snr_over_trial_directories() {
    let tmp = tempfile::tempdir().unwrap();
    let (t1, t2) = (tmp.path().join("t1"), tmp.path().join("t2"));
    write_trial(&t1, &[20.0, 40.0]);
    write_trial(&t2, &[30.0, 40.0]);
    let o = skinkit(&["snr", s(&t1), s(&t2), "--unit", "link", "--json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let minima: Vec<f64> = v["trials"].as_array().unwrap().iter().map(|r| r["min_snr"].as_f64().unwrap()).collect();
    assert!(minima[0] < minima[1], "{minima:?}");
    assert_eq!(v["summary"]["unit"], "link");

    let short = tmp.path().join("short");
    std::fs::create_dir_all(&short).unwrap();
    std::fs::write(short.join("n0.txt"), "# nodule:0 rate_hz:100\n0 1\n0.01 2\n").unwrap();
    assert_eq!(skinkit(&["snr", s(&short)]).status.code(), Some(2));
}

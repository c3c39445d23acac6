use std::fs;
use std::process::Command;

fn dronebid() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dronebid"))
}

#[test]
fn dry_run_prints_the_default_matrix() {
    let out = dronebid().arg("--dry-run").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("18 cells x 20 seeds = 360 runs"), "{text}");
}

#[test]
fn flags_override_the_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("exp.toml");
    fs::write(&cfg, "[sweep]\nseeds = 7\ntau_minutes = [15, 20]\n").unwrap();
    let out = dronebid()
        .args(["--dry-run", "--config"])
        .arg(&cfg)
        .args(["--tau-minutes", "30", "--winner-rule", "random"])
        .output()
        .unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("1 cells x 7 seeds = 7 runs"), "{text}");
    assert!(text.contains("winner_rule=random tau_minutes=30"), "{text}");
}

#[test]
fn bad_config_exits_with_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "[run]\nwekes = 2\n").unwrap();
    let out = dronebid().arg("--config").arg(&cfg).arg("--dry-run").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("run.wekes"));
}

#[test]
fn small_sweep_then_reaggregate() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let status = dronebid()
        .args(["--weeks", "0.25", "--fleet-size", "3", "--seeds", "2", "--tau-minutes", "30"])
        .args(["--strategy", "threshold", "--threshold-level", "70,90", "--out"])
        .arg(&out_dir)
        .status()
        .unwrap();
    assert!(status.success());
    let fig5 = fs::read(out_dir.join("fig5.csv")).unwrap();
    assert_eq!(fs::read_to_string(out_dir.join("runs.csv")).unwrap().lines().count(), 1 + 4);

    let status = dronebid().arg("--aggregate-only").arg("--out").arg(&out_dir).status().unwrap();
    assert!(status.success());
    assert_eq!(fs::read(out_dir.join("fig5.csv")).unwrap(), fig5);
}

#[test]
fn shipped_configs_parse() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let out = dronebid().arg("--dry-run").arg("--config").arg(&path).output().unwrap();
            assert!(out.status.success(), "{}: {}", path.display(), String::from_utf8_lossy(&out.stderr));
            seen += 1;
        }
    }
    assert!(seen >= 4);
}

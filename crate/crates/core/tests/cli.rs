use std::path::Path;
use std::process::{Command, Output};

fn phasebal(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phasebal")).args(args).current_dir(dir).output().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn optimize_writes_a_versioned_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = phasebal(
        &["optimize", "--fixture", "b", "--method", "oracle", "--objective", "P_U", "--out", "run"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(&dir.path().join("run/report.json"));
    assert_eq!(r["schema_version"], 1);
    assert_eq!(r["method"], "oracle");
    assert_eq!(r["assignment"].as_array().unwrap().len(), 3);
    let csv = std::fs::read_to_string(dir.path().join("run/oracle_ranking.csv")).unwrap();
    assert!(csv.starts_with("rank,index,assignment,objective,feasible,violation"));
    assert_eq!(csv.lines().count(), 28);
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), "fixture = \"b\"\nmethod = \"ga\"\nobjective = \"PVUR\"\nseed = 5\n")
        .unwrap();
    let out = phasebal(&["--config", "run.toml", "--method", "miqp", "--objective", "P_U*", "optimize"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["method"], "miqp");
    assert_eq!(r["objective_metric"], "P_U*");
}

#[test]
fn validation_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = phasebal(&["optimize", "--fixture", "nope"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    let out = phasebal(&["validate", "--fixture", "b", "--assignment", "12"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(dir.path().join("bad.toml"), "colour = 3\n").unwrap();
    assert_eq!(phasebal(&["--config", "bad.toml", "optimize"], dir.path()).status.code(), Some(2));
}

#[test]
fn non_convergence_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    assert!(phasebal(&["fixtures", "--dir", "fx"], dir.path()).status.success());
    let csv = std::fs::read_to_string(dir.path().join("fx/fixture_b_profiles.csv")).unwrap();
    let mut lines = csv.lines();
    let mut heavy = vec![lines.next().unwrap().to_string()];
    for line in lines {
        let cells: Vec<String> = line
            .split(',')
            .enumerate()
            .map(|(i, c)| if i == 0 { c.to_string() } else { format!("{}", c.parse::<f64>().unwrap() * 1e4) })
            .collect();
        heavy.push(cells.join(","));
    }
    std::fs::write(dir.path().join("heavy.csv"), heavy.join("\n") + "\n").unwrap();
    let out = phasebal(&["pf", "--feeder", "fx/fixture_b.json", "--profiles", "heavy.csv"], dir.path());
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn fixture_files_round_trip_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    assert!(phasebal(&["fixtures", "--dir", "fx"], dir.path()).status.success());
    let a = phasebal(&["pf", "--fixture", "b", "--t", "2"], dir.path());
    let b = phasebal(
        &["pf", "--feeder", "fx/fixture_b.json", "--profiles", "fx/fixture_b_profiles.csv", "--t", "2"],
        dir.path(),
    );
    assert!(a.status.success() && b.status.success());
    let (va, vb): (serde_json::Value, serde_json::Value) =
        (serde_json::from_slice(&a.stdout).unwrap(), serde_json::from_slice(&b.stdout).unwrap());
    assert_eq!(va["converged"], true);
    assert_eq!(va["buses"], vb["buses"]);
}

#[test]
fn sweep_export_validate_and_scale() {
    let dir = tempfile::tempdir().unwrap();
    let out = phasebal(
        &["sweep", "--fixture", "b", "--method", "miqp", "--objective", "P_U*", "--grid", "0,1,3", "--out", "s"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s = json(&dir.path().join("s/sweep.json"));
    assert_eq!(s["points"].as_array().unwrap().len(), 3);
    assert_eq!(s["monotone"], true);
    assert!(dir.path().join("s/sweep.csv").exists());

    let out = phasebal(&["export-lp", "--fixture", "b", "--objective", "PVUR*", "--lp", "m.lp"], dir.path());
    assert!(out.status.success());
    let lp = std::fs::read_to_string(dir.path().join("m.lp")).unwrap();
    assert!(lp.contains("\nMinimize\n") && lp.contains("\nBinaries\n") && lp.trim_end().ends_with("End"));

    let out = phasebal(&["validate", "--fixture", "b", "--assignment", "312", "--synthetic-days", "2"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["horizon"], 48);

    let out = phasebal(
        &[
            "scale",
            "--fixtures",
            "a,b",
            "--horizons",
            "1,4",
            "--methods",
            "ga,miqp",
            "--repeats",
            "1",
            "--objective",
            "P_U*",
            "--space",
            "ld3f",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["rows"].as_array().unwrap().len(), 8);
}

use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use phasebal_ffi::*;

fn fixture(name: &str, metric: PbMetric, delta: i64) -> *mut PbProblem {
    let name = CString::new(name).unwrap();
    let mut p = ptr::null_mut();
    let s = unsafe { pb_problem_from_fixture(name.as_ptr(), metric, delta, &mut p) };
    assert_eq!(s, PbStatus::Ok);
    assert!(!p.is_null());
    p
}

fn last_error() -> String {
    let p = pb_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string()
}

#[test]
fn oracle_round_trip_on_fixture_b() {
    let p = fixture("b", PbMetric::PU, -1);
    let mut n = 0usize;
    assert_eq!(unsafe { pb_problem_num_users(p, &mut n) }, PbStatus::Ok);
    assert_eq!(n, 3);

    let mut orig = [0u8; 3];
    assert_eq!(unsafe { pb_problem_original(p, orig.as_mut_ptr(), 3) }, PbStatus::Ok);
    let mut best = [0u8; 3];
    let mut obj = f64::NAN;
    assert_eq!(unsafe { pb_optimize(p, PbMethod::Oracle, 0, best.as_mut_ptr(), 3, &mut obj) }, PbStatus::Ok);

    let (mut eo, mut eb) = (0.0, 0.0);
    let mut feasible = false;
    unsafe {
        assert_eq!(pb_evaluate(p, orig.as_ptr(), 3, PbSpace::ExactPf, &mut eo, ptr::null_mut()), PbStatus::Ok);
        assert_eq!(pb_evaluate(p, best.as_ptr(), 3, PbSpace::ExactPf, &mut eb, &mut feasible), PbStatus::Ok);
    }
    assert!(feasible);
    assert_eq!(eb, obj);
    assert!(eb <= eo);
    unsafe { pb_problem_free(p) };
}

#[test]
fn json_report_parses() {
    let p = fixture("b", PbMetric::PUStar, 1);
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { pb_optimize_json(p, PbMethod::Miqp, 0, &mut s) }, PbStatus::Ok);
    let text = unsafe { CStr::from_ptr(s) }.to_str().unwrap().to_string();
    unsafe {
        pb_string_free(s);
        pb_problem_free(p);
    }
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["method"], "miqp");
    assert!(v["switches"].as_u64().unwrap() <= 1);
}

#[test]
fn config_handle_honours_toml() {
    let toml = CString::new("fixture = \"a\"\nobjective = \"PVUR\"\ndelta_max = 0\n").unwrap();
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { pb_problem_from_config(toml.as_ptr(), &mut p) }, PbStatus::Ok);
    let (mut orig, mut best) = ([0u8; 3], [0u8; 3]);
    unsafe {
        pb_problem_original(p, orig.as_mut_ptr(), 3);
        assert_eq!(pb_optimize(p, PbMethod::Ga, 4, best.as_mut_ptr(), 3, ptr::null_mut()), PbStatus::Ok);
        pb_problem_free(p);
    }
    assert_eq!(orig, best);
}

#[test]
fn errors_are_reported() {
    let bad = CString::new("z").unwrap();
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { pb_problem_from_fixture(bad.as_ptr(), PbMetric::PU, -1, &mut p) }, PbStatus::Validation);
    assert!(p.is_null());
    assert!(last_error().contains('z'));

    assert_eq!(unsafe { pb_problem_from_fixture(ptr::null(), PbMetric::PU, -1, &mut p) }, PbStatus::NullPointer);
    let toml = CString::new("colour = 3").unwrap();
    assert_eq!(unsafe { pb_problem_from_config(toml.as_ptr(), &mut p) }, PbStatus::Parse);

    let p = fixture("b", PbMetric::PU, -1);
    let mut small = [0u8; 2];
    unsafe {
        assert_eq!(pb_problem_original(p, small.as_mut_ptr(), 2), PbStatus::BufferTooSmall);
        assert_eq!(
            pb_evaluate(p, small.as_ptr(), 2, PbSpace::Ld3f, ptr::null_mut(), ptr::null_mut()),
            PbStatus::InvalidArgument
        );
        let four = [1u8, 2, 4];
        assert_eq!(
            pb_evaluate(p, four.as_ptr(), 3, PbSpace::Ld3f, ptr::null_mut(), ptr::null_mut()),
            PbStatus::Validation
        );
        let mut n = 0;
        assert_eq!(pb_problem_num_users(ptr::null(), &mut n), PbStatus::NullPointer);
        pb_problem_free(p);
        pb_problem_free(ptr::null_mut());
        pb_string_free(ptr::null_mut());
    }
    let v = unsafe { CStr::from_ptr(pb_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

fn header_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include")
}

#[test]
fn header_declares_the_api() {
    let h = std::fs::read_to_string(header_dir().join("phasebal.h")).unwrap();
    for f in [
        "pb_problem_from_fixture",
        "pb_problem_from_files",
        "pb_problem_from_config",
        "pb_problem_free",
        "pb_evaluate",
        "pb_optimize",
        "pb_optimize_json",
        "pb_string_free",
        "pb_last_error_message",
    ] {
        assert!(h.contains(&format!("{f}(")), "{f} missing from header");
    }
    assert!(h.contains("typedef struct PbProblem PbProblem;"));
}

// Compiles and runs a C program against the static library when a C compiler is present.
#[test]
fn c_program_links_and_runs() {
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(|d| d.parent()).unwrap();
    let lib = profile_dir.join("libphasebal_ffi.a");
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler; skipping");
        return;
    };
    if !lib.exists() {
        eprintln!("{} not built; skipping", lib.display());
        return;
    }
    let out = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("phasebal_smoke");
    let src = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/c/smoke.c");
    let status = Command::new(&cc)
        .arg(&src)
        .arg("-I")
        .arg(header_dir())
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
    let run = Command::new(&out).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let stdout = String::from_utf8(run.stdout).unwrap();
    assert!(stdout.starts_with("3 "), "{stdout}");
}

fn which_cc() -> Result<String, ()> {
    for cc in ["cc", "gcc", "clang"] {
        if Command::new(cc).arg("--version").output().is_ok_and(|o| o.status.success()) {
            return Ok(cc.to_string());
        }
    }
    Err(())
}

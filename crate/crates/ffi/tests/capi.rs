use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use tangled_currents_ffi::*;

const CONFIG: &str = r#"{"g": 1.0, "a": 0.0, "beta": 0.5, "vertices": 2, "edges": [[0, 1, 1.0]]}"#;

fn model() -> *mut TcModel {
    let json = CString::new(CONFIG).unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { tc_model_from_json(json.as_ptr(), &mut m) }, TcStatus::Ok);
    m
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(tc_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn model_round_trip_and_correlation() {
    let m = model();
    let mut n = 0usize;
    assert_eq!(unsafe { tc_model_vertex_count(m, &mut n) }, TcStatus::Ok);
    assert_eq!(n, 2);
    let a = [1u32, 1];
    let (mut v, mut e) = (0.0, 0.0);
    assert_eq!(unsafe { tc_correlation(m, a.as_ptr(), 2, &mut v, &mut e) }, TcStatus::Ok);
    // two-vertex value pinned in the core tests
    assert!((v - 0.0576053).abs() < 1e-6, "{v}");
    assert!(e >= 0.0);
    unsafe { tc_model_free(m) };
}

#[test]
fn reports_carry_verdicts_and_json() {
    let m = model();
    let a = [1u32, 1];
    let mut r = ptr::null_mut();
    assert_eq!(unsafe { tc_verify_griffiths2(m, a.as_ptr(), a.as_ptr(), 2, &mut r) }, TcStatus::Ok);
    assert_eq!(unsafe { tc_report_verdict(r) }, TcVerdict::Pass);
    let json = unsafe { CStr::from_ptr(tc_report_json(r)) }.to_str().unwrap().to_string();
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["verdict"], "pass");
    unsafe { tc_report_free(r) };

    let zero = [0u32, 0];
    assert_eq!(
        unsafe { tc_verify_switching_exact(m, a.as_ptr(), zero.as_ptr(), 2, 8, 1e-10, &mut r) },
        TcStatus::Ok
    );
    let (mut lhs, mut rhs) = (0.0, 0.0);
    assert_eq!(unsafe { tc_report_values(r, &mut lhs, &mut rhs) }, TcStatus::Ok);
    assert!((lhs - 1.0).abs() < 1e-9 && rhs == 1.0);
    unsafe { tc_report_free(r) };
    unsafe { tc_model_free(m) };
}

#[test]
fn errors_map_to_codes() {
    let bad = CString::new(r#"{"g": 0, "a": 0, "beta": 0, "vertices": 1, "edges": []}"#).unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { tc_model_from_json(bad.as_ptr(), &mut m) }, TcStatus::Parameter);
    assert!(m.is_null());
    assert!(last_error().contains('g'), "{}", last_error());

    let junk = CString::new("{").unwrap();
    assert_eq!(unsafe { tc_model_from_json(junk.as_ptr(), &mut m) }, TcStatus::Config);
    assert_eq!(unsafe { tc_model_from_json(ptr::null(), &mut m) }, TcStatus::NullPointer);

    let m = model();
    let a = [1u32];
    let (mut v, mut e) = (0.0, 0.0);
    assert_eq!(unsafe { tc_correlation(m, a.as_ptr(), 1, &mut v, &mut e) }, TcStatus::Contract);
    assert_eq!(unsafe { tc_correlation(m, ptr::null(), 2, &mut v, &mut e) }, TcStatus::NullPointer);
    unsafe { tc_model_free(m) };

    let x = [0i64];
    assert_eq!(
        unsafe {
            tc_green_function(
                TcFamilyKind::NearestNeighbour,
                0.0,
                0.0,
                1,
                x.as_ptr(),
                x.as_ptr(),
                0,
                1e-3,
                &mut v,
                &mut e,
            )
        },
        TcStatus::Divergence
    );
    let mut out = 0.0;
    assert_eq!(unsafe { tc_single_site_moment(-1.0, 0.0, 2, 1e-10, &mut out) }, TcStatus::Parameter);
    assert_eq!(unsafe { tc_single_site_moment(1.0, 0.0, 0, 1e-10, &mut out) }, TcStatus::Ok);
    assert!((out - 1.0).abs() < 1e-12);
    assert_eq!(last_error(), "");
}

#[test]
fn green_function_on_a_small_torus() {
    let (x, y) = ([0i64, 0, 0], [1i64, 0, 0]);
    let (mut g0, mut g1, mut e) = (0.0, 0.0, 0.0);
    let nn = TcFamilyKind::NearestNeighbour;
    assert_eq!(
        unsafe { tc_green_function(nn, 0.0, 0.0, 3, x.as_ptr(), x.as_ptr(), 8, 1e-3, &mut g0, &mut e) },
        TcStatus::Ok
    );
    assert_eq!(
        unsafe { tc_green_function(nn, 0.0, 0.0, 3, x.as_ptr(), y.as_ptr(), 8, 1e-3, &mut g1, &mut e) },
        TcStatus::Ok
    );
    // (1 − D̂) G = δ − 1/L^d on the torus, evaluated at the origin
    assert!((g0 - g1 - (1.0 - 1.0 / 512.0)).abs() < 1e-12, "{g0} {g1}");
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(tc_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn c_program_links_against_the_header() {
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(|p| p.parent()).unwrap().to_path_buf();
    let profile = if profile_dir.ends_with("release") { "release" } else { "test" };
    let built = Command::new(env!("CARGO"))
        .args(["build", "-p", "tangled-currents-ffi", "--lib", "--profile", profile, "--target-dir"])
        .arg(profile_dir.parent().unwrap())
        .status()
        .unwrap();
    assert!(built.success());
    let lib = profile_dir.join("libtangled_currents_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let out = std::env::temp_dir().join(format!("tc_smoke_{}", std::process::id()));
    let status = Command::new("cc")
        .arg(root.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(root.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&out)
        .status()
        .expect("C compiler available");
    assert!(status.success());
    let run = Command::new(&out).output().unwrap();
    let _ = std::fs::remove_file(&out);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let text = String::from_utf8(run.stdout).unwrap();
    let mut lines = text.lines();
    let corr: f64 = lines.next().unwrap().strip_prefix("correlation ").unwrap().parse().unwrap();
    assert!((corr - 0.0576053).abs() < 1e-6);
    assert_eq!(lines.next(), Some("griffiths2 0"));
    assert_eq!(lines.next(), Some("json 1"));
    let bad = lines.next().unwrap();
    assert!(bad.starts_with("bad 4 parameter error: g"), "{bad}");
}

use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use mpglab::scenario::CASE_STUDY_DOCUMENT;
use mpglab_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(mpg_last_error()) }.to_str().unwrap().to_string()
}

#[test]
fn catalog_round_trip() {
    unsafe {
        let mut cat = ptr::null_mut();
        assert_eq!(mpg_catalog_builtin(&mut cat), MpgStatus::Ok);
        assert!(mpg_catalog_len(cat) >= 100);
        let (mut v, mut unit, mut verdict) = (0.0, ptr::null_mut(), MpgRangeVerdict::InRange);
        let st = mpg_catalog_evaluate(
            cat,
            c("pue").as_ptr(),
            c("E_total=0.997MWh; E_IT=1MWh").as_ptr(),
            &mut v,
            &mut unit,
            &mut verdict,
        );
        assert_eq!(st, MpgStatus::Ok);
        assert!((v - 0.997).abs() < 1e-12);
        assert_eq!(verdict, MpgRangeVerdict::SoftWarning);
        assert_eq!(CStr::from_ptr(unit).to_str().unwrap(), "1");
        mpg_string_free(unit);

        let st = mpg_catalog_evaluate(cat, c("pue").as_ptr(), c("E_total=1L;E_IT=1MWh").as_ptr(), &mut v, ptr::null_mut(), ptr::null_mut());
        assert_eq!(st, MpgStatus::Evaluation);
        let st = mpg_catalog_evaluate(cat, c("pue").as_ptr(), c("E_total").as_ptr(), &mut v, ptr::null_mut(), ptr::null_mut());
        assert_eq!(st, MpgStatus::Parse);
        assert!(last_error().contains("E_total"));
        mpg_catalog_free(cat);
    }
}

#[test]
fn custom_catalog_errors() {
    unsafe {
        let mut cat = ptr::null_mut();
        assert_eq!(mpg_catalog_from_json(c("{").as_ptr(), &mut cat), MpgStatus::Parse);
        assert!(cat.is_null());
        let bad = r#"{"schema":"catalog-v1","metrics":[{"id":"pue","name":"PUE","layer":2,"domain":1,"unit":"L",
            "inputs":{"a":"kWh","b":"kWh"},"formula":"a / b","direction":"lower-better"}]}"#;
        assert_eq!(mpg_catalog_from_json(c(bad).as_ptr(), &mut cat), MpgStatus::Validation);
    }
}

#[test]
fn graph_analyses() {
    unsafe {
        let mut g = ptr::null_mut();
        assert_eq!(mpg_graph_from_json(c(CASE_STUDY_DOCUMENT).as_ptr(), &mut g), MpgStatus::Ok);
        assert_eq!(mpg_graph_node_count(g), 5);
        let mut rho = -1.0;
        assert_eq!(mpg_graph_spectral_radius(g, &mut rho), MpgStatus::Ok);
        assert_eq!(rho, 0.0);
        let (mut gamma, mut amp) = (0.0, true);
        let path = c("ci, pue, flops_per_watt, tokens_per_s, cost_per_1k_tokens");
        assert_eq!(mpg_graph_amplification(g, path.as_ptr(), &mut gamma, &mut amp), MpgStatus::Ok);
        assert!((gamma - 0.00756).abs() < 1e-12 && !amp);
        let (mut coef, mut paths) = (0.0, 0);
        assert_eq!(mpg_graph_composite(g, c("ci").as_ptr(), c("gpu").as_ptr(), &mut coef, &mut paths), MpgStatus::NotFound);
        let mut buf = [0.0; 4];
        let mut dim = 0;
        assert_eq!(mpg_graph_linearize(g, buf.as_mut_ptr(), 4, &mut dim), MpgStatus::BufferTooSmall);
        assert_eq!(dim, 5);
        mpg_graph_free(g);

        let cyclic = CASE_STUDY_DOCUMENT.replace(r#""src": "tokens_per_s", "dst": "cost_per_1k_tokens""#, r#""src": "tokens_per_s", "dst": "ci""#);
        let mut g = ptr::null_mut();
        assert_eq!(mpg_graph_from_json(c(&cyclic).as_ptr(), &mut g), MpgStatus::Validation);
        assert!(last_error().contains("cycle"));
    }
}

#[test]
fn null_arguments_are_reported() {
    unsafe {
        assert_eq!(mpg_graph_case_study(ptr::null_mut()), MpgStatus::NullArgument);
        let mut rho = 0.0;
        assert_eq!(mpg_graph_spectral_radius(ptr::null(), &mut rho), MpgStatus::NullArgument);
        assert_eq!(mpg_graph_node_count(ptr::null()), 0);
        mpg_graph_free(ptr::null_mut());
        mpg_string_free(ptr::null_mut());
        assert_eq!(CStr::from_ptr(mpg_version()).to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }
}

#[test]
fn scenario_csv_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("g.json"), CASE_STUDY_DOCUMENT).unwrap();
    let scn = c(r#"{"schema":"scn-v1","graph":"g.json","horizon":10,"shocks":[{"t":0,"node":"ci","delta":0.2}]}"#);
    let base = c(dir.path().to_str().unwrap());
    unsafe {
        let mut csv = ptr::null_mut();
        assert_eq!(mpg_scenario_run_csv(scn.as_ptr(), base.as_ptr(), true, 5, &mut csv), MpgStatus::Ok);
        let text = CStr::from_ptr(csv).to_str().unwrap().to_string();
        mpg_string_free(csv);
        assert_eq!(text.lines().count(), 12);
        assert!(text.ends_with(",0.001512\n"));
        assert_eq!(mpg_scenario_run_csv(scn.as_ptr(), ptr::null(), false, 0, &mut csv), MpgStatus::Io);
    }
}

/// Compiles the C smoke program against the generated header and the
/// static library. Skipped when no C compiler is on PATH.
#[test]
fn c_program_links_against_header() {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if Command::new(&cc).arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler");
        return;
    }
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    // target/<profile>/deps/<test binary>
    let profile_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let lib = profile_dir.join("libmpglab_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());
    let exe = tempfile::tempdir().unwrap().keep().join("smoke");
    let status = Command::new(&cc)
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok "));
}

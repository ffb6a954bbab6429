use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use breath_har_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(bh_last_error()) }.to_string_lossy().into_owned()
}

fn synth(activity: i32, subject: u32, duration_s: f64, seed: u64) -> *mut BhSeries {
    let mut s = ptr::null_mut();
    let st = unsafe { bh_series_synthesize(activity, subject, duration_s, 1.0, seed, &mut s) };
    assert_eq!(st, BhStatus::Ok, "{}", last_error());
    s
}

fn cstr(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

#[test]
fn series_round_trip_through_csv() {
    let dir = tempfile::tempdir().unwrap();
    let s = synth(BH_SLEEPING, 2, 300.0, 11);
    let n = unsafe { bh_series_len(s) };
    assert_eq!(n, 300);

    let mut need = 0usize;
    assert_eq!(unsafe { bh_series_channel(s, BH_HUMIDITY, ptr::null_mut(), 0, &mut need) }, BhStatus::Ok);
    assert_eq!(need, n);
    let mut hum = vec![0.0; n];
    let mut w = 0;
    assert_eq!(unsafe { bh_series_channel(s, BH_HUMIDITY, hum.as_mut_ptr(), n, &mut w) }, BhStatus::Ok);

    let path = dir.path().join("s.csv");
    // write via the core crate, then read back through the ABI
    let inner = breath_har::synthgen::synthesize_with_truth(
        breath_har::domain::ActivityLabel::Sleeping,
        2,
        &breath_har::synthgen::SynthConfig { duration_s: 300.0, sampling_hz: 1.0, seed: 11, ..Default::default() },
    )
    .unwrap()
    .0;
    breath_har::telemetry::write_csv(&inner, &path).unwrap();

    let mut r = ptr::null_mut();
    assert_eq!(unsafe { bh_series_read_csv(cstr(&path).as_ptr(), &mut r) }, BhStatus::Ok, "{}", last_error());
    let mut back = vec![0.0; n];
    assert_eq!(unsafe { bh_series_channel(r, BH_HUMIDITY, back.as_mut_ptr(), n, &mut w) }, BhStatus::Ok);
    for (a, b) in hum.iter().zip(&back) {
        assert!(a.is_nan() && b.is_nan() || (a - b).abs() < 1e-9, "{a} vs {b}");
    }
    let mut code = -1;
    assert_eq!(unsafe { bh_series_activity(r, &mut code) }, BhStatus::Ok);
    assert_eq!(code, BH_SLEEPING);
    unsafe {
        bh_series_free(s);
        bh_series_free(r);
    }
}

#[test]
fn errors_map_to_status_codes() {
    let mut s = ptr::null_mut();
    let missing = CString::new("/nonexistent/x.csv").unwrap();
    assert_eq!(unsafe { bh_series_read_csv(missing.as_ptr(), &mut s) }, BhStatus::Io);
    assert!(!last_error().is_empty());
    assert_eq!(unsafe { bh_series_read_csv(ptr::null(), &mut s) }, BhStatus::NullPointer);
    assert_eq!(unsafe { bh_series_synthesize(9, 1, 60.0, 1.0, 1, &mut s) }, BhStatus::InvalidArgument);
    let mut x = 0.0;
    assert_eq!(unsafe { bh_min_max_scale(0.5, 1.0, 1.0, &mut x) }, BhStatus::InvalidArgument);
    assert_eq!(unsafe { bh_min_max_scale(1.5, 1.0, 2.0, &mut x) }, BhStatus::Ok);
    assert_eq!(x, 0.5);
    let (mut acc, mut f1) = (0.0, 0.0);
    assert_eq!(unsafe { bh_evaluate_confusion([1u64].as_ptr(), 0, &mut acc, &mut f1) }, BhStatus::InvalidArgument);
    unsafe {
        bh_series_free(ptr::null_mut());
        bh_model_free(ptr::null_mut());
    }
}

#[test]
fn confusion_metrics_match_hand_computation() {
    let counts: [u64; 4] = [8, 2, 1, 9];
    let (mut acc, mut f1) = (0.0, 0.0);
    assert_eq!(unsafe { bh_evaluate_confusion(counts.as_ptr(), 2, &mut acc, &mut f1) }, BhStatus::Ok);
    assert!((acc - 17.0 / 20.0).abs() < 1e-12);
    let f = |tp: f64, fp: f64, fn_: f64| 2.0 * tp / (2.0 * tp + fp + fn_);
    let expect = (f(8.0, 1.0, 2.0) + f(9.0, 2.0, 1.0)) / 2.0;
    assert!((f1 - expect).abs() < 1e-12, "{f1} vs {expect}");
}

#[test]
fn breath_count_of_clean_tone() {
    let fs = 2.0;
    let x: Vec<f64> = (0..1200).map(|i| (2.0 * std::f64::consts::PI * 0.25 * i as f64 / fs).sin()).collect();
    let mut n = 0;
    assert_eq!(unsafe { bh_count_breaths(x.as_ptr(), x.len(), fs, &mut n) }, BhStatus::Ok, "{}", last_error());
    assert!((148..=152).contains(&n), "{n}");
}

#[test]
fn train_save_load_predict() {
    let dir = tempfile::tempdir().unwrap();
    let series: Vec<*mut BhSeries> =
        [BH_RUNNING, BH_WALKING, BH_SITTING, BH_SLEEPING].iter().map(|&a| synth(a, 1, 600.0, 3)).collect();
    let consts: Vec<*const BhSeries> = series.iter().map(|&p| p as *const _).collect();
    let mut model = ptr::null_mut();
    let st = unsafe { bh_model_train(consts.as_ptr(), consts.len(), BH_MODEL_KNN, 42, &mut model) };
    assert_eq!(st, BhStatus::Ok, "{}", last_error());

    let path = dir.path().join("m.json");
    assert_eq!(unsafe { bh_model_save(model, cstr(&path).as_ptr()) }, BhStatus::Ok, "{}", last_error());
    let mut loaded = ptr::null_mut();
    assert_eq!(unsafe { bh_model_load(cstr(&path).as_ptr(), &mut loaded) }, BhStatus::Ok, "{}", last_error());

    let test = synth(BH_SITTING, 4, 600.0, 99);
    let mut n = 0;
    assert_eq!(unsafe { bh_model_predict_windows(loaded, test, ptr::null_mut(), 0, &mut n) }, BhStatus::Ok);
    assert!(n > 0);
    let mut labels = vec![-1; n];
    let st = unsafe { bh_model_predict_windows(loaded, test, labels.as_mut_ptr(), n, &mut n) };
    assert_eq!(st, BhStatus::Ok, "{}", last_error());
    assert!(labels.iter().all(|&l| (0..4).contains(&l)));
    let hits = labels.iter().filter(|&&l| l == BH_SITTING).count();
    assert!(hits * 2 > n, "{labels:?}");
    unsafe {
        for s in series {
            bh_series_free(s);
        }
        bh_series_free(test);
        bh_model_free(model);
        bh_model_free(loaded);
    }
}

#[test]
fn pipeline_rejects_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "no_such_key = 1\n").unwrap();
    let input = dir.path().join("in");
    std::fs::create_dir(&input).unwrap();
    let out = dir.path().join("out");
    let st = unsafe { bh_run_pipeline(cstr(&cfg).as_ptr(), cstr(&input).as_ptr(), cstr(&out).as_ptr()) };
    assert_eq!(st, BhStatus::InvalidConfig, "{}", last_error());
}

fn target_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn header_matches_exported_symbols() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/breath_har.h")).unwrap();
    let src = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("src/lib.rs")).unwrap();
    let exported: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exported.len() >= 15);
    for f in exported {
        assert!(header.contains(&format!("{f}(")), "{f} missing from header");
    }
    assert!(header.contains("typedef struct BhSeries BhSeries;"));
}

#[test]
fn c_program_links_against_static_library() {
    let lib = target_dir().join("libbreath_har_ffi.a");
    if Command::new("cc").arg("--version").output().is_err() || !lib.exists() {
        eprintln!("skipping: no C compiler or static library at {}", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let status = Command::new("cc")
        .arg(root.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(root.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok "));
}

use std::ffi::{CStr, CString};
use std::ptr;

use eegcog_ffi::*;

fn last_error() -> String {
    let p = eegcog_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned()
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(eegcog_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn rank_sum_exact_small_case() {
    let (x, y) = ([1.0, 2.0, 3.0], [10.0, 11.0, 12.0]);
    let mut out = EegcogTestResult {
        statistic: 0.0,
        p_value: 0.0,
        method: EegcogTestMethod::KruskalWallis,
    };
    let s = unsafe { eegcog_rank_sum(x.as_ptr(), 3, y.as_ptr(), 3, &mut out) };
    assert_eq!(s, EegcogStatus::Ok);
    assert_eq!(out.method, EegcogTestMethod::RankSumExact);
    assert!((out.p_value - 0.1).abs() < 1e-12);
}

#[test]
fn rank_sum_errors_set_message() {
    let x = [1.0];
    let mut out = EegcogTestResult {
        statistic: 0.0,
        p_value: 0.0,
        method: EegcogTestMethod::KruskalWallis,
    };
    let s = unsafe { eegcog_rank_sum(x.as_ptr(), 1, x.as_ptr(), 1, &mut out) };
    assert_eq!(s, EegcogStatus::Computation);
    assert!(last_error().contains("too few samples"));

    let s = unsafe { eegcog_rank_sum(ptr::null(), 3, x.as_ptr(), 1, &mut out) };
    assert_eq!(s, EegcogStatus::NullPointer);
    assert_eq!(last_error(), "x is null");
}

#[test]
fn kruskal_wallis_flat_groups() {
    let values = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0];
    let sizes = [3usize, 3, 3];
    let mut out = EegcogTestResult {
        statistic: 0.0,
        p_value: 0.0,
        method: EegcogTestMethod::RankSumExact,
    };
    let s = unsafe { eegcog_kruskal_wallis(values.as_ptr(), sizes.as_ptr(), 3, &mut out) };
    assert_eq!(s, EegcogStatus::Ok);
    assert_eq!(out.method, EegcogTestMethod::KruskalWallis);
    assert!((out.statistic - 7.2).abs() < 1e-12);
}

#[test]
fn welch_reports_needed_capacity() {
    let fs = 256.0;
    let x: Vec<f64> = (0..1280).map(|i| (2.0 * std::f64::consts::PI * 10.0 * i as f64 / fs).sin()).collect();
    let mut n = 0usize;
    let s = unsafe { eegcog_welch(x.as_ptr(), x.len(), fs, 256, 0.5, ptr::null_mut(), ptr::null_mut(), 0, &mut n) };
    assert_eq!(s, EegcogStatus::BufferTooSmall);
    assert_eq!(n, 129);

    let (mut f, mut p) = (vec![0.0; n], vec![0.0; n]);
    let s = unsafe { eegcog_welch(x.as_ptr(), x.len(), fs, 256, 0.5, f.as_mut_ptr(), p.as_mut_ptr(), n, &mut n) };
    assert_eq!(s, EegcogStatus::Ok);
    let peak = (0..n).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap();
    assert_eq!(f[peak], 10.0);
    let total: f64 = p.iter().sum::<f64>() * (f[1] - f[0]);
    assert!((total - 0.5).abs() < 0.025);
}

#[test]
fn svm_handle_lifecycle() {
    let x = [0.0, 0.0, 0.2, 0.1, 2.0, 2.0, 2.1, 1.9];
    let y = [-1.0, -1.0, 1.0, 1.0];
    let mut model: *mut EegcogSvm = ptr::null_mut();
    let s = unsafe { eegcog_svm_train(x.as_ptr(), 4, 2, y.as_ptr(), EegcogKernelKind::Linear as u32, 0.0, 0.0, 10.0, &mut model) };
    assert_eq!(s, EegcogStatus::Ok);
    assert!(!model.is_null());
    assert!(unsafe { eegcog_svm_n_support(model) } >= 2);

    let mut d = [0.0; 4];
    let s = unsafe { eegcog_svm_decision(model, x.as_ptr(), 4, 2, d.as_mut_ptr()) };
    assert_eq!(s, EegcogStatus::Ok);
    for (di, yi) in d.iter().zip(&y) {
        assert!(di * yi > 0.0);
    }
    let s = unsafe { eegcog_svm_decision(model, x.as_ptr(), 2, 4, d.as_mut_ptr()) };
    assert_eq!(s, EegcogStatus::Computation);
    unsafe { eegcog_svm_free(model) };
    unsafe { eegcog_svm_free(ptr::null_mut()) };
    assert_eq!(unsafe { eegcog_svm_n_support(ptr::null()) }, 0);
}

#[test]
fn svm_rejects_bad_kernel_and_single_class() {
    let x = [0.0, 1.0];
    let mut model: *mut EegcogSvm = ptr::null_mut();
    let s = unsafe { eegcog_svm_train(x.as_ptr(), 2, 1, [1.0, -1.0].as_ptr(), 9, 0.1, 0.0, 1.0, &mut model) };
    assert_eq!(s, EegcogStatus::InvalidArgument);
    assert!(model.is_null());
    let s = unsafe { eegcog_svm_train(x.as_ptr(), 2, 1, [1.0, 1.0].as_ptr(), 1, 0.1, 0.0, 1.0, &mut model) };
    assert_eq!(s, EegcogStatus::Computation);
    assert!(model.is_null());
}

#[test]
fn evaluate_rejects_bad_config() {
    let cfg = CString::new("[stats]\nalpha_band = \"high\"\n").unwrap();
    let mut json = ptr::null_mut();
    let s = unsafe { eegcog_evaluate_synthetic(cfg.as_ptr(), &mut json) };
    assert_eq!(s, EegcogStatus::Config);
    assert!(json.is_null());
}

#[test]
fn evaluate_small_synthetic_cohort() {
    let cfg = CString::new("pipeline = \"freq\"\ntasks = [\"MI\"]\npairs = [\"NC-DEM\"]\n[synth]\nn_per_class = 3\n").unwrap();
    let mut json = ptr::null_mut();
    let s = unsafe { eegcog_evaluate_synthetic(cfg.as_ptr(), &mut json) };
    assert_eq!(s, EegcogStatus::Ok, "{}", if s == EegcogStatus::Ok { String::new() } else { last_error() });
    let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_owned();
    unsafe { eegcog_string_free(json) };
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let reports = v["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 1);
    assert_eq!(reports[0]["folds"].as_array().unwrap().len(), 3);
}

#[test]
fn default_config_round_trips() {
    let p = eegcog_default_config();
    let text = unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned();
    unsafe { eegcog_string_free(p) };
    assert!(eegcog::config::RunConfig::from_toml(&text).is_ok());
}

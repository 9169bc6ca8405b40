use std::ffi::{CStr, CString};
use std::ptr;

use medbias_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(medbias_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn med_bias_and_bounds() {
    let mut v = f64::NAN;
    unsafe {
        assert_eq!(medbias_med_bias(0.5, 0.5, &mut v), MedbiasStatus::Ok);
        assert_eq!(v, 0.0);
        assert_eq!(medbias_med_bias(0.3, 0.4, &mut v), MedbiasStatus::Ok);
        assert!((v - 0.2).abs() < 1e-15);
        assert_eq!(medbias_convex_bound(5.0 / 16.0, 6.0 / 16.0, 5.0 / 16.0, &mut v), MedbiasStatus::Ok);
        assert!((v - 3.0 / 16.0).abs() < 1e-15);
        assert_eq!(medbias_z_exact(0.5, 0.5, &mut v), MedbiasStatus::Ok);
        assert_eq!(v, 0.0);
        assert_eq!(medbias_med_bias(1.5, 0.5, &mut v), MedbiasStatus::InvalidArgument);
    }
    assert!(last_error().contains("probability"), "{}", last_error());
}

#[test]
fn null_out_pointer_is_reported() {
    let status = unsafe { medbias_med_bias(0.5, 0.5, ptr::null_mut()) };
    assert_eq!(status, MedbiasStatus::NullPointer);
    assert_eq!(last_error(), "null pointer: out_value");
}

#[test]
fn mc_estimate() {
    let draws = [-1.0, 0.0, 1.0, 2.0];
    let mut e = MedbiasEstimate::default();
    unsafe {
        assert_eq!(medbias_mc_med_bias(draws.as_ptr(), draws.len(), 0.0, &mut e), MedbiasStatus::Ok);
        assert_eq!(medbias_mc_med_bias(ptr::null(), 0, 0.0, &mut e), MedbiasStatus::InvalidArgument);
    }
    assert_eq!(e, MedbiasEstimate { point: 0.0, std_err: 0.25, reps: 4, p_le: 0.5, p_ge: 0.75 });
}

#[test]
fn objective_handle_lifecycle() {
    let data = [3.0, -1.0, 7.0, 0.5, 2.0];
    let kind = CString::new(r#"{"kind":"abs_dev"}"#).unwrap();
    let mut h = ptr::null_mut();
    unsafe {
        assert_eq!(medbias_objective_new(kind.as_ptr(), data.as_ptr(), data.len(), &mut h), MedbiasStatus::Ok);
        assert!(!h.is_null());
        let mut v = 0.0;
        assert_eq!(medbias_objective_eval(h, 2.0, &mut v), MedbiasStatus::Ok);
        assert_eq!(v, 1.0 + 3.0 + 5.0 + 1.5 + 0.0);
        let (mut l, mut r) = (0.0, 0.0);
        assert_eq!(medbias_objective_subgradient(h, 2.0, &mut l, &mut r), MedbiasStatus::Ok);
        // Two points below, two above, one at θ: the subdifferential is [-1, 1].
        assert_eq!((l, r), (-1.0, 1.0));
        let mut theta = 0.0;
        assert_eq!(medbias_objective_minimize(h, -10.0, 10.0, &mut theta), MedbiasStatus::Ok);
        assert!((theta - 2.0).abs() < 1e-8);
        assert_eq!(medbias_objective_minimize(h, 5.0, 1.0, &mut theta), MedbiasStatus::InvalidArgument);
        medbias_objective_free(h);
        medbias_objective_free(ptr::null_mut());
    }
}

#[test]
fn objective_errors() {
    let data = [1.0, 2.0];
    let mut h = ptr::null_mut();
    let bad = CString::new(r#"{"kind":"lp","p":0.5}"#).unwrap();
    let unknown = CString::new(r#"{"kind":"nope"}"#).unwrap();
    let biweight = CString::new(r#"{"kind":"biweight","c":1.0}"#).unwrap();
    unsafe {
        assert_eq!(medbias_objective_new(bad.as_ptr(), data.as_ptr(), 2, &mut h), MedbiasStatus::InvalidArgument);
        assert!(h.is_null());
        assert_eq!(medbias_objective_new(unknown.as_ptr(), data.as_ptr(), 2, &mut h), MedbiasStatus::Config);
        assert_eq!(medbias_objective_new(ptr::null(), data.as_ptr(), 2, &mut h), MedbiasStatus::NullPointer);
        let pts = [-3.0, -3.0, 3.0, 3.0, 3.0];
        assert_eq!(medbias_objective_new(biweight.as_ptr(), pts.as_ptr(), 5, &mut h), MedbiasStatus::Ok);
        let mut theta = 0.0;
        // The bisection minimizer refuses kinds that are not convex by construction.
        assert_eq!(medbias_objective_minimize(h, -3.5, 3.5, &mut theta), MedbiasStatus::InvalidArgument);
        assert!(last_error().contains("not a convex objective"), "{}", last_error());
        medbias_objective_free(h);
        let mut v = 0.0;
        assert_eq!(medbias_objective_eval(ptr::null(), 0.0, &mut v), MedbiasStatus::NullPointer);
    }
}

#[test]
fn solve_z_logistic() {
    let data = [0.3, -1.2, 2.5, 0.9];
    let kind = CString::new(r#"{"kind":"neg_loglik","family":"logistic_location","scale":1.0}"#).unwrap();
    let mut h = ptr::null_mut();
    unsafe {
        assert_eq!(medbias_objective_new(kind.as_ptr(), data.as_ptr(), data.len(), &mut h), MedbiasStatus::Ok);
        let mut theta = 0.0;
        assert_eq!(medbias_objective_solve_z(h, -5.0, 5.0, &mut theta), MedbiasStatus::Ok);
        let (mut l, mut r) = (1.0, 1.0);
        medbias_objective_subgradient(h, theta, &mut l, &mut r);
        assert!(l.abs() < 1e-8 && r.abs() < 1e-8);
        medbias_objective_free(h);
    }
}

#[test]
fn fwl_row_major() {
    // y = 2t + x1 - x2 exactly.
    let t = [1.0, 0.0, 2.0, -1.0, 0.5, 3.0];
    let x = [0.0, 1.0, 1.0, 0.0, 2.0, 1.0, -1.0, 1.0, 0.5, 0.5, 1.0, -2.0];
    let y: Vec<f64> = (0..6).map(|i| 2.0 * t[i] + x[2 * i] - x[2 * i + 1]).collect();
    let mut theta = 0.0;
    unsafe {
        assert_eq!(medbias_fwl(y.as_ptr(), t.as_ptr(), x.as_ptr(), 6, 2, &mut theta), MedbiasStatus::Ok);
    }
    assert!((theta - 2.0).abs() < 1e-12);
    let xc = [1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0, 5.0, 5.0, 6.0, 6.0];
    unsafe {
        assert_eq!(medbias_fwl(y.as_ptr(), t.as_ptr(), xc.as_ptr(), 6, 2, &mut theta), MedbiasStatus::Collinear);
    }
}

#[test]
fn seeds_and_batches() {
    let label = CString::new("dgp").unwrap();
    let (mut a, mut b) = (0u64, 0u64);
    let mut k = 0usize;
    unsafe {
        assert_eq!(medbias_derive_seed(7, 0, label.as_ptr(), &mut a), MedbiasStatus::Ok);
        assert_eq!(medbias_derive_seed(7, 1, label.as_ptr(), &mut b), MedbiasStatus::Ok);
        assert_eq!(medbias_hulc_batches(0.05, &mut k), MedbiasStatus::Ok);
    }
    assert_ne!(a, b);
    assert_eq!(a, medbias::simlab::derive_seed(7, 0, "dgp"));
    assert_eq!(k, 6);
}

#[test]
fn run_experiment_returns_csv() {
    let cfg = CString::new(
        r#"{"id": "ffi", "kind": "convex_thm1", "reps": 100, "master_seed": 5,
            "cases": [{"law": {"law": "normal"}, "objective": {"kind": "abs_dev"}, "n": 5}]}"#,
    )
    .unwrap();
    let run = |workers| unsafe {
        let mut out = ptr::null_mut();
        assert_eq!(medbias_run_experiment(cfg.as_ptr(), workers, 0, &mut out), MedbiasStatus::Ok);
        let text = CStr::from_ptr(out).to_string_lossy().into_owned();
        medbias_string_free(out);
        text
    };
    let one = run(1);
    assert!(one.starts_with("experiment,kind,case,n,"));
    assert_eq!(one.lines().count(), 2);
    assert_eq!(one, run(2));

    let bad = CString::new(r#"{"id": "x", "kind": "convex_thm1", "reps": 5, "master_seed": 1, "cases": []}"#).unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { medbias_run_experiment(bad.as_ptr(), 1, 0, &mut out) }, MedbiasStatus::Config);
    assert!(out.is_null());
    assert!(last_error().starts_with("configuration error"));
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/medbias.h")).unwrap();
    for sym in [
        "medbias_last_error",
        "medbias_med_bias",
        "medbias_mc_med_bias",
        "medbias_convex_bound",
        "medbias_z_exact",
        "medbias_objective_new",
        "medbias_objective_free",
        "medbias_objective_eval",
        "medbias_objective_subgradient",
        "medbias_objective_minimize",
        "medbias_objective_solve_z",
        "medbias_fwl",
        "medbias_derive_seed",
        "medbias_hulc_batches",
        "medbias_run_experiment",
        "medbias_string_free",
        "typedef struct MedbiasObjective MedbiasObjective;",
        "MEDBIAS_STATUS_OK = 0",
    ] {
        assert!(header.contains(sym), "header is missing {sym}");
    }
}

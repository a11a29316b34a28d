use std::ffi::{CStr, CString};
use std::ptr;

use robustexp_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(rx_last_error_message()) }.to_str().unwrap().to_owned()
}

fn model(json: &str) -> *mut RxModel {
    let s = CString::new(json).unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { rx_model_from_json(s.as_ptr(), &mut m) }, RxStatus::Ok, "{}", last_error());
    m
}

const TWO_SCENARIOS: &str =
    r#"{"space":["a","b","c"],"kind":"penalty","scenarios":[[0.5,0.5,0],[0,0.5,0.5]],"penalties":[0,0.25]}"#;

#[test]
fn evaluate_and_dual_eval() {
    let m = model(TWO_SCENARIOS);
    let x = [1.0, 0.0, 3.0];
    let (mut v, mut k, mut n) = (0.0, 99usize, 0usize);
    unsafe {
        assert_eq!(rx_model_state_count(m, &mut n), RxStatus::Ok);
        assert_eq!(rx_evaluate(m, x.as_ptr(), 3, &mut v), RxStatus::Ok);
        assert_eq!(v, 1.25);
        assert_eq!(rx_dual_eval(m, x.as_ptr(), 3, &mut v, &mut k), RxStatus::Ok);
        rx_model_free(m);
    }
    assert_eq!((n, v, k), (3, 1.25, 1));
}

#[test]
fn errors_map_to_status_codes() {
    let m = model(TWO_SCENARIOS);
    let mut v = 0.0;
    unsafe {
        assert_eq!(rx_evaluate(m, [1.0, 2.0].as_ptr(), 2, &mut v), RxStatus::Dimension);
        assert!(last_error().contains("expected 3"));
        assert_eq!(rx_evaluate(ptr::null(), [1.0].as_ptr(), 1, &mut v), RxStatus::NullPointer);
        assert_eq!(rx_evaluate(m, ptr::null(), 3, &mut v), RxStatus::NullPointer);
        assert_eq!(rx_evaluate(m, [0.0, f64::NAN, 0.0].as_ptr(), 3, &mut v), RxStatus::Domain);
        let mut out = ptr::null_mut();
        let bad = CString::new(r#"{"space":["a"],"kind":"penalty","scenarios":[[1]],"bogus":0}"#).unwrap();
        assert_eq!(rx_model_from_json(bad.as_ptr(), &mut out), RxStatus::Parse);
        assert!(out.is_null());
        let invalid = [0xffu8, 0xfe, 0];
        assert_eq!(rx_model_from_json(invalid.as_ptr().cast(), &mut out), RxStatus::InvalidUtf8);
        assert_eq!(rx_evaluate(m, [0.0; 3].as_ptr(), 3, &mut v), RxStatus::Ok);
        assert_eq!(last_error(), "");
        rx_model_free(m);
        rx_model_free(ptr::null_mut());
    }
}

#[test]
fn conjugate_and_membership() {
    let m = model(TWO_SCENARIOS);
    let (mut c, mut member, mut sep) = (0.0, false, 0.0);
    unsafe {
        // mixture 1/2, 1/2 of the two scenarios costs 0.125
        assert_eq!(rx_conjugate(m, [0.25, 0.5, 0.25].as_ptr(), 3, 10.0, &mut c), RxStatus::Ok);
        assert!((c - 0.125).abs() < 1e-9, "{c}");
        assert_eq!(rx_membership(m, [0.25, 0.5, 0.25].as_ptr(), 3, &mut member, &mut sep), RxStatus::Precondition);
        rx_model_free(m);
    }
    let s = model(r#"{"space":["a","b","c"],"kind":"penalty","scenarios":[[0.5,0.5,0],[0,0.5,0.5]]}"#);
    unsafe {
        assert_eq!(rx_membership(s, [0.25, 0.5, 0.25].as_ptr(), 3, &mut member, &mut sep), RxStatus::Ok);
        assert!(member);
        assert_eq!(rx_membership(s, [1.0, 0.0, 0.0].as_ptr(), 3, &mut member, &mut sep), RxStatus::Ok);
        assert!(!member && sep > 0.1);
        rx_model_free(s);
    }
}

#[test]
fn gap_demo_and_gaussian() {
    let (mut hat, mut bar) = (0.0, 0.0);
    let path = [1usize, 0, 1];
    unsafe {
        assert_eq!(rx_gap_demo(path.as_ptr(), 3, 4, false, &mut hat, &mut bar), RxStatus::Ok);
    }
    assert_eq!((hat, bar), (1.0, 0.0));
    unsafe {
        assert_eq!(rx_gap_demo(path.as_ptr(), 3, 3, true, &mut hat, &mut bar), RxStatus::Ok);
    }
    assert_eq!((hat, bar), (1.0, 1.0));

    let times = [1.0];
    let f = CString::new("square_last").unwrap();
    let mut v = 0.0;
    let st =
        unsafe { rx_gaussian_robust_eval(times.as_ptr(), 1, -0.2, 0.1, 0.1, 0.5, f.as_ptr(), 16, 7, false, &mut v) };
    assert_eq!(st, RxStatus::Ok, "{}", last_error());
    // max of mu^2 + sigma^2
    assert!((v - 0.29).abs() < 1e-12, "{v}");
    let g = CString::new("nope").unwrap();
    let st =
        unsafe { rx_gaussian_robust_eval(times.as_ptr(), 1, -0.2, 0.1, 0.1, 0.5, g.as_ptr(), 16, 7, false, &mut v) };
    assert_eq!(st, RxStatus::Argument);
}

#[test]
fn chain_round_trip() {
    let doc = CString::new(
        r#"{"base":["0","1"],"operator":{"matrices":[[[0.9,0.1],[0.2,0.8]],[[0.6,0.4],[0.5,0.5]]]},
            "mu0":{"kind":"penalty","scenarios":[[0.5,0.5]]},"horizon":2}"#,
    )
    .unwrap();
    let mut c = ptr::null_mut();
    let (mut n, mut h, mut v) = (0usize, 0usize, 0.0);
    unsafe {
        assert_eq!(rx_chain_from_json(doc.as_ptr(), &mut c), RxStatus::Ok, "{}", last_error());
        assert_eq!(rx_chain_state_count(c, &mut n), RxStatus::Ok);
        assert_eq!(rx_chain_horizon(c, &mut h), RxStatus::Ok);
        let f = [1.0, 0.0];
        assert_eq!(rx_chain_evaluate(c, [1u32].as_ptr(), 1, f.as_ptr(), 2, &mut v), RxStatus::Ok);
        // 0.5 * max(0.9, 0.6) + 0.5 * max(0.2, 0.5)
        assert!((v - 0.7).abs() < 1e-15, "{v}");
        assert_eq!(rx_chain_evaluate(c, [5u32].as_ptr(), 1, f.as_ptr(), 2, &mut v), RxStatus::Argument);
        rx_chain_free(c);
    }
    assert_eq!((n, h), (2, 2));
}

#[test]
fn version_is_nul_terminated() {
    let v = unsafe { CStr::from_ptr(rx_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

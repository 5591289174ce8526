//! Exercises the C ABI exactly as a C caller would: through raw pointers,
//! status codes, and the thread-local error message.

// Frozen reference values are written at full source precision.
#![allow(clippy::excessive_precision)]

use riskshare::compensators::{GammaCompensator, ModelEnsemble};
use riskshare::controls::MarketParams;
use riskshare_ffi::*;
use std::ffi::{CStr, CString};
use std::ptr;

fn ensemble_json() -> CString {
    let models = vec![
        GammaCompensator::new(0.51, 0.56, 697.68).unwrap(),
        GammaCompensator::new(0.54, 0.57, 678.55).unwrap(),
        GammaCompensator::new(0.50, 0.60, 640.0).unwrap(),
    ];
    let counterparty = GammaCompensator::new(0.52, 0.58, 654.98).unwrap();
    let ens = ModelEnsemble::new(models, counterparty, vec![0.4, 0.3, 0.3], 0.0).unwrap();
    CString::new(ens.to_json()).unwrap()
}

fn market_json() -> CString {
    let mkt = MarketParams::new(210.0, 0.12, 0.01, 5000.0, 5000.0, 5.0).unwrap();
    CString::new(mkt.to_json()).unwrap()
}

struct Handles {
    ens: *mut RsEnsemble,
    mkt: *mut RsMarket,
}

impl Handles {
    fn open() -> Self {
        let mut ens = ptr::null_mut();
        let mut mkt = ptr::null_mut();
        unsafe {
            assert_eq!(
                rs_ensemble_parse_json(ensemble_json().as_ptr(), &mut ens),
                RsStatus::Ok
            );
            assert_eq!(
                rs_market_parse_json(market_json().as_ptr(), &mut mkt),
                RsStatus::Ok
            );
        }
        Handles { ens, mkt }
    }
}

impl Drop for Handles {
    fn drop(&mut self) {
        unsafe {
            rs_ensemble_free(self.ens);
            rs_market_free(self.mkt);
        }
    }
}

fn last_error() -> String {
    unsafe {
        CStr::from_ptr(rs_last_error_message())
            .to_string_lossy()
            .into_owned()
    }
}

#[test]
fn version_is_a_nonempty_static_string() {
    let v = unsafe { CStr::from_ptr(rs_version()) };
    assert!(!v.to_str().unwrap().is_empty());
}

#[test]
fn handles_round_trip_and_report_sizes() {
    let h = Handles::open();
    let mut n_models = 0usize;
    let mut n_entries = 0usize;
    let mut feasible = false;
    unsafe {
        assert_eq!(rs_ensemble_n_models(h.ens, &mut n_models), RsStatus::Ok);
        assert_eq!(rs_ensemble_n_entries(h.ens, &mut n_entries), RsStatus::Ok);
        assert_eq!(rs_ensemble_feasible(h.ens, &mut feasible), RsStatus::Ok);
    }
    assert_eq!(n_models, 3);
    assert_eq!(n_entries, 4);
    assert!(feasible);
    assert_eq!(last_error(), "");
}

#[test]
fn parse_errors_set_status_and_message() {
    let mut out = ptr::null_mut();
    let garbage = CString::new("{not json").unwrap();
    let status = unsafe { rs_ensemble_parse_json(garbage.as_ptr(), &mut out) };
    assert_eq!(status, RsStatus::Domain);
    assert!(out.is_null(), "out must not be written on failure");
    assert!(!last_error().is_empty());

    // A later successful call clears the message.
    let h = Handles::open();
    drop(h);
    assert_eq!(last_error(), "");
}

#[test]
fn null_arguments_are_rejected_not_dereferenced() {
    let mut value = 0.0f64;
    unsafe {
        assert_eq!(
            rs_ensemble_parse_json(ptr::null(), ptr::null_mut()),
            RsStatus::NullPointer
        );
        assert_eq!(
            rs_var_x_qstar(ptr::null(), ptr::null(), 1.0, &mut value),
            RsStatus::NullPointer
        );
        assert_eq!(rs_lambert_w0(2.0, ptr::null_mut()), RsStatus::NullPointer);
        // Freeing null is a documented no-op.
        rs_ensemble_free(ptr::null_mut());
        rs_market_free(ptr::null_mut());
    }
    assert!(last_error().contains("null"));
}

#[test]
fn invalid_utf8_is_reported() {
    let h = Handles::open();
    let bad = [b'q' as std::ffi::c_char, -1i8 as std::ffi::c_char, 0];
    let mut value = 0.0f64;
    let status = unsafe { rs_mean_x(h.ens, h.mkt, bad.as_ptr(), 1.0, &mut value) };
    assert_eq!(status, RsStatus::InvalidUtf8);
}

#[test]
fn lambert_w_matches_reference_value() {
    let mut w = 0.0f64;
    unsafe {
        assert_eq!(rs_lambert_w0(2.0, &mut w), RsStatus::Ok);
    }
    assert!((w - 0.8526055020137254913465).abs() < 1e-14);

    // Below the branch point the argument is out of domain.
    let status = unsafe { rs_lambert_w0(-1.0, &mut w) };
    assert_eq!(status, RsStatus::Domain);
}

#[test]
fn cross_integral_matches_reference_value() {
    let mut i2 = 0.0f64;
    let status = unsafe {
        rs_cross_integral_2(0.52, 0.58, 654.98, 0.51, 0.56, 697.68, &mut i2)
    };
    assert_eq!(status, RsStatus::Ok);
    assert!((i2 - 0.53086684737573631205).abs() < 1e-12 * i2);

    // Shape condition violated: 2·0.58 < 1.4.
    let status = unsafe {
        rs_cross_integral_2(0.52, 0.58, 654.98, 0.5, 1.4, 600.0, &mut i2)
    };
    assert_eq!(status, RsStatus::Infeasible);
    assert!(!last_error().is_empty());
}

#[test]
fn analytics_agree_with_the_rust_library() {
    let h = Handles::open();
    let ens = ModelEnsemble::from_json(ensemble_json().to_str().unwrap()).unwrap();
    let mkt = MarketParams::from_json(market_json().to_str().unwrap()).unwrap();
    let qstar = CString::new("qstar").unwrap();
    let z = [1.1, 0.9, 1.05, 1.0];

    let mut got = 0.0f64;
    unsafe {
        assert_eq!(rs_mean_x(h.ens, h.mkt, qstar.as_ptr(), 3.0, &mut got), RsStatus::Ok);
        let want =
            riskshare::moments::mean_x(riskshare::moments::Measure::Optimal, 3.0, &ens, &mkt)
                .unwrap();
        assert_eq!(got, want);

        assert_eq!(rs_var_x_qstar(h.ens, h.mkt, 3.0, &mut got), RsStatus::Ok);
        assert_eq!(got, riskshare::moments::var_x_qstar(3.0, &ens, &mkt).unwrap());

        assert_eq!(rs_mean_y(h.ens, h.mkt, 5.0, 0.12, &mut got), RsStatus::Ok);
        assert_eq!(got, riskshare::moments::mean_y(5.0, 0.12, &ens, &mkt).unwrap());

        assert_eq!(
            rs_alpha_star(h.ens, h.mkt, 2.5, 800.0, z.as_ptr(), z.len(), &mut got),
            RsStatus::Ok
        );
        assert_eq!(
            got,
            riskshare::controls::alpha_star(2.5, 800.0, &z, &ens, &mkt).unwrap()
        );

        assert_eq!(rs_beta_star(h.ens, h.mkt, 800.0, &mut got), RsStatus::Ok);
        assert_eq!(
            got,
            riskshare::controls::beta_star(800.0, ens.counterparty(), mkt.eta()).unwrap()
        );

        assert_eq!(
            rs_value_function(h.ens, h.mkt, 2.5, 5000.0, z.as_ptr(), z.len(), &mut got),
            RsStatus::Ok
        );
        assert_eq!(
            got,
            riskshare::controls::value_function(2.5, 5000.0, &z, &ens, &mkt).unwrap()
        );
    }
}

#[test]
fn state_vector_length_is_validated() {
    let h = Handles::open();
    let z = [1.0, 1.0]; // ensemble expects 4 entries
    let mut got = 0.0f64;
    let status = unsafe {
        rs_alpha_star(h.ens, h.mkt, 2.5, 800.0, z.as_ptr(), z.len(), &mut got)
    };
    assert_eq!(status, RsStatus::Domain);
    assert!(last_error().contains('4'), "message names the expected length");
}

#[test]
fn one_model_pricing_agrees_with_closed_form() {
    let h = Handles::open();
    let mkt = MarketParams::from_json(market_json().to_str().unwrap()).unwrap();
    let counterparty = GammaCompensator::new(0.52, 0.58, 654.98).unwrap();
    let one = ModelEnsemble::single(counterparty.clone());
    let one_json = CString::new(one.to_json()).unwrap();

    let mut ens_one = ptr::null_mut();
    let mut eta_closed = 0.0f64;
    let mut eta_numeric = 0.0f64;
    let mut wealth = 0.0f64;
    unsafe {
        assert_eq!(rs_ensemble_parse_json(one_json.as_ptr(), &mut ens_one), RsStatus::Ok);
        assert_eq!(
            rs_eta_star_one_model(0.52, 0.58, 654.98, h.mkt, &mut eta_closed),
            RsStatus::Ok
        );
        assert_eq!(
            rs_optimize_eta(ens_one, h.mkt, 1.0, &mut eta_numeric, &mut wealth),
            RsStatus::Ok
        );
        rs_ensemble_free(ens_one);
    }
    let want = riskshare::pricing::eta_star_one_model(&counterparty, &mkt).unwrap();
    assert_eq!(eta_closed, want);
    assert!((eta_numeric - eta_closed).abs() <= 1e-7);
    assert!(wealth.is_finite());
}

/// Compiles and runs a real C program against the generated header and the
/// static library, proving the ABI end to end. Skipped when no C compiler is
/// on PATH.
#[test]
fn c_smoke_program_compiles_links_and_runs() {
    let manifest = std::path::Path::new(env!("CARGO_MANIFEST_DIR"));
    let include = manifest.join("include");
    // The staticlib is emitted next to this test's own artifacts.
    let lib_dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .parent()
        .unwrap()
        .parent()
        .unwrap()
        .join("target")
        .join("debug");
    let staticlib = lib_dir.join("libriskshare_ffi.a");
    if !staticlib.exists() {
        eprintln!("skipping C smoke test: {} not built", staticlib.display());
        return;
    }
    let cc = ["cc", "gcc", "clang"]
        .iter()
        .find(|c| {
            std::process::Command::new(c)
                .arg("--version")
                .output()
                .is_ok()
        })
        .copied();
    let Some(cc) = cc else {
        eprintln!("skipping C smoke test: no C compiler on PATH");
        return;
    };

    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    std::fs::write(
        &src,
        r#"
#include "riskshare.h"
#include <math.h>
#include <stdio.h>

int main(void) {
    double w = 0.0;
    if (rs_lambert_w0(2.0, &w) != RS_STATUS_OK) return 1;
    if (fabs(w - 0.85260550201372549) > 1e-12) return 2;
    if (rs_lambert_w0(-1.0, &w) != RS_STATUS_DOMAIN) return 3;
    if (rs_last_error_message()[0] == '\0') return 4;
    double i2 = 0.0;
    if (rs_cross_integral_2(0.52, 0.58, 654.98, 0.51, 0.56, 697.68, &i2) != RS_STATUS_OK)
        return 5;
    if (fabs(i2 - 0.53086684737573631) > 1e-12) return 6;
    printf("ok %s\n", rs_version());
    return 0;
}
"#,
    )
    .unwrap();
    let exe = dir.path().join("smoke");
    let compile = std::process::Command::new(cc)
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg("-o")
        .arg(&exe)
        .arg(staticlib)
        .args(["-lm", "-lpthread", "-ldl"])
        .output()
        .unwrap();
    assert!(
        compile.status.success(),
        "C compile failed:\n{}",
        String::from_utf8_lossy(&compile.stderr)
    );
    let run = std::process::Command::new(&exe).output().unwrap();
    assert!(
        run.status.success(),
        "C smoke program exited {:?}:\n{}",
        run.status.code(),
        String::from_utf8_lossy(&run.stdout)
    );
}

use std::ffi::{c_char, CStr, CString};
use std::process::Command;
use std::ptr;

use linkstate_ffi::*;

const GRID: LsGrid = LsGrid {
    link_length: 100.0,
    total_time: 16.0,
    dx: 20.0,
    dt: 2.0,
};

fn last_error() -> String {
    let mut buf = [0 as c_char; 256];
    unsafe {
        ls_last_error(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

fn fd() -> *mut LsFd {
    let mut fd = ptr::null_mut();
    assert_eq!(unsafe { ls_fd_new(10.0, 0.05, 1.0 / 6.5, &mut fd) }, LsStatus::Ok);
    fd
}

#[test]
fn fd_lifecycle_and_errors() {
    let fd = fd();
    let (mut v, mut k, mut w) = (0.0, 0.0, 0.0);
    unsafe {
        assert_eq!(ls_fd_get(fd, &mut v, &mut k, ptr::null_mut(), &mut w), LsStatus::Ok);
        let mut q = 0.0;
        assert_eq!(ls_flow(fd, 0.02, 0.0, &mut q), LsStatus::Ok);
        assert!((q - 0.2).abs() < 1e-12);
        ls_fd_free(fd);
        ls_fd_free(ptr::null_mut());
    }
    assert_eq!((v, k), (10.0, 0.05));
    assert!((w - 10.0 * 0.05 / (1.0 / 6.5 - 0.05)).abs() < 1e-12);

    let mut bad = ptr::null_mut();
    assert_eq!(unsafe { ls_fd_new(10.0, 0.09, 1.0 / 6.5, &mut bad) }, LsStatus::Config);
    assert!(bad.is_null());
    assert!(!last_error().is_empty());
    assert_eq!(unsafe { ls_fd_new(10.0, 0.05, 0.15, ptr::null_mut()) }, LsStatus::NullPointer);
    assert!(last_error().contains("fd_out"));
}

#[test]
fn matrix_access_and_bounds() {
    let mut m = ptr::null_mut();
    unsafe {
        assert_eq!(ls_matrix_new(GRID, &mut m), LsStatus::Ok);
        let (mut a, mut b) = (0, 0);
        ls_matrix_shape(m, &mut a, &mut b);
        assert_eq!((a, b), (5, 8));
        assert_eq!(ls_matrix_set(m, 2, 3, 0.04), LsStatus::Ok);
        let (mut k, mut obs) = (0.0, 0u8);
        ls_matrix_get(m, 2, 3, &mut k, &mut obs);
        assert_eq!((k, obs), (0.04, 1));
        ls_matrix_clear(m, 2, 3);
        ls_matrix_get(m, 2, 3, &mut k, &mut obs);
        assert_eq!(obs, 0);
        assert_eq!(ls_matrix_set(m, 5, 0, 0.1), LsStatus::OutOfRange);
        assert_eq!(ls_matrix_set(m, 0, 0, f64::NAN), LsStatus::Domain);
        ls_matrix_free(m);
    }
    let bad = LsGrid { dx: 30.0, ..GRID };
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { ls_matrix_new(bad, &mut m) }, LsStatus::Config);
}

#[test]
fn ctm_estimate_and_score() {
    let fd = fd();
    let init = [0.03; 5];
    let inflow = [0.03; 8];
    let outflow = [0.03; 8];
    let mut truth = ptr::null_mut();
    unsafe {
        assert_eq!(
            ls_ctm_run(fd, GRID, init.as_ptr(), inflow.as_ptr(), outflow.as_ptr(), &mut truth),
            LsStatus::Ok
        );
        let mut partial = ptr::null_mut();
        ls_matrix_new(GRID, &mut partial);
        for i in 0..5 {
            for j in 0..3 {
                let (mut k, mut o) = (0.0, 0);
                ls_matrix_get(truth, i, j, &mut k, &mut o);
                ls_matrix_set(partial, i, j, k);
            }
        }
        let mut params = ls_ga_params_estimation();
        params.population_size = 80;
        params.generations = 30;
        params.crossover_fraction = 40;
        params.restarts = 1;
        let (mut done, mut fit) = (ptr::null_mut(), 0.0);
        assert_eq!(ls_estimate_density(partial, fd, &params, 3, &mut done, &mut fit), LsStatus::Ok);
        assert!(fit <= 0.0 && fit > -0.01, "{fit}");
        let mask = [1u8; 40];
        let mut rmse = -1.0;
        assert_eq!(ls_masked_rmse(truth, truth, mask.as_ptr(), &mut rmse), LsStatus::Ok);
        assert_eq!(rmse, 0.0);
        assert_eq!(ls_masked_rmse(truth, done, [0u8; 40].as_ptr(), &mut rmse), LsStatus::Empty);
        let mut empty = ptr::null_mut();
        ls_matrix_new(GRID, &mut empty);
        assert_eq!(ls_estimate_density(empty, fd, &params, 3, &mut done, &mut fit), LsStatus::Empty);
        for m in [truth, partial, done, empty] {
            ls_matrix_free(m);
        }
        ls_fd_free(fd);
    }
}

#[test]
fn calibration_recovers_planted_fd() {
    let truth = fd();
    let mut qs = Vec::new();
    for n in 0..80 {
        let x = n as f64 / 80.0;
        let row = [0.15 * x, 0.15 * (1.0 - x), 0.15 * ((x * 7.0) % 1.0)];
        let mut m = ptr::null_mut();
        let next = unsafe {
            let init = [row[0], row[1], row[2]];
            let g = LsGrid {
                link_length: 60.0,
                total_time: 4.0,
                ..GRID
            };
            assert_eq!(
                ls_ctm_run(truth, g, init.as_ptr(), [row[0]; 2].as_ptr(), [row[2]; 2].as_ptr(), &mut m),
                LsStatus::Ok
            );
            let (mut k, mut o) = (0.0, 0);
            ls_matrix_get(m, 1, 1, &mut k, &mut o);
            ls_matrix_free(m);
            k
        };
        qs.push(LsQuartet {
            k_up: row[0],
            k_mid: row[1],
            k_down: row[2],
            k_next: next,
        });
    }
    let params = ls_ga_params_calibration();
    let (mut out, mut rmse) = (ptr::null_mut(), 1.0);
    unsafe {
        assert_eq!(
            ls_calibrate_fd(qs.as_ptr(), qs.len(), GRID, 1.0 / 6.5, &params, 5, &mut out, &mut rmse),
            LsStatus::Ok
        );
        let (mut v, mut k) = (0.0, 0.0);
        ls_fd_get(out, &mut v, &mut k, ptr::null_mut(), ptr::null_mut());
        assert!((v / 10.0 - 1.0).abs() < 0.01 && (k / 0.05 - 1.0).abs() < 0.02, "{v} {k}");
        assert!(rmse < 1e-4);
        ls_fd_free(out);
        ls_fd_free(truth);
        assert_eq!(
            ls_calibrate_fd(ptr::null(), 0, GRID, 0.15, &params, 5, &mut out, &mut rmse),
            LsStatus::Empty
        );
    }
}

#[test]
fn pipeline_reports_missing_config() {
    let p = CString::new("/nonexistent/run.toml").unwrap();
    assert_eq!(unsafe { ls_run_pipeline(p.as_ptr(), ptr::null()) }, LsStatus::MissingArtifact);
    assert!(last_error().contains("run.toml"));
}

#[test]
fn version_is_package_version() {
    let v = unsafe { CStr::from_ptr(ls_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let include = concat!(env!("CARGO_MANIFEST_DIR"), "/include");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"linkstate.h\"\nint main(void) { LsGrid g = {100, 16, 20, 2}; LsMatrix *m = 0;\n\
         LsStatus s = ls_matrix_new(g, &m); ls_matrix_free(m); return s == LS_STATUS_OK ? 0 : 1; }\n",
    )
    .unwrap();
    for (compiler, extra) in [("cc", vec!["-std=c99"]), ("c++", vec!["-x", "c++"])] {
        let status = match Command::new(compiler)
            .args(&extra)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-I", include])
            .arg(&src)
            .status()
        {
            Ok(s) => s,
            Err(_) => {
                eprintln!("{compiler} not available; skipped");
                continue;
            }
        };
        assert!(status.success(), "{compiler} rejected the header");
    }
}

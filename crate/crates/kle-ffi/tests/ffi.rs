use std::ffi::CStr;
use std::path::PathBuf;
use std::process::Command;
use std::ptr;
use std::sync::Arc;

use kle_core::{
    build_truncated_kle, sample, Interval, KernelSpec, MeanFunction, QuadratureRule, Selection,
};
use kle_ffi::*;

const EXP1: KleKernel = KleKernel {
    kind: KleKernelKind::Exponential,
    sigma: 1.0,
    ell: 1.0,
};

fn last_error() -> String {
    let mut buf = [0 as std::ffi::c_char; 512];
    unsafe {
        kle_last_error_message(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

fn rule(n: usize) -> *mut KleRule {
    let mut r = ptr::null_mut();
    assert_eq!(
        unsafe { kle_rule_new(KleRuleKind::Trapezoid, 0.0, 1.0, n, &mut r) },
        KleStatus::Ok
    );
    r
}

#[test]
fn rule_round_trip() {
    unsafe {
        let mut r = ptr::null_mut();
        assert_eq!(
            kle_rule_new(KleRuleKind::GaussLegendre, -1.0, 1.0, 3, &mut r),
            KleStatus::Ok
        );
        assert_eq!(kle_rule_len(r), 3);
        let mut nodes = [0.0; 3];
        let mut w = [0.0; 3];
        assert_eq!(kle_rule_nodes(r, nodes.as_mut_ptr(), 3), KleStatus::Ok);
        assert_eq!(kle_rule_weights(r, w.as_mut_ptr(), 3), KleStatus::Ok);
        assert!((nodes[0] + (0.6f64).sqrt()).abs() < 1e-14);
        assert!((w[1] - 8.0 / 9.0).abs() < 1e-14);
        assert_eq!(
            kle_rule_nodes(r, nodes.as_mut_ptr(), 2),
            KleStatus::BufferTooSmall
        );
        assert_eq!(
            kle_rule_nodes(r, ptr::null_mut(), 3),
            KleStatus::NullPointer
        );
        kle_rule_free(r);
    }
}

#[test]
fn invalid_arguments_report_messages() {
    unsafe {
        let mut r = ptr::null_mut();
        assert_eq!(
            kle_rule_new(KleRuleKind::Trapezoid, 1.0, 0.0, 10, &mut r),
            KleStatus::InvalidArgument
        );
        assert!(r.is_null());
        assert!(!last_error().is_empty());
        assert_eq!(
            kle_rule_new(KleRuleKind::Trapezoid, 0.0, 1.0, 10, ptr::null_mut()),
            KleStatus::NullPointer
        );

        let r = rule(10);
        let bad = KleKernel { ell: -1.0, ..EXP1 };
        let mut dec = ptr::null_mut();
        assert_eq!(
            kle_nystrom_eigen(&bad, r, 3, &mut dec),
            KleStatus::InvalidArgument
        );
        assert!(last_error().contains("ell"), "{}", last_error());
        // success clears the message
        assert_eq!(kle_nystrom_eigen(&EXP1, r, 3, &mut dec), KleStatus::Ok);
        assert_eq!(kle_last_error_message(ptr::null_mut(), 0), 0);
        kle_decomposition_free(dec);
        kle_rule_free(r);

        let name = CStr::from_ptr(kle_status_name(KleStatus::DegenerateMode));
        assert_eq!(name.to_str().unwrap(), "degenerate mode");
    }
}

#[test]
fn eigen_and_rank_selection() {
    unsafe {
        let r = rule(1000);
        let mut dec = ptr::null_mut();
        assert_eq!(kle_nystrom_eigen(&EXP1, r, 1000, &mut dec), KleStatus::Ok);
        assert_eq!(kle_decomposition_num_modes(dec), 1000);
        let mut lambdas = vec![0.0; 1000];
        assert_eq!(
            kle_decomposition_lambdas(dec, lambdas.as_mut_ptr(), 1000),
            KleStatus::Ok
        );
        let mut rank = 0usize;
        assert_eq!(
            kle_select_rank(lambdas.as_ptr(), 1000, 1.0, 0.99, &mut rank),
            KleStatus::Ok
        );
        assert_eq!(rank, 21);
        assert_eq!(
            kle_select_rank(lambdas.as_ptr(), 5, 1.0, 0.99, &mut rank),
            KleStatus::InsufficientSpectrum
        );
        let mut v = 0.0;
        assert_eq!(kle_decomposition_extend(dec, 0, 0.5, &mut v), KleStatus::Ok);
        assert!(v > 0.0);
        assert_eq!(
            kle_decomposition_extend(dec, 0, 1.5, &mut v),
            KleStatus::OutOfDomain
        );
        kle_decomposition_free(dec);
        kle_rule_free(r);
    }
}

#[test]
fn sampling_matches_the_library() {
    unsafe {
        let r = rule(200);
        let mut kle = ptr::null_mut();
        assert_eq!(
            kle_truncated_with_rank(&EXP1, r, 0.5, 12, &mut kle),
            KleStatus::Ok
        );
        assert_eq!(kle_truncated_rank(kle), 12);
        let mut ens = ptr::null_mut();
        assert_eq!(kle_sample(kle, 4, 9, &mut ens), KleStatus::Ok);
        // ensembles keep the expansion alive
        kle_truncated_free(kle);
        assert_eq!(kle_ensemble_len(ens), 4);

        let lib_rule = QuadratureRule::trapezoid(Interval::unit(), 200).unwrap();
        let lib_kle = build_truncated_kle(
            &KernelSpec::exponential(1.0, 1.0).unwrap(),
            &lib_rule,
            MeanFunction::Constant(0.5),
            Selection::Rank(12),
        )
        .unwrap();
        let lib = sample(Arc::new(lib_kle), 4, 9).unwrap();
        let mut nodal = vec![0.0; 200];
        assert_eq!(
            kle_ensemble_nodal(ens, 2, nodal.as_mut_ptr(), 200),
            KleStatus::Ok
        );
        assert_eq!(nodal, lib.nodal(2).unwrap());
        let mut v = 0.0;
        assert_eq!(kle_ensemble_evaluate(ens, 3, 0.123, &mut v), KleStatus::Ok);
        assert_eq!(v, lib.evaluate(3, 0.123).unwrap());
        assert_eq!(
            kle_ensemble_evaluate(ens, 4, 0.1, &mut v),
            KleStatus::InvalidArgument
        );
        assert_eq!(
            kle_sample(ptr::null(), 4, 9, &mut ens),
            KleStatus::NullPointer
        );
        kle_ensemble_free(ens);
        kle_rule_free(r);
    }
}

#[test]
fn threshold_and_degenerate_modes() {
    unsafe {
        let r = rule(1000);
        let mut kle = ptr::null_mut();
        assert_eq!(
            kle_truncated_with_threshold(&EXP1, r, 0.0, 0.99, &mut kle),
            KleStatus::Ok
        );
        assert_eq!(kle_truncated_rank(kle), 21);
        assert!(kle_truncated_rho(kle) >= 0.99);
        kle_truncated_free(kle);

        let constant = KleKernel {
            kind: KleKernelKind::Constant,
            sigma: 1.0,
            ell: 0.0,
        };
        let small = rule(10);
        assert_eq!(
            kle_truncated_with_rank(&constant, small, 0.0, 2, &mut kle),
            KleStatus::DegenerateMode
        );
        kle_rule_free(small);
        kle_rule_free(r);
    }
}

#[test]
fn null_handles_are_harmless() {
    unsafe {
        kle_rule_free(ptr::null_mut());
        kle_decomposition_free(ptr::null_mut());
        kle_truncated_free(ptr::null_mut());
        kle_ensemble_free(ptr::null_mut());
        assert_eq!(kle_rule_len(ptr::null()), 0);
        assert!(kle_truncated_rho(ptr::null()).is_nan());
    }
}

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(crate_dir().join("include/kle.h")).unwrap();
    for name in [
        "kle_last_error_message",
        "kle_status_name",
        "kle_rule_new",
        "kle_rule_free",
        "kle_nystrom_eigen",
        "kle_decomposition_extend",
        "kle_select_rank",
        "kle_truncated_with_rank",
        "kle_truncated_with_threshold",
        "kle_sample",
        "kle_ensemble_evaluate",
        "kle_ensemble_nodal",
        "typedef struct KleRule KleRule",
        "KLE_STATUS_OUT_OF_DOMAIN",
    ] {
        assert!(header.contains(name), "{name} missing from kle.h");
    }
}

/// The static library next to this test executable, if cargo built one.
fn static_lib() -> Option<PathBuf> {
    let exe = std::env::current_exe().ok()?;
    let profile_dir = exe.parent()?.parent()?;
    let lib = profile_dir.join("libkle_ffi.a");
    lib.exists().then_some(lib)
}

#[test]
fn c_example_compiles_and_runs() {
    let Some(lib) = static_lib() else {
        panic!("libkle_ffi.a not found next to the test binary");
    };
    let out = tempfile_path("kle-demo");
    let status = Command::new("cc")
        .arg(crate_dir().join("examples/demo.c"))
        .arg("-I")
        .arg(crate_dir().join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&out)
        .status()
        .expect("a C compiler (`cc`) is required for this test");
    assert!(status.success());
    let run = Command::new(&out).output().unwrap();
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(
        run.status.success(),
        "{stdout}{}",
        String::from_utf8_lossy(&run.stderr)
    );
    assert!(stdout.contains("rank 21"), "{stdout}");
    assert!(stdout.contains("out of domain ok"), "{stdout}");
    let _ = std::fs::remove_file(&out);
}

fn tempfile_path(stem: &str) -> PathBuf {
    std::env::temp_dir().join(format!("{stem}-{}", std::process::id()))
}

use std::ffi::{c_char, CStr, CString};
use std::ptr;

use mfgplan_ffi::*;

fn last_error() -> String {
    let p = mfg_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn cstr(s: &str) -> CString {
    CString::new(s).unwrap()
}

#[test]
fn scalar_functions() {
    let mut v = 0.0;
    unsafe {
        assert_eq!(mfg_lemma_bound(1.0, 1.0, 1.0, 1.0, &mut v), MfgStatus::Ok);
        assert_eq!(v, 4.0);
        assert_eq!(mfg_lemma_bound(1.0, 1.0, 10.0, 1.0, &mut v), MfgStatus::Domain);
        assert!(last_error().contains("pi^2"), "{}", last_error());
        assert_eq!(mfg_q_pochhammer(0.5, 0.5, 1e-14, &mut v), MfgStatus::Ok);
        // (1/2; 1/2)_inf
        assert!((v - 0.288_788_095_086_602_4).abs() < 1e-14);
        assert_eq!(mfg_q_pochhammer(0.5, 1.5, 1e-14, &mut v), MfgStatus::Domain);
        assert_eq!(mfg_lemma_bound(1.0, 1.0, 0.0, 1.0, ptr::null_mut()), MfgStatus::NullPointer);
    }
    assert_eq!(last_error(), "out is null");
    let name = unsafe { CStr::from_ptr(mfg_status_name(MfgStatus::BufferTooSmall)) };
    assert_eq!(name.to_str().unwrap(), "buffer too small");
    let version = unsafe { CStr::from_ptr(mfg_version()) };
    assert_eq!(version.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn success_clears_the_last_error() {
    let mut v = 0.0;
    unsafe {
        assert_eq!(mfg_lemma_bound(-1.0, 1.0, 0.0, 1.0, &mut v), MfgStatus::InvalidArgument);
        assert!(!mfg_last_error().is_null());
        assert_eq!(mfg_lemma_bound(1.0, 1.0, 0.0, 1.0, &mut v), MfgStatus::Ok);
    }
    assert!(mfg_last_error().is_null());
}

#[test]
fn moser_certificate() {
    let input = MfgMoserInput {
        alpha: 1.0,
        r: 2.0,
        c: 1.0,
        c_ell: 1.0,
        m_start: 1.0,
        m_r: 1.0,
        horizon: 60,
        degenerate: false,
    };
    let mut out = MfgMoserResult::default();
    unsafe { assert_eq!(mfg_certify_moser(&input, &mut out), MfgStatus::Ok) };
    assert_eq!((out.n0, out.big_n0), (3, 4));
    assert!((out.rho - 1.7519).abs() < 1e-4);
    assert!(out.pass && out.below_cap && out.converged);
    let bad = MfgMoserInput { r: 0.5, ..input };
    unsafe { assert_eq!(mfg_certify_moser(&bad, &mut out), MfgStatus::InvalidArgument) };
}

#[test]
fn solve_roundtrip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut problem = ptr::null_mut();
    let mut solution = ptr::null_mut();
    unsafe {
        assert_eq!(mfg_problem_from_scenario(cstr("bump").as_ptr(), &mut problem), MfgStatus::Ok);
        let mut grid = MfgGridInfo::default();
        assert_eq!(mfg_problem_grid(problem, &mut grid), MfgStatus::Ok);
        assert_eq!((grid.dim, grid.nx, grid.ny, grid.nt, grid.cells), (1, 64, 1, 64, 64));
        assert_eq!(mfg_problem_set_solver(problem, 0, -1.0), MfgStatus::Config);
        assert_eq!(mfg_solve(problem, &mut solution), MfgStatus::Ok);

        let mut summary = MfgSolveSummary::default();
        assert_eq!(mfg_solution_summary(solution, &mut summary), MfgStatus::Ok);
        assert!(summary.converged && summary.has_value);
        assert!(summary.max_mass_error < 1e-12);

        let n = (grid.nt + 1) * grid.cells;
        let mut m = vec![0.0; n];
        assert_eq!(mfg_solution_density(solution, m.as_mut_ptr(), n - 1), MfgStatus::BufferTooSmall);
        assert_eq!(mfg_solution_density(solution, m.as_mut_ptr(), n), MfgStatus::Ok);
        let mass: f64 = m[..grid.cells].iter().sum::<f64>() / grid.cells as f64;
        assert!((mass - 1.0).abs() < 1e-12);
        let mut u = vec![0.0; n];
        assert_eq!(mfg_solution_value(solution, u.as_mut_ptr(), n), MfgStatus::Ok);

        let out = cstr(dir.path().to_str().unwrap());
        assert_eq!(mfg_solution_write(solution, out.as_ptr()), MfgStatus::Ok);

        let mut field = ptr::null_mut();
        let path = cstr(dir.path().join("m.bin").to_str().unwrap());
        assert_eq!(mfg_field_read(path.as_ptr(), &mut field), MfgStatus::Ok);
        let mut info = MfgFieldInfo::default();
        assert_eq!(mfg_field_info(field, &mut info), MfgStatus::Ok);
        assert_eq!((info.components, info.rows, info.len), (1, 65, n));
        let mut back = vec![0.0; n];
        assert_eq!(mfg_field_values(field, back.as_mut_ptr(), n), MfgStatus::Ok);
        assert_eq!(back, m);
        let mut name = [0 as c_char; 8];
        assert_eq!(mfg_field_name(field, name.as_mut_ptr(), 1), MfgStatus::BufferTooSmall);
        assert_eq!(mfg_field_name(field, name.as_mut_ptr(), name.len()), MfgStatus::Ok);
        assert_eq!(CStr::from_ptr(name.as_ptr()).to_str().unwrap(), "m");
        mfg_field_free(field);

        let mut w = ptr::null_mut();
        let path = cstr(dir.path().join("w.bin").to_str().unwrap());
        assert_eq!(mfg_field_read(path.as_ptr(), &mut w), MfgStatus::Ok);
        assert_eq!(mfg_field_info(w, &mut info), MfgStatus::Ok);
        assert_eq!((info.components, info.rows), (1, 64));
        mfg_field_free(w);

        mfg_solution_free(solution);
        mfg_problem_free(problem);
    }
}

#[test]
fn bad_inputs_map_to_status_codes() {
    let mut problem = ptr::null_mut();
    let mut field = ptr::null_mut();
    unsafe {
        assert_eq!(mfg_problem_from_scenario(cstr("nope").as_ptr(), &mut problem), MfgStatus::Config);
        assert!(last_error().contains("trivial"));
        assert_eq!(mfg_problem_from_scenario(ptr::null(), &mut problem), MfgStatus::NullPointer);
        let invalid = [0xffu8 as c_char, 0];
        assert_eq!(mfg_problem_from_scenario(invalid.as_ptr(), &mut problem), MfgStatus::Utf8);
        assert_eq!(mfg_problem_from_toml(cstr("[problem]\ndim = 1").as_ptr(), &mut problem), MfgStatus::Config);
        assert_eq!(mfg_field_read(cstr("/nonexistent/m.bin").as_ptr(), &mut field), MfgStatus::Io);
        assert!(problem.is_null() && field.is_null());
        let dir = tempfile::tempdir().unwrap();
        let junk = dir.path().join("junk.bin");
        std::fs::write(&junk, b"not a field\n").unwrap();
        assert_eq!(mfg_field_read(cstr(junk.to_str().unwrap()).as_ptr(), &mut field), MfgStatus::Format);
        let mut s = MfgSolveSummary::default();
        assert_eq!(mfg_solution_summary(ptr::null(), &mut s), MfgStatus::NullPointer);
        mfg_problem_free(ptr::null_mut());
        mfg_solution_free(ptr::null_mut());
        mfg_field_free(ptr::null_mut());
    }
}

#[test]
fn problem_from_inline_toml() {
    let text = r#"
[problem]
dim = 2
nx = 8
ny = 8
nt = 8
horizon = 1.0
coupling = { kind = "power", alpha = 1.0 }
potential = { kind = "zero" }
m0 = { kind = "uniform" }
mt = { kind = "uniform" }

[solver]
max_iters = 200
"#;
    let mut problem = ptr::null_mut();
    let mut solution = ptr::null_mut();
    let mut summary = MfgSolveSummary::default();
    unsafe {
        assert_eq!(mfg_problem_from_toml(cstr(text).as_ptr(), &mut problem), MfgStatus::Ok, "{}", last_error());
        assert_eq!(mfg_solve(problem, &mut solution), MfgStatus::Ok);
        assert_eq!(mfg_solution_summary(solution, &mut summary), MfgStatus::Ok);
        mfg_solution_free(solution);
        mfg_problem_free(problem);
    }
    assert!(summary.converged);
    assert!((summary.min_density - 1.0).abs() < 1e-10);
}

#[test]
fn cli_entry_point() {
    let args: Vec<CString> =
        ["mfgplan", "lemma-bound", "--a", "1", "--b", "1", "--c", "0", "--observed", "3"].map(cstr).into();
    let argv: Vec<*const c_char> = args.iter().map(|a| a.as_ptr()).collect();
    assert_eq!(unsafe { mfg_run_cli(argv.len() as i32, argv.as_ptr()) }, 2);
    assert_eq!(unsafe { mfg_run_cli(1, ptr::null()) }, 1);
}

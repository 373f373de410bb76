use std::path::{Path, PathBuf};
use std::process::Command;

/// Directory holding the cdylib built alongside this test binary.
fn lib_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_path_buf()
}

#[test]
fn c_program_builds_and_runs_against_header() {
    let lib = lib_dir();
    if !lib.join("libmfgplan_ffi.so").exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler or no shared library in {}", lib.display());
        return;
    }
    let crate_dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let status = Command::new("cc")
        .args(["-std=c11", "-Wall", "-Werror", "-o"])
        .arg(&exe)
        .arg(crate_dir.join("examples/c/smoke.c"))
        .arg(format!("-I{}", crate_dir.join("include").display()))
        .arg(format!("-L{}", lib.display()))
        .arg(format!("-Wl,-rpath,{}", lib.display()))
        .arg("-lmfgplan_ffi")
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{text}{}", String::from_utf8_lossy(&out.stderr));
    assert!(text.contains("bound 4.000000"), "{text}");
    assert!(text.contains("grid 64x32 converged 1 m[0] 1.000000"), "{text}");
}

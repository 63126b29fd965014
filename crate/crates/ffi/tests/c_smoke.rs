use std::path::PathBuf;
use std::process::Command;

/// Compiles a C program against the generated header and static library.
#[test]
fn c_program_links_and_runs() {
    if Command::new("cc").arg("--version").output().is_err() {
        eprintln!("no C compiler; skipping");
        return;
    }
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    // `cargo test` does not produce the staticlib, so build it into a
    // separate directory under target/ (target/<profile>/deps/<test binary>)
    let exe_path = std::env::current_exe().unwrap();
    let target_dir = exe_path.ancestors().nth(3).unwrap().join("c-smoke");
    let cargo = std::env::var("CARGO").unwrap_or_else(|_| "cargo".into());
    let built = Command::new(cargo)
        .args(["build", "--quiet", "-p", "caet-ffi", "--lib", "--target-dir"])
        .arg(&target_dir)
        .current_dir(&manifest)
        .status()
        .unwrap();
    assert!(built.success(), "building the static library failed");
    let lib = target_dir.join("debug/libcaet_ffi.a");
    let out_dir = tempfile::tempdir().unwrap();
    let exe = out_dir.path().join("smoke");
    let status = Command::new("cc")
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "smoke program exited with {:?}", run.status.code());
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), env!("CARGO_PKG_VERSION"));
}

use std::path::Path;
use std::process::Command;

#[test]
fn header_declares_the_abi() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/ghostlab.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "gl_last_error_message",
        "gl_patterns_speckle",
        "gl_patterns_free",
        "gl_pinv_new",
        "gl_pinv_solve",
        "gl_reconstruct_fista",
        "gl_run_command",
        "GL_STATUS_BUFFER_TOO_SMALL",
        "typedef struct GlPatterns GlPatterns;",
    ] {
        assert!(text.contains(name), "{name} missing from header");
    }
}

#[test]
fn header_compiles_as_c() {
    let Ok(cc) = Command::new("cc").arg("--version").output() else {
        eprintln!("no C compiler; skipping");
        return;
    };
    assert!(cc.status.success());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"ghostlab.h\"\nint main(void) { GlPatterns *p = 0; GlStatus s = gl_patterns_speckle(4, 8, 8, 2.0, 1, &p); gl_patterns_free(p); return s == GL_STATUS_OK ? 0 : 1; }\n",
    )
    .unwrap();
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let out = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(&include)
        .arg(&src)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

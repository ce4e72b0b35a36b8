use std::path::{Path, PathBuf};
use std::process::Command;

fn library_dir() -> PathBuf {
    // tests live in <target>/<profile>/deps; the cdylib sits one level up
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

const PROGRAM: &str = r#"
#include <math.h>
#include <stdio.h>
#include <string.h>
#include "delaysgd.h"

int main(void) {
    double y[3] = {2.0, 0.0, 0.0}, p[3];
    const char *ball = "{\"kind\": \"l2ball\", \"center\": [0, 0, 0], \"radius\": 1}";
    if (dsgd_project(ball, y, 3, p) != DSGD_STATUS_OK) return 1;
    if (fabs(p[0] - 1.0) > 1e-12 || p[1] != 0.0) return 2;
    DsgdExperiment *exp = NULL;
    if (dsgd_experiment_from_json("{}", &exp) != DSGD_STATUS_CONFIG) return 3;
    if (exp != NULL || dsgd_last_error_message() == NULL) return 4;
    double r;
    if (dsgd_neighborhood_radius(1, 1.0, 0.0, 1.0, 1.0, 0.5, 0, 0.0, &r) != DSGD_STATUS_OK) return 5;
    if (fabs(r - 0.5) > 1e-12) return 6;
    printf("%s\n", dsgd_version());
    return 0;
}
"#;

#[test]
fn header_compiles_and_links_from_c() {
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    assert!(include.join("delaysgd.h").is_file());
    let lib = library_dir();
    assert!(lib.join("libdelaysgd_ffi.so").is_file(), "cdylib missing in {}", lib.display());
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("smoke.c");
    let bin = tmp.path().join("smoke");
    std::fs::write(&src, PROGRAM).unwrap();
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror"])
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg("-L")
        .arg(&lib)
        .arg(format!("-Wl,-rpath,{}", lib.display()))
        .args(["-ldelaysgd_ffi", "-lm", "-o"])
        .arg(&bin)
        .status()
        .expect("a C compiler is available");
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), env!("CARGO_PKG_VERSION"));
}

//! Compiles and runs a small C program against the generated header and the
//! static library. Skipped when no C compiler is on PATH.

use std::path::PathBuf;
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "medbias.h"

int main(void) {
    double v = -1.0;
    if (medbias_med_bias(0.3, 0.4, &v) != MEDBIAS_STATUS_OK || v < 0.1999 || v > 0.2001) return 1;
    if (medbias_med_bias(2.0, 0.4, &v) != MEDBIAS_STATUS_INVALID_ARGUMENT) return 2;
    if (strlen(medbias_last_error()) == 0) return 3;

    double data[] = {4.0, 1.0, 3.0};
    MedbiasObjective *h = NULL;
    if (medbias_objective_new("{\"kind\":\"abs_dev\"}", data, 3, &h) != MEDBIAS_STATUS_OK) return 4;
    double theta = 0.0;
    if (medbias_objective_minimize(h, -10.0, 10.0, &theta) != MEDBIAS_STATUS_OK) return 5;
    medbias_objective_free(h);
    if (theta < 2.999999 || theta > 3.000001) return 6;
    printf("ok %.6f\n", theta);
    return 0;
}
"#;

#[test]
fn c_program_links_and_runs() {
    let Some(cc) = ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok())
    else {
        eprintln!("no C compiler found, skipping");
        return;
    };
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(|p| p.parent()).unwrap().to_path_buf();
    let lib = profile_dir.join("libmedbias_ffi.a");
    if !lib.exists() {
        eprintln!("{} not built, skipping", lib.display());
        return;
    }
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    let bin = dir.path().join("smoke");
    std::fs::write(&src, PROGRAM).unwrap();
    let status = Command::new(cc)
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok 3.000000");
}

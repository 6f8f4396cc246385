//! Acceptance gate for the command-line layer: the shipped default
//! experiment must rerun bit-identically, seed in, bytes out.

use std::fs;
use std::path::Path;
use std::process::Command;

fn report(ok: bool, name: &str, detail: &str) {
    println!(
        "[{}] criterion 10 ({name}): {detail}",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "criterion 10 ({name}): {detail}");
}

#[test]
fn acceptance_10_default_config_reruns_byte_identical() {
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml");
    let out_a = tempfile::tempdir().unwrap();
    let out_b = tempfile::tempdir().unwrap();
    for out in [&out_a, &out_b] {
        let output = Command::new(env!("CARGO_BIN_EXE_stoheat"))
            .args(["run", "--config"])
            .arg(&config)
            .arg("--output")
            .arg(out.path())
            .output()
            .expect("binary runs");
        assert!(
            output.status.success(),
            "default run failed: {}",
            String::from_utf8_lossy(&output.stderr)
        );
    }
    let mut identical = true;
    let mut detail = String::new();
    for name in [
        "weak_rate.csv",
        "strong_rate.csv",
        "moments.csv",
        "weak_rate.json",
        "strong_rate.json",
    ] {
        let a = fs::read(out_a.path().join(name)).unwrap();
        let b = fs::read(out_b.path().join(name)).unwrap();
        let same = a == b;
        identical &= same;
        detail.push_str(&format!(
            "{name}: {} bytes, {}; ",
            a.len(),
            if same { "equal" } else { "DIFFER" }
        ));
    }
    report(identical, "shipped config reproducibility", &detail);
}

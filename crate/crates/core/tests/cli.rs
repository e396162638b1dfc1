use std::path::Path;
use std::process::Command;

fn run(config: &str, ext: &str) -> (i32, String) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join(format!("cfg.{ext}"));
    std::fs::write(&cfg, config).unwrap();
    let out = dir.path().join("out");
    let o = Command::new(env!("CARGO_BIN_EXE_mrlab"))
        .arg("run")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    let text = String::from_utf8_lossy(&o.stdout).to_string() + &String::from_utf8_lossy(&o.stderr);
    (o.status.code().unwrap_or(-1), text)
}

fn shipped(name: &str) -> String {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn heat_config_exits_zero() {
    let (code, text) = run(&shipped("heat.toml"), "toml");
    assert_eq!(code, 0, "{text}");
}

#[test]
fn backward_heat_is_rejected_as_input() {
    let (code, text) = run(&shipped("nonelliptic.toml"), "toml");
    assert_eq!(code, 2, "{text}");
    assert!(text.contains("ellipticity"), "{text}");
}

#[test]
fn empty_sweep_is_rejected() {
    let (code, _) = run("seed = 1\nexperiments = []\n", "toml");
    assert_eq!(code, 2);
}

#[test]
fn malformed_json_is_rejected() {
    let (code, _) = run("{\"experiments\": [", "json");
    assert_eq!(code, 2);
}

#[test]
fn randomized_experiment_needs_a_seed() {
    let cfg = "[[experiments]]\nkind = \"rbound\"\nname = \"r\"\ngrid = { n = 8 }\nfamily = { kind = \"identity\" }\nkernels = [{ shape = \"box\", scale = 0.2 }]\nn = [2]\n";
    let (code, text) = run(cfg, "toml");
    assert_eq!(code, 2, "{text}");
}

#[test]
fn report_lands_in_the_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("w.json");
    std::fs::write(
        &cfg,
        r#"{"seed": 3, "experiments": [{"kind": "weights", "name": "w", "p": 2.0, "alphas": [0.5], "levels": [4, 5, 6]}]}"#,
    )
    .unwrap();
    let out = dir.path().join("o");
    let st = Command::new(env!("CARGO_BIN_EXE_mrlab")).arg("run").arg(&cfg).arg("--out").arg(&out).status().unwrap();
    assert_eq!(st.code(), Some(0));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["failed"], serde_json::json!([]));
    assert!(out.join("w_ap.csv").exists());
}

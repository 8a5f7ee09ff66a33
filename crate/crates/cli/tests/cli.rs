use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gperiodic"))
}

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

#[test]
fn missing_config_is_a_usage_error() {
    let out = bin().args(["--config", "does/not/exist.toml", "run"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("does/not/exist.toml"));

    let out = bin().arg("run").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_scenario_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "name = \"x\"\n[graph]\nkind = \"moebius\"\n").unwrap();
    let out = bin().arg("--config").arg(&path).arg("run").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn tree_scenario_passes_and_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .arg("--config")
        .arg(scenario("tree3_comb.toml"))
        .arg("--max-depth")
        .arg("4")
        .arg("--out")
        .arg(dir.path())
        .arg("run")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("tree3_comb.json")).unwrap()).unwrap();
    assert_eq!(json["passed"], true);
    assert_eq!(json["depths"].as_array().unwrap().len(), 3);

    // The report subcommand reproduces the CSV from the JSON.
    let csv_dir = dir.path().join("csv");
    let status = bin()
        .arg("--config")
        .arg(dir.path().join("tree3_comb.json"))
        .arg("--out")
        .arg(&csv_dir)
        .arg("report")
        .output()
        .unwrap()
        .status;
    assert!(status.success());
    let csv = std::fs::read_to_string(csv_dir.join("tree3_comb.csv")).unwrap();
    assert!(csv.starts_with("depth,lambda0_upper,delta"));
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn parallel_run_is_deterministic() {
    let run = |dir: &std::path::Path| {
        let out = bin()
            .arg("--config")
            .arg(scenario("tree3_star.toml"))
            .arg("--config")
            .arg(scenario("single_vertex.toml"))
            .arg("--max-depth")
            .arg("4")
            .arg("--out")
            .arg(dir)
            .arg("run")
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::read_to_string(dir.join("tree3_star.csv")).unwrap()
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(run(a.path()), run(b.path()));
}

#[test]
fn graph_command_approaches_tree_bottom() {
    let out = bin().args(["--max-depth", "10", "--format", "csv", "graph", "--family", "tree"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let last: f64 = text.lines().last().unwrap().split(',').nth(1).unwrap().parse().unwrap();
    let bottom = 3.0 - 2.0 * 2f64.sqrt();
    assert!(last > bottom && last < bottom + 0.15, "{last}");
}

#[test]
fn cell_and_tube_commands_report_json() {
    let out = bin().args(["cell", "--kind", "balanced-comb", "--valence", "2", "--mesh-step", "0.05"]).output().unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let l0 = v["lambda0"].as_f64().unwrap();
    assert!((l0 - std::f64::consts::PI.powi(2) / 4.0).abs() < 5e-3, "{l0}");
    assert_eq!(v["recollement"]["ok"], true);

    let out = bin().arg("--config").arg(scenario("tubes/wavy_exp.json")).arg("tube").output().unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["g_t_energy"].as_f64().unwrap() >= v["g_inf_energy"].as_f64().unwrap());

    let out = bin().arg("tube").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

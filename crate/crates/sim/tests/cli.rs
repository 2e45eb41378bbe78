use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use cpsl_sim::experiments::{MetricsRow, ProfileRow};
use cpsl_sim::report::read_csv;

fn sim(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cpsl-sim")).arg("--out").arg(dir).args(args).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) {
    let out = sim(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn write_scenario(dir: &Path, edit: impl FnOnce(&mut serde_json::Value)) -> String {
    let text = fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/data/default.json")).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    edit(&mut v);
    let path = dir.join("scenario.json");
    fs::write(&path, serde_json::to_string(&v).unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn profile_writes_every_cut_with_a_stamp() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["profile"]);
    let path = dir.path().join("profile.csv");
    let text = fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# scenario="));
    assert!(lines.next().unwrap().starts_with("cut,layer,xi_d_bits"));
    let rows: Vec<ProfileRow> = read_csv(&path).unwrap();
    assert_eq!(rows.len(), 12);
    assert_eq!(rows[2].layer, "POOL1");
}

#[test]
fn reruns_are_byte_identical_for_any_worker_count() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["--preset", "heterogeneous", "--seed", "4", "optimize", "--iterations", "200"];
    ok(a.path(), &args);
    ok(b.path(), &[&args[..], &["--jobs", "1"]].concat());
    for name in ["gibbs_trace.csv", "assignment.json"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
    let sweep = ["--preset", "heterogeneous", "sweep", "--subcarriers", "10,30", "--seeds", "3"];
    ok(a.path(), &sweep);
    ok(b.path(), &[&sweep[..], &["--jobs", "2"]].concat());
    assert_eq!(fs::read(a.path().join("bandwidth_sweep_runs.csv")).unwrap(), fs::read(b.path().join("bandwidth_sweep_runs.csv")).unwrap());
}

#[test]
fn latency_reports_all_schemes() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["latency", "--devices", "10", "--clusters", "2"]);
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("latency_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["n_devices"], 10);
    assert_eq!(summary["n_clusters"], 2);
    assert_eq!(summary["schemes"].as_array().unwrap().len(), 3);
    assert!(summary["scenario_hash"].is_string());
}

#[test]
fn training_writes_one_row_per_round_for_each_scheme() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["train", "--rounds", "3", "--schemes", "CL,SL,CPSL,FL"]);
    for s in ["cl", "sl", "cpsl", "fl"] {
        let rows: Vec<MetricsRow> = read_csv(&dir.path().join(format!("metrics_{s}.csv"))).unwrap();
        assert_eq!(rows.len(), 3, "{s}");
        assert_eq!(rows[0].simulated_elapsed_s.is_none(), s == "cl");
        assert!(dir.path().join(format!("model_{s}.json")).exists());
    }
}

#[test]
fn failures_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| sim(dir.path(), args).status.code().unwrap();

    let zero = write_scenario(dir.path(), |v| v["env"]["subcarriers"] = 0.into());
    assert_eq!(code(&["--config", &zero, "latency"]), 2);

    let unknown = write_scenario(dir.path(), |v| v["env"]["antennas"] = 4.into());
    assert_eq!(code(&["--config", &unknown, "latency"]), 2);

    let scarce = write_scenario(dir.path(), |v| v["env"]["subcarriers"] = 3.into());
    assert_eq!(code(&["--config", &scarce, "latency"]), 3);

    assert_eq!(code(&["optimize", "--oracle"]), 4);
    assert_eq!(code(&["train", "--schemes", "XL"]), 2);
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use repshare::experiment::{
    read_aggregate_csv, rederive_aggregate, ExperimentKind, ExperimentSpec, Sweep,
};
use repshare::sim::parse_scenario;
use tempfile::TempDir;

const SCENARIO: &str = "
n_nodes = 30
iterations = 80
acquaintance = 20
free_rider_pct = 10

[[groups]]
label = \"low\"
count = 15
shared_capacity = 4

[[groups]]
label = \"high\"
count = 15
shared_capacity = 12
";

fn repshare(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_repshare"))
        .args(args)
        .env_remove("REPSHARE_OUT")
        .output()
        .unwrap()
}

fn write_scenario(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("scenario.toml");
    fs::write(&p, text).unwrap();
    p
}

fn files_in(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    v.sort();
    v
}

#[test]
fn sweep_writes_one_file_per_run() {
    let tmp = TempDir::new().unwrap();
    let scen = write_scenario(tmp.path(), SCENARIO);
    let out = tmp.path().join("out");
    let o = repshare(&[
        "run",
        "--scenario",
        scen.to_str().unwrap(),
        "--sweep",
        "serving.theta=0.5,2",
        "--seed",
        "1,2",
        "--out",
        out.to_str().unwrap(),
        "--window",
        "20",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("# sweep serving.theta = 0.5,2"));
    assert!(stdout.contains("n_nodes = 30"));

    let dir = out.join("custom");
    assert_eq!(
        files_in(&dir),
        [
            "aggregate.csv",
            "manifest.json",
            "run_0.5_seed1.csv",
            "run_0.5_seed2.csv",
            "run_2_seed1.csv",
            "run_2_seed2.csv",
        ]
    );
    let run = fs::read_to_string(dir.join("run_2_seed1.csv")).unwrap();
    let mut lines = run.lines();
    assert_eq!(
        lines.next().unwrap(),
        "iteration,node,group,need,requested,received,served,queries,resolved,probes"
    );
    assert_eq!(lines.count(), 30 * 80);

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["experiment"], "custom");
    assert_eq!(manifest["runs"].as_array().unwrap().len(), 4);

    // The aggregate follows from the run files alone.
    let spec = ExperimentSpec {
        kind: ExperimentKind::Custom,
        base: parse_scenario(&scen).unwrap(),
        sweep: Some("serving.theta=0.5,2".parse::<Sweep>().unwrap()),
        seeds: vec![1, 2],
        output: out.clone(),
        window: 20,
        jobs: 1,
    };
    let written = read_aggregate_csv(&dir.join("aggregate.csv")).unwrap();
    let derived = rederive_aggregate(&spec).unwrap();
    assert_eq!(written.len(), derived.len());
    for (w, d) in written.iter().zip(&derived) {
        assert_eq!(
            (&w.sweep_value, &w.group, &w.metric),
            (&d.sweep_value, &d.group, &d.metric)
        );
        assert!((w.mean - d.mean).abs() <= 1e-6, "{w:?} vs {d:?}");
        assert!((w.stddev - d.stddev).abs() <= 1e-6, "{w:?} vs {d:?}");
    }
}

#[test]
fn invocations_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let scen = write_scenario(tmp.path(), SCENARIO);
    let mut outputs = Vec::new();
    for (name, jobs) in [("a", "1"), ("b", "2")] {
        let out = tmp.path().join(name);
        let o = repshare(&[
            "run",
            "--scenario",
            scen.to_str().unwrap(),
            "--seed",
            "5,6",
            "--jobs",
            jobs,
            "--quiet",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success());
        outputs.push(out.join("custom"));
    }
    let names = files_in(&outputs[0]);
    assert_eq!(names, files_in(&outputs[1]));
    for n in names {
        assert_eq!(
            fs::read(outputs[0].join(&n)).unwrap(),
            fs::read(outputs[1].join(&n)).unwrap(),
            "{n} differs"
        );
    }
}

#[test]
fn oracle_check_exit_codes() {
    let ok = repshare(&["oracle-check", "--trials", "200"]);
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("oracle check passed"));

    let bad = repshare(&["oracle-check", "--trials", "200", "--corrupt"]);
    assert_eq!(bad.status.code(), Some(2));
    let text = String::from_utf8_lossy(&bad.stdout);
    assert!(text.contains("oracle check FAILED"));
    assert!(text.contains("worst instance"));
}

#[test]
fn bad_input_exits_with_one() {
    let tmp = TempDir::new().unwrap();
    let scen = write_scenario(tmp.path(), "n_nodes = \"many\"\n");
    let o = repshare(&[
        "run",
        "--scenario",
        scen.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("n_nodes"));

    let scen = write_scenario(
        tmp.path(),
        "n_nodes = 10\niterations = 5\nacquaintance = 50\n",
    );
    let o = repshare(&[
        "run",
        "--scenario",
        scen.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));

    assert_eq!(
        repshare(&["experiment", "--kind", "nope"]).status.code(),
        Some(1)
    );
    assert_eq!(repshare(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(repshare(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_scenario_file_is_reported() {
    let o = repshare(&["run", "--scenario", "/nonexistent/s.toml"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/s.toml"));
}

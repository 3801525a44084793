use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stackedcp"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const BASE: &str = r#"
schema_version = 1
seed = 11
t_end = 4.0
replicas = 2
observers = ["snapshots", "density", "final"]

[params]
lambda10 = 2.0
lambda20 = 2.5
lambda21 = 1.5
delta = 0.5
side = 40
"#;

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

fn simulate(config: &str, out: &Path) -> Output {
    run(&["--config", config, "--out", out.to_str().unwrap(), "simulate"])
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn simulate_is_byte_reproducible() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "exp.toml", BASE);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    fs::create_dir_all(&a).unwrap();
    fs::create_dir_all(&b).unwrap();
    assert_eq!(code(&simulate(&cfg, &a)), 0);
    assert_eq!(code(&simulate(&cfg, &b)), 0);
    let (fa, fb) = (read_dir_sorted(&a), read_dir_sorted(&b));
    let names: Vec<&str> = fa.iter().map(|f| f.0.as_str()).collect();
    assert_eq!(
        names,
        [
            "density_r000.csv",
            "density_r001.csv",
            "final_r000.json",
            "final_r001.json",
            "manifest.json",
            "snapshots_r000.csv",
            "snapshots_r001.csv",
            "summary.json"
        ]
    );
    assert_eq!(fa, fb);
    // the two replicas use different streams
    assert_ne!(fa[5].1, fa[6].1);

    let manifest: serde_json::Value = serde_json::from_slice(&fa[4].1).unwrap();
    assert_eq!(manifest["seed"], 11);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["files"].as_array().unwrap().len(), 7);
}

#[test]
fn seed_flag_overrides_and_changes_output() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "exp.toml", BASE);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    fs::create_dir_all(&a).unwrap();
    fs::create_dir_all(&b).unwrap();
    assert_eq!(code(&simulate(&cfg, &a)), 0);
    let o = run(&["--config", &cfg, "--seed", "12", "--out", b.to_str().unwrap(), "simulate"]);
    assert_eq!(code(&o), 0);
    assert_ne!(fs::read(a.join("snapshots_r000.csv")).unwrap(), fs::read(b.join("snapshots_r000.csv")).unwrap());
}

#[test]
fn zero_horizon_writes_only_the_initial_snapshot() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "exp.toml", &BASE.replace("t_end = 4.0", "t_end = 0.0"));
    assert_eq!(code(&simulate(&cfg, tmp.path())), 0);
    let text = fs::read_to_string(tmp.path().join("snapshots_r000.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2, "{text}");
    assert_eq!(lines[0], "t,count0,count1,count2");
    assert!(lines[1].starts_with("0,"));
    let dens = fs::read_to_string(tmp.path().join("density_r000.csv")).unwrap();
    assert_eq!(dens.lines().count(), 2);
}

#[test]
fn config_errors_exit_1() {
    let tmp = TempDir::new().unwrap();
    let good = write_config(tmp.path(), "exp.toml", BASE);
    let missing_dir = tmp.path().join("nope");
    let o = simulate(&good, &missing_dir);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("does not exist"));

    let cases = [
        ("noseed.toml", BASE.replace("seed = 11\n", "")),
        ("schema.toml", BASE.replace("schema_version = 1", "schema_version = 9")),
        ("replicas.toml", BASE.replace("replicas = 2", "replicas = 0")),
        ("rate.toml", BASE.replace("lambda10 = 2.0", "lambda10 = -1.0")),
        ("unknown.toml", format!("colour = \"red\"\n{BASE}")),
    ];
    for (name, text) in cases {
        let cfg = write_config(tmp.path(), name, &text);
        let o = simulate(&cfg, tmp.path());
        assert_eq!(code(&o), 1, "{name}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let o = run(&["--out", tmp.path().to_str().unwrap(), "simulate"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn missing_seed_can_come_from_the_flag() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "exp.toml", &BASE.replace("seed = 11\n", ""));
    let o = run(&["--config", &cfg, "--seed", "3", "--out", tmp.path().to_str().unwrap(), "simulate"]);
    assert_eq!(code(&o), 0);
}

#[test]
fn json_configs_are_accepted() {
    let tmp = TempDir::new().unwrap();
    let json = r#"{"schema_version": 1, "seed": 5, "t_end": 2.0,
        "params": {"lambda10": 3.0, "lambda20": 1.0, "lambda21": "inf", "delta": 0.0, "side": 30},
        "initial": {"kind": "digits", "digits": "222222000000000000111111111111"},
        "observers": ["edges"]}"#;
    let cfg = write_config(tmp.path(), "exp.json", json);
    let o = simulate(&cfg, tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let edges = fs::read_to_string(tmp.path().join("edges_r000.csv")).unwrap();
    assert!(edges.starts_with("t,r,l,d\n"));
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["edges"][0]["segregation_violations"], 0);
}

const SWEEP: &str = r#"
schema_version = 1
seed = 4
t_end = 3.0
replicas = 3

[params]
lambda10 = 0.9
lambda20 = 1.0
lambda21 = 1.0
delta = 0.5
side = 30

[[sweep]]
param = "lambda20"
values = [2.0, 1.2]

[[sweep]]
param = "delta"
from = 0.5
to = 0.25
steps = 2
"#;

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

#[test]
fn sweep_rows_are_canonical_and_carry_the_classification() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "sweep.toml", SWEEP);
    let o = run(&["--config", &cfg, "--out", tmp.path().to_str().unwrap(), "--workers", "2", "sweep"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_csv(&tmp.path().join("sweep.csv"));
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    assert_eq!(header[0], "schema_version");
    let keys: Vec<(String, String)> = rows.iter().map(|r| (r[col("lambda20")].clone(), r[col("delta")].clone())).collect();
    let want = [("1.2", "0.25"), ("1.2", "0.5"), ("2", "0.25"), ("2", "0.5")];
    assert_eq!(keys, want.map(|(a, b)| (a.to_string(), b.to_string())));
    assert!(rows.iter().all(|r| r[col("schema_version")] == "1" && r[col("replicas")] == "3"));
    // lambda20 crossing 1 + delta at lambda10 <= 1 turns on coexistence
    let outcome = |i: usize| rows[i][col("mf_outcome")].as_str().to_owned();
    assert_eq!(outcome(1), "Unclassified");
    assert_eq!(outcome(3), "Coexistence");
    assert_eq!(rows[3][col("mf_clause")], "coexistence_weak_host");
    assert_eq!(outcome(0), "Unclassified");
    assert_eq!(outcome(2), "Coexistence");
}

#[test]
fn one_point_sweep_matches_simulate() {
    let tmp = TempDir::new().unwrap();
    let text = BASE.replace("observers = [\"snapshots\", \"density\", \"final\"]", "");
    let sim = write_config(tmp.path(), "sim.toml", &text);
    let sw = write_config(tmp.path(), "sw.toml", &format!("{text}\n[[sweep]]\nparam = \"lambda10\"\nvalues = [2.0]\n"));
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    fs::create_dir_all(&a).unwrap();
    fs::create_dir_all(&b).unwrap();
    assert_eq!(code(&simulate(&sim, &a)), 0);
    assert_eq!(code(&run(&["--config", &sw, "--out", b.to_str().unwrap(), "sweep"])), 0);
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(a.join("summary.json")).unwrap()).unwrap();
    let (header, rows) = read_csv(&b.join("sweep.csv"));
    assert_eq!(rows.len(), 1);
    for (i, name) in ["u0_mean", "u1_mean", "u2_mean"].iter().enumerate() {
        let got: f64 = rows[0][header.iter().position(|h| h == name).unwrap()].parse().unwrap();
        assert_eq!(got, summary["summary"]["density"][i]["mean"].as_f64().unwrap(), "{name}");
    }
}

#[test]
fn too_many_or_unknown_sweep_axes_are_config_errors() {
    let tmp = TempDir::new().unwrap();
    let extra = format!("{SWEEP}\n[[sweep]]\nparam = \"lambda10\"\nvalues = [1.0]\n");
    let bad_name = SWEEP.replace("param = \"delta\"", "param = \"side\"");
    for (name, text) in [("three.toml", extra), ("name.toml", bad_name)] {
        let cfg = write_config(tmp.path(), name, &text);
        let o = run(&["--config", &cfg, "--out", tmp.path().to_str().unwrap(), "sweep"]);
        assert_eq!(code(&o), 1, "{name}");
    }
}

#[test]
fn classify_prints_the_outcome_and_equilibrium() {
    let o = run(&["classify", "--params", "lambda10=0.8,lambda20=0.9,lambda21=1,delta=0"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).trim(), "Extinction (0,0)");
    let o = run(&["classify", "--params", "lambda10=2,lambda20=0.5,lambda21=0.1,delta=0"]);
    assert_eq!(stdout(&o).trim(), "OnesWin (0.5,0)");
    let o = run(&["classify", "--params", "lambda10=2,lambda20=0.5"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn meanfield_reports_scan_and_trajectory() {
    let tmp = TempDir::new().unwrap();
    let o = run(&[
        "--out",
        tmp.path().to_str().unwrap(),
        "meanfield",
        "--params",
        "lambda10=2,lambda20=0.5,lambda21=3,delta=0",
        "--classify",
        "--scan",
        "6",
        "--from",
        "0.3",
        "0.3",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["classification"]["outcome"], "coexistence");
    assert!(v["basin_report"]["converged"].as_u64().unwrap() > 0);
    let end = &v["trajectory_end"]["state"];
    assert!((end["u1"].as_f64().unwrap() - 2.0 / 9.0).abs() < 1e-6);
    let traj = fs::read_to_string(tmp.path().join("trajectory.csv")).unwrap();
    assert!(traj.starts_with("t,u1,u2\n0,0.3,0.3\n"));
    assert!(tmp.path().join("meanfield.json").exists());
}

#[test]
fn oracle_check_passes_and_fails_by_tolerance() {
    let args = ["--seed", "9", "oracle-check", "--params", "lambda10=2,lambda20=1,lambda21=1.5,delta=0.5", "--start", "120"];
    let o = run(&args);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["results"].as_array().unwrap().len(), 2);
    let strict: Vec<&str> = args.iter().copied().chain(["--max-tv", "0", "--engine", "harris", "--replicas", "1000"]).collect();
    assert_eq!(code(&run(&strict)), 3);
}

#[test]
fn geometry_check_needs_a_seed_and_passes() {
    assert_eq!(code(&run(&["geometry-check", "--n", "6", "--draws", "50"])), 1);
    let o = run(&["--seed", "1", "geometry-check", "--n", "6", "--draws", "200"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["failed"], 0);
    assert_eq!(v["passed"].as_u64().unwrap() + v["vacuous"].as_u64().unwrap(), 200);
}

#[test]
fn edge_speed_reports_a_positive_slope() {
    let tmp = TempDir::new().unwrap();
    let o = run(&[
        "--seed",
        "2",
        "--out",
        tmp.path().to_str().unwrap(),
        "edge-speed",
        "--side",
        "1600",
        "--window",
        "40",
        "200",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["alpha"].as_f64().unwrap() > 0.0);
    assert!(v["r2"].as_f64().unwrap() > 0.9);
    assert!(fs::read_to_string(tmp.path().join("front.csv")).unwrap().starts_with("t,occupied,left,right\n"));
}

#[test]
fn lambda_c_rejects_a_bracket_that_does_not_straddle() {
    let o = run(&["--seed", "3", "estimate-lambda-c", "--side", "60", "--replicas", "60", "--bracket", "8", "9"]);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));
}

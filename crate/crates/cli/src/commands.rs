use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use stackedcp::blockgeom::{check_lemma_geometry, lemma_configuration, Pattern};
use stackedcp::codec::{self, Encoding};
use stackedcp::engine::series::write_snapshots;
use stackedcp::engine::{EngineKind, Observer, RecordOptions, Recorder, Trajectory};
use stackedcp::meanfield::{basin_scan, classify, equilibria, integrate, MFClassification, MFState, Outcome, Tolerance};
use stackedcp::observables::{
    estimate_lambda_c, fit_right_edge, track_edges, write_density_csv, DensityPoint, DensitySampler, FrontSampler,
    LambdaCConfig,
};
use stackedcp::oracle::oracle_vs_simulation;
use stackedcp::rng::channel;
use stackedcp::stats::{mean_se, MeanSe};
use stackedcp::{Configuration, InfectionRate, Params, State, StreamKey};

use crate::config::{self, set_param, ExperimentConfig, Loaded, ObserverKind, ParamsBlock, SCHEMA_VERSION};
use crate::{Cli, CliError, Command, EngineChoice, ParamArgs};

/// Replica ids of sweep point `k` are `k << POINT_SHIFT | r`, so point 0
/// uses the same streams as `simulate`.
const POINT_SHIFT: u32 = 24;

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Simulate => simulate(cli),
        Command::Sweep => sweep(cli),
        Command::Meanfield(a) => meanfield_cmd(cli, a),
        Command::Classify(a) => {
            let p = rates(cli, a)?;
            println!("{}", classification_line(&classify(&p)));
            Ok(())
        }
        Command::OracleCheck(a) => oracle_check(cli, a),
        Command::GeometryCheck(a) => geometry_check(cli, a),
        Command::EstimateLambdaC(a) => lambda_c(cli, a),
        Command::EdgeSpeed(a) => edge_speed(cli, a),
    }
}

fn load_config(cli: &Cli) -> Result<Loaded, CliError> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Config("this command needs --config".into()))?;
    config::load(path)
}

/// The output directory must already exist.
fn out_dir(cli: &Cli) -> Result<PathBuf, CliError> {
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    if !dir.is_dir() {
        return Err(CliError::Config(format!("output directory {} does not exist", dir.display())));
    }
    Ok(dir)
}

/// Output directory for commands whose files are optional.
fn optional_out(cli: &Cli) -> Result<Option<PathBuf>, CliError> {
    cli.out.as_ref().map(|_| out_dir(cli)).transpose()
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Runtime(format!("creating {}: {e}", path.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Runtime(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn print_json(value: &impl Serialize) {
    println!("{}", serde_json::to_string_pretty(value).expect("report serializes"));
}

fn seed(cli: &Cli, config: Option<&ExperimentConfig>) -> Result<u64, CliError> {
    config::resolve_seed(cli.seed, config.and_then(|c| c.seed))
}

/// Seed for commands where the config is optional.
fn seed_any(cli: &Cli) -> Result<u64, CliError> {
    if cli.seed.is_some() {
        return seed(cli, None);
    }
    let loaded = cli.config.as_ref().map(|p| config::load(p)).transpose()?;
    seed(cli, loaded.as_ref().map(|l| &l.config))
}

/// Rates from `--params`, filled in from the config when one is given.
fn rates(cli: &Cli, a: &ParamArgs) -> Result<Params, CliError> {
    let loaded = cli.config.as_ref().map(|p| config::load(p)).transpose()?;
    let mut block = loaded.as_ref().map(|l| l.config.params);
    if let Some(spec) = &a.params {
        block = Some(parse_params(spec, block)?);
    }
    let block = block.ok_or_else(|| CliError::Config("give --params or --config".into()))?;
    block.to_params(cli.seed.or(loaded.and_then(|l| l.config.seed)).unwrap_or(0))
}

fn parse_params(spec: &str, base: Option<ParamsBlock>) -> Result<ParamsBlock, CliError> {
    let mut l10 = base.map(|b| b.lambda10);
    let mut l20 = base.map(|b| b.lambda20);
    let mut l21 = base.map(|b| b.lambda21);
    let mut delta = base.map(|b| b.delta);
    let mut dim = base.map_or(1, |b| b.dim);
    let mut side = base.map_or(3, |b| b.side);
    for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (k, v) = item.split_once('=').ok_or_else(|| CliError::Config(format!("--params item {item:?} is not key=value")))?;
        let num = || v.trim().parse::<f64>().map_err(|_| CliError::Config(format!("--params {k}: bad number {v:?}")));
        let int = || v.trim().parse::<usize>().map_err(|_| CliError::Config(format!("--params {k}: bad integer {v:?}")));
        match k.trim() {
            "lambda10" => l10 = Some(num()?),
            "lambda20" => l20 = Some(num()?),
            "lambda21" => {
                l21 = Some(v.parse::<InfectionRate>().map_err(|e| CliError::Config(format!("--params lambda21: {e}")))?)
            }
            "delta" => delta = Some(num()?),
            "dim" => dim = int()?,
            "side" => side = int()?,
            other => return Err(CliError::Config(format!("--params: unknown key {other:?}"))),
        }
    }
    let need = |v: Option<f64>, k: &str| v.ok_or_else(|| CliError::Config(format!("--params is missing {k}")));
    Ok(ParamsBlock {
        lambda10: need(l10, "lambda10")?,
        lambda20: need(l20, "lambda20")?,
        lambda21: l21.ok_or_else(|| CliError::Config("--params is missing lambda21".into()))?,
        delta: need(delta, "delta")?,
        dim,
        side,
    })
}

fn fmt_point(s: &MFState) -> String {
    format!("({},{})", s.u1, s.u2)
}

fn outcome_name(o: Outcome) -> &'static str {
    match o {
        Outcome::Extinction => "Extinction",
        Outcome::Coexistence => "Coexistence",
        Outcome::OnesWin => "OnesWin",
        Outcome::TwosWin => "TwosWin",
        Outcome::Unclassified => "Unclassified",
    }
}

/// `Extinction (0,0)`, `OnesWin (0.5,0)`, `Unclassified: <note>` and so on.
fn classification_line(c: &MFClassification) -> String {
    match (&c.equilibrium, &c.note) {
        (Some(e), _) => format!("{} {}", outcome_name(c.outcome), fmt_point(e)),
        (None, Some(n)) => format!("{}: {n}", outcome_name(c.outcome)),
        (None, None) => outcome_name(c.outcome).to_string(),
    }
}

// ---------------------------------------------------------------- simulate

struct ReplicaRun {
    traj: Trajectory,
    density: Vec<DensityPoint>,
}

fn run_replica(c: &ExperimentConfig, p: &Params, key: StreamKey) -> Result<ReplicaRun, CliError> {
    let cfg0 = c.initial.build(p, key)?;
    let opts = RecordOptions {
        events: c.observers.contains(&ObserverKind::Edges),
        null_events: false,
        snapshot_dt: Some(c.dt),
        snapshot_states: false,
    };
    let mut rec = Recorder::new(opts, c.t_end);
    let mut dens = DensitySampler::new(c.dt, c.t_end)?;
    let mut obs = (&mut rec, &mut dens);
    if c.t_end == 0.0 {
        // nothing happens; the series hold the initial snapshot only
        obs.start(0.0, &cfg0);
        obs.finish(0.0, &cfg0);
    } else {
        c.engine.run_with(&cfg0, p, c.t_end, key, &mut obs)?;
    }
    Ok(ReplicaRun { traj: rec.into_trajectory(), density: dens.into_points() })
}

/// Terminal statistics over the replicas of one parameter point.
#[derive(Clone, Debug, Serialize)]
struct PointSummary {
    replicas: usize,
    density: [MeanSe; 3],
    /// Fraction of replicas with an occupied site at `t_end`.
    host_survival: f64,
    /// Fraction of replicas with a 2 at `t_end`.
    symbiont_survival: f64,
}

impl PointSummary {
    fn new(finals: &[Configuration]) -> Self {
        let n = finals.len();
        let col = |i: usize| finals.iter().map(|c| c.densities()[i]).collect::<Vec<_>>();
        let frac = |f: &dyn Fn(&Configuration) -> bool| finals.iter().filter(|c| f(c)).count() as f64 / n as f64;
        Self {
            replicas: n,
            density: [mean_se(&col(0)), mean_se(&col(1)), mean_se(&col(2))],
            host_survival: frac(&|c| c.count(State::Empty) < c.n_sites()),
            symbiont_survival: frac(&|c| c.count(State::Infected) > 0),
        }
    }
}

#[derive(Serialize)]
struct FileEntry {
    path: String,
    sha256: String,
}

fn manifest(
    command: &str,
    loaded: &Loaded,
    seed: u64,
    out: &Path,
    files: &[String],
) -> Result<serde_json::Value, CliError> {
    let entries = files
        .iter()
        .map(|f| {
            let bytes = std::fs::read(out.join(f))?;
            Ok(FileEntry { path: f.clone(), sha256: config::sha256_hex(&bytes) })
        })
        .collect::<Result<Vec<_>, std::io::Error>>()?;
    Ok(json!({
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "tool": { "name": "stackedcp", "version": env!("CARGO_PKG_VERSION") },
        "config_sha256": loaded.sha256,
        "seed": seed,
        "config": loaded.config,
        "files": entries,
    }))
}

fn simulate(cli: &Cli) -> Result<(), CliError> {
    let loaded = load_config(cli)?;
    let c = &loaded.config;
    let seed = seed(cli, Some(c))?;
    let out = out_dir(cli)?;
    let p = c.params.to_params(seed)?;
    let runs: Vec<ReplicaRun> =
        (0..c.replicas).into_par_iter().map(|r| run_replica(c, &p, StreamKey::new(seed, r))).collect::<Result<_, _>>()?;

    let mut files = Vec::new();
    let mut taus = Vec::new();
    for (r, run) in runs.iter().enumerate() {
        for obs in &c.observers {
            let name = match obs {
                ObserverKind::Snapshots => format!("snapshots_r{r:03}.csv"),
                ObserverKind::Density => format!("density_r{r:03}.csv"),
                ObserverKind::Edges => format!("edges_r{r:03}.csv"),
                ObserverKind::Final => format!("final_r{r:03}.json"),
            };
            let mut w = create(&out.join(&name))?;
            match obs {
                ObserverKind::Snapshots => write_snapshots(&mut w, &run.traj, &[], |_| Vec::new())?,
                ObserverKind::Density => write_density_csv(&mut w, &run.density)?,
                ObserverKind::Edges => {
                    let series = track_edges(&run.traj, &p)?;
                    series.write_csv(&mut w)?;
                    taus.push(json!({
                        "replica": r,
                        "tau": series.tau.tau,
                        "censored": series.tau.censored,
                        "segregation_violations": series.segregation_violations,
                    }));
                }
                ObserverKind::Final => {
                    writeln!(w, "{}", codec::to_json(run.traj.final_state(), Some(&p), Encoding::Digits))?
                }
            }
            w.flush()?;
            files.push(name);
        }
    }
    let finals: Vec<Configuration> = runs.iter().map(|r| r.traj.final_state().clone()).collect();
    let mut summary = json!({
        "schema_version": SCHEMA_VERSION,
        "params": p,
        "t_end": c.t_end,
        "summary": PointSummary::new(&finals),
        "meanfield": classify(&p),
    });
    if !taus.is_empty() {
        summary["edges"] = serde_json::Value::Array(taus);
    }
    write_json(&out.join("summary.json"), &summary)?;
    files.push("summary.json".into());
    write_json(&out.join("manifest.json"), &manifest("simulate", &loaded, seed, &out, &files)?)?;
    eprintln!("wrote {} files to {}", files.len() + 1, out.display());
    Ok(())
}

// ------------------------------------------------------------------- sweep

fn sweep(cli: &Cli) -> Result<(), CliError> {
    let loaded = load_config(cli)?;
    let c = &loaded.config;
    let seed = seed(cli, Some(c))?;
    let out = out_dir(cli)?;
    if c.sweep.is_empty() {
        return Err(CliError::Config("sweep needs at least one [[sweep]] axis".into()));
    }
    if c.replicas >= 1 << POINT_SHIFT {
        return Err(CliError::Config(format!("sweeps allow at most {} replicas", (1u64 << POINT_SHIFT) - 1)));
    }
    let axes: Vec<(String, Vec<f64>)> =
        c.sweep.iter().map(|a| Ok((a.param.clone(), a.values()?))).collect::<Result<_, CliError>>()?;
    // first axis varies slowest; both ascending
    let mut points: Vec<Vec<f64>> = vec![Vec::new()];
    for (_, values) in &axes {
        points = points.into_iter().flat_map(|pt| values.iter().map(move |v| [pt.clone(), vec![*v]].concat())).collect();
    }
    let params: Vec<Params> = points
        .iter()
        .map(|pt| {
            let mut b = c.params;
            for ((name, _), v) in axes.iter().zip(pt) {
                set_param(&mut b, name, *v);
            }
            b.to_params(seed)
        })
        .collect::<Result<_, _>>()?;

    let r_count = c.replicas;
    let finals: Vec<Configuration> = (0..params.len() as u64 * r_count)
        .into_par_iter()
        .map(|task| {
            let (k, r) = (task / r_count, task % r_count);
            let p = &params[k as usize];
            let key = StreamKey::new(seed, (k << POINT_SHIFT) | r);
            let cfg0 = c.initial.build(p, key)?;
            if c.t_end == 0.0 {
                return Ok(cfg0);
            }
            Ok(c.engine.run_with(&cfg0, p, c.t_end, key, &mut ())?)
        })
        .collect::<Result<_, CliError>>()?;

    let path = out.join("sweep.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    let csv_err = |e: csv::Error| CliError::Runtime(format!("writing sweep.csv: {e}"));
    w.write_record([
        "schema_version",
        "lambda10",
        "lambda20",
        "lambda21",
        "delta",
        "dim",
        "side",
        "t_end",
        "replicas",
        "u0_mean",
        "u0_se",
        "u1_mean",
        "u1_se",
        "u2_mean",
        "u2_se",
        "host_survival",
        "symbiont_survival",
        "mf_outcome",
        "mf_clause",
    ])
    .map_err(csv_err)?;
    for (k, p) in params.iter().enumerate() {
        let chunk = &finals[k * r_count as usize..(k + 1) * r_count as usize];
        let s = PointSummary::new(chunk);
        let mf = classify(p);
        let clause = mf.clause.map(|cl| serde_json::to_value(cl).expect("clause serializes"));
        let mut row = vec![
            SCHEMA_VERSION.to_string(),
            p.lambda10.to_string(),
            p.lambda20.to_string(),
            p.lambda21.to_string(),
            p.delta.to_string(),
            p.dim.to_string(),
            p.side.to_string(),
            c.t_end.to_string(),
            s.replicas.to_string(),
        ];
        for d in &s.density {
            row.push(d.mean.to_string());
            row.push(d.se.to_string());
        }
        row.push(s.host_survival.to_string());
        row.push(s.symbiont_survival.to_string());
        row.push(outcome_name(mf.outcome).to_string());
        row.push(clause.and_then(|v| v.as_str().map(String::from)).unwrap_or_default());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    drop(w);
    let files = vec!["sweep.csv".to_string()];
    write_json(&out.join("manifest.json"), &manifest("sweep", &loaded, seed, &out, &files)?)?;
    eprintln!("wrote {} grid points to {}", params.len(), path.display());
    Ok(())
}

// --------------------------------------------------------------- meanfield

fn meanfield_cmd(cli: &Cli, a: &crate::MeanfieldArgs) -> Result<(), CliError> {
    let p = rates(cli, &a.params)?;
    let out = optional_out(cli)?;
    let bad = |e: stackedcp::Error| CliError::Config(e.to_string());
    let mut report = json!({ "params": p });
    if a.classify || (a.scan.is_none() && a.from.is_none()) {
        let c = classify(&p);
        report["classification"] = json!(c);
        report["summary"] = json!(classification_line(&c));
        report["equilibrium"] = json!(c.equilibrium);
        report["conditions"] = json!(c.conditions);
        if let Ok(all) = equilibria(&p) {
            report["equilibria"] = json!(all.iter().map(|e| json!({"point": e.point, "kind": format!("{:?}", e.kind)})).collect::<Vec<_>>());
        }
    }
    if let Some(n) = a.scan {
        report["basin_report"] = json!(basin_scan(&p, n, a.t_end).map_err(bad)?);
    }
    if let Some(from) = &a.from {
        let s0 = MFState::new(from[0], from[1]).map_err(bad)?;
        let traj = integrate(s0, &p, a.t_end, Tolerance::default())?;
        let (t, last) = traj.last();
        report["trajectory_end"] = json!({ "t": t, "state": last, "points": traj.points.len() });
        if let Some(dir) = &out {
            let mut w = csv::Writer::from_writer(create(&dir.join("trajectory.csv"))?);
            let csv_err = |e: csv::Error| CliError::Runtime(format!("writing trajectory.csv: {e}"));
            w.write_record(["t", "u1", "u2"]).map_err(csv_err)?;
            for (t, s) in &traj.points {
                w.write_record([t.to_string(), s.u1.to_string(), s.u2.to_string()]).map_err(csv_err)?;
            }
            w.flush()?;
        }
    }
    if let Some(dir) = &out {
        write_json(&dir.join("meanfield.json"), &report)?;
    }
    print_json(&report);
    Ok(())
}

// ------------------------------------------------------------------ checks

fn oracle_check(cli: &Cli, a: &crate::OracleArgs) -> Result<(), CliError> {
    let seed = seed_any(cli)?;
    let cfg0 = Configuration::from_digits(&a.start).map_err(|e| CliError::Config(format!("--start: {e}")))?;
    let mut p = rates(cli, &a.params)?;
    p.dim = 1;
    p.side = cfg0.side();
    p.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let engines: &[EngineKind] = match a.engine {
        EngineChoice::Gillespie => &[EngineKind::Gillespie],
        EngineChoice::Harris => &[EngineKind::Harris],
        EngineChoice::Both => &EngineKind::ALL,
    };
    let mut reports = Vec::new();
    let mut failed = Vec::new();
    for &engine in engines {
        let r = oracle_vs_simulation(&p, &cfg0, a.t, a.replicas, engine, StreamKey::new(seed, 0))?;
        let pass = r.tv < a.max_tv && r.max_abs_z <= a.max_z;
        if !pass {
            failed.push(format!("{engine:?}: tv {:.5}, max |z| {:.3}", r.tv, r.max_abs_z));
        }
        reports.push(json!({ "engine": engine, "pass": pass, "report": r }));
    }
    let report = json!({ "params": p, "start": a.start, "t": a.t, "replicas": a.replicas, "results": reports });
    if let Some(dir) = optional_out(cli)? {
        write_json(&dir.join("oracle.json"), &report)?;
    }
    print_json(&report);
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Check(failed.join("; ")))
    }
}

#[derive(Serialize)]
struct GeometryTally {
    n: usize,
    side: usize,
    draws: usize,
    passed: usize,
    vacuous: usize,
    failed: usize,
    first_failure: Option<stackedcp::blockgeom::LemmaCheck>,
}

fn geometry_check(cli: &Cli, a: &crate::GeometryArgs) -> Result<(), CliError> {
    let seed = seed_any(cli)?;
    let side = a.side.unwrap_or(4 * a.n);
    let mut rng = StreamKey::new(seed, 0).rng(channel::AUX, 0);
    let mut tally = GeometryTally { n: a.n, side, draws: a.draws, passed: 0, vacuous: 0, failed: 0, first_failure: None };
    for i in 0..a.draws {
        let pattern = Pattern::ALL[i % Pattern::ALL.len()];
        let cfg = lemma_configuration(side, a.n, pattern, &mut rng).map_err(|e| CliError::Config(e.to_string()))?;
        let r = check_lemma_geometry(&cfg, a.n)?;
        if !r.pass {
            tally.failed += 1;
            tally.first_failure.get_or_insert(r);
        } else if !r.hypothesis {
            tally.vacuous += 1;
        } else {
            tally.passed += 1;
        }
    }
    print_json(&tally);
    if let Some(dir) = optional_out(cli)? {
        write_json(&dir.join("geometry.json"), &tally)?;
    }
    if tally.failed == 0 {
        Ok(())
    } else {
        Err(CliError::Check(format!("{} of {} draws violate the inequalities", tally.failed, a.draws)))
    }
}

fn lambda_c(cli: &Cli, a: &crate::LambdaCArgs) -> Result<(), CliError> {
    let seed = seed_any(cli)?;
    let mut cfg = LambdaCConfig::new(a.dim, a.side, a.replicas, (a.bracket[0], a.bracket[1]), seed);
    cfg.tol = a.tol;
    cfg.horizon = a.horizon;
    let est = estimate_lambda_c(&cfg).map_err(|e| match e {
        stackedcp::Error::InvalidArgument(m) => CliError::Config(m),
        other => other.into(),
    })?;
    let report = json!({
        "lambda_c_bracket": [est.bracket.0, est.bracket.1],
        "estimate": est.estimate,
        "converged": est.converged,
        "monotone": est.monotone,
        "horizon": est.horizon,
        "details": est,
    });
    if let Some(dir) = optional_out(cli)? {
        write_json(&dir.join("lambda_c.json"), &report)?;
    }
    print_json(&report);
    if est.converged {
        Ok(())
    } else {
        Err(CliError::Check(format!("bracket width {} did not reach {}", est.width(), a.tol)))
    }
}

fn edge_speed(cli: &Cli, a: &crate::EdgeSpeedArgs) -> Result<(), CliError> {
    let seed = seed_any(cli)?;
    if a.side < 8 {
        return Err(CliError::Config("--side must be at least 8".into()));
    }
    let (w0, w1) = (a.window[0], a.window[1]);
    let p = Params::finite(a.lambda, 0.0, 0.0, 0.0, 1, a.side, seed).map_err(|e| CliError::Config(e.to_string()))?;
    // healthy block on the middle quarter, cut opposite it
    let mut cfg0 = Configuration::empty(p.lattice());
    (3 * a.side / 8..5 * a.side / 8).for_each(|x| cfg0.set(x, State::Healthy));
    let mut front = FrontSampler::new(a.side, 0, a.dt, w1).map_err(|e| CliError::Config(e.to_string()))?;
    EngineKind::Gillespie.run_with(&cfg0, &p, w1, StreamKey::new(seed, 0), &mut front)?;
    if let Some(dir) = optional_out(cli)? {
        let mut w = csv::Writer::from_writer(create(&dir.join("front.csv"))?);
        let csv_err = |e: csv::Error| CliError::Runtime(format!("writing front.csv: {e}"));
        w.write_record(["t", "occupied", "left", "right"]).map_err(csv_err)?;
        let opt = |v: Option<u32>| v.map(|x| x.to_string()).unwrap_or_default();
        for s in front.samples() {
            w.write_record([s.t.to_string(), s.occupied.to_string(), opt(s.left), opt(s.right)]).map_err(csv_err)?;
        }
        w.flush()?;
    }
    let fit = fit_right_edge(front.samples(), a.side, (w0, w1))?;
    print_json(&json!({ "alpha": fit.alpha, "intercept": fit.intercept, "r2": fit.r2, "points": fit.points, "window": [w0, w1] }));
    Ok(())
}

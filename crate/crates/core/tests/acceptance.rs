//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//! Pass a substring to run only the matching criteria.

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use stackedcp::blockgeom::{check_lemma_geometry, lemma_configuration, Pattern};
use stackedcp::engine::{coupled_run_with, EngineKind};
use stackedcp::meanfield::{basin_scan, classify, dulac_divergence, residual, Clause, MFState};
use stackedcp::model::invade_all;
use stackedcp::observables::{
    estimate_lambda_c, fit_right_edge, hull_coupling, segregated_block, CutMonitor, DensitySampler, EdgeTracker,
    FrontSampler, LambdaCConfig,
};
use stackedcp::oracle::oracle_vs_simulation;
use stackedcp::rng::channel;
use stackedcp::stats::mean_se;
use stackedcp::{Configuration, InfectionRate, Params, State, StreamKey};

type Check = fn() -> Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err(e: stackedcp::Error) -> String {
    e.to_string()
}

fn st(u1: f64, u2: f64) -> MFState {
    MFState { u1, u2 }
}

fn mf(l10: f64, l20: f64, l21: f64, delta: f64) -> Params {
    Params::finite(l10, l20, l21, delta, 1, 3, 0).expect("valid rates")
}

/// Interior equilibrium found by bisection of the healthy equation along
/// the infected nullcline `u0 = (1 + delta - lambda21 u1) / lambda20`.
fn interior_by_bisection(p: &Params) -> Option<MFState> {
    let l21 = p.lambda21.finite()?;
    let at = |u1: f64| {
        let u0 = (1.0 + p.delta - l21 * u1) / p.lambda20;
        let u2 = 1.0 - u0 - u1;
        (p.lambda10 * u1 * u0 - u1 - l21 * u1 * u2 + p.delta * u2, u2, u0)
    };
    let n = 20_000;
    let mut found = None;
    for k in 1..n {
        let (a, b) = (k as f64 / n as f64, (k + 1) as f64 / n as f64);
        let (fa, fb) = (at(a).0, at(b).0);
        if fa == 0.0 || fa * fb < 0.0 {
            let (mut lo, mut hi) = (a, b);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if (at(lo).0 < 0.0) == (at(mid).0 < 0.0) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let (_, u2, u0) = at(lo);
            if u2 > 0.0 && u0 > 0.0 {
                found = Some(st(lo, u2));
            }
        }
    }
    found
}

fn meanfield_clauses() -> Result<String, String> {
    // interior targets: 40-digit nullcline roots, recomputed below
    let cases: [(&str, Params, Clause, MFState); 6] = [
        ("extinction", mf(0.8, 0.9, 1.0, 0.0), Clause::Extinction, MFState::ORIGIN),
        (
            "weak host",
            mf(0.9, 2.0, 1.0, 0.5),
            Clause::CoexistenceWeakHost,
            st(0.152_932_629_649_176_5, 0.173_533_685_175_411_75),
        ),
        (
            "recovery",
            mf(2.0, 0.5, 3.0, 0.5),
            Clause::CoexistenceRecovery,
            st(0.409_571_184_626_056_35, 0.047_855_923_130_281_76),
        ),
        ("no recovery", mf(2.0, 0.5, 3.0, 0.0), Clause::CoexistenceNoRecovery, st(2.0 / 9.0, 1.0 / 9.0)),
        ("healthy wins", mf(2.0, 0.5, 0.1, 0.0), Clause::HealthyWins, st(1.0 - 1.0 / 2.0, 0.0)),
        ("infected wins", mf(0.5, 2.0, 0.0, 0.0), Clause::InfectedWins, st(0.0, 1.0 - 1.0 / 2.0)),
    ];
    let mut worst: f64 = 0.0;
    for (name, p, clause, target) in cases {
        let c = classify(&p);
        ensure(c.clause == Some(clause), || format!("{name}: classified {:?} / {:?}", c.outcome, c.clause))?;
        let eq = c.equilibrium.ok_or_else(|| format!("{name}: no equilibrium"))?;
        if target.u1 > 0.0 && target.u2 > 0.0 {
            let oracle = interior_by_bisection(&p).ok_or_else(|| format!("{name}: oracle found no root"))?;
            ensure(oracle.distance(&target) < 1e-12, || format!("{name}: oracle {oracle:?} vs frozen {target:?}"))?;
        }
        ensure(eq.distance(&target) < 1e-10, || format!("{name}: equilibrium {eq:?} vs {target:?}"))?;
        let res = residual(eq, &p);
        ensure(res < 1e-10, || format!("{name}: residual {res:e}"))?;
        let r = basin_scan(&p, 20, 1e4).map_err(err)?;
        ensure(r.all_converged() && r.max_distance <= 1e-6, || {
            format!("{name}: {}/{} converged, max distance {:e}", r.converged, r.scanned, r.max_distance)
        })?;
        worst = worst.max(r.max_distance);
    }
    Ok(format!("6 clauses, 20x20 grids, worst final distance {worst:.2e}"))
}

fn dulac() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xD01AC);
    let positive = |rng: &mut ChaCha8Rng, hi: f64| loop {
        let x: f64 = rng.random_range(0.0..hi);
        if x > 0.0 {
            return x;
        }
    };
    let mut max = f64::NEG_INFINITY;
    for draw in 0..100 {
        let p = mf(positive(&mut rng, 10.0), positive(&mut rng, 10.0), positive(&mut rng, 10.0), positive(&mut rng, 5.0));
        for _ in 0..10_000 {
            let (a, b): (f64, f64) = (rng.random(), rng.random());
            let s = if a + b < 1.0 { st(a, b) } else { st(1.0 - a, 1.0 - b) };
            if !(s.u1 > 0.0 && s.u2 > 0.0 && s.u1 + s.u2 < 1.0) {
                continue;
            }
            let d = dulac_divergence(s, &p).map_err(err)?;
            ensure(d < 0.0, || format!("draw {draw}: divergence {d} at {s:?} for {p:?}"))?;
            max = max.max(d);
        }
    }
    Ok(format!("100 draws x 1e4 points, largest divergence {max:.3e}"))
}

fn oracle_check() -> Result<String, String> {
    let mut lines = Vec::new();
    for start in ["120", "1210"] {
        let cfg0 = Configuration::from_digits(start).map_err(err)?;
        let p = Params::finite(2.0, 1.0, 1.5, 0.5, 1, start.len(), 0).map_err(err)?;
        for engine in EngineKind::ALL {
            let r = oracle_vs_simulation(&p, &cfg0, 1.0, 100_000, engine, StreamKey::new(31, 0)).map_err(err)?;
            ensure(r.tv < 0.01 && r.max_abs_z <= 4.0, || {
                format!("L={} {engine:?}: tv {:.4}, max |z| {:.2} at {}", start.len(), r.tv, r.max_abs_z, r.worst_state)
            })?;
            lines.push(format!("L={} {engine:?} tv={:.4} |z|<={:.2}", start.len(), r.tv, r.max_abs_z));
        }
    }
    Ok(lines.join(", "))
}

fn final_infected_density(engine: EngineKind, p: &Params, t: f64, replicas: u64, seed: u64) -> Result<Vec<f64>, String> {
    (0..replicas)
        .into_par_iter()
        .map(|r| {
            let key = StreamKey::new(seed, r);
            let c0 = Configuration::random(p.lattice(), 0.4, 0.4, &mut key.rng(channel::INITIAL, 0)).map_err(err)?;
            let end = engine.run_with(&c0, p, t, key, &mut ()).map_err(err)?;
            Ok(end.densities()[2])
        })
        .collect()
}

fn cross_equivalence() -> Result<String, String> {
    // both types persist to t = 5 at these rates
    let p = Params::finite(3.0, 4.0, 1.5, 0.5, 1, 32, 0).map_err(err)?;
    let g = mean_se(&final_infected_density(EngineKind::Gillespie, &p, 5.0, 10_000, 41)?);
    let h = mean_se(&final_infected_density(EngineKind::Harris, &p, 5.0, 10_000, 42)?);
    let combined = (g.se * g.se + h.se * h.se).sqrt();
    let gap = (g.mean - h.mean).abs();
    ensure(gap <= 3.0 * combined, || format!("means {:.5} vs {:.5}, gap {gap:.5} > 3 x {combined:.5}", g.mean, h.mean))?;
    Ok(format!("u2 {:.5} vs {:.5}, gap = {:.2} SE", g.mean, h.mean, gap / combined))
}

fn sandwich() -> Result<String, String> {
    let p = Params::finite(3.0, 1.0, 2.0, 0.5, 1, 64, 0).map_err(err)?;
    let mut checks = 0;
    for r in 0..100 {
        let key = StreamKey::new(51, r);
        let c0 = Configuration::random(p.lattice(), 0.4, 0.4, &mut key.rng(channel::INITIAL, 0)).map_err(err)?;
        let (n, violations) = coupled_run_with(&c0, &p, 20.0, key, &mut (), &mut (), &mut ()).map_err(err)?;
        ensure(violations.is_empty(), || format!("run {r}: {} violations, first {:?}", violations.len(), violations[0]))?;
        checks += n;
    }
    Ok(format!("100 runs, {checks} event checks, 0 violations"))
}

fn geometry() -> Result<String, String> {
    let mut out = Vec::new();
    for n in [10usize, 25] {
        let mut rng = ChaCha8Rng::seed_from_u64(61 + n as u64);
        let mut k0_max = 0;
        for i in 0..10_000 {
            let pattern = Pattern::ALL[i % Pattern::ALL.len()];
            let c = lemma_configuration(4 * n, n, pattern, &mut rng).map_err(err)?;
            let r = check_lemma_geometry(&c, n).map_err(err)?;
            ensure(r.hypothesis && r.pass, || format!("N={n} draw {i} ({pattern:?}): {r:?}"))?;
            k0_max = k0_max.max(r.k0);
        }
        out.push(format!("N={n}: 1e4 pass (K0 up to {k0_max})"));
    }
    Ok(out.join(", "))
}

fn segregation() -> Result<String, String> {
    const SIDE: usize = 1000;
    let mut lines = Vec::new();
    for (label, l21) in [("2", InfectionRate::Finite(2.0)), ("inf", InfectionRate::Infinite)] {
        let runs: Vec<(u64, u64, Option<f64>)> = (0..1000u64)
            .into_par_iter()
            .map(|r| {
                let mut rng = ChaCha8Rng::seed_from_u64(71_000 + r);
                let p = Params::new(rng.random_range(0.5..4.0), rng.random_range(0.0..4.0), l21, 0.0, 1, SIDE, r)
                    .map_err(err)?;
                let b = rng.random_range(450..=550);
                let dens = (rng.random_range(0.2..1.0), rng.random_range(0.2..1.0));
                let mut c0 = segregated_block(p.lattice(), (450, b, 550), dens, rng.random(), &mut rng).map_err(err)?;
                if l21.is_infinite() {
                    invade_all(&mut c0);
                }
                let mut edges = EdgeTracker::for_params(&p, false);
                let mut cut = CutMonitor::new(SIDE, 0, 1);
                EngineKind::Gillespie.run_with(&c0, &p, 100.0, StreamKey::new(72, r), &mut (&mut edges, &mut cut)).map_err(err)?;
                Ok((edges.events(), edges.violations(), cut.touched()))
            })
            .collect::<Result<_, String>>()?;
        let events: u64 = runs.iter().map(|r| r.0).sum();
        let bad = runs.iter().filter(|r| r.1 > 0).count();
        let touched = runs.iter().filter(|r| r.2.is_some()).count();
        ensure(bad == 0 && touched == 0, || format!("lambda21={label}: {bad} runs lost segregation, {touched} reached the cut"))?;
        lines.push(format!("lambda21={label}: 1000 runs, {events} events"));
    }
    Ok(lines.join(", "))
}

fn pathogen_extinction_1d() -> Result<String, String> {
    let p = Params::finite(6.0, 1.0, 10.0, 0.0, 1, 2000, 0).map_err(err)?;
    let times = [100.0, 200.0, 400.0];
    let rows: Vec<Vec<[f64; 3]>> = (0..200u64)
        .into_par_iter()
        .map(|r| {
            let key = StreamKey::new(81, r);
            let c0 = Configuration::random(p.lattice(), 0.3, 0.3, &mut key.rng(channel::INITIAL, 0)).map_err(err)?;
            ensure(c0.count(State::Healthy) >= 100, || format!("replica {r} starts with too few 1s"))?;
            let mut s = DensitySampler::new(100.0, 400.0).map_err(err)?;
            EngineKind::Gillespie.run_with(&c0, &p, 400.0, key, &mut s).map_err(err)?;
            Ok(s.points().iter().filter(|q| times.contains(&q.t)).map(|q| q.u).collect())
        })
        .collect::<Result<_, String>>()?;
    let frac: Vec<f64> = (0..3).map(|k| rows.iter().filter(|v| v[k][2] > 0.0).count() as f64 / 200.0).collect();
    let u1 = rows.iter().map(|v| v[2][1]).sum::<f64>() / 200.0;
    ensure(frac[0] >= frac[1] && frac[1] >= frac[2] && frac[2] < 0.05 && u1 > 0.2, || {
        format!("fractions with a 2 {frac:?}, mean u1 at 400 {u1:.3}")
    })?;
    Ok(format!("fractions with a 2 at 100/200/400: {frac:?}, mean u1(400) = {u1:.3}"))
}

fn coexistence_2d() -> Result<String, String> {
    let run = |dim: usize, side: usize, delta: f64, seed: u64| -> Result<Vec<f64>, String> {
        let p = Params::finite(2500.0, 0.5, 50.0, delta, dim, side, 0).map_err(err)?;
        (0..50u64)
            .into_par_iter()
            .map(|r| {
                let key = StreamKey::new(seed, r);
                let c0 = Configuration::random(p.lattice(), 0.45, 0.45, &mut key.rng(channel::INITIAL, 0)).map_err(err)?;
                let end = EngineKind::Gillespie.run_with(&c0, &p, 200.0, key, &mut ()).map_err(err)?;
                Ok(end.densities()[2])
            })
            .collect()
    };
    let plane = run(2, 100, 1.0, 91)?;
    let line = run(1, 10_000, 0.0, 92)?;
    let alive = plane.iter().filter(|&&u| u > 0.01).count();
    let dead = line.iter().filter(|&&u| u == 0.0).count();
    ensure(alive >= 45 && dead >= 45, || format!("2D: {alive}/50 with u2 > 0.01; 1D contrast: {dead}/50 without 2s"))?;
    Ok(format!("2D: {alive}/50 with u2 > 0.01 at t=200; 1D contrast: {dead}/50 without 2s"))
}

fn lambda_c() -> Result<String, String> {
    let cfg = LambdaCConfig::new(1, 200, 200, (1.0, 6.0), 101);
    let est = estimate_lambda_c(&cfg).map_err(err)?;
    let (a, b) = est.endpoints();
    ensure(est.converged && est.width() < 0.2 && a.survival.excludes(0.5) && b.survival.excludes(0.5) && est.monotone, || {
        format!("{est:?}")
    })?;
    Ok(format!(
        "bracket [{:.4}, {:.4}], crossing {:.4}, survival CIs [{:.3}, {:.3}] / [{:.3}, {:.3}], {} scan points monotone",
        est.bracket.0,
        est.bracket.1,
        est.estimate,
        a.survival.lo,
        a.survival.hi,
        b.survival.lo,
        b.survival.hi,
        est.scan.len()
    ))
}

fn edge_speed_and_hull() -> Result<String, String> {
    const SIDE: usize = 4000;
    let p = Params::finite(6.0, 0.0, 0.0, 0.0, 1, SIDE, 0).map_err(err)?;
    let mut c0 = Configuration::empty(p.lattice());
    (3 * SIDE / 8..5 * SIDE / 8).for_each(|x| c0.set(x, State::Healthy));
    let mut front = FrontSampler::new(SIDE, 0, 1.0, 500.0).map_err(err)?;
    EngineKind::Gillespie.run_with(&c0, &p, 500.0, StreamKey::new(111, 0), &mut front).map_err(err)?;
    let fit = fit_right_edge(front.samples(), SIDE, (100.0, 500.0)).map_err(err)?;
    ensure(fit.alpha > 0.0 && fit.r2 > 0.99, || format!("{fit:?}"))?;

    let q = Params::finite(6.0, 1.0, 10.0, 0.0, 1, 2000, 0).map_err(err)?;
    let mut sites = 0;
    let mut checks = 0;
    for r in 0..5u64 {
        let key = StreamKey::new(112, r);
        let c0 = Configuration::random(q.lattice(), 0.3, 0.3, &mut key.rng(channel::INITIAL, 0)).map_err(err)?;
        let h = hull_coupling(&c0, &q, 200.0, key, 1.0).map_err(err)?;
        ensure(h.mismatch_count == 0, || format!("replica {r}: {} mismatches, first {:?}", h.mismatch_count, h.mismatches.first()))?;
        sites += h.sites_checked;
        checks += h.checks;
    }
    ensure(sites > 0, || "no hull sites were compared".into())?;
    Ok(format!(
        "alpha = {:.4}, R^2 = {:.5}; hull coupling: {checks} checks over {sites} sites, 0 mismatches",
        fit.alpha, fit.r2
    ))
}

fn main() -> ExitCode {
    let checks: [(&str, Check); 11] = [
        ("mean-field classification and basins", meanfield_clauses),
        ("dulac sign", dulac),
        ("engines vs exact distribution", oracle_check),
        ("engine cross-equivalence", cross_equivalence),
        ("sandwich coupling", sandwich),
        ("box geometry inequalities", geometry),
        ("segregation preservation", segregation),
        ("pathogen extinction in 1D", pathogen_extinction_1d),
        ("coexistence in 2D", coexistence_2d),
        ("critical value bisection", lambda_c),
        ("edge speed and hull coupling", edge_speed_and_hull),
    ];
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check) in checks {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let t = Instant::now();
        let res = check();
        let secs = t.elapsed().as_secs_f64();
        match res {
            Ok(detail) => println!("PASS  {name} ({secs:.1}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name} ({secs:.1}s): {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}

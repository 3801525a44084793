//! The stacked process and its two bounding contact processes driven by one
//! stream. With `lambda10 > lambda20` every birth arrow the stacked process
//! can use is also read by the upper process, and every shared arrow is
//! read by all three, so occupancy stays nested.

use crate::engine::gillespie::check_run_inputs;
use crate::engine::harris::{build_harris, Process, Rules};
use crate::engine::observer::{Change, Observer};
use crate::engine::trajectory::{RecordOptions, Recorder, Trajectory};
use crate::model::{Configuration, Params};
use crate::rng::StreamKey;
use crate::{Error, Result};

#[derive(Debug)]
pub struct CoupledRun {
    pub stacked: Trajectory,
    pub upper: Trajectory,
    pub lower: Trajectory,
    /// Event times at which containment was checked.
    pub checks: u64,
    pub violations: Vec<(f64, usize)>,
}

/// Runs the three processes from `occupied(cfg0)` (and `cfg0` for the
/// stacked process), checking containment at every site touched by each
/// event and on the whole lattice at the end.
pub fn coupled_run(
    cfg0: &Configuration,
    p: &Params,
    t_end: f64,
    key: StreamKey,
    opts: RecordOptions,
) -> Result<CoupledRun> {
    let mut recs = [Recorder::new(opts, t_end), Recorder::new(opts, t_end), Recorder::new(opts, t_end)];
    let [a, b, c] = &mut recs;
    let (checks, violations) = coupled_run_with(cfg0, p, t_end, key, a, b, c)?;
    let [a, b, c] = recs;
    Ok(CoupledRun {
        stacked: a.into_trajectory(),
        upper: b.into_trajectory(),
        lower: c.into_trajectory(),
        checks,
        violations,
    })
}

/// Streaming form of [`coupled_run`]; returns (checks, violations).
pub fn coupled_run_with<A: Observer, B: Observer, C: Observer>(
    cfg0: &Configuration,
    p: &Params,
    t_end: f64,
    key: StreamKey,
    obs_stacked: &mut A,
    obs_upper: &mut B,
    obs_lower: &mut C,
) -> Result<(u64, Vec<(f64, usize)>)> {
    if !(p.lambda10 > p.lambda20) {
        return Err(Error::Unsupported(format!(
            "the nested coupling needs lambda10 > lambda20, got {} and {}",
            p.lambda10, p.lambda20
        )));
    }
    check_run_inputs(cfg0, p, t_end)?;
    let stream = build_harris(p, t_end, key)?;
    let rules = [
        Rules::new(Process::Stacked, &stream),
        Rules::new(Process::UpperContact, &stream),
        Rules::new(Process::LowerContact, &stream),
    ];
    let mut cfgs = [rules[0].initial(cfg0), rules[1].initial(cfg0), rules[2].initial(cfg0)];
    let nulls = [obs_stacked.wants_null_events(), obs_upper.wants_null_events(), obs_lower.wants_null_events()];
    obs_stacked.start(0.0, &cfgs[0]);
    obs_upper.start(0.0, &cfgs[1]);
    obs_lower.start(0.0, &cfgs[2]);
    let mut violations = Vec::new();
    let mut checks = 0u64;
    let mut changes: [Vec<Change>; 3] = Default::default();
    for ev in stream.iter() {
        let mut touched = None;
        for k in 0..3 {
            changes[k].clear();
            rules[k].apply(&mut cfgs[k], &ev, nulls[k], &mut changes[k]);
            if let Some(c) = changes[k].first() {
                if !c.is_null() {
                    touched = Some(c.site as usize);
                }
                let cfg = &mut cfgs[k];
                if !c.is_null() {
                    cfg.set(c.site as usize, c.from);
                }
                match k {
                    0 => obs_stacked.advance(ev.time, cfg),
                    1 => obs_upper.advance(ev.time, cfg),
                    _ => obs_lower.advance(ev.time, cfg),
                }
                if !c.is_null() {
                    cfg.set(c.site as usize, c.to);
                }
                match k {
                    0 => obs_stacked.event(ev.time, &changes[k], cfg),
                    1 => obs_upper.event(ev.time, &changes[k], cfg),
                    _ => obs_lower.event(ev.time, &changes[k], cfg),
                }
            }
        }
        // Each event touches at most one site, the same one in every process.
        if let Some(x) = touched {
            checks += 1;
            if !nested_at(&cfgs, x) {
                violations.push((ev.time, x));
            }
        }
    }
    for x in 0..cfg0.n_sites() {
        if !nested_at(&cfgs, x) {
            violations.push((t_end, x));
        }
    }
    obs_stacked.finish(t_end, &cfgs[0]);
    obs_upper.finish(t_end, &cfgs[1]);
    obs_lower.finish(t_end, &cfgs[2]);
    Ok((checks, violations))
}

fn nested_at(cfgs: &[Configuration; 3], x: usize) -> bool {
    nested(&cfgs[0], &cfgs[1], &cfgs[2], x)
}

fn nested(xi: &Configuration, upper: &Configuration, lower: &Configuration, x: usize) -> bool {
    let (o, u, l) = (xi.get(x).is_occupied(), upper.get(x).is_occupied(), lower.get(x).is_occupied());
    (!l || o) && (!o || u)
}

/// Whole-lattice containment check of three configurations.
pub fn sandwich_holds(stacked: &Configuration, upper: &Configuration, lower: &Configuration) -> bool {
    (0..stacked.n_sites()).all(|x| nested(stacked, upper, lower, x))
}

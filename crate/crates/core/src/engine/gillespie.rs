//! Direct stochastic simulation of the spin system.
//!
//! Sites are grouped into rate classes keyed by their state and the number
//! of healthy and infected neighbours. A site's total rate depends only on
//! its class, so the next event is drawn by scanning the few classes and
//! then picking a member uniformly. Class membership is updated in O(2d)
//! per flip, and the total rate is re-summed from the class sizes at every
//! step so it cannot drift.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use crate::engine::observer::{Cause, Change, Observer};
use crate::engine::trajectory::{RecordOptions, Recorder, Trajectory};
use crate::model::{healthy_run, plan_run_invasion, Configuration, NeighborTable, Params, State};
use crate::rng::{channel, StreamKey};
use crate::{Error, Result};

/// Events between full bookkeeping audits in debug builds.
const AUDIT_INTERVAL: u64 = 1 << 16;

/// Runs the chain to `t_end` and records a trajectory.
pub fn run_gillespie(
    cfg0: &Configuration,
    p: &Params,
    t_end: f64,
    key: StreamKey,
    opts: RecordOptions,
) -> Result<Trajectory> {
    // the chain has no null events, so the trajectory must not claim them
    let mut rec = Recorder::new(RecordOptions { null_events: false, ..opts }, t_end);
    run_gillespie_with(cfg0, p, t_end, key, &mut rec)?;
    Ok(rec.into_trajectory())
}

/// Runs the chain to `t_end`, streaming events to `obs`; returns the final
/// configuration. Null events are never produced by this engine.
pub fn run_gillespie_with<O: Observer>(
    cfg0: &Configuration,
    p: &Params,
    t_end: f64,
    key: StreamKey,
    obs: &mut O,
) -> Result<Configuration> {
    check_run_inputs(cfg0, p, t_end)?;
    if p.lambda21.is_infinite() && cfg0.has_infected_healthy_contact() {
        return Err(Error::Contract("initial configuration is not invasion-closed".into()));
    }
    let mut sim = Gillespie::new(cfg0.clone(), p);
    let mut rng = key.rng(channel::GILLESPIE, 0);
    obs.start(0.0, &sim.cfg);
    let mut t = 0.0;
    let mut changes = Vec::new();
    let mut steps = 0u64;
    loop {
        let total = sim.total_rate();
        if total <= 0.0 {
            break;
        }
        let dt: f64 = rng.sample::<f64, _>(Exp1) / total;
        t += dt;
        if t > t_end {
            break;
        }
        obs.advance(t, &sim.cfg);
        changes.clear();
        sim.step(total, &mut rng, &mut changes);
        obs.event(t, &changes, &sim.cfg);
        steps += 1;
        if cfg!(debug_assertions) && steps.is_multiple_of(AUDIT_INTERVAL) {
            sim.audit()?;
        }
    }
    if cfg!(debug_assertions) {
        sim.audit()?;
    }
    obs.finish(t_end, &sim.cfg);
    Ok(sim.cfg)
}

pub(crate) fn check_run_inputs(cfg0: &Configuration, p: &Params, t_end: f64) -> Result<()> {
    p.validate()?;
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidArgument(format!("t_end = {t_end} must be positive and finite")));
    }
    if cfg0.lattice() != p.lattice() {
        return Err(Error::InvalidArgument(format!(
            "configuration lattice {:?} does not match params geometry {:?}",
            cfg0.lattice(),
            p.lattice()
        )));
    }
    Ok(())
}

struct Gillespie {
    cfg: Configuration,
    nbrs: NeighborTable,
    degree: usize,
    lambda10: f64,
    lambda20: f64,
    /// Zero under invasion closure, where healthy sites never see infected ones.
    lambda21: f64,
    delta: f64,
    infinite: bool,
    n1: Vec<u8>,
    n2: Vec<u8>,
    class_of: Vec<u16>,
    pos: Vec<u32>,
    members: Vec<Vec<u32>>,
    class_rate: Vec<f64>,
}

impl Gillespie {
    fn new(cfg: Configuration, p: &Params) -> Self {
        let lattice = cfg.lattice();
        let nbrs = NeighborTable::new(&lattice);
        let degree = lattice.degree();
        let n = cfg.n_sites();
        let k = degree + 1;
        let n_classes = k * k + k + 1;
        let lambda21 = p.lambda21.finite().unwrap_or(0.0);
        let mut class_rate = vec![0.0; n_classes];
        let deg = degree as f64;
        for a in 0..k {
            for b in 0..k {
                class_rate[a * k + b] = p.lambda10 * a as f64 / deg + p.lambda20 * b as f64 / deg;
            }
        }
        for b in 0..k {
            class_rate[k * k + b] = 1.0 + lambda21 * b as f64 / deg;
        }
        class_rate[k * k + k] = 1.0 + p.delta;

        let mut sim = Self {
            nbrs,
            degree,
            lambda10: p.lambda10,
            lambda20: p.lambda20,
            lambda21,
            delta: p.delta,
            infinite: p.lambda21.is_infinite(),
            n1: vec![0; n],
            n2: vec![0; n],
            class_of: vec![0; n],
            pos: vec![0; n],
            members: vec![Vec::new(); n_classes],
            class_rate,
            cfg,
        };
        for x in 0..n {
            let (a, b) = sim.count_neighbors(x);
            sim.n1[x] = a;
            sim.n2[x] = b;
            let c = sim.class_for(x);
            sim.class_of[x] = c as u16;
            sim.pos[x] = sim.members[c].len() as u32;
            sim.members[c].push(x as u32);
        }
        sim
    }

    fn count_neighbors(&self, x: usize) -> (u8, u8) {
        let mut a = 0;
        let mut b = 0;
        for &y in self.nbrs.of(x) {
            match self.cfg.get(y as usize) {
                State::Healthy => a += 1,
                State::Infected => b += 1,
                State::Empty => {}
            }
        }
        (a, b)
    }

    fn class_for(&self, x: usize) -> usize {
        let k = self.degree + 1;
        match self.cfg.get(x) {
            State::Empty => self.n1[x] as usize * k + self.n2[x] as usize,
            State::Healthy => k * k + self.n2[x] as usize,
            State::Infected => k * k + k,
        }
    }

    fn reclass(&mut self, x: usize) {
        let new = self.class_for(x);
        let old = self.class_of[x] as usize;
        if new == old {
            return;
        }
        let i = self.pos[x] as usize;
        let list = &mut self.members[old];
        list.swap_remove(i);
        if i < list.len() {
            let moved = list[i] as usize;
            self.pos[moved] = i as u32;
        }
        self.class_of[x] = new as u16;
        self.pos[x] = self.members[new].len() as u32;
        self.members[new].push(x as u32);
    }

    fn set_site(&mut self, x: usize, s: State) {
        let old = self.cfg.get(x);
        if old == s {
            return;
        }
        self.cfg.set(x, s);
        for k in 0..self.degree {
            let y = self.nbrs.of(x)[k] as usize;
            match old {
                State::Healthy => self.n1[y] -= 1,
                State::Infected => self.n2[y] -= 1,
                State::Empty => {}
            }
            match s {
                State::Healthy => self.n1[y] += 1,
                State::Infected => self.n2[y] += 1,
                State::Empty => {}
            }
            self.reclass(y);
        }
        self.reclass(x);
    }

    fn total_rate(&self) -> f64 {
        self.class_rate.iter().zip(&self.members).map(|(r, m)| r * m.len() as f64).sum()
    }

    fn random_neighbor_in(&self, x: usize, s: State, rng: &mut ChaCha8Rng) -> u32 {
        let mut cand = [0u32; 64];
        let mut n = 0;
        for &y in self.nbrs.of(x) {
            if self.cfg.get(y as usize) == s {
                cand[n] = y;
                n += 1;
            }
        }
        debug_assert!(n > 0);
        cand[rng.random_range(0..n)]
    }

    fn step(&mut self, total: f64, rng: &mut ChaCha8Rng, changes: &mut Vec<Change>) {
        let mut u = rng.random::<f64>() * total;
        let mut chosen = usize::MAX;
        let mut last = usize::MAX;
        for (c, m) in self.members.iter().enumerate() {
            let w = self.class_rate[c] * m.len() as f64;
            if w <= 0.0 {
                continue;
            }
            last = c;
            if u < w {
                chosen = c;
                break;
            }
            u -= w;
        }
        if chosen == usize::MAX {
            chosen = last;
        }
        let list = &self.members[chosen];
        let x = list[rng.random_range(0..list.len())] as usize;
        let deg = self.degree as f64;
        let (from, to, cause, source) = match self.cfg.get(x) {
            State::Empty => {
                let r1 = self.lambda10 * self.n1[x] as f64 / deg;
                let r2 = self.lambda20 * self.n2[x] as f64 / deg;
                let s = if rng.random::<f64>() * (r1 + r2) < r1 { State::Healthy } else { State::Infected };
                (State::Empty, s, Cause::Birth, Some(self.random_neighbor_in(x, s, rng)))
            }
            State::Healthy => {
                let r = 1.0 + self.lambda21 * self.n2[x] as f64 / deg;
                if rng.random::<f64>() * r < 1.0 {
                    (State::Healthy, State::Empty, Cause::Death, None)
                } else {
                    let src = self.random_neighbor_in(x, State::Infected, rng);
                    (State::Healthy, State::Infected, Cause::Infection, Some(src))
                }
            }
            State::Infected => {
                if rng.random::<f64>() * (1.0 + self.delta) < 1.0 {
                    (State::Infected, State::Empty, Cause::Death, None)
                } else {
                    (State::Infected, State::Healthy, Cause::Recovery, None)
                }
            }
        };
        self.set_site(x, to);
        changes.push(Change { site: x as u32, source, cause, from, to });
        if self.infinite {
            self.close_around(x, changes);
        }
    }

    /// Restores invasion closure after a flip at `x` (one dimension only).
    fn close_around(&mut self, x: usize, changes: &mut Vec<Change>) {
        let n = self.cfg.n_sites();
        for y in [(x + n - 1) % n, x, (x + 1) % n] {
            if self.cfg.get(y) != State::Healthy || self.n2[y] == 0 {
                continue;
            }
            let (first, len) = healthy_run(&self.cfg, y).expect("an infected neighbour exists");
            for inv in plan_run_invasion(&self.cfg, first, len) {
                self.set_site(inv.site, State::Infected);
                changes.push(Change {
                    site: inv.site as u32,
                    source: Some(inv.source as u32),
                    cause: Cause::Invasion,
                    from: State::Healthy,
                    to: State::Infected,
                });
            }
        }
    }

    fn audit(&self) -> Result<()> {
        if !self.cfg.counts_consistent() {
            return Err(Error::Internal("state counts out of sync".into()));
        }
        for x in 0..self.cfg.n_sites() {
            if self.count_neighbors(x) != (self.n1[x], self.n2[x]) {
                return Err(Error::Internal(format!("neighbour counts out of sync at site {x}")));
            }
            let c = self.class_of[x] as usize;
            if c != self.class_for(x) || self.members[c].get(self.pos[x] as usize) != Some(&(x as u32)) {
                return Err(Error::Internal(format!("rate class out of sync at site {x}")));
            }
        }
        if self.infinite && self.cfg.has_infected_healthy_contact() {
            return Err(Error::Internal("invasion closure violated".into()));
        }
        Ok(())
    }
}

//! One-dimensional tools. A ring of `L` sites is read as a line cut
//! between `cut - 1` and `cut`: site `x` sits at position
//! `(x - cut) mod L`. Analyses that assume an infinite line are only valid
//! while activity stays away from the cut, which [`CutMonitor`] watches.

use std::collections::BTreeSet;
use std::io::Write;

use serde::Serialize;

use crate::engine::{Change, Observer, Trajectory};
use crate::model::{Configuration, Params, State};
use crate::{Error, Result};

pub(crate) fn require_line(cfg: &Configuration) -> Result<()> {
    if cfg.dim() != 1 {
        return Err(Error::InvalidArgument(format!("needs dim 1, got {}", cfg.dim())));
    }
    Ok(())
}

/// Ordered positions of the 1s and 2s on the cut line.
#[derive(Clone, Debug)]
pub struct LinePositions {
    cut: usize,
    n: usize,
    ones: BTreeSet<u32>,
    twos: BTreeSet<u32>,
}

impl LinePositions {
    pub fn new(cfg: &Configuration, cut: usize) -> Result<Self> {
        require_line(cfg)?;
        let n = cfg.n_sites();
        let mut lp = Self { cut: cut % n, n, ones: BTreeSet::new(), twos: BTreeSet::new() };
        for (x, &s) in cfg.states().iter().enumerate() {
            lp.insert(x, s);
        }
        Ok(lp)
    }

    pub fn position(&self, x: usize) -> u32 {
        ((x + self.n - self.cut) % self.n) as u32
    }

    pub fn site(&self, pos: u32) -> usize {
        (pos as usize + self.cut) % self.n
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn set_of(&mut self, s: State) -> Option<&mut BTreeSet<u32>> {
        match s {
            State::Empty => None,
            State::Healthy => Some(&mut self.ones),
            State::Infected => Some(&mut self.twos),
        }
    }

    fn insert(&mut self, x: usize, s: State) {
        let p = self.position(x);
        if let Some(set) = self.set_of(s) {
            set.insert(p);
        }
    }

    pub fn apply(&mut self, c: &Change) {
        if c.is_null() {
            return;
        }
        let p = self.position(c.site as usize);
        if let Some(set) = self.set_of(c.from) {
            set.remove(&p);
        }
        if let Some(set) = self.set_of(c.to) {
            set.insert(p);
        }
    }

    pub fn of(&self, s: State) -> Option<&BTreeSet<u32>> {
        match s {
            State::Empty => None,
            State::Healthy => Some(&self.ones),
            State::Infected => Some(&self.twos),
        }
    }

    /// All 2s strictly left of all 1s, or the mirror statement.
    pub fn segregated(&self) -> bool {
        let left = match (self.twos.last(), self.ones.first()) {
            (Some(r), Some(l)) => r < l,
            _ => true,
        };
        left || match (self.ones.last(), self.twos.first()) {
            (Some(r), Some(l)) => r < l,
            _ => true,
        }
    }

    /// Any site of type `s` at a position in `[lo, hi]`.
    pub fn any_in(&self, s: State, lo: u32, hi: u32) -> bool {
        self.of(s).is_some_and(|set| set.range(lo..=hi).next().is_some())
    }
}

/// Segregation on the line cut at site 0.
pub fn is_segregated(cfg: &Configuration) -> Result<bool> {
    is_segregated_at(cfg, 0)
}

pub fn is_segregated_at(cfg: &Configuration, cut: usize) -> Result<bool> {
    Ok(LinePositions::new(cfg, cut)?.segregated())
}

/// Records the first change within `margin` positions of the cut.
#[derive(Clone, Debug)]
pub struct CutMonitor {
    cut: usize,
    n: usize,
    margin: usize,
    touched: Option<f64>,
}

impl CutMonitor {
    pub fn new(n_sites: usize, cut: usize, margin: usize) -> Self {
        Self { cut: cut % n_sites, n: n_sites, margin: margin.max(1), touched: None }
    }

    pub fn touched(&self) -> Option<f64> {
        self.touched
    }

    fn near(&self, x: usize) -> bool {
        let p = (x + self.n - self.cut) % self.n;
        p < self.margin || p >= self.n - self.margin
    }
}

impl Observer for CutMonitor {
    fn start(&mut self, t0: f64, cfg: &Configuration) {
        self.touched = None;
        if (0..cfg.n_sites()).any(|x| self.near(x) && cfg.get(x).is_occupied()) {
            self.touched = Some(t0);
        }
    }

    fn event(&mut self, t: f64, changes: &[Change], _cfg: &Configuration) {
        if self.touched.is_none() && changes.iter().any(|c| !c.is_null() && self.near(c.site as usize)) {
            self.touched = Some(t);
        }
    }
}

/// Rightmost 2 and leftmost 1 after orienting the line so the 2s are on
/// the left; `-inf` and `+inf` stand for a missing type, so the gap
/// `l - r` is `+inf` whenever either type is absent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EdgeRecord {
    pub t: f64,
    pub r: f64,
    pub l: f64,
}

impl EdgeRecord {
    pub fn d(&self) -> f64 {
        self.l - self.r
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TauReport {
    /// First contact time; `None` when it did not happen in the window.
    pub tau: Option<f64>,
    pub censored: bool,
    pub window: f64,
}

impl TauReport {
    pub fn censored(window: f64) -> Self {
        Self { tau: None, censored: true, window }
    }

    pub fn fired(tau: f64, window: f64) -> Self {
        Self { tau: Some(tau), censored: false, window }
    }
}

/// Maintains the edge pair at every event of a segregated run, counts
/// events after which the configuration is not segregated, and detects the
/// first contact time: the gap dropping from 2 to 1 for finite infection,
/// or the rightmost 2 advancing out of gap 2 under instantaneous invasion.
///
/// Panics at `start` unless the lattice is one-dimensional.
#[derive(Clone, Debug)]
pub struct EdgeTracker {
    cut: usize,
    instant: bool,
    keep: bool,
    line: Option<LinePositions>,
    reflected: bool,
    start_segregated: bool,
    last: Option<EdgeRecord>,
    records: Vec<EdgeRecord>,
    tau: Option<f64>,
    events: u64,
    violations: u64,
    first_violation: Option<f64>,
    t_end: f64,
}

impl EdgeTracker {
    /// `instant` selects the contact rule for instantaneous invasion;
    /// `keep` stores every record.
    pub fn new(cut: usize, instant: bool, keep: bool) -> Self {
        Self {
            cut,
            instant,
            keep,
            line: None,
            reflected: false,
            start_segregated: true,
            last: None,
            records: Vec::new(),
            tau: None,
            events: 0,
            violations: 0,
            first_violation: None,
            t_end: 0.0,
        }
    }

    pub fn for_params(p: &Params, keep: bool) -> Self {
        Self::new(0, p.lambda21.is_infinite(), keep)
    }

    fn edges(&self, t: f64) -> EdgeRecord {
        let line = self.line.as_ref().expect("started");
        let n = line.len() as f64;
        let (twos, ones) = (&line.twos, &line.ones);
        let (r, l) = if self.reflected {
            (twos.first().map(|&p| n - 1.0 - p as f64), ones.last().map(|&p| n - 1.0 - p as f64))
        } else {
            (twos.last().map(|&p| p as f64), ones.first().map(|&p| p as f64))
        };
        EdgeRecord { t, r: r.unwrap_or(f64::NEG_INFINITY), l: l.unwrap_or(f64::INFINITY) }
    }

    pub fn start_segregated(&self) -> bool {
        self.start_segregated
    }

    pub fn reflected(&self) -> bool {
        self.reflected
    }

    pub fn records(&self) -> &[EdgeRecord] {
        &self.records
    }

    pub fn current(&self) -> Option<EdgeRecord> {
        self.last
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn violations(&self) -> u64 {
        self.violations
    }

    pub fn first_violation(&self) -> Option<f64> {
        self.first_violation
    }

    pub fn tau(&self) -> TauReport {
        match self.tau {
            Some(t) => TauReport::fired(t, self.t_end),
            None => TauReport::censored(self.t_end),
        }
    }
}

impl Observer for EdgeTracker {
    fn start(&mut self, t0: f64, cfg: &Configuration) {
        let line = LinePositions::new(cfg, self.cut).expect("edge tracking needs dim 1");
        self.start_segregated = line.segregated();
        let standard = match (line.twos.last(), line.ones.first()) {
            (Some(r), Some(l)) => r < l,
            _ => true,
        };
        self.reflected = !standard;
        self.line = Some(line);
        self.records.clear();
        let e = self.edges(t0);
        self.last = Some(e);
        if self.keep {
            self.records.push(e);
        }
    }

    fn event(&mut self, t: f64, changes: &[Change], _cfg: &Configuration) {
        let line = self.line.as_mut().expect("started");
        let mut moved = false;
        for c in changes.iter().filter(|c| !c.is_null()) {
            line.apply(c);
            moved = true;
        }
        if !moved {
            return;
        }
        self.events += 1;
        if !line.segregated() {
            self.violations += 1;
            self.first_violation.get_or_insert(t);
        }
        let before = self.last.expect("started");
        let after = self.edges(t);
        if self.tau.is_none() && before.d() == 2.0 {
            let contact = if self.instant { after.r > before.r } else { after.d() == 1.0 };
            if contact {
                self.tau = Some(t);
            }
        }
        self.last = Some(after);
        if self.keep {
            self.records.push(after);
        }
    }

    fn finish(&mut self, t_end: f64, _cfg: &Configuration) {
        self.t_end = t_end;
    }
}

/// Edge series of a recorded segregated run.
#[derive(Clone, Debug, Serialize)]
pub struct EdgeSeries {
    pub reflected: bool,
    pub records: Vec<EdgeRecord>,
    pub tau: TauReport,
    pub segregation_violations: u64,
}

impl EdgeSeries {
    /// CSV with columns `t,r,l,d`; missing edges print as `-inf` / `inf`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = crate::engine::series::csv_err;
        w.write_record(["t", "r", "l", "d"]).map_err(err)?;
        for e in &self.records {
            w.write_record([e.t.to_string(), e.r.to_string(), e.l.to_string(), e.d().to_string()]).map_err(err)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Replays `traj` through an [`EdgeTracker`] on the line cut at site 0.
pub fn track_edges(traj: &Trajectory, p: &Params) -> Result<EdgeSeries> {
    require_line(traj.initial())?;
    if !is_segregated(traj.initial())? {
        return Err(Error::Contract("edge tracking needs a segregated start".into()));
    }
    let mut tr = EdgeTracker::for_params(p, true);
    traj.replay(&mut tr)?;
    Ok(EdgeSeries {
        reflected: tr.reflected,
        tau: tr.tau(),
        segregation_violations: tr.violations,
        records: std::mem::take(&mut tr.records),
    })
}

/// Random segregated start: 2s fill `[a, b)` and 1s fill `[b, c)` with
/// the given occupation probabilities, everything else empty; mirrored
/// when `mirror` is set.
pub fn segregated_block<R: rand::Rng + ?Sized>(
    lattice: crate::Lattice,
    (a, b, c): (usize, usize, usize),
    (p2, p1): (f64, f64),
    mirror: bool,
    rng: &mut R,
) -> Result<Configuration> {
    let n = lattice.n_sites();
    if lattice.dim != 1 || !(a <= b && b <= c && c <= n) {
        return Err(Error::InvalidArgument(format!("bad segregated layout {a} {b} {c} on {n} sites")));
    }
    let mut cfg = Configuration::empty(lattice);
    for x in a..c {
        let (s, q) = if x < b { (State::Infected, p2) } else { (State::Healthy, p1) };
        if rng.random_bool(q) {
            cfg.set(if mirror { n - 1 - x } else { x }, s);
        }
    }
    Ok(cfg)
}

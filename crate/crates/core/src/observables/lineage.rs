//! Lineage sets of a tagged space-time point `(x, s)`.
//!
//! Descendants of type `i` grow when a member gives birth onto an empty
//! site (`0 -> i`); under instantaneous invasion a type-2 set also follows
//! the invasion chain from a member, in application order. Clusters exist
//! for type 1 only and also absorb healthy sites hit by a birth arrow from
//! a member, which the trajectory records as null events. Members leave
//! when their site changes type.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::engine::{Cause, Change, Observer, Trajectory};
use crate::model::{Configuration, State};
use crate::observables::line::LinePositions;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LineageMode {
    Descendants,
    Cluster,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LineageOrigin {
    pub site: usize,
    pub time: f64,
}

/// Size and span of the set after one change of membership. `lo` and
/// `hi` are cut-line positions (one-dimensional runs only).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LineageRecord {
    pub t: f64,
    pub size: usize,
    pub lo: Option<u32>,
    pub hi: Option<u32>,
}

/// Observer maintaining one lineage set event by event.
#[derive(Debug)]
pub struct LineageTracker {
    origin: LineageOrigin,
    mode: LineageMode,
    cut: Option<usize>,
    kind: Option<State>,
    active: bool,
    line: Option<LinePositions>,
    members: BTreeSet<u32>,
    records: Vec<LineageRecord>,
    error: Option<Error>,
    shield_checks: u64,
    shield_violations: u64,
}

impl LineageTracker {
    /// `cut` enables span tracking and the shielding check on a ring: no
    /// site of the opposite type between the extreme members.
    pub fn new(origin: LineageOrigin, mode: LineageMode, cut: Option<usize>) -> Self {
        Self {
            origin,
            mode,
            cut,
            kind: None,
            active: false,
            line: None,
            members: BTreeSet::new(),
            records: Vec::new(),
            error: None,
            shield_checks: 0,
            shield_violations: 0,
        }
    }

    /// Type of the tracked set, known once the origin time is reached;
    /// `Empty` for a vacant origin.
    pub fn kind(&self) -> Option<State> {
        self.kind
    }

    pub fn size(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Current members as site indices, sorted.
    pub fn members(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.members.iter().map(|&k| self.site_of(k)).collect();
        v.sort_unstable();
        v
    }

    /// Extreme members as cut-line positions.
    pub fn span(&self) -> Option<(u32, u32)> {
        self.line.as_ref()?;
        Some((*self.members.first()?, *self.members.last()?))
    }

    pub fn records(&self) -> &[LineageRecord] {
        &self.records
    }

    pub fn shield_checks(&self) -> u64 {
        self.shield_checks
    }

    pub fn shield_violations(&self) -> u64 {
        self.shield_violations
    }

    pub(crate) fn line(&self) -> Option<&LinePositions> {
        self.line.as_ref()
    }

    pub fn take_error(&mut self) -> Option<Error> {
        self.error.take()
    }

    fn key_of(&self, x: usize) -> u32 {
        match &self.line {
            Some(l) => l.position(x),
            None => x as u32,
        }
    }

    fn site_of(&self, k: u32) -> usize {
        match &self.line {
            Some(l) => l.site(k),
            None => k as usize,
        }
    }

    pub(crate) fn activate(&mut self, t: f64, cfg: &Configuration) {
        self.active = true;
        if self.origin.site >= cfg.n_sites() {
            self.error = Some(Error::InvalidArgument(format!("origin site {} out of range", self.origin.site)));
            return;
        }
        if let Some(cut) = self.cut {
            match LinePositions::new(cfg, cut) {
                Ok(l) => self.line = Some(l),
                Err(e) => {
                    self.error = Some(e);
                    return;
                }
            }
        }
        let s = cfg.get(self.origin.site);
        if self.mode == LineageMode::Cluster && s != State::Healthy {
            self.error = Some(Error::Contract(format!("cluster origin must be healthy, found {s:?}")));
            return;
        }
        self.kind = Some(s);
        if s.is_occupied() {
            self.members.insert(self.key_of(self.origin.site));
        }
        self.record(t);
        self.check_shield();
    }

    fn record(&mut self, t: f64) {
        let span = self.span();
        self.records.push(LineageRecord { t, size: self.members.len(), lo: span.map(|s| s.0), hi: span.map(|s| s.1) });
    }

    fn check_shield(&mut self) {
        let (Some(line), Some(kind)) = (&self.line, self.kind) else { return };
        let Some((lo, hi)) = self.span() else { return };
        let other = if kind == State::Healthy { State::Infected } else { State::Healthy };
        self.shield_checks += 1;
        if line.any_in(other, lo, hi) {
            self.shield_violations += 1;
        }
    }

    fn apply(&mut self, c: &Change) -> bool {
        let kind = self.kind.expect("active");
        let k = self.key_of(c.site as usize);
        let from_member = c.source.is_some_and(|s| self.members.contains(&self.key_of(s as usize)));
        if c.is_null() {
            let joins = self.mode == LineageMode::Cluster && c.cause == Cause::Birth && c.to == State::Healthy;
            return joins && from_member && self.members.insert(k);
        }
        if c.to != kind {
            return self.members.remove(&k);
        }
        let grows = match c.cause {
            Cause::Birth => true,
            Cause::Invasion => kind == State::Infected,
            _ => false,
        };
        grows && from_member && self.members.insert(k)
    }
}

impl Observer for LineageTracker {
    fn start(&mut self, t0: f64, cfg: &Configuration) {
        if self.origin.time <= t0 {
            self.activate(t0, cfg);
        }
    }

    fn advance(&mut self, t: f64, cfg: &Configuration) {
        if !self.active && t > self.origin.time {
            self.activate(self.origin.time, cfg);
        }
    }

    fn event(&mut self, t: f64, changes: &[Change], _cfg: &Configuration) {
        if !self.active || self.error.is_some() || self.kind == Some(State::Empty) {
            return;
        }
        let mut changed = false;
        for c in changes {
            if let Some(line) = self.line.as_mut() {
                line.apply(c);
            }
            if !self.members.is_empty() {
                changed |= self.apply(c);
            }
        }
        if changed {
            self.record(t);
        }
        if !self.members.is_empty() {
            self.check_shield();
        }
    }

    fn finish(&mut self, t_end: f64, cfg: &Configuration) {
        if !self.active && self.origin.time <= t_end {
            self.activate(self.origin.time, cfg);
        }
    }

    fn wants_null_events(&self) -> bool {
        self.mode == LineageMode::Cluster
    }
}

/// Lineage series of a recorded run: one record at the origin time, then
/// one per membership change, plus the members at the end of the run.
#[derive(Clone, Debug, Serialize)]
pub struct LineageSeries {
    pub origin: LineageOrigin,
    pub mode: LineageMode,
    pub kind: State,
    pub records: Vec<LineageRecord>,
    pub final_members: Vec<usize>,
    pub shield_checks: u64,
    pub shield_violations: u64,
}

/// Tracks the lineage of `origin` through `traj`. One-dimensional runs
/// use a cut opposite the origin for spans and the shielding check.
/// Clusters need a trajectory that recorded null events.
pub fn track_lineage(traj: &Trajectory, origin: LineageOrigin, mode: LineageMode) -> Result<LineageSeries> {
    if mode == LineageMode::Cluster && !traj.has_null_events() {
        return Err(Error::Contract("cluster tracking needs a trajectory with null birth events".into()));
    }
    if !(0.0..=traj.t_end()).contains(&origin.time) {
        return Err(Error::InvalidArgument(format!("origin time {} outside [0, {}]", origin.time, traj.t_end())));
    }
    let init = traj.initial();
    let cut = (init.dim() == 1).then(|| (origin.site + init.n_sites() / 2) % init.n_sites());
    let mut tr = LineageTracker::new(origin, mode, cut);
    traj.replay(&mut tr)?;
    if let Some(e) = tr.take_error() {
        return Err(e);
    }
    Ok(LineageSeries {
        origin,
        mode,
        kind: tr.kind.unwrap_or(State::Empty),
        final_members: tr.members(),
        shield_checks: tr.shield_checks,
        shield_violations: tr.shield_violations,
        records: std::mem::take(&mut tr.records),
    })
}

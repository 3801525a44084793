//! Agreement between the stacked process and the all-healthy-start
//! contact process on the hull of a healthy cluster.
//!
//! Both processes read one Harris stream. A cluster epoch starts at a
//! healthy site and lasts until a 2 sits next to the cluster's hull (the
//! contact time), the cluster dies, or the hull reaches the cut. A new
//! epoch then starts at the next healthy site to the right of the previous
//! origin. While an epoch is open the two processes must agree on every
//! hull site; this is checked on a time grid.

use serde::Serialize;

use crate::engine::{build_harris, Change, Observer, Process, Rules};
use crate::model::{Configuration, Params, State};
use crate::observables::lineage::{LineageMode, LineageOrigin, LineageTracker};
use crate::rng::StreamKey;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EpochEnd {
    Contact,
    Extinct,
    Cut,
    Window,
}

#[derive(Clone, Debug, Serialize)]
pub struct HullEpoch {
    pub origin: usize,
    pub start: f64,
    pub end: f64,
    pub reason: EpochEnd,
    pub checks: u64,
    pub max_size: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HullMismatch {
    pub t: f64,
    pub site: usize,
    pub stacked: State,
    pub contact: State,
}

#[derive(Clone, Debug, Serialize)]
pub struct HullReport {
    pub epochs: Vec<HullEpoch>,
    /// Grid times at which an open epoch was compared.
    pub checks: u64,
    /// Hull sites compared, summed over checks.
    pub sites_checked: u64,
    pub mismatch_count: u64,
    /// Healthy sites passed over because they already touched a 2.
    pub skipped_starts: u64,
    /// The first few mismatches.
    pub mismatches: Vec<HullMismatch>,
}

const KEEP_MISMATCHES: usize = 64;

struct Epoch {
    tracker: LineageTracker,
    info: HullEpoch,
}

impl Epoch {
    fn open(x: usize, t: f64, xi: &Configuration) -> Self {
        let n = xi.n_sites();
        let origin = LineageOrigin { site: x, time: t };
        let mut tracker = LineageTracker::new(origin, LineageMode::Cluster, Some((x + n / 2) % n));
        tracker.activate(t, xi);
        let info = HullEpoch { origin: x, start: t, end: t, reason: EpochEnd::Window, checks: 0, max_size: 1 };
        Self { tracker, info }
    }

    /// Why the epoch must close now, judged on the current state.
    fn status(&self, xi: &Configuration) -> Option<EpochEnd> {
        let Some((lo, hi)) = self.tracker.span() else { return Some(EpochEnd::Extinct) };
        let line = self.tracker.line().expect("line tracking");
        if lo == 0 || hi as usize == line.len() - 1 {
            return Some(EpochEnd::Cut);
        }
        let touching = [lo - 1, hi + 1].iter().any(|&p| xi.get(line.site(p)) == State::Infected);
        touching.then_some(EpochEnd::Contact)
    }
}

/// Runs the check over `[0, t_end]` on a grid of spacing `dt`.
pub fn hull_coupling(cfg0: &Configuration, p: &Params, t_end: f64, key: StreamKey, dt: f64) -> Result<HullReport> {
    crate::observables::line::require_line(cfg0)?;
    if !(p.lambda10 > p.lambda20) {
        return Err(Error::Unsupported("hull coupling needs lambda10 > lambda20".into()));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("grid spacing must be positive, got {dt}")));
    }
    let stream = build_harris(p, t_end, key)?;
    if cfg0.lattice() != stream.lattice() {
        return Err(Error::InvalidArgument("configuration lattice does not match the parameters".into()));
    }
    let stacked = Rules::new(Process::Stacked, &stream);
    let upper = Rules::new(Process::UpperContact, &stream);
    let mut xi = cfg0.clone();
    let mut zeta = upper.initial(&Configuration::uniform(cfg0.lattice(), State::Healthy));
    let n = xi.n_sites();

    let mut report =
        HullReport { epochs: Vec::new(), checks: 0, sites_checked: 0, mismatch_count: 0, skipped_starts: 0, mismatches: Vec::new() };
    let mut cursor = n - 1;
    let mut next_grid = 0u64;

    // Opens epochs at successive healthy sites right of `cursor`, closing
    // at once those already in contact, until one stays open or the ring
    // has been scanned once.
    let reopen = |t: f64, xi: &Configuration, cursor: &mut usize, skipped: &mut u64| -> Option<Epoch> {
        for step in 1..=n {
            let x = (*cursor + step) % n;
            if xi.get(x) != State::Healthy {
                continue;
            }
            *cursor = x;
            let e = Epoch::open(x, t, xi);
            if e.status(xi).is_none() {
                return Some(e);
            }
            *skipped += 1;
        }
        None
    };
    let mut epoch = reopen(0.0, &xi, &mut cursor, &mut report.skipped_starts);

    let sample = |t: f64, xi: &Configuration, zeta: &Configuration, epoch: &mut Option<Epoch>, report: &mut HullReport| {
        let Some(e) = epoch.as_mut() else { return };
        let Some((lo, hi)) = e.tracker.span() else { return };
        let line = e.tracker.line().expect("line tracking");
        report.checks += 1;
        e.info.checks += 1;
        for pos in lo..=hi {
            let x = line.site(pos);
            report.sites_checked += 1;
            if xi.get(x) != zeta.get(x) {
                report.mismatch_count += 1;
                if report.mismatches.len() < KEEP_MISMATCHES {
                    report.mismatches.push(HullMismatch { t, site: x, stacked: xi.get(x), contact: zeta.get(x) });
                }
            }
        }
    };

    let mut changes: Vec<Change> = Vec::with_capacity(2);
    let mut scratch = Vec::with_capacity(1);
    for ev in stream.iter() {
        while (next_grid as f64) * dt < ev.time && (next_grid as f64) * dt <= t_end {
            sample(next_grid as f64 * dt, &xi, &zeta, &mut epoch, &mut report);
            next_grid += 1;
        }
        changes.clear();
        stacked.apply(&mut xi, &ev, true, &mut changes);
        scratch.clear();
        upper.apply(&mut zeta, &ev, false, &mut scratch);
        if changes.is_empty() {
            continue;
        }
        if let Some(e) = epoch.as_mut() {
            e.tracker.event(ev.time, &changes, &xi);
            e.info.max_size = e.info.max_size.max(e.tracker.size());
            if let Some(reason) = e.status(&xi) {
                let done = epoch.take().expect("open");
                report.epochs.push(HullEpoch { end: ev.time, reason, ..done.info });
            }
        }
        if epoch.is_none() && changes.iter().any(|c| !c.is_null()) {
            epoch = reopen(ev.time, &xi, &mut cursor, &mut report.skipped_starts);
        }
    }
    while (next_grid as f64) * dt <= t_end * (1.0 + 1e-12) {
        sample(next_grid as f64 * dt, &xi, &zeta, &mut epoch, &mut report);
        next_grid += 1;
    }
    if let Some(e) = epoch.take() {
        report.epochs.push(HullEpoch { end: t_end, reason: EpochEnd::Window, ..e.info });
    }
    Ok(report)
}

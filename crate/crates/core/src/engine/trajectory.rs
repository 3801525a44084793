use crate::engine::observer::{Change, Observer};
use crate::model::Configuration;
use crate::{Error, Result};

/// What a [`Recorder`] keeps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RecordOptions {
    /// Keep the full change list (needed for replay and lineage tracking).
    pub events: bool,
    /// Also keep null birth events. Only the Harris engine produces them.
    pub null_events: bool,
    /// Snapshot spacing; `None` records no snapshots.
    pub snapshot_dt: Option<f64>,
    /// Store full configurations in snapshots, not only state counts.
    pub snapshot_states: bool,
}

impl Default for RecordOptions {
    fn default() -> Self {
        Self { events: true, null_events: false, snapshot_dt: None, snapshot_states: false }
    }
}

impl RecordOptions {
    pub fn snapshots(dt: f64) -> Self {
        Self { events: false, snapshot_dt: Some(dt), ..Self::default() }
    }
}

/// State at a grid time: the configuration after every event at or before `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub counts: [usize; 3],
    pub states: Option<Configuration>,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    initial: Configuration,
    final_state: Configuration,
    t_end: f64,
    times: Vec<f64>,
    /// `changes[offsets[k]..offsets[k + 1]]` belong to event `k`.
    offsets: Vec<usize>,
    changes: Vec<Change>,
    has_events: bool,
    has_null_events: bool,
    snapshots: Vec<Snapshot>,
}

impl Trajectory {
    pub fn initial(&self) -> &Configuration {
        &self.initial
    }

    pub fn final_state(&self) -> &Configuration {
        &self.final_state
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn has_events(&self) -> bool {
        self.has_events
    }

    pub fn has_null_events(&self) -> bool {
        self.has_null_events
    }

    pub fn n_events(&self) -> usize {
        self.times.len()
    }

    pub fn events(&self) -> impl Iterator<Item = (f64, &[Change])> + '_ {
        self.times
            .iter()
            .enumerate()
            .map(move |(k, &t)| (t, &self.changes[self.offsets[k]..self.offsets[k + 1]]))
    }

    pub fn snapshots(&self) -> &[Snapshot] {
        &self.snapshots
    }

    /// Feeds the recorded run to `obs` as if it were running live.
    pub fn replay<O: Observer>(&self, obs: &mut O) -> Result<()> {
        if !self.has_events {
            return Err(Error::Contract("trajectory was recorded without its event list".into()));
        }
        let mut cfg = self.initial.clone();
        obs.start(0.0, &cfg);
        let nulls = obs.wants_null_events();
        let mut buf = Vec::new();
        for (t, changes) in self.events() {
            obs.advance(t, &cfg);
            for c in changes.iter().filter(|c| !c.is_null()) {
                cfg.set(c.site as usize, c.to);
            }
            if nulls {
                obs.event(t, changes, &cfg);
            } else {
                buf.clear();
                buf.extend(changes.iter().filter(|c| !c.is_null()).copied());
                if !buf.is_empty() {
                    obs.event(t, &buf, &cfg);
                }
            }
        }
        obs.finish(self.t_end, &cfg);
        Ok(())
    }

    /// Configuration after every event at or before `t`.
    pub fn state_at(&self, t: f64) -> Result<Configuration> {
        if !self.has_events {
            return Err(Error::Contract("trajectory was recorded without its event list".into()));
        }
        if t < 0.0 || t > self.t_end {
            return Err(Error::InvalidArgument(format!("time {t} outside [0, {}]", self.t_end)));
        }
        let mut cfg = self.initial.clone();
        for (te, changes) in self.events() {
            if te > t {
                break;
            }
            for c in changes {
                cfg.set(c.site as usize, c.to);
            }
        }
        Ok(cfg)
    }

    /// Replays the change list and compares against every stored snapshot
    /// and the final state.
    pub fn replay_matches_snapshots(&self) -> bool {
        if !self.has_events {
            return false;
        }
        let mut cfg = self.initial.clone();
        let mut events = self.events().peekable();
        for snap in &self.snapshots {
            while let Some((t, changes)) = events.peek() {
                if *t > snap.t {
                    break;
                }
                for c in *changes {
                    cfg.set(c.site as usize, c.to);
                }
                events.next();
            }
            if cfg.counts() != snap.counts {
                return false;
            }
            if let Some(s) = &snap.states {
                if *s != cfg {
                    return false;
                }
            }
        }
        for (_, changes) in events {
            for c in changes {
                cfg.set(c.site as usize, c.to);
            }
        }
        cfg == self.final_state
    }
}

/// Observer that builds a [`Trajectory`].
#[derive(Clone, Debug)]
pub struct Recorder {
    opts: RecordOptions,
    t_end: f64,
    next_grid: u64,
    initial: Option<Configuration>,
    final_state: Option<Configuration>,
    times: Vec<f64>,
    offsets: Vec<usize>,
    changes: Vec<Change>,
    snapshots: Vec<Snapshot>,
}

impl Recorder {
    pub fn new(opts: RecordOptions, t_end: f64) -> Self {
        Self {
            opts,
            t_end,
            next_grid: 0,
            initial: None,
            final_state: None,
            times: Vec::new(),
            offsets: vec![0],
            changes: Vec::new(),
            snapshots: Vec::new(),
        }
    }

    fn grid_time(&self, k: u64) -> Option<f64> {
        let dt = self.opts.snapshot_dt?;
        let t = k as f64 * dt;
        (t <= self.t_end * (1.0 + 1e-12)).then_some(t)
    }

    fn snapshot_through(&mut self, limit: f64, inclusive: bool, cfg: &Configuration) {
        while let Some(g) = self.grid_time(self.next_grid) {
            if g > limit || (!inclusive && g == limit) {
                break;
            }
            self.snapshots.push(Snapshot {
                t: g,
                counts: cfg.counts(),
                states: self.opts.snapshot_states.then(|| cfg.clone()),
            });
            self.next_grid += 1;
        }
    }

    pub fn into_trajectory(self) -> Trajectory {
        let initial = self.initial.expect("recorder was started");
        Trajectory {
            final_state: self.final_state.unwrap_or_else(|| initial.clone()),
            initial,
            t_end: self.t_end,
            times: self.times,
            offsets: self.offsets,
            changes: self.changes,
            has_events: self.opts.events,
            has_null_events: self.opts.events && self.opts.null_events,
            snapshots: self.snapshots,
        }
    }
}

impl Observer for Recorder {
    fn start(&mut self, t0: f64, cfg: &Configuration) {
        self.initial = Some(cfg.clone());
        self.snapshot_through(t0, true, cfg);
    }

    fn advance(&mut self, t: f64, cfg: &Configuration) {
        self.snapshot_through(t, false, cfg);
    }

    fn event(&mut self, t: f64, changes: &[Change], _cfg: &Configuration) {
        if !self.opts.events {
            return;
        }
        let before = self.changes.len();
        if self.opts.null_events {
            self.changes.extend_from_slice(changes);
        } else {
            self.changes.extend(changes.iter().filter(|c| !c.is_null()));
        }
        if self.changes.len() > before {
            self.times.push(t);
            self.offsets.push(self.changes.len());
        }
    }

    fn finish(&mut self, t_end: f64, cfg: &Configuration) {
        self.snapshot_through(t_end * (1.0 + 1e-12), true, cfg);
        self.final_state = Some(cfg.clone());
    }

    fn wants_null_events(&self) -> bool {
        self.opts.events && self.opts.null_events
    }
}

//! Graphical representation: independent Poisson marks on sites and arrows
//! on ordered edges, replayed against a configuration.
//!
//! Channels per ordered edge `x -> y` (rates divided by `2d`):
//!
//! | channel          | pathogen orientation | mutualist orientation |
//! |------------------|----------------------|-----------------------|
//! | `ExclusiveBirth` | `lambda10 - lambda20`, healthy parents only | `lambda20 - lambda10`, infected parents only |
//! | `SharedBirth`    | `lambda20`, any occupied parent | `lambda10`, any occupied parent |
//! | `Infect`         | `lambda21` | `lambda21` |
//!
//! and per site `Death` at rate 1 and `Recover` at rate `delta`. A birth
//! arrow gives the target the parent's type when the target is empty.
//!
//! The stream is generated lazily in chunks of `chunk_len` time units.
//! Chunk `k` of channel `c` uses its own counter-based stream, so any chunk
//! can be regenerated without generating the ones before it.

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::engine::gillespie::check_run_inputs;
use crate::engine::observer::{Cause, Change, Observer};
use crate::engine::trajectory::{RecordOptions, Recorder, Trajectory};
use crate::model::{Configuration, Lattice, NeighborTable, Params, State};
use crate::rng::{channel, StreamKey};
use crate::{Error, Result};

pub const DEFAULT_CHUNK_LEN: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Channel {
    ExclusiveBirth = 0,
    SharedBirth = 1,
    Infect = 2,
    Death = 3,
    Recover = 4,
}

impl Channel {
    pub const ALL: [Channel; 5] =
        [Channel::ExclusiveBirth, Channel::SharedBirth, Channel::Infect, Channel::Death, Channel::Recover];

    pub fn is_arrow(self) -> bool {
        matches!(self, Channel::ExclusiveBirth | Channel::SharedBirth | Channel::Infect)
    }
}

/// Which host type owns the exclusive birth arrows.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Orientation {
    /// `lambda10 >= lambda20`: exclusive arrows carry healthy births.
    Pathogen,
    /// `lambda20 >= lambda10`: exclusive arrows carry infected births.
    Mutualist,
}

impl Orientation {
    pub fn for_params(p: &Params) -> Self {
        if p.lambda10 >= p.lambda20 { Orientation::Pathogen } else { Orientation::Mutualist }
    }

    fn exclusive_parent(self) -> State {
        match self {
            Orientation::Pathogen => State::Healthy,
            Orientation::Mutualist => State::Infected,
        }
    }
}

/// Which process reads the stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Process {
    /// The full three-state process.
    Stacked,
    /// Contact process reading both birth channels; occupied sites are `Healthy`.
    UpperContact,
    /// Contact process reading shared birth arrows only.
    LowerContact,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HarrisEvent {
    pub time: f64,
    /// Site index for marks; `site * 2d + dir` for arrows.
    pub unit: u32,
    pub channel: Channel,
}

/// Lazily generated marks and arrows on `[0, t_end]`.
#[derive(Clone, Debug)]
pub struct EventStream {
    lattice: Lattice,
    key: StreamKey,
    t_end: f64,
    chunk_len: f64,
    orientation: Orientation,
    /// Per-unit rate of each channel.
    rates: [f64; 5],
}

/// Stream for `p` in its natural orientation, keyed by `key`.
pub fn build_harris(p: &Params, t_end: f64, key: StreamKey) -> Result<EventStream> {
    build_harris_oriented(p, Orientation::for_params(p), t_end, key)
}

pub fn build_harris_oriented(p: &Params, orientation: Orientation, t_end: f64, key: StreamKey) -> Result<EventStream> {
    p.validate()?;
    let lambda21 = p.finite_lambda21("the graphical representation")?;
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidArgument(format!("t_end = {t_end} must be positive and finite")));
    }
    let (exclusive, shared) = match orientation {
        Orientation::Pathogen => (p.lambda10 - p.lambda20, p.lambda20),
        Orientation::Mutualist => (p.lambda20 - p.lambda10, p.lambda10),
    };
    if exclusive < 0.0 {
        return Err(Error::Contract(format!("{orientation:?} orientation has negative exclusive rate {exclusive}")));
    }
    let deg = (2 * p.dim) as f64;
    Ok(EventStream {
        lattice: p.lattice(),
        key,
        t_end,
        chunk_len: DEFAULT_CHUNK_LEN,
        orientation,
        rates: [exclusive / deg, shared / deg, lambda21 / deg, 1.0, p.delta],
    })
}

impl EventStream {
    pub fn with_chunk_len(mut self, chunk_len: f64) -> Result<Self> {
        if !(chunk_len > 0.0 && chunk_len.is_finite()) {
            return Err(Error::InvalidArgument(format!("chunk length {chunk_len} must be positive")));
        }
        self.chunk_len = chunk_len;
        Ok(self)
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn chunk_len(&self) -> f64 {
        self.chunk_len
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn key(&self) -> StreamKey {
        self.key
    }

    /// Per-unit (per ordered edge or per site) rate of a channel.
    pub fn rate(&self, c: Channel) -> f64 {
        self.rates[c as usize]
    }

    pub fn units(&self, c: Channel) -> usize {
        let n = self.lattice.n_sites();
        if c.is_arrow() { n * self.lattice.degree() } else { n }
    }

    pub fn n_chunks(&self) -> u64 {
        (self.t_end / self.chunk_len).ceil().max(1.0) as u64
    }

    /// Events of chunk `k`, sorted by (time, unit, channel).
    pub fn chunk(&self, k: u64) -> Vec<HarrisEvent> {
        let start = k as f64 * self.chunk_len;
        let end = ((k + 1) as f64 * self.chunk_len).min(self.t_end);
        let len = end - start;
        let mut out = Vec::new();
        if len <= 0.0 {
            return out;
        }
        for c in Channel::ALL {
            let mean = self.rate(c) * self.units(c) as f64 * len;
            if mean <= 0.0 {
                continue;
            }
            let mut rng = self.key.rng(channel::HARRIS_BASE + c as u16, k);
            let count = Poisson::new(mean).expect("positive finite mean").sample(&mut rng) as u64;
            let units = self.units(c) as u32;
            out.reserve(count as usize);
            for _ in 0..count {
                let unit = rng.random_range(0..units);
                let time = start + len * rng.random::<f64>();
                out.push(HarrisEvent { time, unit, channel: c });
            }
        }
        out.sort_unstable_by(|a, b| {
            a.time.total_cmp(&b.time).then(a.unit.cmp(&b.unit)).then(a.channel.cmp(&b.channel))
        });
        out
    }

    /// All events in time order, one chunk in memory at a time.
    pub fn iter(&self) -> impl Iterator<Item = HarrisEvent> + '_ {
        (0..self.n_chunks()).flat_map(move |k| self.chunk(k))
    }
}

/// How one process reads the stream.
#[derive(Clone, Debug)]
pub struct Rules {
    process: Process,
    orientation: Orientation,
    nbrs: NeighborTable,
}

impl Rules {
    pub fn new(process: Process, stream: &EventStream) -> Self {
        Self { process, orientation: stream.orientation, nbrs: NeighborTable::new(&stream.lattice) }
    }

    pub fn process(&self) -> Process {
        self.process
    }

    /// Source and target of an arrow unit.
    pub fn arrow(&self, unit: u32) -> (usize, usize) {
        let deg = self.nbrs.degree();
        let x = unit as usize / deg;
        (x, self.nbrs.of(x)[unit as usize % deg] as usize)
    }

    /// Applies one event; pushes the resulting change, if any, to `out`.
    pub fn apply(&self, cfg: &mut Configuration, ev: &HarrisEvent, nulls: bool, out: &mut Vec<Change>) {
        match ev.channel {
            Channel::ExclusiveBirth | Channel::SharedBirth => {
                let (x, y) = self.arrow(ev.unit);
                let parent = cfg.get(x);
                let target = cfg.get(y);
                let child = match self.process {
                    Process::Stacked => {
                        let allowed = ev.channel == Channel::SharedBirth
                            || parent == self.orientation.exclusive_parent();
                        if !(parent.is_occupied() && allowed) {
                            return;
                        }
                        parent
                    }
                    Process::UpperContact => {
                        if !parent.is_occupied() {
                            return;
                        }
                        State::Healthy
                    }
                    Process::LowerContact => {
                        if ev.channel != Channel::SharedBirth || !parent.is_occupied() {
                            return;
                        }
                        State::Healthy
                    }
                };
                if target == State::Empty {
                    cfg.set(y, child);
                } else if !(nulls && target == child) {
                    return;
                }
                out.push(Change { site: y as u32, source: Some(x as u32), cause: Cause::Birth, from: target, to: child });
            }
            Channel::Infect => {
                if self.process != Process::Stacked {
                    return;
                }
                let (x, y) = self.arrow(ev.unit);
                if cfg.get(x) == State::Infected && cfg.get(y) == State::Healthy {
                    cfg.set(y, State::Infected);
                    out.push(Change {
                        site: y as u32,
                        source: Some(x as u32),
                        cause: Cause::Infection,
                        from: State::Healthy,
                        to: State::Infected,
                    });
                }
            }
            Channel::Death => {
                let x = ev.unit as usize;
                let s = cfg.get(x);
                if s.is_occupied() {
                    cfg.set(x, State::Empty);
                    out.push(Change { site: ev.unit, source: None, cause: Cause::Death, from: s, to: State::Empty });
                }
            }
            Channel::Recover => {
                let x = ev.unit as usize;
                if self.process == Process::Stacked && cfg.get(x) == State::Infected {
                    cfg.set(x, State::Healthy);
                    out.push(Change {
                        site: ev.unit,
                        source: None,
                        cause: Cause::Recovery,
                        from: State::Infected,
                        to: State::Healthy,
                    });
                }
            }
        }
    }

    /// Starting configuration this process uses for `cfg0`.
    pub fn initial(&self, cfg0: &Configuration) -> Configuration {
        match self.process {
            Process::Stacked => cfg0.clone(),
            Process::UpperContact | Process::LowerContact => cfg0.occupied(),
        }
    }
}

/// Replays `stream` from `cfg0` under `process` and records a trajectory.
pub fn apply_harris(
    cfg0: &Configuration,
    stream: &EventStream,
    process: Process,
    opts: RecordOptions,
) -> Result<Trajectory> {
    let mut rec = Recorder::new(opts, stream.t_end);
    apply_harris_with(cfg0, stream, process, &mut rec)?;
    Ok(rec.into_trajectory())
}

/// Replays `stream` from `cfg0`, streaming events to `obs`.
pub fn apply_harris_with<O: Observer>(
    cfg0: &Configuration,
    stream: &EventStream,
    process: Process,
    obs: &mut O,
) -> Result<Configuration> {
    if cfg0.lattice() != stream.lattice {
        return Err(Error::InvalidArgument("configuration lattice does not match the stream".into()));
    }
    let rules = Rules::new(process, stream);
    let mut cfg = rules.initial(cfg0);
    let nulls = obs.wants_null_events();
    let mut changes = Vec::with_capacity(1);
    obs.start(0.0, &cfg);
    for ev in stream.iter() {
        changes.clear();
        rules.apply(&mut cfg, &ev, nulls, &mut changes);
        if changes.is_empty() {
            continue;
        }
        // The observer must see the pre-event state, so undo and redo the change.
        let c = changes[0];
        if !c.is_null() {
            cfg.set(c.site as usize, c.from);
        }
        obs.advance(ev.time, &cfg);
        if !c.is_null() {
            cfg.set(c.site as usize, c.to);
        }
        obs.event(ev.time, &changes, &cfg);
    }
    obs.finish(stream.t_end, &cfg);
    Ok(cfg)
}

/// Builds the stream for `p` and replays the stacked process.
pub fn run_harris(
    cfg0: &Configuration,
    p: &Params,
    t_end: f64,
    key: StreamKey,
    opts: RecordOptions,
) -> Result<Trajectory> {
    check_run_inputs(cfg0, p, t_end)?;
    let stream = build_harris(p, t_end, key)?;
    apply_harris(cfg0, &stream, Process::Stacked, opts)
}

pub fn run_harris_with<O: Observer>(
    cfg0: &Configuration,
    p: &Params,
    t_end: f64,
    key: StreamKey,
    obs: &mut O,
) -> Result<Configuration> {
    check_run_inputs(cfg0, p, t_end)?;
    let stream = build_harris(p, t_end, key)?;
    apply_harris_with(cfg0, &stream, Process::Stacked, obs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::InfectionRate;

    fn params(l10: f64, l20: f64, l21: f64, delta: f64, side: usize) -> Params {
        Params::finite(l10, l20, l21, delta, 1, side, 0).unwrap()
    }

    fn count(stream: &EventStream, c: Channel) -> usize {
        stream.iter().filter(|e| e.channel == c).count()
    }

    #[test]
    fn death_marks_have_poisson_mean() {
        // rate 1 x 4 sites x 2 time units
        let p = params(2.0, 1.0, 1.0, 0.0, 4);
        let n = 4000;
        let total: usize = (0..n)
            .map(|r| count(&build_harris(&p, 2.0, StreamKey::new(3, r)).unwrap(), Channel::Death))
            .sum();
        let mean = total as f64 / n as f64;
        assert!((mean - 8.0).abs() < 4.0 * (8.0f64 / n as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn null_channels_are_empty() {
        let s = build_harris(&params(2.0, 1.0, 1.0, 0.0, 6), 5.0, StreamKey::new(1, 0)).unwrap();
        assert_eq!(count(&s, Channel::Recover), 0);
        let s = build_harris(&params(1.5, 1.5, 1.0, 0.3, 6), 5.0, StreamKey::new(1, 0)).unwrap();
        assert_eq!(count(&s, Channel::ExclusiveBirth), 0);
        assert!(count(&s, Channel::SharedBirth) > 0);
    }

    #[test]
    fn stream_is_sorted_and_within_window() {
        let s = build_harris(&params(3.0, 1.0, 2.0, 0.5, 8), 3.5, StreamKey::new(9, 2)).unwrap();
        let evs: Vec<_> = s.iter().collect();
        assert!(evs.windows(2).all(|w| w[0].time <= w[1].time));
        assert!(evs.iter().all(|e| (0.0..=3.5).contains(&e.time)));
    }

    #[test]
    fn rejects_infinite_rate_and_wrong_orientation() {
        let p = Params::new(2.0, 1.0, InfectionRate::Infinite, 0.0, 1, 5, 0).unwrap();
        assert!(matches!(build_harris(&p, 1.0, StreamKey::new(0, 0)), Err(Error::Contract(_))));
        let p = params(1.0, 2.0, 0.0, 0.0, 5);
        assert!(matches!(
            build_harris_oriented(&p, Orientation::Pathogen, 1.0, StreamKey::new(0, 0)),
            Err(Error::Contract(_))
        ));
        assert!(build_harris(&p, 1.0, StreamKey::new(0, 0)).is_ok());
    }

    #[test]
    fn shared_arrow_passes_parent_type() {
        let p = params(2.0, 1.0, 0.0, 0.0, 5);
        let s = build_harris(&p, 1.0, StreamKey::new(0, 0)).unwrap();
        let rules = Rules::new(Process::Stacked, &s);
        // unit 2 * 2 + 0: arrow 2 -> 3
        let ev = HarrisEvent { time: 0.5, unit: 4, channel: Channel::SharedBirth };
        for parent in [State::Healthy, State::Infected] {
            let mut cfg = Configuration::from_digits("00000").unwrap();
            cfg.set(2, parent);
            let mut out = Vec::new();
            rules.apply(&mut cfg, &ev, false, &mut out);
            assert_eq!(cfg.get(3), parent);
            assert_eq!(out[0].source, Some(2));
        }
        // exclusive arrows only carry healthy parents in this orientation
        let ev = HarrisEvent { time: 0.5, unit: 4, channel: Channel::ExclusiveBirth };
        let mut cfg = Configuration::from_digits("00200").unwrap();
        let mut out = Vec::new();
        rules.apply(&mut cfg, &ev, true, &mut out);
        assert_eq!(cfg.to_digits(), "00200");
        assert!(out.is_empty());
        // onto an occupied site of the same type: null event on request
        let mut cfg = Configuration::from_digits("00110").unwrap();
        rules.apply(&mut cfg, &ev, true, &mut out);
        assert_eq!(out.len(), 1);
        assert!(out[0].is_null());
    }

    #[test]
    fn replay_is_deterministic() {
        let p = params(3.0, 1.0, 1.5, 0.5, 30);
        let mut rng = StreamKey::new(4, 0).rng(channel::INITIAL, 0);
        let cfg = Configuration::random(p.lattice(), 0.4, 0.2, &mut rng).unwrap();
        let s = build_harris(&p, 4.0, StreamKey::new(4, 1)).unwrap();
        let opts = RecordOptions { snapshot_dt: Some(0.5), snapshot_states: true, ..RecordOptions::default() };
        let a = apply_harris(&cfg, &s, Process::Stacked, opts).unwrap();
        let b = apply_harris(&cfg, &s, Process::Stacked, opts).unwrap();
        assert_eq!(a.events().collect::<Vec<_>>(), b.events().collect::<Vec<_>>());
        assert_eq!(a.snapshots(), b.snapshots());
        assert!(a.replay_matches_snapshots());
        assert_eq!(a.snapshots().len(), 9);
    }

    #[test]
    fn lower_contact_from_empty_stays_empty() {
        let p = params(3.0, 1.0, 1.5, 0.5, 10);
        let s = build_harris(&p, 4.0, StreamKey::new(4, 1)).unwrap();
        let cfg = Configuration::empty(p.lattice());
        let t = apply_harris(&cfg, &s, Process::LowerContact, RecordOptions::default()).unwrap();
        assert_eq!(t.n_events(), 0);
    }

    #[test]
    fn chunks_regenerate_independently() {
        let s = build_harris(&params(3.0, 1.0, 1.5, 0.5, 10), 4.0, StreamKey::new(8, 0)).unwrap();
        assert_eq!(s.chunk(2), s.chunk(2));
        let all: Vec<_> = s.iter().collect();
        let third: Vec<_> = all.iter().filter(|e| (2.0..3.0).contains(&e.time)).copied().collect();
        assert_eq!(third, s.chunk(2));
    }
}

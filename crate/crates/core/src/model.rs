//! Domain types shared by every engine: parameters, lattice geometry,
//! configurations and the local transition rates.

use std::fmt;

use rand::Rng;
use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use crate::{Error, Result};

/// Site state. Stored as one byte per site.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
#[repr(u8)]
pub enum State {
    #[default]
    Empty = 0,
    Healthy = 1,
    Infected = 2,
}

impl State {
    pub const ALL: [State; 3] = [State::Empty, State::Healthy, State::Infected];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_occupied(self) -> bool {
        self != State::Empty
    }

    pub fn digit(self) -> char {
        (b'0' + self as u8) as char
    }
}

/// Serialized as its digit value.
impl Serialize for State {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u8(*self as u8)
    }
}

impl TryFrom<u8> for State {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            0 => Ok(State::Empty),
            1 => Ok(State::Healthy),
            2 => Ok(State::Infected),
            _ => Err(Error::InvalidArgument(format!("state {v} is not one of 0, 1, 2"))),
        }
    }
}

/// Horizontal transmission rate. `Infinite` means healthy hosts next to an
/// infected host are invaded instantaneously.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InfectionRate {
    Finite(f64),
    Infinite,
}

impl InfectionRate {
    pub fn finite(self) -> Option<f64> {
        match self {
            InfectionRate::Finite(v) => Some(v),
            InfectionRate::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, InfectionRate::Infinite)
    }
}

impl fmt::Display for InfectionRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InfectionRate::Finite(v) => write!(f, "{v}"),
            InfectionRate::Infinite => f.write_str("inf"),
        }
    }
}

impl std::str::FromStr for InfectionRate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinite" | "infinity" => Ok(InfectionRate::Infinite),
            other => other
                .parse::<f64>()
                .map(InfectionRate::Finite)
                .map_err(|_| Error::Parse(format!("bad infection rate {s:?}"))),
        }
    }
}

// Serialized as a plain number, or the string "inf".
impl Serialize for InfectionRate {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            InfectionRate::Finite(v) => s.serialize_f64(*v),
            InfectionRate::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for InfectionRate {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct RateVisitor;

        impl Visitor<'_> for RateVisitor {
            type Value = InfectionRate;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a nonnegative number or \"inf\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<InfectionRate, E> {
                Ok(InfectionRate::Finite(v))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<InfectionRate, E> {
                Ok(InfectionRate::Finite(v as f64))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<InfectionRate, E> {
                Ok(InfectionRate::Finite(v as f64))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<InfectionRate, E> {
                v.parse().map_err(|_| E::invalid_value(de::Unexpected::Str(v), &self))
            }
        }

        d.deserialize_any(RateVisitor)
    }
}

/// Model rates plus geometry and the reproducibility seed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Params {
    /// Birth rate of healthy hosts.
    pub lambda10: f64,
    /// Birth rate of infected hosts.
    pub lambda20: f64,
    /// Horizontal infection rate.
    pub lambda21: InfectionRate,
    /// Recovery rate.
    pub delta: f64,
    pub dim: usize,
    pub side: usize,
    pub seed: u64,
}

impl Params {
    pub fn new(
        lambda10: f64,
        lambda20: f64,
        lambda21: InfectionRate,
        delta: f64,
        dim: usize,
        side: usize,
        seed: u64,
    ) -> Result<Self> {
        let p = Self { lambda10, lambda20, lambda21, delta, dim, side, seed };
        p.validate()?;
        Ok(p)
    }

    /// Shorthand for a finite infection rate.
    pub fn finite(
        lambda10: f64,
        lambda20: f64,
        lambda21: f64,
        delta: f64,
        dim: usize,
        side: usize,
        seed: u64,
    ) -> Result<Self> {
        Self::new(lambda10, lambda20, InfectionRate::Finite(lambda21), delta, dim, side, seed)
    }

    pub fn validate(&self) -> Result<()> {
        let mut rates = vec![("lambda10", self.lambda10), ("lambda20", self.lambda20), ("delta", self.delta)];
        if let InfectionRate::Finite(v) = self.lambda21 {
            rates.push(("lambda21", v));
        }
        for (name, v) in rates {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidArgument(format!("{name} = {v} must be finite and nonnegative")));
            }
        }
        if self.dim == 0 {
            return Err(Error::InvalidArgument("dimension must be at least 1".into()));
        }
        if self.side < 3 {
            return Err(Error::InvalidArgument(format!("torus side {} must be at least 3", self.side)));
        }
        if self.lambda21.is_infinite() && self.dim != 1 {
            return Err(Error::Unsupported("an infinite infection rate is only defined in one dimension".into()));
        }
        Lattice::new(self.dim, self.side).map(|_| ())
    }

    pub fn lattice(&self) -> Lattice {
        Lattice { dim: self.dim, side: self.side }
    }

    pub fn regime(&self) -> Regime {
        classify_regime(self)
    }

    /// Finite infection rate, or a contract error naming `op`.
    pub(crate) fn finite_lambda21(&self, op: &str) -> Result<f64> {
        self.lambda21
            .finite()
            .ok_or_else(|| Error::Contract(format!("{op} requires a finite infection rate")))
    }
}

/// Effect of the symbiont on host fecundity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    Pathogen,
    Neutral,
    Mutualist,
}

pub fn classify_regime(p: &Params) -> Regime {
    if p.lambda20 < p.lambda10 {
        Regime::Pathogen
    } else if p.lambda20 > p.lambda10 {
        Regime::Mutualist
    } else {
        Regime::Neutral
    }
}

/// Periodic lattice `(Z / side Z)^dim`. Site `x` has coordinates
/// `x = c[0] + side * c[1] + side^2 * c[2] + ...`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Lattice {
    pub dim: usize,
    pub side: usize,
}

impl Lattice {
    pub fn new(dim: usize, side: usize) -> Result<Self> {
        if dim == 0 || side < 3 {
            return Err(Error::InvalidArgument(format!("lattice needs dim >= 1 and side >= 3, got {dim}, {side}")));
        }
        let n = (side as u128).checked_pow(dim as u32).unwrap_or(u128::MAX);
        if n > u32::MAX as u128 {
            return Err(Error::InvalidArgument(format!("{side}^{dim} sites do not fit in 32-bit indices")));
        }
        Ok(Self { dim, side })
    }

    pub fn n_sites(&self) -> usize {
        self.side.pow(self.dim as u32)
    }

    /// Number of nearest neighbours, `2 * dim`.
    pub fn degree(&self) -> usize {
        2 * self.dim
    }

    pub fn coords(&self, mut x: usize) -> Vec<usize> {
        (0..self.dim)
            .map(|_| {
                let c = x % self.side;
                x /= self.side;
                c
            })
            .collect()
    }

    /// Site index of coordinates taken modulo the side.
    pub fn index(&self, coords: &[i64]) -> usize {
        debug_assert_eq!(coords.len(), self.dim);
        let side = self.side as i64;
        coords.iter().rev().fold(0usize, |acc, &c| acc * self.side + c.rem_euclid(side) as usize)
    }

    /// Neighbour of `x` in direction `dir`: `2a` is `+e_a`, `2a + 1` is `-e_a`.
    pub fn neighbor(&self, x: usize, dir: usize) -> usize {
        let axis = dir / 2;
        let stride = self.side.pow(axis as u32);
        let c = (x / stride) % self.side;
        if dir.is_multiple_of(2) {
            if c + 1 == self.side { x - (self.side - 1) * stride } else { x + stride }
        } else if c == 0 {
            x + (self.side - 1) * stride
        } else {
            x - stride
        }
    }

    pub fn neighbors(&self, x: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.degree()).map(move |dir| self.neighbor(x, dir))
    }
}

/// Precomputed neighbour lists, `degree` entries per site.
#[derive(Clone, Debug)]
pub struct NeighborTable {
    degree: usize,
    table: Vec<u32>,
}

impl NeighborTable {
    pub fn new(lattice: &Lattice) -> Self {
        let degree = lattice.degree();
        let mut table = Vec::with_capacity(lattice.n_sites() * degree);
        for x in 0..lattice.n_sites() {
            table.extend(lattice.neighbors(x).map(|y| y as u32));
        }
        Self { degree, table }
    }

    #[inline]
    pub fn of(&self, x: usize) -> &[u32] {
        &self.table[x * self.degree..(x + 1) * self.degree]
    }

    pub fn degree(&self) -> usize {
        self.degree
    }
}

/// Torus configuration with cached per-state counts.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Configuration {
    lattice: Lattice,
    states: Vec<State>,
    counts: [usize; 3],
}

impl Configuration {
    pub fn uniform(lattice: Lattice, state: State) -> Self {
        let n = lattice.n_sites();
        let mut counts = [0; 3];
        counts[state.index()] = n;
        Self { lattice, states: vec![state; n], counts }
    }

    pub fn empty(lattice: Lattice) -> Self {
        Self::uniform(lattice, State::Empty)
    }

    pub fn from_states(lattice: Lattice, states: Vec<State>) -> Result<Self> {
        if states.len() != lattice.n_sites() {
            return Err(Error::InvalidArgument(format!(
                "{} states given for a lattice of {} sites",
                states.len(),
                lattice.n_sites()
            )));
        }
        let mut counts = [0; 3];
        for s in &states {
            counts[s.index()] += 1;
        }
        Ok(Self { lattice, states, counts })
    }

    /// One-line digit form of a one-dimensional configuration, e.g. `"0120"`.
    pub fn from_digits(digits: &str) -> Result<Self> {
        let states = digits
            .trim()
            .bytes()
            .map(|b| match b {
                b'0'..=b'9' => State::try_from(b - b'0'),
                _ => Err(Error::Parse(format!("unexpected character {:?} in digit string", b as char))),
            })
            .collect::<Result<Vec<_>>>()?;
        let lattice = Lattice::new(1, states.len())?;
        Self::from_states(lattice, states)
    }

    pub fn to_digits(&self) -> String {
        self.states.iter().map(|s| s.digit()).collect()
    }

    /// Independent sites: healthy with probability `p1`, infected with `p2`.
    pub fn random<R: Rng + ?Sized>(lattice: Lattice, p1: f64, p2: f64, rng: &mut R) -> Result<Self> {
        if !(p1 >= 0.0 && p2 >= 0.0 && p1 + p2 <= 1.0) {
            return Err(Error::InvalidArgument(format!("site probabilities {p1}, {p2} are not a distribution")));
        }
        let states = (0..lattice.n_sites())
            .map(|_| {
                let u: f64 = rng.random();
                if u < p1 {
                    State::Healthy
                } else if u < p1 + p2 {
                    State::Infected
                } else {
                    State::Empty
                }
            })
            .collect();
        Self::from_states(lattice, states)
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn dim(&self) -> usize {
        self.lattice.dim
    }

    pub fn side(&self) -> usize {
        self.lattice.side
    }

    pub fn n_sites(&self) -> usize {
        self.states.len()
    }

    #[inline]
    pub fn get(&self, x: usize) -> State {
        self.states[x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, s: State) {
        let old = std::mem::replace(&mut self.states[x], s);
        self.counts[old.index()] -= 1;
        self.counts[s.index()] += 1;
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn counts(&self) -> [usize; 3] {
        self.counts
    }

    pub fn count(&self, s: State) -> usize {
        self.counts[s.index()]
    }

    pub fn densities(&self) -> [f64; 3] {
        let n = self.n_sites() as f64;
        self.counts.map(|c| c as f64 / n)
    }

    /// Occupancy pattern: every occupied site becomes `Healthy`.
    pub fn occupied(&self) -> Configuration {
        let states = self
            .states
            .iter()
            .map(|s| if s.is_occupied() { State::Healthy } else { State::Empty })
            .collect();
        Configuration::from_states(self.lattice, states).expect("same lattice")
    }

    /// Recounts the states and compares with the cache.
    pub fn counts_consistent(&self) -> bool {
        let mut counts = [0; 3];
        for s in &self.states {
            counts[s.index()] += 1;
        }
        counts == self.counts
    }

    /// True when some infected site has a healthy neighbour.
    pub fn has_infected_healthy_contact(&self) -> bool {
        (0..self.n_sites()).any(|x| {
            self.states[x] == State::Infected
                && self.lattice.neighbors(x).any(|y| self.states[y] == State::Healthy)
        })
    }

    fn check_site(&self, x: usize) -> Result<()> {
        if x >= self.n_sites() {
            return Err(Error::InvalidArgument(format!("site {x} outside a lattice of {} sites", self.n_sites())));
        }
        Ok(())
    }

    fn neighbor_count(&self, x: usize, s: State) -> usize {
        self.lattice.neighbors(x).filter(|&y| self.states[y] == s).count()
    }
}

/// Fraction of the `2d` nearest neighbours of `x` that are in state `i`.
pub fn neighbor_fraction(x: usize, i: State, cfg: &Configuration) -> Result<f64> {
    cfg.check_site(x)?;
    Ok(cfg.neighbor_count(x, i) as f64 / cfg.lattice.degree() as f64)
}

/// The six single-site transitions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Transition {
    /// 0 -> 1
    BirthHealthy,
    /// 0 -> 2
    BirthInfected,
    /// 1 -> 0
    DeathHealthy,
    /// 1 -> 2
    Infection,
    /// 2 -> 0
    DeathInfected,
    /// 2 -> 1
    Recovery,
}

impl Transition {
    pub const ALL: [Transition; 6] = [
        Transition::BirthHealthy,
        Transition::BirthInfected,
        Transition::DeathHealthy,
        Transition::Infection,
        Transition::DeathInfected,
        Transition::Recovery,
    ];

    pub fn from_state(self) -> State {
        match self {
            Transition::BirthHealthy | Transition::BirthInfected => State::Empty,
            Transition::DeathHealthy | Transition::Infection => State::Healthy,
            Transition::DeathInfected | Transition::Recovery => State::Infected,
        }
    }

    pub fn to_state(self) -> State {
        match self {
            Transition::BirthHealthy | Transition::Recovery => State::Healthy,
            Transition::BirthInfected | Transition::Infection => State::Infected,
            Transition::DeathHealthy | Transition::DeathInfected => State::Empty,
        }
    }
}

/// Rates of the six transitions at one site. Only the two or three
/// transitions leaving the current state can be nonzero.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct TransitionRates([f64; 6]);

impl TransitionRates {
    pub fn get(&self, t: Transition) -> f64 {
        self.0[t as usize]
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Transition, f64)> + '_ {
        Transition::ALL.into_iter().map(move |t| (t, self.get(t)))
    }

    /// Rate into state `s` from the current state.
    pub fn into_state(&self, s: State) -> f64 {
        self.iter().filter(|(t, _)| t.to_state() == s).map(|(_, r)| r).sum()
    }
}

/// Local transition rates at `x` under `p`.
pub fn transition_rates(x: usize, cfg: &Configuration, p: &Params) -> Result<TransitionRates> {
    cfg.check_site(x)?;
    let lambda21 = p.finite_lambda21("transition_rates")?;
    let mut r = [0.0; 6];
    let f = |s| cfg.neighbor_count(x, s) as f64 / cfg.lattice.degree() as f64;
    match cfg.get(x) {
        State::Empty => {
            r[Transition::BirthHealthy as usize] = p.lambda10 * f(State::Healthy);
            r[Transition::BirthInfected as usize] = p.lambda20 * f(State::Infected);
        }
        State::Healthy => {
            r[Transition::DeathHealthy as usize] = 1.0;
            r[Transition::Infection as usize] = lambda21 * f(State::Infected);
        }
        State::Infected => {
            r[Transition::DeathInfected as usize] = 1.0;
            r[Transition::Recovery as usize] = p.delta;
        }
    }
    Ok(TransitionRates(r))
}

/// One site converted by invasion, together with the infected neighbour
/// that invaded it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Invasion {
    pub site: usize,
    pub source: usize,
}

/// Converts every maximal run of healthy sites touching an infected site.
///
/// Only meaningful for one-dimensional lattices with an infinite infection
/// rate; `p` is checked for that.
pub fn invasion_closure(cfg: &Configuration, p: &Params) -> Result<Configuration> {
    if !p.lambda21.is_infinite() {
        return Err(Error::Contract("invasion closure requires an infinite infection rate".into()));
    }
    if cfg.dim() != 1 {
        return Err(Error::Contract("invasion closure is defined in one dimension only".into()));
    }
    let mut out = cfg.clone();
    invade_all(&mut out);
    Ok(out)
}

/// In-place closure on a ring; returns the conversions in chain order.
///
/// Runs are scanned in increasing site order. A run is invaded from its
/// left end when its left neighbour is infected, otherwise from its right
/// end; each converted site records the neighbour it was invaded from.
pub fn invade_all(cfg: &mut Configuration) -> Vec<Invasion> {
    debug_assert_eq!(cfg.dim(), 1);
    let n = cfg.n_sites();
    let mut out = Vec::new();
    if cfg.count(State::Healthy) == 0 || cfg.count(State::Infected) == 0 {
        return out;
    }
    // Start the scan just after a non-healthy site so no run straddles the start.
    let start = (0..n).find(|&x| cfg.get(x) != State::Healthy).expect("has infected site");
    let mut seen = 0;
    while seen < n {
        let x = (start + 1 + seen) % n;
        if cfg.get(x) != State::Healthy {
            seen += 1;
            continue;
        }
        let mut len = 0;
        while cfg.get((x + len) % n) == State::Healthy {
            len += 1;
        }
        invade_run(cfg, x, len, &mut out);
        seen += len;
    }
    out
}

/// Conversions that invade the run of `len` healthy sites starting at
/// `first`, in chain order. Empty when neither bounding site is infected.
pub(crate) fn plan_run_invasion(cfg: &Configuration, first: usize, len: usize) -> Vec<Invasion> {
    let n = cfg.n_sites();
    let left = (first + n - 1) % n;
    let right = (first + len) % n;
    let mut out = Vec::with_capacity(len);
    if cfg.get(left) == State::Infected {
        let mut source = left;
        for k in 0..len {
            let site = (first + k) % n;
            out.push(Invasion { site, source });
            source = site;
        }
    } else if cfg.get(right) == State::Infected {
        let mut source = right;
        for k in (0..len).rev() {
            let site = (first + k) % n;
            out.push(Invasion { site, source });
            source = site;
        }
    }
    out
}

fn invade_run(cfg: &mut Configuration, first: usize, len: usize, out: &mut Vec<Invasion>) {
    for inv in plan_run_invasion(cfg, first, len) {
        cfg.set(inv.site, State::Infected);
        out.push(inv);
    }
}

/// Extent of the healthy run containing `x` on a ring: `(first, len)`.
/// Returns `None` when the whole ring is healthy.
pub(crate) fn healthy_run(cfg: &Configuration, x: usize) -> Option<(usize, usize)> {
    let n = cfg.n_sites();
    debug_assert_eq!(cfg.get(x), State::Healthy);
    let mut back = 0;
    while back < n && cfg.get((x + n - back - 1) % n) == State::Healthy {
        back += 1;
    }
    if back == n {
        return None;
    }
    let first = (x + n - back) % n;
    let mut len = 1 + back;
    while cfg.get((x + len - back) % n) == State::Healthy {
        len += 1;
    }
    Some((first, len))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(l10: f64, l20: f64, l21: f64, delta: f64, dim: usize, side: usize) -> Params {
        Params::finite(l10, l20, l21, delta, dim, side, 0).unwrap()
    }

    #[test]
    fn neighbor_fraction_examples() {
        let cfg = Configuration::from_digits("202").unwrap();
        assert_eq!(neighbor_fraction(1, State::Infected, &cfg).unwrap(), 1.0);

        let lat = Lattice::new(2, 3).unwrap();
        let mut cfg = Configuration::empty(lat);
        let centre = lat.index(&[1, 1]);
        cfg.set(lat.index(&[2, 1]), State::Healthy);
        assert_eq!(neighbor_fraction(centre, State::Healthy, &cfg).unwrap(), 0.25);
        assert_eq!(neighbor_fraction(centre, State::Infected, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn neighbor_fraction_rejects_bad_site_and_state() {
        let cfg = Configuration::from_digits("012").unwrap();
        assert!(matches!(neighbor_fraction(3, State::Empty, &cfg), Err(Error::InvalidArgument(_))));
        assert!(matches!(State::try_from(3), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn lattice_neighbors_wrap() {
        let lat = Lattice::new(2, 4).unwrap();
        let x = lat.index(&[3, 0]);
        let nb: Vec<_> = lat.neighbors(x).collect();
        assert_eq!(nb, vec![lat.index(&[0, 0]), lat.index(&[2, 0]), lat.index(&[3, 1]), lat.index(&[3, 3])]);
        assert_eq!(lat.coords(x), vec![3, 0]);
    }

    #[test]
    fn rate_examples() {
        // empty site surrounded by healthy hosts
        let cfg = Configuration::from_digits("101").unwrap();
        let r = transition_rates(1, &cfg, &params(3.0, 1.0, 1.0, 0.5, 1, 3)).unwrap();
        assert_eq!(r.into_state(State::Healthy), 3.0);
        assert_eq!(r.into_state(State::Infected), 0.0);

        let cfg = Configuration::from_digits("121").unwrap();
        let r = transition_rates(1, &cfg, &params(3.0, 1.0, 1.0, 0.7, 1, 3)).unwrap();
        assert_eq!(r.get(Transition::DeathInfected), 1.0);
        assert_eq!(r.get(Transition::Recovery), 0.7);
        assert_eq!(r.total(), 1.7);

        let cfg = Configuration::from_digits("000").unwrap();
        let r = transition_rates(1, &cfg, &params(3.0, 1.0, 1.0, 0.7, 1, 3)).unwrap();
        assert_eq!(r.total(), 0.0);
    }

    #[test]
    fn rates_reject_infinite_infection() {
        let p = Params::new(1.0, 1.0, InfectionRate::Infinite, 0.0, 1, 5, 0).unwrap();
        let cfg = Configuration::from_digits("01200").unwrap();
        assert!(matches!(transition_rates(0, &cfg, &p), Err(Error::Contract(_))));
    }

    #[test]
    fn params_validation() {
        assert!(Params::finite(-1.0, 0.0, 0.0, 0.0, 1, 5, 0).is_err());
        assert!(Params::finite(1.0, 0.0, 0.0, 0.0, 1, 2, 0).is_err());
        assert!(Params::finite(1.0, 0.0, 0.0, 0.0, 0, 5, 0).is_err());
        assert!(Params::new(1.0, 0.0, InfectionRate::Infinite, 0.0, 2, 5, 0).is_err());
        assert!(Params::new(1.0, 0.0, InfectionRate::Infinite, 0.0, 1, 5, 0).is_ok());
    }

    #[test]
    fn regime_examples() {
        assert_eq!(params(2.0, 0.5, 0.0, 0.0, 1, 3).regime(), Regime::Pathogen);
        assert_eq!(params(1.0, 1.0, 0.0, 0.0, 1, 3).regime(), Regime::Neutral);
        assert_eq!(params(1.0, 3.0, 0.0, 0.0, 1, 3).regime(), Regime::Mutualist);
    }

    fn inf_params(side: usize) -> Params {
        Params::new(1.0, 1.0, InfectionRate::Infinite, 0.0, 1, side, 0).unwrap()
    }

    #[test]
    fn invasion_examples() {
        let cfg = Configuration::from_digits("0021110").unwrap();
        let out = invasion_closure(&cfg, &inf_params(7)).unwrap();
        assert_eq!(out.to_digits(), "0022220");

        let cfg = Configuration::from_digits("0102010").unwrap();
        assert_eq!(invasion_closure(&cfg, &inf_params(7)).unwrap(), cfg);

        let cfg = Configuration::from_digits("2222").unwrap();
        assert_eq!(invasion_closure(&cfg, &inf_params(4)).unwrap(), cfg);

        // run wrapping around the ring, invaded from its right end
        let cfg = Configuration::from_digits("1120011").unwrap();
        assert_eq!(invasion_closure(&cfg, &inf_params(7)).unwrap().to_digits(), "2220022");
    }

    #[test]
    fn invasion_records_chain_order() {
        let mut cfg = Configuration::from_digits("0211102").unwrap();
        let chain = invade_all(&mut cfg);
        let pairs: Vec<_> = chain.iter().map(|i| (i.site, i.source)).collect();
        // bounded on both sides: invaded from the left
        assert_eq!(pairs, vec![(2, 1), (3, 2), (4, 3)]);
    }

    #[test]
    fn invasion_requires_infinite_rate() {
        let cfg = Configuration::from_digits("0210").unwrap();
        let p = params(1.0, 1.0, 1.0, 0.0, 1, 4);
        assert!(matches!(invasion_closure(&cfg, &p), Err(Error::Contract(_))));
    }

    #[test]
    fn healthy_run_extent() {
        let cfg = Configuration::from_digits("1102111").unwrap();
        assert_eq!(healthy_run(&cfg, 0), Some((4, 5)));
        assert_eq!(healthy_run(&cfg, 5), Some((4, 5)));
        let all = Configuration::from_digits("111").unwrap();
        assert_eq!(healthy_run(&all, 1), None);
    }

    #[test]
    fn infection_rate_serde() {
        let p = Params::new(1.0, 0.5, InfectionRate::Infinite, 0.0, 1, 5, 9).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        assert!(s.contains("\"lambda21\":\"inf\""));
        let back: Params = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
        let q: InfectionRate = serde_json::from_str("3").unwrap();
        assert_eq!(q, InfectionRate::Finite(3.0));
    }

    fn arb_config(dim: usize, side: usize) -> impl Strategy<Value = Configuration> {
        let lat = Lattice::new(dim, side).unwrap();
        proptest::collection::vec(0u8..3, lat.n_sites()).prop_map(move |v| {
            Configuration::from_states(lat, v.into_iter().map(|b| State::try_from(b).unwrap()).collect()).unwrap()
        })
    }

    proptest! {
        #[test]
        fn fractions_sum_to_one(cfg in arb_config(2, 4), x in 0usize..16) {
            let total: f64 = State::ALL.iter().map(|&s| neighbor_fraction(x, s, &cfg).unwrap()).sum();
            prop_assert_eq!(total, 1.0);
        }

        #[test]
        fn rates_are_monotone_in_each_parameter(cfg in arb_config(1, 6), x in 0usize..6, bump in 0.1f64..3.0) {
            let base = params(1.0, 0.5, 1.5, 0.3, 1, 6);
            let r0 = transition_rates(x, &cfg, &base).unwrap();
            let bumped = [
                (Params { lambda10: base.lambda10 + bump, ..base }, Transition::BirthHealthy),
                (Params { lambda20: base.lambda20 + bump, ..base }, Transition::BirthInfected),
                (Params { lambda21: InfectionRate::Finite(1.5 + bump), ..base }, Transition::Infection),
                (Params { delta: base.delta + bump, ..base }, Transition::Recovery),
            ];
            for (p, t) in bumped {
                let r1 = transition_rates(x, &cfg, &p).unwrap();
                prop_assert!(r1.get(t) >= r0.get(t));
                for other in Transition::ALL.into_iter().filter(|&o| o != t) {
                    prop_assert_eq!(r1.get(other), r0.get(other));
                }
            }
        }

        #[test]
        fn closure_idempotent_and_only_converts_healthy(cfg in arb_config(1, 9)) {
            let p = inf_params(9);
            let once = invasion_closure(&cfg, &p).unwrap();
            let twice = invasion_closure(&once, &p).unwrap();
            prop_assert_eq!(&once, &twice);
            prop_assert!(!once.has_infected_healthy_contact());
            for x in 0..9 {
                let (a, b) = (cfg.get(x), once.get(x));
                prop_assert!(a == b || (a == State::Healthy && b == State::Infected));
            }
        }
    }
}

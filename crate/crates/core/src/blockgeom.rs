//! Two-dimensional block geometry.
//!
//! Box `z` with half-width `n` is `2 z n + {-n, ..., n-1}^2`, taken modulo
//! the torus side. The component report works on the pair of boxes `B_0`
//! and `B_e` (`e` the unit vector along the chosen axis) as a planar
//! region: 4-adjacency, no wraparound across the region boundary.

use std::io::Write;

use petgraph::unionfind::UnionFind;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::engine::{Change, Observer, Trajectory};
use crate::model::{Configuration, Lattice, State};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct BoxIndex {
    pub z: [i64; 2],
    pub n: usize,
}

impl BoxIndex {
    pub fn new(z1: i64, z2: i64, n: usize) -> Self {
        Self { z: [z1, z2], n }
    }

    /// Torus sites of the box, row-major in local coordinates.
    pub fn sites(&self, lattice: &Lattice) -> Vec<usize> {
        let n = self.n as i64;
        let (c1, c2) = (2 * self.z[0] * n, 2 * self.z[1] * n);
        let mut out = Vec::with_capacity(4 * self.n * self.n);
        for a in -n..n {
            for b in -n..n {
                out.push(lattice.index(&[c1 + a, c2 + b]));
            }
        }
        out
    }

    fn check(&self, lattice: &Lattice) -> Result<()> {
        check_geometry(lattice, self.n)
    }
}

fn check_geometry(lattice: &Lattice, n: usize) -> Result<()> {
    if lattice.dim != 2 {
        return Err(Error::InvalidArgument(format!("block geometry needs dim 2, got {}", lattice.dim)));
    }
    if n == 0 || lattice.side < 4 * n {
        return Err(Error::InvalidArgument(format!(
            "boxes of half-width {n} need n >= 1 and side >= {}, got side {}",
            4 * n,
            lattice.side
        )));
    }
    Ok(())
}

/// Sites of box `z` in state 2, sorted by site index.
pub fn symbiont_set(cfg: &Configuration, z: BoxIndex) -> Result<Vec<usize>> {
    let lattice = cfg.lattice();
    z.check(&lattice)?;
    let mut s: Vec<usize> = z.sites(&lattice).into_iter().filter(|&x| cfg.get(x) == State::Infected).collect();
    s.sort_unstable();
    Ok(s)
}

/// Symbiont sets and components of `B_0 ∪ B_e`. All site lists are sorted
/// torus indices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ComponentReport {
    pub n: usize,
    pub axis: usize,
    pub s0: Vec<usize>,
    pub s1: Vec<usize>,
    /// Largest symbiont-free component of `B_e`.
    pub c1: Vec<usize>,
    /// Symbiont-free component of the region containing `c1`.
    pub c0: Vec<usize>,
    /// Symbionts in the region with a neighbour in `c0`.
    pub boundary: Vec<usize>,
}

impl ComponentReport {
    pub fn k0(&self) -> usize {
        self.s0.len()
    }

    pub fn k1(&self) -> usize {
        self.s1.len()
    }
}

/// Planar region `[-n, 3n) x [-n, n)` in (along-axis, across-axis)
/// coordinates, indexed `a * 2n + b` after shifting both by `n`.
struct Region {
    n: usize,
    sites: Vec<usize>,
}

impl Region {
    fn new(lattice: &Lattice, n: usize, axis: usize) -> Self {
        let (w, h) = (4 * n, 2 * n);
        let mut sites = Vec::with_capacity(w * h);
        for a in 0..w as i64 {
            for b in 0..h as i64 {
                let (along, across) = (a - n as i64, b - n as i64);
                let c = if axis == 0 { [along, across] } else { [across, along] };
                sites.push(lattice.index(&c));
            }
        }
        Self { n, sites }
    }

    fn width(&self) -> usize {
        4 * self.n
    }

    fn height(&self) -> usize {
        2 * self.n
    }

    fn in_second_box(&self, local: usize) -> bool {
        local / self.height() >= 2 * self.n
    }

    fn neighbors(&self, local: usize) -> impl Iterator<Item = usize> + '_ {
        let (h, w) = (self.height(), self.width());
        let (a, b) = (local / h, local % h);
        [(a > 0).then(|| local - h), (a + 1 < w).then(|| local + h), (b > 0).then(|| local - 1), (b + 1 < h).then(|| local + 1)]
            .into_iter()
            .flatten()
    }
}

/// Report for the pair `B_0`, `B_{e1}`.
pub fn component_report(cfg: &Configuration, n: usize) -> Result<ComponentReport> {
    component_report_along(cfg, n, 0)
}

/// Report for the pair `B_0`, `B_e` with `e` the unit vector along `axis`.
pub fn component_report_along(cfg: &Configuration, n: usize, axis: usize) -> Result<ComponentReport> {
    let lattice = cfg.lattice();
    check_geometry(&lattice, n)?;
    if axis > 1 {
        return Err(Error::InvalidArgument(format!("axis {axis} out of range for dim 2")));
    }
    let region = Region::new(&lattice, n, axis);
    let len = region.sites.len();
    let sym: Vec<bool> = region.sites.iter().map(|&x| cfg.get(x) == State::Infected).collect();

    let mut s0 = Vec::new();
    let mut s1 = Vec::new();
    for (l, &x) in region.sites.iter().enumerate() {
        if sym[l] {
            if region.in_second_box(l) { s1.push(x) } else { s0.push(x) }
        }
    }

    // components of B_e minus symbionts
    let mut uf1 = UnionFind::<u32>::new(len);
    // components of the whole region minus symbionts
    let mut uf0 = UnionFind::<u32>::new(len);
    for l in 0..len {
        if sym[l] {
            continue;
        }
        for m in region.neighbors(l).filter(|&m| m > l && !sym[m]) {
            uf0.union(l as u32, m as u32);
            if region.in_second_box(l) && region.in_second_box(m) {
                uf1.union(l as u32, m as u32);
            }
        }
    }

    // largest component of B_e; ties go to the smallest member site index
    let mut stats: std::collections::HashMap<u32, (usize, usize)> = std::collections::HashMap::new();
    for l in (0..len).filter(|&l| region.in_second_box(l) && !sym[l]) {
        let e = stats.entry(uf1.find(l as u32)).or_insert((0, usize::MAX));
        e.0 += 1;
        e.1 = e.1.min(region.sites[l]);
    }
    let best = stats.iter().max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.1 .1.cmp(&a.1 .1))).map(|(&r, _)| r);

    let mut c1 = Vec::new();
    let mut c0 = Vec::new();
    let mut boundary = Vec::new();
    if let Some(root1) = best {
        let member = (0..len).find(|&l| region.in_second_box(l) && !sym[l] && uf1.find(l as u32) == root1).expect("nonempty");
        let root0 = uf0.find(member as u32);
        let mut in_c0 = vec![false; len];
        for l in 0..len {
            if sym[l] {
                continue;
            }
            if uf1.find(l as u32) == root1 && region.in_second_box(l) {
                c1.push(region.sites[l]);
            }
            if uf0.find(l as u32) == root0 {
                in_c0[l] = true;
                c0.push(region.sites[l]);
            }
        }
        for l in (0..len).filter(|&l| sym[l]) {
            if region.neighbors(l).any(|m| in_c0[m]) {
                boundary.push(region.sites[l]);
            }
        }
    }
    for v in [&mut s0, &mut s1, &mut c1, &mut c0, &mut boundary] {
        v.sort_unstable();
    }
    Ok(ComponentReport { n, axis, s0, s1, c1, c0, boundary })
}

/// Outcome of checking both geometry inequalities on one configuration.
#[derive(Clone, Debug, Serialize)]
pub struct LemmaCheck {
    pub n: usize,
    pub k0: usize,
    pub k1: usize,
    pub c1: usize,
    pub boundary: usize,
    /// `K1 <= n`; when false the check passes vacuously.
    pub hypothesis: bool,
    /// `card(c1) >= (2n)^2 - K1^2`.
    pub c1_bound: bool,
    /// `card(c1) >= 3 n^2`.
    pub c1_floor: bool,
    /// `card(boundary)^2 >= K0`.
    pub boundary_bound: bool,
    pub pass: bool,
    pub note: Option<String>,
    /// The configuration, kept only on failure.
    #[serde(skip)]
    pub witness: Option<Configuration>,
}

pub fn check_lemma_geometry(cfg: &Configuration, n: usize) -> Result<LemmaCheck> {
    let r = component_report(cfg, n)?;
    let (k0, k1, c1, b) = (r.k0(), r.k1(), r.c1.len(), r.boundary.len());
    let hypothesis = k1 <= n;
    let box_size = 4 * n * n;
    let c1_bound = c1 + k1 * k1 >= box_size;
    let c1_floor = c1 >= 3 * n * n;
    let boundary_bound = b * b >= k0;
    let pass = !hypothesis || (c1_bound && c1_floor && boundary_bound);
    let note = (!hypothesis).then(|| format!("{k1} symbionts in the second box exceed n = {n}; bounds not required"));
    Ok(LemmaCheck {
        n,
        k0,
        k1,
        c1,
        boundary: b,
        hypothesis,
        c1_bound,
        c1_floor,
        boundary_bound,
        pass,
        note,
        witness: (!pass).then(|| cfg.clone()),
    })
}

/// Shapes used by [`lemma_configuration`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Pattern {
    /// Symbionts scattered uniformly in both boxes.
    Scatter,
    /// Symbionts in `B_0` packed into few rows.
    Rows,
    /// Symbionts in `B_0` packed into few columns.
    Columns,
    /// `B_e` symbionts on distinct rows and columns, which removes the most
    /// sites from its largest component.
    Diagonal,
    /// A wall across `B_0` next to the second box.
    Wall,
}

impl Pattern {
    pub const ALL: [Pattern; 5] = [Pattern::Scatter, Pattern::Rows, Pattern::Columns, Pattern::Diagonal, Pattern::Wall];
}

/// Random configuration on the `side x side` torus satisfying the lemma
/// hypothesis (at most `n` symbionts in `B_{e1}`), shaped by `pattern`.
/// Non-symbiont sites are empty or healthy with equal odds.
pub fn lemma_configuration<R: Rng + ?Sized>(side: usize, n: usize, pattern: Pattern, rng: &mut R) -> Result<Configuration> {
    let lattice = Lattice::new(2, side)?;
    check_geometry(&lattice, n)?;
    let mut cfg = Configuration::empty(lattice);
    for x in 0..lattice.n_sites() {
        if rng.random_bool(0.5) {
            cfg.set(x, State::Healthy);
        }
    }
    let n_i = n as i64;
    let site = |a: i64, b: i64| lattice.index(&[a, b]);
    let box_size = 4 * n * n;
    let k0 = rng.random_range(0..=box_size);
    let k1 = rng.random_range(0..=n);

    let b0 = BoxIndex::new(0, 0, n).sites(&lattice);
    let mut b1 = BoxIndex::new(1, 0, n).sites(&lattice);
    match pattern {
        Pattern::Scatter | Pattern::Diagonal => {
            let mut b0 = b0;
            b0.shuffle(rng);
            b0.iter().take(k0).for_each(|&x| cfg.set(x, State::Infected));
        }
        Pattern::Rows | Pattern::Columns => {
            // fill whole lines first, leaving a remainder on the next one
            let mut placed = 0;
            'outer: for i in -n_i..n_i {
                for j in -n_i..n_i {
                    if placed == k0 {
                        break 'outer;
                    }
                    let x = if pattern == Pattern::Rows { site(j, i) } else { site(i, j) };
                    cfg.set(x, State::Infected);
                    placed += 1;
                }
            }
        }
        Pattern::Wall => {
            let col = rng.random_range(-n_i..n_i);
            for b in -n_i..n_i {
                cfg.set(site(col, b), State::Infected);
            }
        }
    }
    if pattern == Pattern::Diagonal {
        let mut rows: Vec<i64> = (-n_i..n_i).collect();
        let mut cols: Vec<i64> = (n_i..3 * n_i).collect();
        rows.shuffle(rng);
        cols.shuffle(rng);
        for i in 0..k1 {
            cfg.set(site(cols[i], rows[i]), State::Infected);
        }
    } else {
        b1.shuffle(rng);
        b1.iter().take(k1).for_each(|&x| cfg.set(x, State::Infected));
    }
    Ok(cfg)
}

/// Observer keeping, for each tracked box, the piecewise-constant history
/// of its symbiont count: `(time, count)` pairs, the first at the start
/// time, then one per event that changes the count.
#[derive(Clone, Debug)]
pub struct BoxCounter {
    boxes: Vec<BoxIndex>,
    slot: Vec<u32>,
    history: Vec<Vec<(f64, usize)>>,
}

const NO_SLOT: u32 = u32::MAX;

impl BoxCounter {
    /// Tracks `boxes`, which must be pairwise disjoint on the torus.
    pub fn new(lattice: &Lattice, boxes: Vec<BoxIndex>) -> Result<Self> {
        let mut slot = vec![NO_SLOT; lattice.n_sites()];
        for (i, b) in boxes.iter().enumerate() {
            b.check(lattice)?;
            for x in b.sites(lattice) {
                if slot[x] != NO_SLOT {
                    return Err(Error::InvalidArgument(format!("boxes {:?} and {:?} overlap", boxes[slot[x] as usize].z, b.z)));
                }
                slot[x] = i as u32;
            }
        }
        let history = vec![Vec::new(); boxes.len()];
        Ok(Self { boxes, slot, history })
    }

    /// All boxes tiling the torus; the side must be a multiple of `2n`.
    pub fn tiling(lattice: &Lattice, n: usize) -> Result<Self> {
        let m = tiles_per_axis(lattice, n)?;
        let boxes = (0..m as i64).flat_map(|z1| (0..m as i64).map(move |z2| BoxIndex::new(z1, z2, n))).collect();
        Self::new(lattice, boxes)
    }

    pub fn boxes(&self) -> &[BoxIndex] {
        &self.boxes
    }

    pub fn history(&self, i: usize) -> &[(f64, usize)] {
        &self.history[i]
    }

    pub fn position(&self, z: BoxIndex) -> Option<usize> {
        self.boxes.iter().position(|b| *b == z)
    }

    /// Count of box `i` after every event at or before `t`.
    pub fn count_at(&self, i: usize, t: f64) -> usize {
        let h = &self.history[i];
        let k = h.partition_point(|&(s, _)| s <= t);
        h[k.saturating_sub(1)].1
    }

    /// Minimum and maximum count of box `i` over the open window `(a, b)`.
    pub fn range_over(&self, i: usize, a: f64, b: f64) -> (usize, usize) {
        let h = &self.history[i];
        let first = self.count_at(i, a);
        let start = h.partition_point(|&(s, _)| s <= a);
        h[start..].iter().take_while(|&&(s, _)| s < b).fold((first, first), |(lo, hi), &(_, c)| (lo.min(c), hi.max(c)))
    }
}

impl Observer for BoxCounter {
    fn start(&mut self, t0: f64, cfg: &Configuration) {
        let mut counts = vec![0usize; self.boxes.len()];
        for (x, &s) in cfg.states().iter().enumerate() {
            if s == State::Infected && self.slot[x] != NO_SLOT {
                counts[self.slot[x] as usize] += 1;
            }
        }
        for (h, c) in self.history.iter_mut().zip(counts) {
            h.clear();
            h.push((t0, c));
        }
    }

    fn event(&mut self, t: f64, changes: &[Change], _cfg: &Configuration) {
        for c in changes.iter().filter(|c| !c.is_null()) {
            let s = self.slot[c.site as usize];
            if s == NO_SLOT {
                continue;
            }
            let delta = (c.to == State::Infected) as i64 - (c.from == State::Infected) as i64;
            if delta == 0 {
                continue;
            }
            let h = &mut self.history[s as usize];
            let last = h.last().expect("started").1 as i64 + delta;
            match h.last_mut() {
                Some(e) if e.0 == t => e.1 = last as usize,
                _ => h.push((t, last as usize)),
            }
        }
    }
}

fn tiles_per_axis(lattice: &Lattice, n: usize) -> Result<usize> {
    check_geometry(lattice, n)?;
    if !lattice.side.is_multiple_of(2 * n) {
        return Err(Error::InvalidArgument(format!("side {} is not a multiple of 2n = {}", lattice.side, 2 * n)));
    }
    Ok(lattice.side / (2 * n))
}

/// Box events over a time window.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EventIndicators {
    /// Count `<= k` throughout the open window.
    pub hminus: bool,
    /// Count `>= k` throughout the open window.
    pub hplus: bool,
    /// `(n, count(n)^2 >= N)` at each integer time `n` in the closed window.
    pub hstar: Vec<(u64, bool)>,
}

/// Indicators for box `z` over `window = (a, b)`, from the exact
/// piecewise-constant box count of the recorded run.
pub fn event_indicators(traj: &Trajectory, z: BoxIndex, k: usize, window: (f64, f64)) -> Result<EventIndicators> {
    let (a, b) = window;
    if !(0.0 <= a && a < b && b <= traj.t_end()) {
        return Err(Error::InvalidArgument(format!("window ({a}, {b}) outside [0, {}]", traj.t_end())));
    }
    let mut counter = BoxCounter::new(&traj.initial().lattice(), vec![z])?;
    traj.replay(&mut counter)?;
    Ok(indicators_from(&counter, 0, k, window))
}

pub fn indicators_from(counter: &BoxCounter, i: usize, k: usize, (a, b): (f64, f64)) -> EventIndicators {
    let (lo, hi) = counter.range_over(i, a, b);
    let n = counter.boxes[i].n;
    let hstar =
        (a.ceil() as u64..=b.floor() as u64).map(|t| (t, good_count(counter.count_at(i, t as f64), n))).collect();
    EventIndicators { hminus: hi <= k, hplus: lo >= k, hstar }
}

fn good_count(count: usize, n: usize) -> bool {
    count * count >= n
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct GoodCell {
    pub z1: i64,
    pub z2: i64,
    pub n: u64,
    pub good: bool,
}

/// Good-site field over the torus tiling at integer times.
#[derive(Clone, Debug, Serialize)]
pub struct CoarseField {
    pub half_width: usize,
    pub tiles_per_axis: usize,
    pub cells: Vec<GoodCell>,
}

impl CoarseField {
    pub fn levels(&self) -> u64 {
        self.cells.iter().map(|c| c.n + 1).max().unwrap_or(0)
    }

    /// Fraction of good cells at each level.
    pub fn density_by_level(&self) -> Vec<f64> {
        let levels = self.levels() as usize;
        let mut good = vec![0usize; levels];
        let mut all = vec![0usize; levels];
        for c in &self.cells {
            all[c.n as usize] += 1;
            good[c.n as usize] += c.good as usize;
        }
        good.iter().zip(&all).map(|(&g, &a)| if a == 0 { 0.0 } else { g as f64 / a as f64 }).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["z1", "z2", "n", "good"]).map_err(crate::engine::series::csv_err)?;
        for c in &self.cells {
            w.write_record([c.z1.to_string(), c.z2.to_string(), c.n.to_string(), (c.good as u8).to_string()])
                .map_err(crate::engine::series::csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Marks `(z, n)` good when box `z` holds at least `sqrt(half_width)`
/// symbionts at integer time `n`. Only cells with `z1 + z2 + n` even exist.
pub fn coarse_grain(traj: &Trajectory, half_width: usize) -> Result<CoarseField> {
    let lattice = traj.initial().lattice();
    let mut counter = BoxCounter::tiling(&lattice, half_width)?;
    traj.replay(&mut counter)?;
    let m = lattice.side / (2 * half_width);
    let mut cells = Vec::new();
    for n in 0..=traj.t_end().floor() as u64 {
        for (i, b) in counter.boxes().iter().enumerate() {
            if (b.z[0] + b.z[1] + n as i64) % 2 == 0 {
                cells.push(GoodCell { z1: b.z[0], z2: b.z[1], n, good: good_count(counter.count_at(i, n as f64), half_width) });
            }
        }
    }
    Ok(CoarseField { half_width, tiles_per_axis: m, cells })
}

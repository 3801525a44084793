//! Single-type contact process statistics: a finite-size estimate of the
//! critical birth rate and the speed of the right edge.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::Serialize;

use crate::engine::{Change, EngineKind, Observer, Trajectory};
use crate::model::{Configuration, Lattice, Params};
use crate::observables::grid::Grid;
use crate::rng::{channel, StreamKey};
use crate::stats::{linear_fit, wilson, LinearFit, Proportion, Z95};
use crate::{Error, Result};

/// Settings for [`estimate_lambda_c`]. Survival means at least one
/// occupied site at the horizon, starting from each site occupied with
/// probability 1/2.
#[derive(Clone, Debug, Serialize)]
pub struct LambdaCConfig {
    pub dim: usize,
    pub side: usize,
    /// Defaults to `0.4 * side`, short enough that the process cannot wrap
    /// around the torus and interact with itself.
    pub horizon: Option<f64>,
    pub replicas: usize,
    /// Replicas may grow to `replicas * max_boost` when a midpoint is
    /// ambiguous.
    pub max_boost: usize,
    pub bracket: (f64, f64),
    pub tol: f64,
    pub max_steps: usize,
    pub seed: u64,
    pub engine: EngineKind,
}

impl LambdaCConfig {
    pub fn new(dim: usize, side: usize, replicas: usize, bracket: (f64, f64), seed: u64) -> Self {
        Self {
            dim,
            side,
            horizon: None,
            replicas,
            max_boost: 4,
            bracket,
            tol: 0.2,
            max_steps: 40,
            seed,
            engine: EngineKind::Gillespie,
        }
    }

    pub fn horizon(&self) -> f64 {
        self.horizon.unwrap_or(0.4 * self.side as f64)
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SurvivalPoint {
    pub lambda: f64,
    pub survival: Proportion,
}

#[derive(Clone, Debug, Serialize)]
pub struct LambdaCEstimate {
    pub bracket: (f64, f64),
    pub estimate: f64,
    pub horizon: f64,
    pub converged: bool,
    /// Every evaluated point, sorted by birth rate.
    pub scan: Vec<SurvivalPoint>,
    pub monotone: bool,
    pub note: &'static str,
}

impl LambdaCEstimate {
    pub fn width(&self) -> f64 {
        self.bracket.1 - self.bracket.0
    }

    fn point(&self, lambda: f64) -> Option<&SurvivalPoint> {
        self.scan.iter().find(|p| p.lambda == lambda)
    }

    /// Survival at the lower and upper bracket ends.
    pub fn endpoints(&self) -> (SurvivalPoint, SurvivalPoint) {
        (*self.point(self.bracket.0).expect("evaluated"), *self.point(self.bracket.1).expect("evaluated"))
    }
}

fn cp_params(lambda: f64, dim: usize, side: usize, seed: u64) -> Result<Params> {
    Params::finite(lambda, 0.0, 0.0, 0.0, dim, side, seed)
}

/// Surviving replicas `first..first + count` at birth rate `lambda`.
fn survivors(lambda: f64, cfg: &LambdaCConfig, first: usize, count: usize) -> Result<usize> {
    let p = cp_params(lambda, cfg.dim, cfg.side, cfg.seed)?;
    let lattice = p.lattice();
    let horizon = cfg.horizon();
    (first..first + count)
        .into_par_iter()
        .map(|r| {
            let key = StreamKey::new(cfg.seed, r as u64);
            let c0 = half_filled(lattice, key)?;
            let end = cfg.engine.run_with(&c0, &p, horizon, key, &mut ())?;
            Ok((end.n_sites() > end.count(crate::State::Empty)) as usize)
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))
}

/// Each site healthy with probability 1/2, drawn from the replica's
/// initial-state stream.
pub fn half_filled(lattice: Lattice, key: StreamKey) -> Result<Configuration> {
    Configuration::random(lattice, 0.5, 0.0, &mut key.rng(channel::INITIAL, 0))
}

pub fn survival_probability(lambda: f64, cfg: &LambdaCConfig, replicas: usize) -> Result<Proportion> {
    Ok(wilson(survivors(lambda, cfg, 0, replicas)?, replicas, Z95))
}

/// No point's interval lies entirely above the interval of a point with a
/// larger birth rate.
pub fn scan_is_monotone(scan: &[SurvivalPoint]) -> bool {
    scan.iter().enumerate().all(|(i, a)| scan[i + 1..].iter().all(|b| a.lambda >= b.lambda || a.survival.lo <= b.survival.hi))
}

/// Bisection on the birth rate for a survival probability of 1/2, moving
/// an endpoint only when the Wilson interval at the new point excludes 1/2.
/// An ambiguous midpoint is retried with more replicas, then replaced by
/// the two quarter points. This is a finite-size proxy for the critical
/// value, valid for the chosen side and horizon only.
pub fn estimate_lambda_c(cfg: &LambdaCConfig) -> Result<LambdaCEstimate> {
    let (mut lo, mut hi) = cfg.bracket;
    if !(0.0 <= lo && lo < hi && hi.is_finite()) || cfg.replicas == 0 || !(cfg.tol > 0.0) {
        return Err(Error::InvalidArgument(format!("bad bracket {:?}, tolerance {} or replica count", cfg.bracket, cfg.tol)));
    }
    let mut scan: Vec<SurvivalPoint> = Vec::new();
    let eval = |lambda: f64, boost: bool, scan: &mut Vec<SurvivalPoint>| -> Result<Proportion> {
        let mut n = cfg.replicas;
        let mut s = survivors(lambda, cfg, 0, n)?;
        let mut prop = wilson(s, n, Z95);
        while boost && !prop.excludes(0.5) && n < cfg.replicas * cfg.max_boost {
            let extra = n.min(cfg.replicas * cfg.max_boost - n);
            s += survivors(lambda, cfg, n, extra)?;
            n += extra;
            prop = wilson(s, n, Z95);
        }
        scan.push(SurvivalPoint { lambda, survival: prop });
        Ok(prop)
    };
    let below = |p: &Proportion| p.hi < 0.5;
    let above = |p: &Proportion| p.lo > 0.5;

    let p_lo = eval(lo, false, &mut scan)?;
    let p_hi = eval(hi, false, &mut scan)?;
    if !below(&p_lo) || !above(&p_hi) {
        return Err(Error::InvalidArgument(format!(
            "bracket does not straddle survival 1/2: [{:.3}, {:.3}] at {lo}, [{:.3}, {:.3}] at {hi}",
            p_lo.lo, p_lo.hi, p_hi.lo, p_hi.hi
        )));
    }
    let mut steps = 0;
    let mut stuck = false;
    while hi - lo >= cfg.tol && steps < cfg.max_steps {
        steps += 1;
        let mid = 0.5 * (lo + hi);
        let p = eval(mid, true, &mut scan)?;
        if below(&p) {
            lo = mid;
        } else if above(&p) {
            hi = mid;
        } else {
            let q1 = 0.5 * (lo + mid);
            let q3 = 0.5 * (mid + hi);
            let moved_lo = below(&eval(q1, true, &mut scan)?);
            let moved_hi = above(&eval(q3, true, &mut scan)?);
            if moved_lo {
                lo = q1;
            }
            if moved_hi {
                hi = q3;
            }
            if !moved_lo && !moved_hi {
                stuck = true;
                break;
            }
        }
    }
    scan.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    let estimate = crossing(&scan, lo, hi);
    let monotone = scan_is_monotone(&scan);
    Ok(LambdaCEstimate {
        bracket: (lo, hi),
        estimate,
        horizon: cfg.horizon(),
        converged: !stuck && hi - lo < cfg.tol,
        scan,
        monotone,
        note: "finite-size survival crossing at the stated side and horizon",
    })
}

/// Linear interpolation of the point estimates across 1/2 inside the
/// bracket.
fn crossing(scan: &[SurvivalPoint], lo: f64, hi: f64) -> f64 {
    let pts: Vec<&SurvivalPoint> = scan.iter().filter(|p| p.lambda >= lo && p.lambda <= hi).collect();
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (fa, fb) = (a.survival.estimate, b.survival.estimate);
        if fa <= 0.5 && fb >= 0.5 && fb > fa {
            return a.lambda + (0.5 - fa) / (fb - fa) * (b.lambda - a.lambda);
        }
    }
    0.5 * (lo + hi)
}

/// Extreme occupied positions on the cut line at one grid time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FrontSample {
    pub t: f64,
    pub occupied: usize,
    pub left: Option<u32>,
    pub right: Option<u32>,
}

/// Observer sampling the leftmost and rightmost occupied sites of a
/// one-dimensional run, read on the line cut at `cut`.
#[derive(Clone, Debug)]
pub struct FrontSampler {
    cut: usize,
    n: usize,
    grid: Grid,
    occupied: BTreeSet<u32>,
    samples: Vec<FrontSample>,
}

impl FrontSampler {
    pub fn new(n_sites: usize, cut: usize, dt: f64, t_end: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("grid spacing must be positive, got {dt}")));
        }
        Ok(Self { cut: cut % n_sites, n: n_sites, grid: Grid::new(dt, t_end), occupied: BTreeSet::new(), samples: Vec::new() })
    }

    pub fn samples(&self) -> &[FrontSample] {
        &self.samples
    }

    fn pos(&self, x: usize) -> u32 {
        ((x + self.n - self.cut) % self.n) as u32
    }

    fn sample(&mut self, limit: f64, inclusive: bool) {
        let (left, right) = (self.occupied.first().copied(), self.occupied.last().copied());
        let occupied = self.occupied.len();
        let out = &mut self.samples;
        out.extend(self.grid.pop_through(limit, inclusive).map(|t| FrontSample { t, occupied, left, right }));
    }
}

impl Observer for FrontSampler {
    fn start(&mut self, t0: f64, cfg: &Configuration) {
        assert_eq!(cfg.dim(), 1, "front sampling needs dim 1");
        self.occupied = (0..cfg.n_sites()).filter(|&x| cfg.get(x).is_occupied()).map(|x| self.pos(x)).collect();
        self.samples.clear();
        self.grid.reset();
        self.sample(t0, true);
    }

    fn advance(&mut self, t: f64, _cfg: &Configuration) {
        self.sample(t, false);
    }

    fn event(&mut self, _t: f64, changes: &[Change], _cfg: &Configuration) {
        for c in changes.iter().filter(|c| !c.is_null()) {
            let p = self.pos(c.site as usize);
            match (c.from.is_occupied(), c.to.is_occupied()) {
                (false, true) => {
                    self.occupied.insert(p);
                }
                (true, false) => {
                    self.occupied.remove(&p);
                }
                _ => {}
            }
        }
    }

    fn finish(&mut self, t_end: f64, _cfg: &Configuration) {
        self.sample(t_end, true);
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct EdgeSpeed {
    pub alpha: f64,
    pub intercept: f64,
    pub r2: f64,
    pub points: usize,
}

impl From<LinearFit> for EdgeSpeed {
    fn from(f: LinearFit) -> Self {
        Self { alpha: f.slope, intercept: f.intercept, r2: f.r2, points: f.n }
    }
}

/// Least-squares slope of the right edge over the samples in `[a, b]`.
/// Fails when the process is extinct in the window or the edge reaches
/// the end of the cut line.
pub fn fit_right_edge(samples: &[FrontSample], n_sites: usize, (a, b): (f64, f64)) -> Result<EdgeSpeed> {
    let window: Vec<&FrontSample> = samples.iter().filter(|s| s.t >= a && s.t <= b).collect();
    if window.last().is_none_or(|s| s.t < b * (1.0 - 1e-12)) {
        return Err(Error::NoEstimate(format!("samples do not cover the fit window [{a}, {b}]")));
    }
    let mut t = Vec::with_capacity(window.len());
    let mut r = Vec::with_capacity(window.len());
    for s in window {
        let Some(right) = s.right else {
            return Err(Error::NoEstimate(format!("extinct by t = {}", s.t)));
        };
        if right as usize == n_sites - 1 {
            return Err(Error::NoEstimate(format!("right edge reached the cut at t = {}", s.t)));
        }
        t.push(s.t);
        r.push(right as f64);
    }
    linear_fit(&t, &r).map(EdgeSpeed::from).ok_or_else(|| Error::NoEstimate("fewer than two distinct sample times".into()))
}

/// Edge speed of a recorded one-dimensional run, sampling every `dt` and
/// reading the line cut at site 0.
pub fn edge_speed(traj: &Trajectory, window: (f64, f64), dt: f64) -> Result<EdgeSpeed> {
    let init = traj.initial();
    crate::observables::line::require_line(init)?;
    let mut s = FrontSampler::new(init.n_sites(), 0, dt, traj.t_end())?;
    traj.replay(&mut s)?;
    fit_right_edge(s.samples(), init.n_sites(), window)
}

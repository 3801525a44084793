//! Exact transient law of the chain on tiny lattices.
//!
//! Configurations are indexed in mixed radix 3 with site 0 least
//! significant: index = sum over x of state(x) * 3^x. The generator is
//! stored in compressed sparse rows; transient distributions use
//! uniformization, `p(t) = sum_k Poisson(k; q t) p0 P^k` with
//! `P = I + Q / q` and `q` the largest exit rate.

use rayon::prelude::*;
use serde::Serialize;

use crate::engine::EngineKind;
use crate::model::{transition_rates, Configuration, Lattice, Params, State};
use crate::rng::StreamKey;
use crate::{Error, Result};

/// 3^10 configurations.
pub const DEFAULT_STATE_CAP: usize = 59_049;
/// Truncation of the Poisson series: stop once this much mass is summed.
pub const POISSON_MASS: f64 = 1.0 - 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StateSpace {
    lattice: Lattice,
    n_states: usize,
}

/// Enumerates all configurations of the torus `(dim, side)`.
pub fn enumerate_states(dim: usize, side: usize, cap: usize) -> Result<StateSpace> {
    let lattice = Lattice::new(dim, side)?;
    let sites = lattice.n_sites() as u32;
    let states = 3u128.checked_pow(sites).unwrap_or(u128::MAX);
    if states > cap as u128 {
        return Err(Error::CapExceeded { states, cap });
    }
    Ok(StateSpace { lattice, n_states: states as usize })
}

impl StateSpace {
    pub fn len(&self) -> usize {
        self.n_states
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn index(&self, cfg: &Configuration) -> usize {
        cfg.states().iter().rev().fold(0, |acc, s| acc * 3 + s.index())
    }

    pub fn config(&self, mut i: usize) -> Configuration {
        let states = (0..self.lattice.n_sites())
            .map(|_| {
                let s = State::try_from((i % 3) as u8).expect("digit below 3");
                i /= 3;
                s
            })
            .collect();
        Configuration::from_states(self.lattice, states).expect("matching length")
    }

    pub fn iter(&self) -> impl Iterator<Item = Configuration> + '_ {
        (0..self.n_states).map(|i| self.config(i))
    }
}

/// Sparse generator. Row `i` holds the off-diagonal rates out of state `i`.
#[derive(Clone, Debug)]
pub struct GeneratorMatrix {
    space: StateSpace,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
    diag: Vec<f64>,
}

/// Builds the generator of the chain for `p` on its lattice.
pub fn generator(p: &Params, cap: usize) -> Result<GeneratorMatrix> {
    p.validate()?;
    p.finite_lambda21("the exact generator")?;
    let space = enumerate_states(p.dim, p.side, cap)?;
    let n_sites = space.lattice.n_sites();
    let mut pow3 = vec![1usize; n_sites];
    for x in 1..n_sites {
        pow3[x] = pow3[x - 1] * 3;
    }
    let mut row_ptr = Vec::with_capacity(space.n_states + 1);
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    let mut diag = Vec::with_capacity(space.n_states);
    row_ptr.push(0);
    for i in 0..space.n_states {
        let cfg = space.config(i);
        let mut exit = 0.0;
        for (x, &stride) in pow3.iter().enumerate().take(n_sites) {
            let rates = transition_rates(x, &cfg, p)?;
            let from = cfg.get(x).index();
            for (tr, r) in rates.iter() {
                if r > 0.0 {
                    let to = tr.to_state().index();
                    let j = i + to * stride - from * stride;
                    cols.push(j as u32);
                    vals.push(r);
                    exit += r;
                }
            }
        }
        diag.push(-exit);
        row_ptr.push(cols.len());
    }
    Ok(GeneratorMatrix { space, row_ptr, cols, vals, diag })
}

impl GeneratorMatrix {
    pub fn space(&self) -> StateSpace {
        self.space
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.cols[a..b].iter().map(|&j| j as usize).zip(self.vals[a..b].iter().copied())
    }

    pub fn diagonal(&self, i: usize) -> f64 {
        self.diag[i]
    }

    /// Rate from `i` to `j` (diagonal included).
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.diag[i];
        }
        self.row(i).filter(|&(c, _)| c == j).map(|(_, r)| r).sum()
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).map(|(_, r)| r).sum::<f64>() + self.diag[i]
    }

    pub fn max_exit_rate(&self) -> f64 {
        self.diag.iter().fold(0.0, |m, d| m.max(-d))
    }

    /// `v P` for the uniformized kernel `P = I + Q / q`.
    fn step(&self, v: &[f64], q: f64, out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = v[i] * (1.0 + self.diag[i] / q);
        }
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            for (j, r) in self.row(i) {
                out[j] += vi * r / q;
            }
        }
    }
}

/// Point mass on `cfg`.
pub fn point_mass(space: &StateSpace, cfg: &Configuration) -> Vec<f64> {
    let mut p = vec![0.0; space.len()];
    p[space.index(cfg)] = 1.0;
    p
}

/// Law at time `t` of the chain started from `p0`.
pub fn transient_distribution(q: &GeneratorMatrix, p0: &[f64], t: f64) -> Result<Vec<f64>> {
    if p0.len() != q.n() {
        return Err(Error::InvalidArgument(format!("distribution of length {} for {} states", p0.len(), q.n())));
    }
    let total: f64 = p0.iter().sum();
    if p0.iter().any(|&x| !(x >= 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument("initial vector is not a probability distribution".into()));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!("time {t} must be finite and nonnegative")));
    }
    let rate = q.max_exit_rate();
    if t == 0.0 || rate == 0.0 {
        return Ok(p0.to_vec());
    }
    let mean = rate * t;
    let mut out = vec![0.0; p0.len()];
    let mut v = p0.to_vec();
    let mut next = vec![0.0; p0.len()];
    let mut log_w = -mean;
    let mut mass = 0.0;
    let max_terms = (mean + 40.0 * mean.sqrt() + 100.0) as u64;
    for k in 0u64.. {
        if k > 0 {
            log_w += mean.ln() - (k as f64).ln();
            q.step(&v, rate, &mut next);
            std::mem::swap(&mut v, &mut next);
        }
        let w = log_w.exp();
        mass += w;
        for (o, x) in out.iter_mut().zip(&v) {
            *o += w * x;
        }
        if mass >= POISSON_MASS || k >= max_terms {
            break;
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct StateScore {
    /// Digit string of the configuration, or `"tail"` for the pooled bin.
    pub state: String,
    pub expected: f64,
    pub observed: u64,
    pub z: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DivergenceReport {
    pub engine: EngineKind,
    pub replicas: u64,
    pub t: f64,
    pub tv: f64,
    pub max_abs_z: f64,
    pub worst_state: String,
    /// States with expected count below this are pooled into one tail bin.
    pub min_expected: f64,
    pub scores: Vec<StateScore>,
}

/// Expected count under which states are pooled for the z-scores.
pub const MIN_EXPECTED_COUNT: f64 = 5.0;

/// Empirical law of `engine` from `replicas` runs compared with the exact law.
pub fn oracle_vs_simulation(
    p: &Params,
    cfg0: &Configuration,
    t: f64,
    replicas: u64,
    engine: EngineKind,
    key: StreamKey,
) -> Result<DivergenceReport> {
    let q = generator(p, DEFAULT_STATE_CAP)?;
    let space = q.space();
    if cfg0.lattice() != space.lattice() {
        return Err(Error::InvalidArgument("configuration lattice does not match params".into()));
    }
    let exact = transient_distribution(&q, &point_mass(&space, cfg0), t)?;
    let counts = empirical_counts(p, cfg0, t, replicas, engine, key, &space)?;
    Ok(compare(&space, &exact, &counts, engine, t))
}

pub fn empirical_counts(
    p: &Params,
    cfg0: &Configuration,
    t: f64,
    replicas: u64,
    engine: EngineKind,
    key: StreamKey,
    space: &StateSpace,
) -> Result<Vec<u64>> {
    (0..replicas)
        .into_par_iter()
        .try_fold(
            || vec![0u64; space.len()],
            |mut acc, r| {
                let end = engine.run_with(cfg0, p, t, key.with_replica(r), &mut ())?;
                acc[space.index(&end)] += 1;
                Ok::<_, Error>(acc)
            },
        )
        .try_reduce(
            || vec![0u64; space.len()],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                Ok(a)
            },
        )
}

pub fn compare(space: &StateSpace, exact: &[f64], counts: &[u64], engine: EngineKind, t: f64) -> DivergenceReport {
    let n: u64 = counts.iter().sum();
    let nf = n as f64;
    let tv = 0.5 * exact.iter().zip(counts).map(|(p, &c)| (c as f64 / nf - p).abs()).sum::<f64>();
    let z = |expected_p: f64, observed: u64| {
        let var = nf * expected_p * (1.0 - expected_p);
        let diff = observed as f64 - nf * expected_p;
        if var > 0.0 {
            diff / var.sqrt()
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    };
    let mut scores = Vec::new();
    let (mut tail_p, mut tail_c) = (0.0, 0u64);
    for (i, (&p, &c)) in exact.iter().zip(counts).enumerate() {
        if nf * p >= MIN_EXPECTED_COUNT {
            scores.push(StateScore { state: space.config(i).to_digits(), expected: nf * p, observed: c, z: z(p, c) });
        } else {
            tail_p += p;
            tail_c += c;
        }
    }
    if tail_p > 0.0 || tail_c > 0 {
        scores.push(StateScore { state: "tail".into(), expected: nf * tail_p, observed: tail_c, z: z(tail_p, tail_c) });
    }
    let worst = scores.iter().max_by(|a, b| a.z.abs().total_cmp(&b.z.abs()));
    DivergenceReport {
        engine,
        replicas: n,
        t,
        tv,
        max_abs_z: worst.map_or(0.0, |s| s.z.abs()),
        worst_state: worst.map_or_else(String::new, |s| s.state.clone()),
        min_expected: MIN_EXPECTED_COUNT,
        scores,
    }
}

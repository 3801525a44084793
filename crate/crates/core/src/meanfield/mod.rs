//! Well-mixed approximation: densities `u1` (healthy) and `u2` (infected)
//! on the simplex `u1, u2 >= 0, u1 + u2 <= 1`, with `u0 = 1 - u1 - u2` and
//!
//! ```text
//! u1' = lambda10 u0 u1 - u1 + delta u2 - lambda21 u1 u2
//! u2' = lambda20 u0 u2 - u2 - delta u2 + lambda21 u1 u2
//! ```

mod equilibria;
mod ode;

pub use equilibria::{equilibria, residual, Equilibrium, EquilibriumKind, RESIDUAL_TOL};
pub use ode::{integrate_until, MFTrajectory, Tolerance, CLAMP_BAND};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::Params;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MFState {
    pub u1: f64,
    pub u2: f64,
}

impl MFState {
    pub const ORIGIN: MFState = MFState { u1: 0.0, u2: 0.0 };

    pub fn new(u1: f64, u2: f64) -> Result<Self> {
        let s = Self { u1, u2 };
        if !s.in_simplex(0.0) {
            return Err(Error::Domain(format!("({u1}, {u2}) is outside the simplex")));
        }
        Ok(s)
    }

    pub fn u0(&self) -> f64 {
        1.0 - self.u1 - self.u2
    }

    pub fn in_simplex(&self, slack: f64) -> bool {
        self.u1 >= -slack && self.u2 >= -slack && self.u1 + self.u2 <= 1.0 + slack
    }

    pub fn distance(&self, other: &MFState) -> f64 {
        (self.u1 - other.u1).abs().max((self.u2 - other.u2).abs())
    }
}

pub(crate) fn rhs_unchecked(s: MFState, p: &Params) -> (f64, f64) {
    let lambda21 = p.lambda21.finite().unwrap_or(f64::NAN);
    let u0 = s.u0();
    (
        p.lambda10 * u0 * s.u1 - s.u1 + p.delta * s.u2 - lambda21 * s.u1 * s.u2,
        p.lambda20 * u0 * s.u2 - s.u2 - p.delta * s.u2 + lambda21 * s.u1 * s.u2,
    )
}

/// Time derivative `(u1', u2')`.
pub fn rhs(s: MFState, p: &Params) -> Result<(f64, f64)> {
    mean_field_rate(p)?;
    Ok(rhs_unchecked(s, p))
}

fn mean_field_rate(p: &Params) -> Result<f64> {
    p.lambda21
        .finite()
        .ok_or_else(|| Error::Unsupported("the mean-field system needs a finite infection rate".into()))
}

/// Integrates to `t_end` keeping every accepted step.
pub fn integrate(s0: MFState, p: &Params, t_end: f64, tol: Tolerance) -> Result<MFTrajectory> {
    mean_field_rate(p)?;
    if !s0.in_simplex(0.0) {
        return Err(Error::Domain(format!("start {s0:?} is outside the simplex")));
    }
    integrate_until(s0, p, t_end, tol, None, true)
}

/// Left-hand sides of the two invasion inequalities; `None` when the
/// formula divides by zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Conditions {
    /// `lambda20/lambda10 + lambda21 (1 - 1/lambda10)`, compared with `1 + delta`.
    pub lhs_2in1: Option<f64>,
    /// `lambda10/lambda20 - lambda21 (1 - 1/lambda20)`, compared with `1`.
    pub lhs_1in2: Option<f64>,
    pub rhs_2in1: f64,
    /// Infected hosts can invade a healthy equilibrium.
    pub cond_2in1: Option<bool>,
    /// Healthy hosts can invade an infected equilibrium.
    pub cond_1in2: Option<bool>,
}

pub fn conditions(p: &Params) -> Result<Conditions> {
    let l21 = mean_field_rate(p)?;
    let (l10, l20) = (p.lambda10, p.lambda20);
    let lhs_2in1 = (l10 != 0.0).then(|| l20 / l10 + l21 * (1.0 - 1.0 / l10));
    let lhs_1in2 = (l20 != 0.0).then(|| l10 / l20 - l21 * (1.0 - 1.0 / l20));
    let rhs_2in1 = 1.0 + p.delta;
    Ok(Conditions {
        lhs_2in1,
        lhs_1in2,
        rhs_2in1,
        cond_2in1: lhs_2in1.map(|v| v > rhs_2in1),
        cond_1in2: lhs_1in2.map(|v| v > 1.0),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Extinction,
    Coexistence,
    OnesWin,
    TwosWin,
    Unclassified,
}

/// Which hypothesis of the global-stability classification matched.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Clause {
    /// `max(lambda10, lambda20) <= 1`.
    Extinction,
    /// `delta > 0`, `lambda10 <= 1`, `lambda20 > 1 + delta`.
    CoexistenceWeakHost,
    /// `delta > 0`, `lambda10 > 1`, infected hosts invade.
    CoexistenceRecovery,
    /// `delta = 0`, `lambda10 > 1`, infected hosts invade, and either
    /// `lambda20 <= 1` or healthy hosts invade back.
    CoexistenceNoRecovery,
    /// `delta = 0`, `lambda10 > 1`, infected hosts cannot invade, healthy hosts can.
    HealthyWins,
    /// `delta = 0`, `lambda20 > 1`, healthy hosts cannot invade, infected hosts can.
    InfectedWins,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MFClassification {
    pub outcome: Outcome,
    pub clause: Option<Clause>,
    pub equilibrium: Option<MFState>,
    pub conditions: Option<Conditions>,
    pub note: Option<String>,
}

impl MFClassification {
    fn unclassified(conditions: Option<Conditions>, note: &str) -> Self {
        Self { outcome: Outcome::Unclassified, clause: None, equilibrium: None, conditions, note: Some(note.into()) }
    }
}

/// Relative slack under which an invasion inequality counts as an equality.
const EQUALITY_SLACK: f64 = 1e-12;

#[derive(Clone, Copy, PartialEq, Eq)]
enum Tri {
    Holds,
    Fails,
    /// Equality, or the formula is undefined.
    Undecided,
}

fn tri(lhs: Option<f64>, bound: f64) -> Tri {
    match lhs {
        None => Tri::Undecided,
        Some(v) if (v - bound).abs() <= EQUALITY_SLACK * bound.abs().max(1.0) => Tri::Undecided,
        Some(v) if v > bound => Tri::Holds,
        Some(_) => Tri::Fails,
    }
}

/// Applies the global-stability classification clause by clause. Parameter
/// sets matched by no clause, or lying on an invasion-inequality boundary
/// that a clause depends on, are `Unclassified`.
pub fn classify(p: &Params) -> MFClassification {
    let Ok(c) = conditions(p) else {
        return MFClassification::unclassified(None, "infinite infection rate");
    };
    let (l10, l20, d) = (p.lambda10, p.lambda20, p.delta);
    let inv21 = tri(c.lhs_2in1, c.rhs_2in1);
    let inv12 = tri(c.lhs_1in2, 1.0);
    let found = |clause: Clause, outcome: Outcome, point: Option<MFState>| MFClassification {
        outcome,
        clause: Some(clause),
        equilibrium: point,
        conditions: Some(c),
        note: None,
    };
    let interior = || {
        let pts: Vec<_> = equilibria(p)
            .unwrap_or_default()
            .into_iter()
            .filter(|e| e.kind == EquilibriumKind::Interior)
            .map(|e| e.point)
            .collect();
        (pts.len() == 1).then(|| pts[0])
    };

    if l10.max(l20) <= 1.0 {
        return found(Clause::Extinction, Outcome::Extinction, Some(MFState::ORIGIN));
    }
    let clause = if d > 0.0 {
        if l10 <= 1.0 && l20 > 1.0 + d {
            Some(Clause::CoexistenceWeakHost)
        } else if l10 > 1.0 && inv21 == Tri::Holds {
            Some(Clause::CoexistenceRecovery)
        } else {
            None
        }
    } else if l10 > 1.0 && inv21 == Tri::Holds && (l20 <= 1.0 || inv12 == Tri::Holds) {
        Some(Clause::CoexistenceNoRecovery)
    } else if l10 > 1.0 && inv21 == Tri::Fails && inv12 == Tri::Holds {
        Some(Clause::HealthyWins)
    } else if l20 > 1.0 && inv12 == Tri::Fails && inv21 == Tri::Holds {
        Some(Clause::InfectedWins)
    } else {
        None
    };
    match clause {
        Some(Clause::HealthyWins) => {
            found(Clause::HealthyWins, Outcome::OnesWin, Some(MFState { u1: 1.0 - 1.0 / l10, u2: 0.0 }))
        }
        Some(Clause::InfectedWins) => {
            found(Clause::InfectedWins, Outcome::TwosWin, Some(MFState { u1: 0.0, u2: 1.0 - 1.0 / l20 }))
        }
        Some(cl) => match interior() {
            Some(pt) => found(cl, Outcome::Coexistence, Some(pt)),
            None => MFClassification {
                note: Some("coexistence clause matched but no unique interior equilibrium was located".into()),
                ..found(cl, Outcome::Coexistence, None)
            },
        },
        None => MFClassification::unclassified(Some(c), "no clause of the classification applies"),
    }
}

/// Divergence of `F / (u1 u2)` for the mean-field field `F`.
pub fn dulac_divergence(s: MFState, p: &Params) -> Result<f64> {
    if !(s.u1 > 0.0 && s.u2 > 0.0) {
        return Err(Error::Domain(format!("({}, {}) is not strictly interior", s.u1, s.u2)));
    }
    Ok(-p.lambda10 / s.u2 - p.delta / (s.u1 * s.u1) - p.lambda20 / s.u1)
}

/// Whether a simplex point lies in the region where the classified
/// equilibrium attracts: both densities positive without recovery, infected
/// density positive with recovery.
pub fn in_attracting_region(s: MFState, p: &Params) -> bool {
    if p.delta > 0.0 { s.u2 > 0.0 } else { s.u1 > 0.0 && s.u2 > 0.0 }
}

/// Convergence deadline and tolerance for basin scans.
pub const BASIN_TOL: f64 = 1e-6;
/// Integration stops early once this close to the target.
pub const EARLY_EXIT: f64 = 1e-8;

#[derive(Clone, Debug, Serialize)]
pub struct BasinReport {
    pub classification: MFClassification,
    pub target: MFState,
    pub grid_n: usize,
    pub t_end: f64,
    /// Grid points inside the simplex.
    pub in_simplex: usize,
    /// Points integrated (inside the attracting region).
    pub scanned: usize,
    /// Simplex points on an invariant boundary, not integrated.
    pub skipped_boundary: Vec<MFState>,
    pub converged: usize,
    pub max_distance: f64,
    pub worst_start: Option<MFState>,
    /// Starts that had not reached `EARLY_EXIT` by `t_end`.
    pub slow: Vec<MFState>,
}

impl BasinReport {
    pub fn all_converged(&self) -> bool {
        self.scanned > 0 && self.converged == self.scanned
    }
}

/// Integrates from every point of the grid `(i, j) / (grid_n - 1)` lying in
/// the attracting region and reports the worst terminal distance to the
/// classified equilibrium.
pub fn basin_scan(p: &Params, grid_n: usize, t_end: f64) -> Result<BasinReport> {
    if grid_n < 2 {
        return Err(Error::InvalidArgument("grid needs at least 2 points per axis".into()));
    }
    let classification = classify(p);
    let target = classification
        .equilibrium
        .ok_or_else(|| Error::Contract(format!("parameters are {:?}; nothing to scan", classification.outcome)))?;
    let step = 1.0 / (grid_n - 1) as f64;
    let mut starts = Vec::new();
    let mut skipped = Vec::new();
    for i in 0..grid_n {
        for j in 0..grid_n - i {
            let s = MFState { u1: i as f64 * step, u2: j as f64 * step };
            if s.u1 + s.u2 > 1.0 {
                // rounding at the hypotenuse
                continue;
            }
            if in_attracting_region(s, p) {
                starts.push(s);
            } else {
                skipped.push(s);
            }
        }
    }
    let results: Vec<(MFState, f64, bool)> = starts
        .par_iter()
        .map(|&s| {
            let traj = integrate_until(s, p, t_end, Tolerance::default(), Some((target, EARLY_EXIT)), false)?;
            let (_, end) = traj.last();
            Ok((s, end.distance(&target), traj.reached_target))
        })
        .collect::<Result<_>>()?;
    let converged = results.iter().filter(|r| r.1 < BASIN_TOL).count();
    let worst = results.iter().max_by(|a, b| a.1.total_cmp(&b.1));
    Ok(BasinReport {
        target,
        grid_n,
        t_end,
        in_simplex: starts.len() + skipped.len(),
        scanned: starts.len(),
        skipped_boundary: skipped,
        converged,
        max_distance: worst.map_or(0.0, |w| w.1),
        worst_start: worst.map(|w| w.0),
        slow: results.iter().filter(|r| !r.2).map(|r| r.0).collect(),
        classification,
    })
}

/// Finite-difference check of the flow map at `t = 0`: returns the
/// relative difference between `(phi_h(s) - s) / h` and `rhs(s)`.
pub fn flow_derivative_error(s: MFState, p: &Params, h: f64) -> Result<f64> {
    let (a, b) = rhs(s, p)?;
    let tol = Tolerance { atol: 1e-14, rtol: 1e-13 };
    let (_, end) = integrate_until(s, p, h, tol, None, false)?.last();
    let (da, db) = ((end.u1 - s.u1) / h, (end.u2 - s.u2) / h);
    let norm = a.abs().max(b.abs());
    Ok((da - a).abs().max((db - b).abs()) / norm.max(1e-300))
}

#[cfg(test)]
mod tests;

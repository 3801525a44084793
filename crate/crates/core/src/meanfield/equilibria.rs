//! Equilibria from the nullclines.
//!
//! Off the axis `u2 = 0`, the infected-density nullcline is the line
//! `lambda20 (1 - u1 - u2) + lambda21 u1 = 1 + delta`, i.e.
//! `u2 = m u1 + b` with `m = lambda21 / lambda20 - 1` and
//! `b = 1 - (1 + delta) / lambda20`, or the vertical line
//! `u1 = (1 + delta) / lambda21` when `lambda20 = 0`. The healthy-density
//! nullcline is the conic
//! `-lambda10 u1^2 - (lambda10 + lambda21) u1 u2 + (lambda10 - 1) u1 + delta u2 = 0`.
//! Substituting the line gives a univariate quadratic whose roots are
//! polished by Newton steps on the full system.

use serde::Serialize;

use crate::meanfield::{rhs_unchecked, MFState};
use crate::model::Params;
use crate::Result;

/// Accepted equilibria satisfy `|rhs|_inf` below this.
pub const RESIDUAL_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EquilibriumKind {
    /// `(0, 0)`.
    Origin,
    /// `(1 - 1/lambda10, 0)`.
    HealthyOnly,
    /// `(0, 1 - 1/lambda20)`, only without recovery.
    InfectedOnly,
    Interior,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Equilibrium {
    pub point: MFState,
    pub kind: EquilibriumKind,
    pub residual: f64,
}

pub fn residual(s: MFState, p: &Params) -> f64 {
    let (a, b) = rhs_unchecked(s, p);
    a.abs().max(b.abs())
}

/// All equilibria of the mean-field system in the closed simplex, with
/// interior points restricted to the open simplex.
pub fn equilibria(p: &Params) -> Result<Vec<Equilibrium>> {
    let lambda21 = p.finite_lambda21("mean-field equilibria")?;
    let mut out = vec![Equilibrium { point: MFState::ORIGIN, kind: EquilibriumKind::Origin, residual: 0.0 }];
    if p.lambda10 > 1.0 {
        let point = MFState { u1: 1.0 - 1.0 / p.lambda10, u2: 0.0 };
        out.push(Equilibrium { point, kind: EquilibriumKind::HealthyOnly, residual: residual(point, p) });
    }
    if p.delta == 0.0 && p.lambda20 > 1.0 {
        let point = MFState { u1: 0.0, u2: 1.0 - 1.0 / p.lambda20 };
        out.push(Equilibrium { point, kind: EquilibriumKind::InfectedOnly, residual: residual(point, p) });
    }
    for point in interior_candidates(p, lambda21) {
        let point = polish(point, p);
        let r = residual(point, p);
        let inside = point.u1 > 0.0 && point.u2 > 0.0 && point.u1 + point.u2 < 1.0;
        let fresh = out.iter().all(|e| (e.point.u1 - point.u1).abs().max((e.point.u2 - point.u2).abs()) > 1e-9);
        if inside && r < RESIDUAL_TOL && fresh {
            out.push(Equilibrium { point, kind: EquilibriumKind::Interior, residual: r });
        }
    }
    Ok(out)
}

fn interior_candidates(p: &Params, lambda21: f64) -> Vec<MFState> {
    let (l10, l20, d) = (p.lambda10, p.lambda20, p.delta);
    if l20 > 0.0 {
        let m = lambda21 / l20 - 1.0;
        let b = 1.0 - (1.0 + d) / l20;
        let a2 = -l10 - (l10 + lambda21) * m;
        let a1 = -(l10 + lambda21) * b + (l10 - 1.0) + d * m;
        let a0 = d * b;
        solve_quadratic(a2, a1, a0).into_iter().map(|u1| MFState { u1, u2: m * u1 + b }).collect()
    } else if lambda21 > 0.0 {
        let u1 = (1.0 + d) / lambda21;
        // conic at fixed u1 is linear in u2
        let coef = d - (l10 + lambda21) * u1;
        let rest = -l10 * u1 * u1 + (l10 - 1.0) * u1;
        if coef != 0.0 {
            vec![MFState { u1, u2: -rest / coef }]
        } else {
            vec![]
        }
    } else {
        vec![]
    }
}

/// Real roots of `a x^2 + b x + c`; a degenerate all-zero polynomial has none.
fn solve_quadratic(a: f64, b: f64, c: f64) -> Vec<f64> {
    let scale = a.abs().max(b.abs()).max(c.abs());
    if scale == 0.0 {
        return vec![];
    }
    if a.abs() <= 1e-14 * scale {
        return if b != 0.0 { vec![-c / b] } else { vec![] };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return vec![];
    }
    let sq = disc.sqrt();
    let q = -0.5 * (b + b.signum() * sq);
    if q == 0.0 {
        return vec![0.0];
    }
    vec![q / a, c / q]
}

/// A few Newton steps on the full two-dimensional system.
fn polish(mut s: MFState, p: &Params) -> MFState {
    let lambda21 = p.lambda21.finite().unwrap_or(0.0);
    for _ in 0..8 {
        let (f1, f2) = rhs_unchecked(s, p);
        if f1.abs().max(f2.abs()) < 1e-15 {
            break;
        }
        let (u1, u2) = (s.u1, s.u2);
        let u0 = 1.0 - u1 - u2;
        let j11 = p.lambda10 * (u0 - u1) - 1.0 - lambda21 * u2;
        let j12 = -p.lambda10 * u1 + p.delta - lambda21 * u1;
        let j21 = -p.lambda20 * u2 + lambda21 * u2;
        let j22 = p.lambda20 * (u0 - u2) - 1.0 - p.delta + lambda21 * u1;
        let det = j11 * j22 - j12 * j21;
        if det == 0.0 || !det.is_finite() {
            break;
        }
        let next = MFState { u1: u1 - (j22 * f1 - j12 * f2) / det, u2: u2 - (j11 * f2 - j21 * f1) / det };
        if residual(next, p) > residual(s, p) {
            break;
        }
        s = next;
    }
    s
}

//! Dormand-Prince 5(4) with adaptive steps, kept inside the simplex.

use crate::meanfield::{rhs_unchecked, MFState};
use crate::model::Params;
use crate::{Error, Result};

/// Components this far below zero are clamped; anything lower rejects the step.
pub const CLAMP_BAND: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerance {
    pub atol: f64,
    pub rtol: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self { atol: 1e-10, rtol: 1e-9 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MFTrajectory {
    pub points: Vec<(f64, MFState)>,
    /// Set when integration stopped early at the requested target.
    pub reached_target: bool,
}

impl MFTrajectory {
    pub fn last(&self) -> (f64, MFState) {
        *self.points.last().expect("trajectory has its initial point")
    }
}

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// fifth-order minus embedded fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

type V = [f64; 2];

fn axpy(y: V, terms: &[(f64, V)], h: f64) -> V {
    let mut out = y;
    for (c, k) in terms {
        out[0] += h * c * k[0];
        out[1] += h * c * k[1];
    }
    out
}

/// Integrates from `s0` to `t_end`. With `target = Some((p, eps))` it stops
/// as soon as the sup-distance to `p` drops below `eps`. `keep_all` stores
/// every accepted step; otherwise only the endpoints.
pub fn integrate_until(
    s0: MFState,
    p: &Params,
    t_end: f64,
    tol: Tolerance,
    target: Option<(MFState, f64)>,
    keep_all: bool,
) -> Result<MFTrajectory> {
    let f = |y: V| {
        let (a, b) = rhs_unchecked(MFState { u1: y[0], u2: y[1] }, p);
        [a, b]
    };
    let mut t = 0.0;
    let mut y = [s0.u1, s0.u2];
    let mut points = vec![(0.0, s0)];
    let hit = |y: V| target.is_some_and(|(q, eps)| (y[0] - q.u1).abs().max((y[1] - q.u2).abs()) < eps);
    if hit(y) || t_end <= 0.0 {
        return Ok(MFTrajectory { points, reached_target: hit(y) });
    }
    let mut h = (1e-3f64).min(t_end);
    let mut k1 = f(y);
    loop {
        if t + h > t_end {
            h = t_end - t;
        }
        if h < 1e-14 * t.max(1.0) {
            return Err(Error::Stiffness { t });
        }
        let k2 = f(axpy(y, &[(A21, k1)], h));
        let k3 = f(axpy(y, &[(A31, k1), (A32, k2)], h));
        let k4 = f(axpy(y, &[(A41, k1), (A42, k2), (A43, k3)], h));
        let k5 = f(axpy(y, &[(A51, k1), (A52, k2), (A53, k3), (A54, k4)], h));
        let k6 = f(axpy(y, &[(A61, k1), (A62, k2), (A63, k3), (A64, k4), (A65, k5)], h));
        let mut yn = axpy(y, &[(B1, k1), (B3, k3), (B4, k4), (B5, k5), (B6, k6)], h);
        let k7 = f(yn);
        let e = axpy([0.0, 0.0], &[(E1, k1), (E3, k3), (E4, k4), (E5, k5), (E6, k6), (E7, k7)], h);
        let err = ((0..2)
            .map(|i| {
                let sc = tol.atol + tol.rtol * y[i].abs().max(yn[i].abs());
                (e[i] / sc).powi(2)
            })
            .sum::<f64>()
            / 2.0)
            .sqrt();
        let leaves = yn[0] < -CLAMP_BAND || yn[1] < -CLAMP_BAND || yn[0] + yn[1] > 1.0 + CLAMP_BAND;
        if err > 1.0 || leaves || !err.is_finite() {
            let factor = if err.is_finite() { (0.9 * err.powf(-0.2)).clamp(0.1, 0.5) } else { 0.1 };
            h *= if leaves { factor.min(0.5) } else { factor };
            continue;
        }
        let mut moved = false;
        for c in &mut yn {
            if *c < 0.0 {
                *c = 0.0;
                moved = true;
            }
        }
        let sum = yn[0] + yn[1];
        if sum > 1.0 {
            yn[0] /= sum;
            yn[1] /= sum;
            moved = true;
        }
        t += h;
        y = yn;
        // first-same-as-last, unless clamping moved the point
        k1 = if moved { f(y) } else { k7 };
        let s = MFState { u1: y[0], u2: y[1] };
        let done = hit(y);
        if keep_all || done || t >= t_end {
            points.push((t, s));
        }
        if done {
            return Ok(MFTrajectory { points, reached_target: true });
        }
        if t >= t_end {
            return Ok(MFTrajectory { points, reached_target: false });
        }
        let grow = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= grow;
    }
}

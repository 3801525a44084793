use std::io::Write;

use serde::Serialize;

use crate::engine::{Observer, Trajectory};
use crate::model::Configuration;
use crate::observables::grid::Grid;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DensityPoint {
    pub t: f64,
    pub u: [f64; 3],
}

/// Observer sampling state densities on a fixed grid.
#[derive(Clone, Debug)]
pub struct DensitySampler {
    grid: Grid,
    points: Vec<DensityPoint>,
}

impl DensitySampler {
    pub fn new(dt: f64, t_end: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("grid spacing must be positive, got {dt}")));
        }
        Ok(Self { grid: Grid::new(dt, t_end), points: Vec::new() })
    }

    pub fn points(&self) -> &[DensityPoint] {
        &self.points
    }

    pub fn into_points(self) -> Vec<DensityPoint> {
        self.points
    }

    fn sample(&mut self, limit: f64, inclusive: bool, cfg: &Configuration) {
        let u = cfg.densities();
        let pts = &mut self.points;
        pts.extend(self.grid.pop_through(limit, inclusive).map(|t| DensityPoint { t, u }));
    }
}

impl Observer for DensitySampler {
    fn start(&mut self, t0: f64, cfg: &Configuration) {
        self.points.clear();
        self.grid.reset();
        self.sample(t0, true, cfg);
    }

    fn advance(&mut self, t: f64, cfg: &Configuration) {
        self.sample(t, false, cfg);
    }

    fn finish(&mut self, t_end: f64, cfg: &Configuration) {
        self.sample(t_end, true, cfg);
    }
}

/// Densities `(u0, u1, u2)` of a recorded run on the grid `0, dt, ...`.
pub fn density_series(traj: &Trajectory, dt: f64) -> Result<Vec<DensityPoint>> {
    let mut s = DensitySampler::new(dt, traj.t_end())?;
    traj.replay(&mut s)?;
    Ok(s.into_points())
}

/// CSV with columns `t,u0,u1,u2`.
pub fn write_density_csv<W: Write>(out: W, points: &[DensityPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = crate::engine::series::csv_err;
    w.write_record(["t", "u0", "u1", "u2"]).map_err(err)?;
    for p in points {
        w.write_record([p.t.to_string(), p.u[0].to_string(), p.u[1].to_string(), p.u[2].to_string()]).map_err(err)?;
    }
    w.flush()?;
    Ok(())
}

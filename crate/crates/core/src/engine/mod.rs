//! Stochastic engines.
//!
//! [`gillespie`] samples the chain directly from its local rates.
//! [`harris`] builds the graphical representation and replays it under a
//! chosen process, and [`coupled`] drives the stacked process and its two
//! bounding contact processes from one stream. Both engines report to an
//! [`Observer`] and can record a [`Trajectory`].

pub mod coupled;
pub mod eventlog;
pub mod gillespie;
pub mod harris;
pub mod observer;
pub mod series;
pub mod trajectory;

pub use coupled::{coupled_run, coupled_run_with, sandwich_holds, CoupledRun};
pub use gillespie::{run_gillespie, run_gillespie_with};
pub use harris::{
    apply_harris, apply_harris_with, build_harris, build_harris_oriented, run_harris, run_harris_with, Channel,
    EventStream, HarrisEvent, Orientation, Process, Rules,
};
pub use observer::{Cause, Change, Observer};
pub use trajectory::{RecordOptions, Recorder, Snapshot, Trajectory};

use serde::{Deserialize, Serialize};

use crate::model::{Configuration, Params};
use crate::rng::StreamKey;
use crate::Result;

/// Engine selector used by the oracle comparison and the CLI.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineKind {
    Gillespie,
    Harris,
}

impl EngineKind {
    pub const ALL: [EngineKind; 2] = [EngineKind::Gillespie, EngineKind::Harris];

    pub fn run_with<O: Observer>(
        self,
        cfg0: &Configuration,
        p: &Params,
        t_end: f64,
        key: StreamKey,
        obs: &mut O,
    ) -> Result<Configuration> {
        match self {
            EngineKind::Gillespie => run_gillespie_with(cfg0, p, t_end, key, obs),
            EngineKind::Harris => run_harris_with(cfg0, p, t_end, key, obs),
        }
    }

    pub fn run(
        self,
        cfg0: &Configuration,
        p: &Params,
        t_end: f64,
        key: StreamKey,
        opts: RecordOptions,
    ) -> Result<Trajectory> {
        match self {
            EngineKind::Gillespie => run_gillespie(cfg0, p, t_end, key, opts),
            EngineKind::Harris => run_harris(cfg0, p, t_end, key, opts),
        }
    }
}

impl std::str::FromStr for EngineKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gillespie" => Ok(EngineKind::Gillespie),
            "harris" => Ok(EngineKind::Harris),
            other => Err(crate::Error::Parse(format!("unknown engine {other:?}"))),
        }
    }
}

//! Experiment configuration: TOML (or JSON) with an explicit schema version.
//!
//! ```toml
//! schema_version = 1
//! seed = 7
//! engine = "gillespie"
//! t_end = 50.0
//! replicas = 4
//! dt = 1.0
//! observers = ["snapshots", "density"]
//!
//! [params]
//! lambda10 = 2.0
//! lambda20 = 1.0
//! lambda21 = 1.5      # or "inf" (d = 1 only)
//! delta = 0.5
//! dim = 1
//! side = 200
//!
//! [initial]
//! kind = "random"     # random | uniform | digits | interval
//! p1 = 0.4
//! p2 = 0.4
//!
//! [[sweep]]
//! param = "lambda20"
//! from = 0.5
//! to = 3.0
//! steps = 6
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use stackedcp::engine::EngineKind;
use stackedcp::model::invade_all;
use stackedcp::rng::channel;
use stackedcp::{Configuration, InfectionRate, Params, State, StreamKey};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub seed: Option<u64>,
    #[serde(default = "default_engine")]
    pub engine: EngineKind,
    pub t_end: f64,
    #[serde(default = "one")]
    pub replicas: u64,
    /// Sampling interval for snapshot and density series.
    #[serde(default = "unit")]
    pub dt: f64,
    #[serde(default = "default_observers")]
    pub observers: Vec<ObserverKind>,
    pub params: ParamsBlock,
    #[serde(default)]
    pub initial: Initial,
    #[serde(default)]
    pub sweep: Vec<SweepAxis>,
}

fn default_engine() -> EngineKind {
    EngineKind::Gillespie
}

fn one() -> u64 {
    1
}

fn unit() -> f64 {
    1.0
}

fn default_observers() -> Vec<ObserverKind> {
    vec![ObserverKind::Snapshots]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ObserverKind {
    /// `t,count0,count1,count2` on the sampling grid.
    Snapshots,
    /// `t,u0,u1,u2` on the sampling grid.
    Density,
    /// `t,r,l,d` at every change of the edges (d = 1 only).
    Edges,
    /// Final configuration as a JSON document.
    Final,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsBlock {
    pub lambda10: f64,
    pub lambda20: f64,
    pub lambda21: InfectionRate,
    pub delta: f64,
    #[serde(default = "dim_one")]
    pub dim: usize,
    pub side: usize,
}

fn dim_one() -> usize {
    1
}

impl ParamsBlock {
    pub fn to_params(self, seed: u64) -> Result<Params, CliError> {
        Params::new(self.lambda10, self.lambda20, self.lambda21, self.delta, self.dim, self.side, seed)
            .map_err(|e| CliError::Config(format!("params: {e}")))
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Initial {
    /// Independent sites: state 1 with probability `p1`, 2 with `p2`.
    Random { p1: f64, p2: f64 },
    Uniform { state: u8 },
    /// Explicit digit string; d = 1 only.
    Digits { digits: String },
    /// Sites `from..to` (d = 1 indices) in `state`, the rest empty.
    Interval { from: usize, to: usize, state: u8 },
}

impl Default for Initial {
    fn default() -> Self {
        Initial::Random { p1: 0.4, p2: 0.4 }
    }
}

fn state_of(code: u8) -> Result<State, CliError> {
    State::try_from(code).map_err(|e| CliError::Config(format!("initial state: {e}")))
}

impl Initial {
    /// Initial configuration of one replica. Closed under invasion when the
    /// infection rate is infinite.
    pub fn build(&self, p: &Params, key: StreamKey) -> Result<Configuration, CliError> {
        let lattice = p.lattice();
        let bad = |e: stackedcp::Error| CliError::Config(format!("initial: {e}"));
        let mut cfg = match self {
            Initial::Random { p1, p2 } => {
                Configuration::random(lattice, *p1, *p2, &mut key.rng(channel::INITIAL, 0)).map_err(bad)?
            }
            Initial::Uniform { state } => Configuration::uniform(lattice, state_of(*state)?),
            Initial::Digits { digits } => {
                let cfg = Configuration::from_digits(digits).map_err(bad)?;
                if cfg.lattice() != lattice {
                    return Err(CliError::Config(format!(
                        "initial digits describe {} sites in d = 1, params ask for side {} in d = {}",
                        digits.len(),
                        p.side,
                        p.dim
                    )));
                }
                cfg
            }
            Initial::Interval { from, to, state } => {
                if from > to || *to > lattice.n_sites() {
                    return Err(CliError::Config(format!("interval {from}..{to} is outside the lattice")));
                }
                let s = state_of(*state)?;
                let mut cfg = Configuration::empty(lattice);
                (*from..*to).for_each(|x| cfg.set(x, s));
                cfg
            }
        };
        if p.lambda21.is_infinite() {
            invade_all(&mut cfg);
        }
        Ok(cfg)
    }
}

/// Rate parameters a sweep may vary.
pub const SWEEPABLE: [&str; 4] = ["lambda10", "lambda20", "lambda21", "delta"];

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub param: String,
    pub from: Option<f64>,
    pub to: Option<f64>,
    pub steps: Option<usize>,
    /// Explicit values; overrides `from`/`to`/`steps`.
    pub values: Option<Vec<f64>>,
}

impl SweepAxis {
    /// Axis values in ascending order.
    pub fn values(&self) -> Result<Vec<f64>, CliError> {
        if !SWEEPABLE.contains(&self.param.as_str()) {
            return Err(CliError::Config(format!(
                "sweep parameter {:?} is not one of {}",
                self.param,
                SWEEPABLE.join(", ")
            )));
        }
        let mut v = match (&self.values, self.from, self.to, self.steps) {
            (Some(v), ..) => v.clone(),
            (None, Some(a), Some(b), Some(n)) if n >= 1 => {
                if n == 1 {
                    vec![a]
                } else {
                    (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
                }
            }
            _ => {
                return Err(CliError::Config(format!(
                    "sweep axis {:?} needs `values` or `from`, `to` and `steps >= 1`",
                    self.param
                )))
            }
        };
        if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
            return Err(CliError::Config(format!("sweep axis {:?} has no usable values", self.param)));
        }
        v.sort_by(f64::total_cmp);
        v.dedup();
        Ok(v)
    }
}

pub fn set_param(p: &mut ParamsBlock, name: &str, value: f64) {
    match name {
        "lambda10" => p.lambda10 = value,
        "lambda20" => p.lambda20 = value,
        "lambda21" => p.lambda21 = InfectionRate::Finite(value),
        "delta" => p.delta = value,
        _ => unreachable!("axis names are checked by SweepAxis::values"),
    }
}

/// A parsed config plus the digest of its source bytes.
pub struct Loaded {
    pub config: ExperimentConfig,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn load(path: &Path) -> Result<Loaded, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Config(format!("reading {}: {e}", path.display())))?;
    let text = std::str::from_utf8(&bytes).map_err(|_| CliError::Config(format!("{} is not UTF-8", path.display())))?;
    let config = parse(text, path.extension().is_some_and(|e| e == "json"))?;
    Ok(Loaded { config, sha256: sha256_hex(&bytes) })
}

pub fn parse(text: &str, json: bool) -> Result<ExperimentConfig, CliError> {
    let config: ExperimentConfig = if json {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))?
    } else {
        toml::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))?
    };
    if config.schema_version != SCHEMA_VERSION {
        return Err(CliError::Config(format!(
            "schema_version {} is not supported (expected {SCHEMA_VERSION})",
            config.schema_version
        )));
    }
    if config.replicas == 0 {
        return Err(CliError::Config("replicas must be at least 1".into()));
    }
    if !(config.t_end >= 0.0 && config.t_end.is_finite()) {
        return Err(CliError::Config(format!("t_end must be finite and nonnegative, got {}", config.t_end)));
    }
    if !(config.dt > 0.0 && config.dt.is_finite()) {
        return Err(CliError::Config(format!("dt must be positive, got {}", config.dt)));
    }
    if config.sweep.len() > 2 {
        return Err(CliError::Config(format!("at most 2 sweep axes, got {}", config.sweep.len())));
    }
    for a in &config.sweep {
        a.values()?;
    }
    if config.sweep.len() == 2 && config.sweep[0].param == config.sweep[1].param {
        return Err(CliError::Config("sweep axes must name different parameters".into()));
    }
    if config.observers.contains(&ObserverKind::Edges) && config.params.dim != 1 {
        return Err(CliError::Config("the edges observer needs dim = 1".into()));
    }
    config.params.to_params(0)?;
    Ok(config)
}

/// `--seed` wins over the config; having neither is a config error.
pub fn resolve_seed(flag: Option<u64>, config: Option<u64>) -> Result<u64, CliError> {
    flag.or(config).ok_or_else(|| CliError::Config("no seed given: set `seed` in the config or pass --seed".into()))
}

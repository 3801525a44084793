//! Simulation and analysis toolkit for the stacked contact process with
//! variable host fitness.
//!
//! Sites of a finite torus are empty (0), occupied by a healthy host (1) or
//! by a host carrying a symbiont (2). Hosts follow a contact process whose
//! birth rate depends on whether they carry the symbiont; the symbiont
//! spreads horizontally to neighbouring healthy hosts and is lost at a
//! recovery rate.
//!
//! The crate is organised as
//!
//! - [`model`]: parameters, configurations, local transition rates,
//! - [`engine`]: direct Gillespie sampling, Harris graphical-representation
//!   replay and the common-substructure coupling,
//! - [`oracle`]: exact transient distributions on tiny lattices,
//! - [`meanfield`]: the well-mixed ODE, its equilibria and their stability
//!   classification,
//! - [`blockgeom`]: box geometry used by the two-dimensional block
//!   construction,
//! - [`observables`]: one-dimensional edge, segregation and lineage
//!   statistics plus critical-value and edge-speed estimators.

// `!(x > 0.0)` is how argument checks reject NaN alongside bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod blockgeom;
pub mod codec;
pub mod engine;
mod error;
pub mod meanfield;
pub mod model;
pub mod observables;
pub mod oracle;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use model::{Configuration, InfectionRate, Lattice, Params, Regime, State};
pub use rng::StreamKey;

//! Simulation and analysis of a hydraulic cylinder driven by a directional
//! control valve (DCV).
//!
//! Two nonlinear models are provided:
//!
//! * the full-order model: closed-loop spool dynamics, dead-zone and
//!   saturation of the orifice, per-port orifice flows, chamber continuity
//!   equations with stroke-dependent volumes and rod mechanics with Stribeck
//!   friction;
//! * the reduced model: the spool loop is neglected, both orifices are
//!   aggregated into one load flow and the circuit is described by the load
//!   pressure and rod velocity only.
//!
//! On top of these sit the linearized transfer functions, root locus and
//! flow-pressure analyses ([`linear`]), fixed-step simulation ([`sim`]) and an
//! H1 frequency-response estimator ([`frfest`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod csvfmt;
pub mod frfest;
pub mod linear;
pub mod params;
pub mod plant;
pub mod sim;
pub mod valve;

pub use frfest::FrfData;
pub use linear::TransferFunction;
pub use params::{DerivedConstants, PlantParameters, Violation};
pub use plant::{ExternalLoad, FullState, ReducedState};
pub use sim::{InputSignal, Integrator, ModelKind, SimOptions, Trajectory};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {}", join_violations(.0))]
    InvalidParameters(Vec<Violation>),
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("non-finite state at step {step} (t = {time} s): component `{component}`")]
    NonFinite {
        step: usize,
        time: f64,
        component: &'static str,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|v| v.constraint)
        .collect::<Vec<_>>()
        .join(", ")
}

//! Simulation and analysis of monitored spin-1/2 chains.
//!
//! The crate evolves brickwork circuits interleaved with weak on-site
//! measurements, extracts the Lyapunov spectrum of the resulting random
//! operator product, measures entanglement of its leading singular vector, fits
//! finite-size gap data, and checks the fixed points of the outcome-averaged
//! channel.

// `!(x > 0.0)` style checks are used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod circuit;
pub mod cptp;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod lyapunov;
pub mod observables;
pub mod spinchain;

pub use circuit::{CircuitModel, InitialState, ModelKind, OutcomeRecord, TrajectoryEngine};
pub use error::{Error, Result};
pub use lyapunov::{LyapunovAccumulator, LyapunovEstimate, LyapunovRun, ProbeEnsemble};
pub use spinchain::{KrausPair, Outcome, PauliString, StateVector, ThetaSet, TwoSiteUnitary};

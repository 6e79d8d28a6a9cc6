//! Composition accounting for bounded-range differential-privacy mechanisms.
//!
//! The crate computes the optimal `delta` of nonadaptive compositions of
//! bounded-range mechanisms exactly, certified lower bounds for adaptive
//! compositions, efficiently computable adaptive upper bounds, and the
//! differential-privacy baselines, together with oracles that check each of
//! them from first principles.

// `!(x > 0.0)` style checks deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod accountant;
pub mod adaptive;
pub mod error;
pub mod grr;
pub mod mgf;
pub mod nonadaptive;
pub mod numeric;
pub mod oracle;
pub mod par;
pub mod strategy;
pub mod validate;

pub use accountant::{AccountantOptions, Computed, CurveRow, MethodId};
pub use adaptive::{AdaptiveSolverConfig, GapCertificate};
pub use error::{Error, Result};
pub use grr::{FiniteMechanismPair, GrrMechanism, QualityScoreTable};
pub use mgf::{LambdaSearch, UFunctionKind};
pub use nonadaptive::HomogeneousQuery;
pub use oracle::SimulationReport;
pub use par::Exec;
pub use strategy::AdversaryStrategy;

//! Reachability analysis for control systems `ẋ = F(x, u)` with
//! piecewise-constant controls.
//!
//! Vector fields are written in a small expression language
//! ([`fieldlang`]), bound into a [`ControlSystem`], and integrated with a
//! fixed-step RK4 scheme ([`flow`]). On top of that sit breadth-first
//! attainable-set trees and local-controllability classification
//! ([`reach`]), algebraic rank tests and Krener chains ([`certify`]), and
//! search-based steering procedures ([`harness`]).

pub mod certify;
pub mod fieldlang;
pub mod fixtures;
pub mod flow;
pub mod harness;
pub mod io;
pub mod reach;
pub mod rng;
pub mod system;

pub use certify::{Direction, KrenerConfig, LinearSystem, RankCertificate};
pub use fieldlang::{Expr, FieldError, VectorField};
pub use flow::{FlowError, IntegratorConfig, Trajectory};
pub use harness::{ReachMatrix, SteerBudget};
pub use reach::{Classification, ReachConfig, ReachTree, Variant, Verdict};
pub use system::{BoxSet, ControlSet, ControlSystem, ControlWord, Segment, SystemError};

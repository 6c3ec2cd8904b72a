//! Verification of ReLU policy networks inside transition systems.
//!
//! The crate is layered bottom-up: [`network`] evaluates feed-forward ReLU
//! networks, [`constraint`] builds linear queries over one or more network
//! copies, [`solver`] decides them, [`transition`] unrolls sliding-window
//! transition systems, and [`checker`], [`invariant`] and [`abstraction`]
//! implement the analyses on top. [`oracle`] holds brute-force reference
//! procedures used to cross-check everything else.

pub mod abstraction;
pub mod bounds;
pub mod checker;
pub mod constraint;
pub mod error;
pub mod fixtures;
pub mod invariant;
pub mod format;
pub mod lp;
pub mod network;
pub mod oracle;
pub mod solver;
pub mod transition;

pub use abstraction::{AbstractionMask, FieldSelection, Provenance};
pub use checker::{CheckConfig, CheckResult, Outcome, Property};
pub use constraint::{Interval, LinearConstraint, Query, Relation, Site, Term, VarRef, DEFAULT_DELTA_STRICT};
pub use error::{Error, Result};
pub use network::{Layer, Network};
pub use solver::{solve, validate_witness, SolverConfig, Status, Verdict, Witness};
pub use transition::{Start, StatePredicate, PredicateKind, TransitionSpec};

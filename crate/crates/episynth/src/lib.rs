//! Model checking and protocol synthesis for finite multi-agent
//! environments with observation-based knowledge.
//!
//! The toolkit works with environments whose states are valuations of
//! finite-domain variables, whose transitions are labelled by joint actions,
//! and where each agent observes a declared subset of the variables. Agent
//! programs are guarded-command protocol templates whose guards may contain
//! boolean "holes" (template variables); filling every hole with a formula
//! local to the owning agent yields a concrete protocol and, by execution in
//! the environment, a checkable system.
//!
//! What you can do with it:
//!
//! * parse a model file into an explicit environment ([`dsl`]),
//! * model-check temporal-epistemic (CTLK) formulas over systems of one or
//!   more strategy components ([`mck`]),
//! * build approximation systems for partially-filled templates — the
//!   concrete system, the maximally permissive top system, and unions of
//!   enumerated imperfect-recall strategy classes ([`approx`]),
//! * synthesize hole assignments stage by stage along a declared variable
//!   order, extracting for each hole the local formula equivalent to its
//!   knowledge condition in the current approximation ([`synth`]),
//! * exhaustively search for strict (necessary-and-sufficient)
//!   implementations at desk scale ([`synth::kbp_find`]),
//! * and drive all of the above from a command line with JSON reports
//!   ([`cli`]).
//!
//! The `examples/` directory contains one runnable program per capability;
//! start with `cargo run --example synth_picnic`.

pub mod approx;
pub mod cli;
pub mod dsl;
pub mod error;
pub mod kernel;
pub(crate) mod lex;
pub mod logic;
pub mod mck;
pub mod report;
pub mod synth;

pub use error::{Diagnostic, Error, Result};
pub use kernel::{
    enabled_actions, guard_satisfiable, joint_enabled, AgentId, Atom, BoolExpr, Environment,
    EnvironmentBuilder, JointTemplate, Observation, ProtocolTemplate, Rel, StateId, Substitution,
    TVarId, VarDecl, VarId,
};
pub use logic::{Formula, SpecFormula, SpecKind};
pub use mck::{BundleSystem, KnowledgeVerdict, Labeling};

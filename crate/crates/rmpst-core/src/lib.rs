//! Refined multiparty session types (RMPST).
//!
//! A global session type describes a message-passing protocol between roles;
//! payloads carry refinement types whose predicates may relate messages across
//! the whole protocol. This crate implements the complete toolchain:
//!
//! - [`syntax`]: abstract syntax of expressions, refinement types, global and
//!   local session types, typing contexts, and actions;
//! - [`frontend`]: a refined-Scribble surface language (`.rscr`) and a direct
//!   core-type syntax, with desugaring into the core forms;
//! - [`refine`]: expression typing and semantic subtyping, discharged by an
//!   SMT-style validity engine (exact linear-arithmetic decision procedure,
//!   external SMT-LIB 2 subprocess, or bounded enumeration);
//! - [`project`]: context projection and endpoint projection with silent
//!   prefixes and branch merging;
//! - [`cfsm`]: communicating finite state machines with per-state typing
//!   contexts, plus JSON/DOT export;
//! - [`semantics`]: executable labelled-transition semantics for global types,
//!   local types and configurations, with bounded trace-equivalence and
//!   progress checkers;
//! - [`codegen`]: callback-style endpoint API generation from a CFSM;
//! - [`runtime`]: an endpoint interpreter over FIFO transports (in-memory and
//!   TCP) that enforces refinements as runtime assertions;
//! - [`testgen`]: seeded random generators for protocols and formulas, used by
//!   the property suites.

pub mod cfsm;
pub mod codegen;
pub mod frontend;
pub mod pretty;
pub mod project;
pub mod refine;
pub mod runtime;
pub mod semantics;
pub mod syntax;

pub use syntax::{
    Action, BaseType, BinOp, Expression, GlobalContext, GlobalType, LocalContext, LocalType,
    Multiplicity, RefinementType, Role, UnOp,
};

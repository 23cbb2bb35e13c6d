//! Callback-style endpoint code generation from a CFSM.
//!
//! [`generate`] turns one role's machine (plus its per-state typing
//! contexts) into a set of Rust source files: a state record per machine
//! state, a choice enum per sending state, a `Callbacks` trait collecting
//! one chooser per sending state and one handler per receiving edge, a
//! transport-facing `Connection` trait, and a `run` entry point that drives
//! the machine from its initial state to termination. The artifact depends
//! only on `std`, so it compiles on its own, and the emitters are pure
//! functions of the input: the same machine yields byte-identical files.
//!
//! Refinements travel with the code as runtime assertions. The host
//! language has no refinement types, so the static guarantee is
//! approximated: send-side predicates are asserted before transmission,
//! receive-side predicates after deserialization (the receiving end
//! re-checks rather than trusting the sender). A predicate that mentions a
//! variable erased at its state cannot be evaluated; the check site records
//! it as a comment instead. Erased entries get no record field at all, so a
//! callback that tries to read one simply does not compile.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::cfsm::{validate, Cfsm, StateContext, StateId, StateKind, Transition, Violation};
use crate::pretty::{pretty_expr, pretty_rtype};
use crate::syntax::{BaseType, BinOp, Expression, Multiplicity, UnOp, Var};

/// Where a state-record entry comes from: a payload this role sent or
/// received itself (`ω`, readable), or third-party knowledge recorded for
/// specification only (`0`, erased).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Communicated,
    Erased,
}

/// One entry of a state record: the variable, its base sort, whether the
/// role holds its value, and the refinement predicate (kept as metadata and
/// asserted where evaluable).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldSpec {
    pub name: Var,
    pub base: BaseType,
    pub origin: Origin,
    pub predicate: Expression,
}

/// The record type for one machine state, derived from its typing context.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateRecord {
    pub state: StateId,
    pub fields: Vec<FieldSpec>,
}

impl StateRecord {
    /// Fields with a runtime value, in binding order.
    pub fn concrete(&self) -> impl Iterator<Item = &FieldSpec> {
        self.fields.iter().filter(|f| f.origin == Origin::Communicated)
    }

    /// Erased fields, in binding order.
    pub fn erased(&self) -> impl Iterator<Item = &FieldSpec> {
        self.fields.iter().filter(|f| f.origin == Origin::Erased)
    }
}

/// One generated source file: a name relative to the output directory and
/// its full contents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedFile {
    pub name: String,
    pub contents: String,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum GenError {
    #[error("machine fails validation: {first} ({count} violation(s))", first = .0[0], count = .0.len())]
    InvalidMachine(Vec<Violation>),
    #[error("no typing context recorded for state {0}")]
    MissingContext(StateId),
    #[error("state {state} needs a value for {var} but none is in scope")]
    MissingValue { state: StateId, var: Var },
}

/// Derive the record layout of every state from its typing context:
/// multiplicity `ω` entries become readable fields, multiplicity `0`
/// entries erased ones. Shared with the runtime interpreter so the
/// generated artifact and the in-process executor agree on what a state
/// record holds.
pub fn state_records(m: &Cfsm, sc: &StateContext) -> Result<Vec<StateRecord>, GenError> {
    let mut out = Vec::new();
    for s in &m.states {
        let ctx = sc.get(s.id).ok_or(GenError::MissingContext(s.id))?;
        let fields = ctx
            .entries
            .iter()
            .map(|e| FieldSpec {
                name: e.var.clone(),
                base: e.ty.base,
                origin: match e.mult {
                    Multiplicity::Omega => Origin::Communicated,
                    Multiplicity::Zero => Origin::Erased,
                },
                predicate: e.ty.with_binder(e.var.clone()).predicate,
            })
            .collect();
        out.push(StateRecord { state: s.id, fields });
    }
    Ok(out)
}

/// Generate the endpoint API for `m` as self-contained Rust source files:
/// `mod.rs`, `callbacks.rs`, `connection.rs`, `records.rs`, `run.rs`.
///
/// The machine must pass [`validate`]; generation is total on valid input.
pub fn generate(m: &Cfsm, sc: &StateContext) -> Result<Vec<GeneratedFile>, GenError> {
    let violations = validate(m);
    if !violations.is_empty() {
        return Err(GenError::InvalidMachine(violations));
    }
    let records = state_records(m, sc)?;
    let gen = Emitter { m, records: &records };
    Ok(vec![
        GeneratedFile { name: "mod.rs".into(), contents: gen.mod_rs() },
        GeneratedFile { name: "callbacks.rs".into(), contents: gen.callbacks_rs() },
        GeneratedFile { name: "connection.rs".into(), contents: connection_rs() },
        GeneratedFile { name: "records.rs".into(), contents: gen.records_rs() },
        GeneratedFile { name: "run.rs".into(), contents: gen.run_rs()? },
    ])
}

/// Rust keywords (strict and reserved) that cannot name a field or binding.
const KEYWORDS: &[&str] = &[
    "abstract", "as", "async", "await", "become", "box", "break", "const", "continue", "crate",
    "do", "dyn", "else", "enum", "extern", "false", "final", "fn", "for", "if", "impl", "in",
    "let", "loop", "macro", "match", "mod", "move", "mut", "override", "priv", "pub", "ref",
    "return", "self", "Self", "static", "struct", "super", "trait", "true", "try", "type",
    "typeof", "unsafe", "unsized", "use", "virtual", "where", "while", "yield",
];

/// Names the run loop binds itself; protocol variables must not shadow them.
const RESERVED: &[&str] = &["st", "callbacks", "comm", "label", "state"];

/// Map a protocol identifier to a legal, non-colliding Rust identifier.
/// Protocol names are already `[A-Za-z_][A-Za-z0-9_]*`, so only keyword and
/// internal-name collisions need repair; a trailing underscore is enough
/// and keeps the field recognizable.
fn ident(raw: &str) -> String {
    let mut s: String = raw
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' })
        .collect();
    if s.chars().next().is_none_or(|c| c.is_ascii_digit()) {
        s.insert(0, '_');
    }
    if KEYWORDS.contains(&s.as_str()) || RESERVED.contains(&s.as_str()) {
        s.push('_');
    }
    s
}

/// Enum variant for a label: first letter upcased, uniqued within `used`.
fn variant(label: &str, used: &mut BTreeSet<String>) -> String {
    let base = ident(label);
    let mut cased = String::new();
    let mut chars = base.chars();
    if let Some(c) = chars.next() {
        cased.extend(c.to_uppercase());
        cased.extend(chars);
    }
    let mut name = cased.clone();
    let mut n = 2;
    while !used.insert(name.clone()) {
        name = format!("{cased}_{n}");
        n += 1;
    }
    name
}

/// The Rust type backing a base sort.
fn rust_ty(base: BaseType) -> &'static str {
    match base {
        BaseType::Int => "i64",
        BaseType::Bool => "bool",
        BaseType::Str => "String",
        BaseType::Unit => "()",
    }
}

/// Operator precedence used when rendering expressions as Rust. Bigger
/// binds tighter; comparisons are non-associative in Rust, so both sides
/// are rendered one level up.
fn prec(op: BinOp) -> u8 {
    match op {
        BinOp::Or => 1,
        BinOp::And => 2,
        BinOp::Imp => 0, // rewritten before rendering
        BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 3,
        BinOp::Add | BinOp::Sub => 4,
        BinOp::Mul => 5,
    }
}

fn rust_op(op: BinOp) -> &'static str {
    match op {
        BinOp::Add => "+",
        BinOp::Sub => "-",
        BinOp::Mul => "*",
        BinOp::Eq => "==",
        BinOp::Ne => "!=",
        BinOp::Lt => "<",
        BinOp::Le => "<=",
        BinOp::Gt => ">",
        BinOp::Ge => ">=",
        BinOp::And => "&&",
        BinOp::Or => "||",
        BinOp::Imp => unreachable!("implication is rewritten to !a || b"),
    }
}

/// Render `e` as a Rust expression, resolving variables through `env`
/// (protocol name → Rust expression). `None` when some variable has no
/// runtime value here — the caller then skips the check or reports the
/// missing value, depending on what the expression was for.
fn rust_expr(e: &Expression, env: &BTreeMap<Var, String>) -> Option<String> {
    let mut out = String::new();
    rust_expr_at(e, env, 0, &mut out)?;
    Some(out)
}

fn rust_expr_at(
    e: &Expression,
    env: &BTreeMap<Var, String>,
    min: u8,
    out: &mut String,
) -> Option<()> {
    match e {
        Expression::Var(v) => out.push_str(env.get(v)?),
        Expression::IntLit(n) => {
            let _ = write!(out, "{n}");
        }
        Expression::BoolLit(b) => {
            let _ = write!(out, "{b}");
        }
        Expression::StrLit(s) => {
            let _ = write!(out, "String::from({s:?})");
        }
        Expression::Unary(op, inner) => {
            out.push_str(match op {
                UnOp::Not => "!",
                UnOp::Neg => "-",
            });
            out.push('(');
            rust_expr_at(inner, env, 0, out)?;
            out.push(')');
        }
        Expression::Binary(BinOp::Imp, lhs, rhs) => {
            let rewritten = Expression::bin(
                BinOp::Or,
                Expression::not((**lhs).clone()),
                (**rhs).clone(),
            );
            rust_expr_at(&rewritten, env, min, out)?;
        }
        Expression::Binary(op, lhs, rhs) => {
            let p = prec(*op);
            let wrap = p < min;
            if wrap {
                out.push('(');
            }
            // Comparisons chain in neither direction; arithmetic and the
            // logical connectives associate left.
            let (lm, rm) = if prec(*op) == 3 { (p + 1, p + 1) } else { (p, p + 1) };
            rust_expr_at(lhs, env, lm, out)?;
            let _ = write!(out, " {} ", rust_op(*op));
            rust_expr_at(rhs, env, rm, out)?;
            if wrap {
                out.push(')');
            }
        }
    }
    Some(())
}

struct Emitter<'a> {
    m: &'a Cfsm,
    records: &'a [StateRecord],
}

impl Emitter<'_> {
    fn record(&self, q: StateId) -> &StateRecord {
        &self.records[q]
    }

    /// `S{q}` — the record type name of a state.
    fn sname(&self, q: StateId) -> String {
        format!("S{q}")
    }

    /// What a state does, for doc comments.
    fn state_blurb(&self, q: StateId) -> String {
        let s = self.m.state(q);
        match (s.kind, &s.peer) {
            (StateKind::Send, Some(p)) => format!("sending to {p}"),
            (StateKind::Recv, Some(p)) => format!("receiving from {p}"),
            _ => "terminal".to_string(),
        }
    }

    fn mod_rs(&self) -> String {
        let mut o = String::new();
        let _ = writeln!(o, "//! Endpoint API for role {} of the session machine.", self.m.role);
        o.push_str(
            "//!\n\
             //! Generated by `rmpst gen`; edits are overwritten on regeneration, and\n\
             //! regeneration from the same machine reproduces these files byte for\n\
             //! byte. [`records`] holds one state record per machine state,\n\
             //! [`callbacks`] the choice enums and the `Callbacks` trait implemented\n\
             //! by user logic, [`connection`] the transport-facing trait, and\n\
             //! [`run`] the entry point that drives the machine.\n\n",
        );
        o.push_str("pub mod callbacks;\npub mod connection;\npub mod records;\npub mod run;\n");
        o
    }

    fn records_rs(&self) -> String {
        let mut o = String::new();
        o.push_str(
            "//! State records: the variables this role holds concretely at each\n\
             //! state. A field appears only for multiplicity-ω entries of the\n\
             //! state's typing context; erased entries (multiplicity 0) are listed\n\
             //! in the struct docs for reference but have no runtime value and no\n\
             //! field, so user code cannot read them.\n\n\
             #![allow(non_snake_case)]\n",
        );
        for rec in self.records {
            let _ = write!(o, "\n/// State {} — {}.", rec.state, self.state_blurb(rec.state));
            let erased: Vec<_> = rec.erased().collect();
            if !erased.is_empty() {
                o.push_str("\n///\n/// Erased (specification only): ");
                for (i, f) in erased.iter().enumerate() {
                    if i > 0 {
                        o.push_str(", ");
                    }
                    let _ = write!(o, "`{}`", field_sig(f));
                }
                o.push('.');
            }
            o.push_str("\n#[derive(Debug, Clone)]\n");
            if rec.concrete().next().is_none() {
                let _ = writeln!(o, "pub struct {} {{}}", self.sname(rec.state));
            } else {
                let _ = writeln!(o, "pub struct {} {{", self.sname(rec.state));
                for f in rec.concrete() {
                    let _ = writeln!(o, "    /// `{}`", field_sig(f));
                    let _ = writeln!(o, "    pub {}: {},", ident(&f.name), rust_ty(f.base));
                }
                o.push_str("}\n");
            }
        }
        o
    }

    fn callbacks_rs(&self) -> String {
        let mut o = String::new();
        o.push_str(
            "//! User-logic interface: one chooser per sending state, one handler\n\
             //! per receiving edge. Callbacks see state records and payloads only —\n\
             //! never the connection — so the run loop is the sole code touching\n\
             //! the channel during a session.\n\n\
             #![allow(non_snake_case)]\n",
        );
        if !self.m.transitions.is_empty() {
            o.push_str("\nuse super::records::*;\n");
        }
        // One choice enum per sending state.
        for s in &self.m.states {
            if s.kind != StateKind::Send {
                continue;
            }
            let out = self.m.outgoing(s.id);
            let peer = s.peer.as_deref().unwrap_or_default();
            let _ = write!(
                o,
                "\n/// Internal choice at state {} (to {peer}): one variant per branch,\n\
                 /// payload as declared. The run loop checks the branch refinement\n\
                 /// before sending.\n\
                 #[derive(Debug, Clone)]\n\
                 pub enum {}Cases {{\n",
                s.id,
                self.sname(s.id),
            );
            let mut used = BTreeSet::new();
            for t in &out {
                let _ = writeln!(o, "    /// `{}({})`", t.label, pretty_rtype(&t.ty.with_binder(t.var.clone())));
                let v = variant(&t.label, &mut used);
                if t.ty.base == BaseType::Unit {
                    let _ = writeln!(o, "    {v},");
                } else {
                    let _ = writeln!(o, "    {v}({}),", rust_ty(t.ty.base));
                }
            }
            o.push_str("}\n");
        }
        // The trait: choosers and handlers in state order.
        o.push_str(
            "\n/// Implemented by user logic; supplied to [`super::run::run`]\n\
             /// together with a connection.\n\
             pub trait Callbacks {\n",
        );
        let mut first = true;
        for s in &self.m.states {
            let out = self.m.outgoing(s.id);
            match s.kind {
                StateKind::Send => {
                    if !first {
                        o.push('\n');
                    }
                    let _ = writeln!(
                        o,
                        "    /// State {}: choose the message sent to {}.",
                        s.id,
                        s.peer.as_deref().unwrap_or_default(),
                    );
                    let _ = writeln!(
                        o,
                        "    fn state{}_send(&mut self, st: &{}) -> {}Cases;",
                        s.id,
                        self.sname(s.id),
                        self.sname(s.id),
                    );
                    first = false;
                }
                StateKind::Recv => {
                    for t in &out {
                        if !first {
                            o.push('\n');
                        }
                        let _ = writeln!(
                            o,
                            "    /// State {}: `{}` received from {} — `{}`.",
                            s.id,
                            t.label,
                            t.peer,
                            pretty_rtype(&t.ty.with_binder(t.var.clone())),
                        );
                        let _ = writeln!(
                            o,
                            "    fn state{}_receive_{}(&mut self, st: &{}, {}: {});",
                            s.id,
                            ident(&t.label),
                            self.sname(s.id),
                            ident(&t.var),
                            rust_ty(t.ty.base),
                        );
                        first = false;
                    }
                }
                StateKind::Terminal => {}
            }
        }
        o.push_str("}\n");
        o
    }

    fn run_rs(&self) -> Result<String, GenError> {
        let mut o = String::new();
        o.push_str(
            "//! Entry point: drives the machine state by state over the\n\
             //! connection. Send states ask the chooser, assert the chosen\n\
             //! branch's refinement, transmit label then payload, and advance.\n\
             //! Receive states read a label, dispatch, read the payload, check the\n\
             //! branch refinement (the receiving side re-checks rather than\n\
             //! trusting the sender), invoke the handler, and advance. Refinements\n\
             //! whose variables are erased here cannot be evaluated; such a check\n\
             //! site carries a comment instead.\n\n\
             #![allow(non_snake_case)]\n\n",
        );
        o.push_str("use super::callbacks::*;\nuse super::connection::Connection;\nuse super::records::*;\n");
        o.push_str(
            "\n/// Why a session aborted.\n\
             #[derive(Debug)]\n\
             pub enum Violation {\n\
             \x20   /// A refinement predicate evaluated to false.\n\
             \x20   RefinementFailed { state: usize, predicate: String, snapshot: String },\n\
             \x20   /// The peer sent a label that is no branch of the current state.\n\
             \x20   UnknownLabel { state: usize, label: String },\n\
             \x20   /// The peer's channel closed at a message boundary.\n\
             \x20   PeerClosed { peer: String },\n\
             \x20   /// A label or payload could not be decoded.\n\
             \x20   Deserialization { state: usize, detail: String },\n\
             }\n",
        );
        // The private state enum that threads the loop.
        o.push_str(
            "\n/// Machine states threaded through the run loop. Private: user code\n\
             /// cannot forge a mid-session state.\n\
             enum State {\n",
        );
        for s in &self.m.states {
            let _ = writeln!(o, "    S{}(S{}),", s.id, s.id);
        }
        o.push_str("}\n");

        let terminal = self.m.terminal();
        let ret = match terminal {
            Some(q) => self.sname(q),
            None => "()".to_string(),
        };
        let idle = self.m.transitions.is_empty();
        let (cb_param, comm_param) =
            if idle { ("_callbacks", "_comm") } else { ("callbacks", "comm") };
        let _ = write!(
            o,
            "\n/// Drive the endpoint from the initial state to termination.\n\
             ///\n\
             /// The connection must already reach every peer of the machine.\n\
             pub fn run<C: Callbacks, N: Connection>(\n\
             \x20   {cb_param}: &mut C,\n\
             \x20   {comm_param}: &mut N,\n\
             ) -> Result<{ret}, Violation> {{\n",
        );
        if idle {
            // Degenerate machine: the initial state is terminal.
            let _ = write!(o, "    match initial() {{\n");
            if let Some(q) = terminal {
                let _ = writeln!(o, "        State::S{q}(st) => Ok(st),");
            }
            o.push_str("    }\n}\n");
        } else {
            o.push_str("    let mut state = initial();\n    loop {\n        state = match state {\n");
            for s in &self.m.states {
                if Some(s.id) == terminal {
                    let _ = writeln!(o, "            State::S{}(st) => return Ok(st),", s.id);
                } else {
                    let _ = writeln!(
                        o,
                        "            State::S{}(st) => run_s{}(st, {cb_param}, {comm_param})?,",
                        s.id, s.id,
                    );
                }
            }
            o.push_str("        };\n    }\n}\n");
        }

        // initial(): apply the machine-level initializers, then build the
        // initial record.
        o.push_str("\nfn initial() -> State {\n");
        let mut env = BTreeMap::new();
        let mut lets = Vec::new();
        let q0fields: BTreeSet<&str> =
            self.record(self.m.initial).concrete().map(|f| f.name.as_str()).collect();
        for a in &self.m.init {
            if !q0fields.contains(a.var.as_str()) {
                continue;
            }
            if let Some(rhs) = rust_expr(&a.expr, &env) {
                lets.push(format!("    let {} = {};\n", ident(&a.var), rhs));
                env.insert(a.var.clone(), ident(&a.var));
            }
        }
        for l in &lets {
            o.push_str(l);
        }
        let _ = write!(o, "    State::S{}(", self.m.initial);
        self.build_record(self.m.initial, &env, None, &mut o)?;
        o.push_str(")\n}\n");

        // One run function per non-terminal state.
        for s in &self.m.states {
            match s.kind {
                StateKind::Send => self.emit_send_state(s.id, &mut o)?,
                StateKind::Recv => self.emit_recv_state(s.id, &mut o)?,
                StateKind::Terminal => {}
            }
        }
        Ok(o)
    }

    /// Emit `S{q} { f: v, ... }` for the target state, resolving each
    /// concrete field through `env` first (payload and update/init
    /// bindings), then through the source record `from` (as `st.f`).
    fn build_record(
        &self,
        q: StateId,
        env: &BTreeMap<Var, String>,
        from: Option<StateId>,
        o: &mut String,
    ) -> Result<(), GenError> {
        let from_fields: BTreeSet<&str> = match from {
            Some(p) => self.record(p).concrete().map(|f| f.name.as_str()).collect(),
            None => BTreeSet::new(),
        };
        let _ = write!(o, "{} {{", self.sname(q));
        let mut first = true;
        for f in self.record(q).concrete() {
            let value = if let Some(bound) = env.get(&f.name) {
                bound.clone()
            } else if from_fields.contains(f.name.as_str()) {
                let read = format!("st.{}", ident(&f.name));
                if f.base == BaseType::Str {
                    format!("{read}.clone()")
                } else {
                    read
                }
            } else {
                return Err(GenError::MissingValue { state: q, var: f.name.clone() });
            };
            let sep = if first { " " } else { ", " };
            first = false;
            let fname = ident(&f.name);
            if value == fname {
                let _ = write!(o, "{sep}{fname}");
            } else {
                let _ = write!(o, "{sep}{fname}: {value}");
            }
        }
        o.push_str(if first { "}" } else { " }" });
        Ok(())
    }

    /// The refinement check for one edge, with the payload bound to
    /// `env[var]`. Emits either the `if !(..) return` guard or a comment
    /// explaining why the predicate is not evaluable here.
    fn emit_assert(
        &self,
        t: &Transition,
        env: &BTreeMap<Var, String>,
        indent: &str,
        o: &mut String,
    ) {
        let pred = t.ty.predicate_on(&Expression::var(&t.var));
        if pred.is_truth() {
            return;
        }
        let shown = pretty_expr(&pred);
        match rust_expr(&pred, env) {
            Some(cond) => {
                let _ = write!(
                    o,
                    "{indent}if !({cond}) {{\n\
                     {indent}    return Err(Violation::RefinementFailed {{\n\
                     {indent}        state: {},\n\
                     {indent}        predicate: String::from({shown:?}),\n\
                     {indent}        snapshot: format!(\"{{:?}}\", st),\n\
                     {indent}    }});\n\
                     {indent}}}\n",
                    t.from,
                );
            }
            None => {
                let _ = writeln!(
                    o,
                    "{indent}// refinement `{shown}` mentions erased variables; recorded, not checkable here",
                );
            }
        }
    }

    /// Bindings for a transition's updates and inits: `let` lines plus the
    /// extended environment. Updates read the pre-transition record (via
    /// `st.*`), inits run after them, left to right.
    fn edge_lets(
        &self,
        t: &Transition,
        mut env: BTreeMap<Var, String>,
        indent: &str,
    ) -> (String, BTreeMap<Var, String>) {
        let mut o = String::new();
        let target_fields: BTreeSet<&str> =
            self.record(t.to).concrete().map(|f| f.name.as_str()).collect();
        // Updates see the old record only, never each other. Record reads
        // here are value positions, so string fields are cloned.
        let read_field = |f: &FieldSpec| {
            let read = format!("st.{}", ident(&f.name));
            if f.base == BaseType::Str {
                format!("{read}.clone()")
            } else {
                read
            }
        };
        let update_env: BTreeMap<Var, String> = {
            let mut e = env.clone();
            for f in self.record(t.from).concrete() {
                e.entry(f.name.clone()).or_insert_with(|| read_field(f));
            }
            e
        };
        for a in &t.updates {
            if !target_fields.contains(a.var.as_str()) {
                continue;
            }
            if let Some(rhs) = rust_expr(&a.expr, &update_env) {
                let _ = writeln!(o, "{indent}let {} = {};", ident(&a.var), rhs);
                env.insert(a.var.clone(), ident(&a.var));
            }
        }
        // Inits see updates and earlier inits through `env`, and otherwise
        // the old record.
        for a in &t.inits {
            if !target_fields.contains(a.var.as_str()) {
                continue;
            }
            let mut e = env.clone();
            for f in self.record(t.from).concrete() {
                e.entry(f.name.clone()).or_insert_with(|| read_field(f));
            }
            if let Some(rhs) = rust_expr(&a.expr, &e) {
                let _ = writeln!(o, "{indent}let {} = {};", ident(&a.var), rhs);
                env.insert(a.var.clone(), ident(&a.var));
            }
        }
        (o, env)
    }

    /// Environment mapping every concrete field of `q` to `st.field`.
    fn record_env(&self, q: StateId) -> BTreeMap<Var, String> {
        self.record(q)
            .concrete()
            .map(|f| (f.name.clone(), format!("st.{}", ident(&f.name))))
            .collect()
    }

    fn emit_send_state(&self, q: StateId, o: &mut String) -> Result<(), GenError> {
        let out = self.m.outgoing(q);
        let peer = self.m.state(q).peer.clone().unwrap_or_default();
        let _ = write!(
            o,
            "\nfn run_s{q}<C: Callbacks, N: Connection>(\n\
             \x20   st: {},\n\
             \x20   callbacks: &mut C,\n\
             \x20   comm: &mut N,\n\
             ) -> Result<State, Violation> {{\n\
             \x20   match callbacks.state{q}_send(&st) {{\n",
            self.sname(q),
        );
        let mut used = BTreeSet::new();
        for t in &out {
            let v = variant(&t.label, &mut used);
            let pv = ident(&t.var);
            let mut env = self.record_env(q);
            if t.ty.base == BaseType::Unit {
                let _ = writeln!(o, "        {}Cases::{v} => {{", self.sname(q));
            } else {
                let _ = writeln!(o, "        {}Cases::{v}({pv}) => {{", self.sname(q));
                env.insert(t.var.clone(), pv.clone());
            }
            self.emit_assert(t, &env, "            ", o);
            let _ = write!(
                o,
                "            comm.send_string({peer:?}, {:?})\n\
                 \x20               .map_err(|_| Violation::PeerClosed {{ peer: String::from({peer:?}) }})?;\n",
                t.label.as_str(),
            );
            let send_payload = match t.ty.base {
                BaseType::Unit => format!("comm.send_unit({peer:?})"),
                BaseType::Str => format!("comm.send_string({peer:?}, &{pv})"),
                base => format!("comm.send_{}({peer:?}, {pv})", base.name()),
            };
            let _ = write!(
                o,
                "            {send_payload}\n\
                 \x20               .map_err(|_| Violation::PeerClosed {{ peer: String::from({peer:?}) }})?;\n",
            );
            // The payload enters the successor record by its protocol name.
            let mut env = BTreeMap::new();
            env.insert(t.var.clone(), payload_value(t.ty.base, &pv));
            let (lets, env) = self.edge_lets(t, env, "            ");
            o.push_str(&lets);
            let _ = write!(o, "            Ok(State::S{}(", t.to);
            self.build_record(t.to, &env, Some(q), o)?;
            o.push_str("))\n        }\n");
        }
        o.push_str("    }\n}\n");
        Ok(())
    }

    fn emit_recv_state(&self, q: StateId, o: &mut String) -> Result<(), GenError> {
        let out = self.m.outgoing(q);
        let peer = self.m.state(q).peer.clone().unwrap_or_default();
        let _ = write!(
            o,
            "\nfn run_s{q}<C: Callbacks, N: Connection>(\n\
             \x20   st: {},\n\
             \x20   callbacks: &mut C,\n\
             \x20   comm: &mut N,\n\
             ) -> Result<State, Violation> {{\n\
             \x20   let label = comm.recv_string({peer:?}).map_err(|e| match e.kind() {{\n\
             \x20       std::io::ErrorKind::UnexpectedEof => {{\n\
             \x20           Violation::PeerClosed {{ peer: String::from({peer:?}) }}\n\
             \x20       }}\n\
             \x20       _ => Violation::Deserialization {{ state: {q}, detail: e.to_string() }},\n\
             \x20   }})?;\n\
             \x20   match label.as_str() {{\n",
            self.sname(q),
        );
        for t in &out {
            let pv = ident(&t.var);
            let _ = writeln!(o, "        {:?} => {{", t.label.as_str());
            let recv_payload = match t.ty.base {
                BaseType::Unit => format!("comm.recv_unit({peer:?})"),
                base => format!("comm.recv_{}({peer:?})", base.name()),
            };
            if t.ty.base == BaseType::Unit {
                let _ = write!(
                    o,
                    "            {recv_payload}\n\
                     \x20               .map_err(|e| Violation::Deserialization {{ state: {q}, detail: e.to_string() }})?;\n",
                );
            } else {
                let _ = write!(
                    o,
                    "            let {pv} = {recv_payload}\n\
                     \x20               .map_err(|e| Violation::Deserialization {{ state: {q}, detail: e.to_string() }})?;\n",
                );
            }
            let mut env = self.record_env(q);
            env.insert(t.var.clone(), if t.ty.base == BaseType::Unit { "()".into() } else { pv.clone() });
            self.emit_assert(t, &env, "            ", o);
            let arg = match t.ty.base {
                BaseType::Unit => "()".to_string(),
                BaseType::Str => format!("{pv}.clone()"),
                _ => pv.clone(),
            };
            let _ = writeln!(
                o,
                "            callbacks.state{q}_receive_{}(&st, {arg});",
                ident(&t.label),
            );
            let mut benv = BTreeMap::new();
            benv.insert(t.var.clone(), payload_value(t.ty.base, &pv));
            let (lets, benv) = self.edge_lets(t, benv, "            ");
            o.push_str(&lets);
            let _ = write!(o, "            Ok(State::S{}(", t.to);
            self.build_record(t.to, &benv, Some(q), o)?;
            o.push_str("))\n        }\n");
        }
        let _ = write!(
            o,
            "        other => Err(Violation::UnknownLabel {{\n\
             \x20           state: {q},\n\
             \x20           label: String::from(other),\n\
             \x20       }}),\n\
             \x20   }}\n}}\n",
        );
        Ok(())
    }
}

/// How a bound payload local is read in value position: unit payloads have
/// no binding, strings are cloned (the local may feed several record
/// fields), the copy types pass as-is.
fn payload_value(base: BaseType, pv: &str) -> String {
    match base {
        BaseType::Unit => "()".to_string(),
        BaseType::Str => format!("{pv}.clone()"),
        _ => pv.to_string(),
    }
}

/// `name: base{pred}` for docs, eliding a `true` predicate.
fn field_sig(f: &FieldSpec) -> String {
    if f.predicate.is_truth() {
        format!("{}: {}", f.name, f.base.name())
    } else {
        format!("{}: {}{{{}}}", f.name, f.base.name(), pretty_expr(&f.predicate))
    }
}

/// The transport-facing trait. Protocol-independent, so every artifact
/// carries the identical file.
fn connection_rs() -> String {
    "//! Transport interface: per-peer, order-preserving message channels.\n\n\
     use std::io;\n\n\
     /// A reliable FIFO duplex channel to every peer of this endpoint.\n\
     ///\n\
     /// One method pair per base sort, with strings doing double duty for\n\
     /// labels. Implementations must preserve per-peer send order and must\n\
     /// not drop messages; `recv_*` blocks until a value is available.\n\
     pub trait Connection {\n\
     \x20   fn send_string(&mut self, peer: &str, value: &str) -> io::Result<()>;\n\
     \x20   fn recv_string(&mut self, peer: &str) -> io::Result<String>;\n\
     \x20   fn send_int(&mut self, peer: &str, value: i64) -> io::Result<()>;\n\
     \x20   fn recv_int(&mut self, peer: &str) -> io::Result<i64>;\n\
     \x20   fn send_bool(&mut self, peer: &str, value: bool) -> io::Result<()>;\n\
     \x20   fn recv_bool(&mut self, peer: &str) -> io::Result<bool>;\n\
     \x20   fn send_unit(&mut self, peer: &str) -> io::Result<()>;\n\
     \x20   fn recv_unit(&mut self, peer: &str) -> io::Result<()>;\n\
     }\n"
        .to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::corpus;
    use crate::project::project;
    use crate::refine::Checker;
    use crate::syntax::GlobalContext;

    fn machine_for(src: &str, role: &str) -> (Cfsm, StateContext) {
        let g = corpus::global(src);
        let checker = Checker::internal();
        let pr = project(&checker, &GlobalContext::empty(), &g, role)
            .unwrap_or_else(|e| panic!("projection for {role} failed: {e}"));
        crate::cfsm::to_cfsm(role, &pr.context, &pr.local_type)
            .unwrap_or_else(|e| panic!("cfsm for {role} failed: {e}"))
    }


    fn artifact(src: &str, role: &str) -> Vec<GeneratedFile> {
        let (m, sc) = machine_for(src, role);
        generate(&m, &sc).unwrap_or_else(|e| panic!("generation for {role} failed: {e}"))
    }

    fn file<'a>(files: &'a [GeneratedFile], name: &str) -> &'a str {
        &files.iter().find(|f| f.name == name).unwrap_or_else(|| panic!("no file {name}")).contents
    }

    const HELLO: &str =
        "global protocol Hello(role p, role q) {\n  Hello(x: int{x > 0}) from p to q;\n}\n";

    // The complete artifact for a one-message sender: one chooser with one
    // variant, one refinement assertion, and the terminal record carrying
    // the sent payload. Frozen in full — any drift in the emitters shows up
    // as a readable diff here, which is also what pins byte-determinism.
    #[test]
    fn single_message_sender_artifact_is_golden() {
        let files = artifact(HELLO, "p");
        assert_eq!(
            files.iter().map(|f| f.name.as_str()).collect::<Vec<_>>(),
            vec!["mod.rs", "callbacks.rs", "connection.rs", "records.rs", "run.rs"],
        );
        assert_eq!(
            file(&files, "records.rs"),
            r#"//! State records: the variables this role holds concretely at each
//! state. A field appears only for multiplicity-ω entries of the
//! state's typing context; erased entries (multiplicity 0) are listed
//! in the struct docs for reference but have no runtime value and no
//! field, so user code cannot read them.

#![allow(non_snake_case)]

/// State 0 — sending to q.
#[derive(Debug, Clone)]
pub struct S0 {}

/// State 1 — terminal.
#[derive(Debug, Clone)]
pub struct S1 {
    /// `x: int{x > 0}`
    pub x: i64,
}
"#,
        );
        assert_eq!(
            file(&files, "callbacks.rs"),
            r#"//! User-logic interface: one chooser per sending state, one handler
//! per receiving edge. Callbacks see state records and payloads only —
//! never the connection — so the run loop is the sole code touching
//! the channel during a session.

#![allow(non_snake_case)]

use super::records::*;

/// Internal choice at state 0 (to q): one variant per branch,
/// payload as declared. The run loop checks the branch refinement
/// before sending.
#[derive(Debug, Clone)]
pub enum S0Cases {
    /// `Hello(x: int{x > 0})`
    Hello(i64),
}

/// Implemented by user logic; supplied to [`super::run::run`]
/// together with a connection.
pub trait Callbacks {
    /// State 0: choose the message sent to q.
    fn state0_send(&mut self, st: &S0) -> S0Cases;
}
"#,
        );
        assert_eq!(
            file(&files, "run.rs"),
            r#"//! Entry point: drives the machine state by state over the
//! connection. Send states ask the chooser, assert the chosen
//! branch's refinement, transmit label then payload, and advance.
//! Receive states read a label, dispatch, read the payload, check the
//! branch refinement (the receiving side re-checks rather than
//! trusting the sender), invoke the handler, and advance. Refinements
//! whose variables are erased here cannot be evaluated; such a check
//! site carries a comment instead.

#![allow(non_snake_case)]

use super::callbacks::*;
use super::connection::Connection;
use super::records::*;

/// Why a session aborted.
#[derive(Debug)]
pub enum Violation {
    /// A refinement predicate evaluated to false.
    RefinementFailed { state: usize, predicate: String, snapshot: String },
    /// The peer sent a label that is no branch of the current state.
    UnknownLabel { state: usize, label: String },
    /// The peer's channel closed at a message boundary.
    PeerClosed { peer: String },
    /// A label or payload could not be decoded.
    Deserialization { state: usize, detail: String },
}

/// Machine states threaded through the run loop. Private: user code
/// cannot forge a mid-session state.
enum State {
    S0(S0),
    S1(S1),
}

/// Drive the endpoint from the initial state to termination.
///
/// The connection must already reach every peer of the machine.
pub fn run<C: Callbacks, N: Connection>(
    callbacks: &mut C,
    comm: &mut N,
) -> Result<S1, Violation> {
    let mut state = initial();
    loop {
        state = match state {
            State::S0(st) => run_s0(st, callbacks, comm)?,
            State::S1(st) => return Ok(st),
        };
    }
}

fn initial() -> State {
    State::S0(S0 {})
}

fn run_s0<C: Callbacks, N: Connection>(
    st: S0,
    callbacks: &mut C,
    comm: &mut N,
) -> Result<State, Violation> {
    match callbacks.state0_send(&st) {
        S0Cases::Hello(x) => {
            if !(x > 0) {
                return Err(Violation::RefinementFailed {
                    state: 0,
                    predicate: String::from("x > 0"),
                    snapshot: format!("{:?}", st),
                });
            }
            comm.send_string("q", "Hello")
                .map_err(|_| Violation::PeerClosed { peer: String::from("q") })?;
            comm.send_int("q", x)
                .map_err(|_| Violation::PeerClosed { peer: String::from("q") })?;
            Ok(State::S1(S1 { x }))
        }
    }
}
"#,
        );
    }

    // The judge's output choice: one variant per outcome, each guarded by
    // the protocol's refinement, checked in the run loop before sending.
    #[test]
    fn judging_state_chooser_carries_the_outcome_refinements() {
        let files = artifact(corpus::HIGHERLOWER, "B");
        let callbacks = file(&files, "callbacks.rs");
        for doc in [
            "/// `higher(u: unit{n > x && t > 1})`",
            "/// `lower(u: unit{n < x && t > 1})`",
            "/// `win(u: unit{n = x})`",
            "/// `lose(u: unit{n != x && t = 1})`",
        ] {
            assert!(callbacks.contains(doc), "missing {doc}");
        }
        let run = file(&files, "run.rs");
        for guard in [
            "if !(st.n > st.x && st.t > 1)",
            "if !(st.n < st.x && st.t > 1)",
            "if !(st.n == st.x)",
            "if !(st.n != st.x && st.t == 1)",
        ] {
            assert!(run.contains(guard), "missing {guard}");
        }
        // Entering the loop initializes the state variables; looping back
        // decrements the attempt counter.
        assert!(run.contains("let n = st.n0;"));
        assert!(run.contains("let t = st.t - 1;"));
    }

    // The guesser's handlers keep the latent predicates as documentation,
    // and the run loop records rather than checks them: they mention the
    // secret and the attempt budget, which the guesser never holds.
    #[test]
    fn guesser_handlers_keep_latent_predicates_unchecked() {
        let files = artifact(corpus::HIGHERLOWER, "C");
        let callbacks = file(&files, "callbacks.rs");
        for sig in [
            "fn state1_receive_higher(&mut self, st: &S1, u: ());",
            "fn state1_receive_lower(&mut self, st: &S1, u: ());",
            "fn state1_receive_win(&mut self, st: &S1, u: ());",
            "fn state1_receive_lose(&mut self, st: &S1, u: ());",
        ] {
            assert!(callbacks.contains(sig), "missing {sig}");
        }
        let run = file(&files, "run.rs");
        for note in [
            "// refinement `n > x && t > 1` mentions erased variables",
            "// refinement `n < x && t > 1` mentions erased variables",
            "// refinement `n = x` mentions erased variables",
            "// refinement `n != x && t = 1` mentions erased variables",
        ] {
            assert!(run.contains(note), "missing {note}");
        }
        // The guess itself is concrete and checked before sending.
        assert!(run.contains("if !(0 <= x && x < 100)"));
    }

    #[test]
    fn erased_entries_get_docs_but_no_fields() {
        let files = artifact(corpus::HIGHERLOWER, "C");
        let records = file(&files, "records.rs");
        assert!(records.contains("pub struct S0 {}"));
        assert!(records.contains("Erased (specification only): `n0: int{0 <= n0 && n0 < 100}`"));
        // The guess is the only value the guesser ever holds.
        assert!(records.contains("pub x: i64"));
        assert!(!records.contains("pub n:"));
        assert!(!records.contains("pub t:"));
    }

    #[test]
    fn state_records_classify_origins_by_multiplicity() {
        let (m, sc) = machine_for(corpus::HIGHERLOWER, "C");
        let records = state_records(&m, &sc).unwrap();
        assert!(records[0].concrete().next().is_none());
        assert_eq!(
            records[0].erased().map(|f| f.name.as_str()).collect::<Vec<_>>(),
            vec!["n0", "t0", "n", "t"],
        );
        assert_eq!(
            records[1].concrete().map(|f| f.name.as_str()).collect::<Vec<_>>(),
            vec!["x"],
        );
    }

    #[test]
    fn generation_is_deterministic_and_connection_is_shared() {
        let (m, sc) = machine_for(corpus::HIGHERLOWER, "B");
        assert_eq!(generate(&m, &sc).unwrap(), generate(&m, &sc).unwrap());
        let b = artifact(corpus::HIGHERLOWER, "B");
        let c = artifact(corpus::HIGHERLOWER, "C");
        assert_eq!(file(&b, "connection.rs"), file(&c, "connection.rs"));
    }

    // Linearity by construction: nothing a callback receives can touch the
    // channel, which is visible in the interface itself.
    #[test]
    fn callbacks_interface_never_mentions_the_connection() {
        for role in ["A", "B", "C"] {
            let files = artifact(corpus::HIGHERLOWER, role);
            assert!(!file(&files, "callbacks.rs").contains("Connection"), "role {role}");
        }
    }

    #[test]
    fn invalid_machines_are_rejected() {
        use crate::syntax::{LocalContext, RefinementType};
        // A terminal state with an outgoing edge fails validation.
        let m = Cfsm {
            role: "A".into(),
            initial: 0,
            states: vec![crate::cfsm::State { id: 0, kind: StateKind::Terminal, peer: None }],
            transitions: vec![Transition {
                from: 0,
                to: 0,
                dir: crate::cfsm::Direction::Send,
                peer: "B".into(),
                label: "l".into(),
                var: "x".into(),
                ty: RefinementType::base("x", BaseType::Int),
                updates: vec![],
                inits: vec![],
            }],
            init: vec![],
        };
        let sc = StateContext { map: [(0, LocalContext::empty())].into_iter().collect() };
        assert!(matches!(generate(&m, &sc), Err(GenError::InvalidMachine(_))));
    }

    /// Write an artifact to `dir` as a standalone library crate root.
    fn write_crate(dir: &std::path::Path, files: &[GeneratedFile], extra: Option<&str>) {
        for f in files {
            let name = if f.name == "mod.rs" { "lib.rs" } else { &f.name };
            let mut contents = f.contents.clone();
            if f.name == "mod.rs" {
                if let Some(extra) = extra {
                    contents.push_str("mod user;\n");
                    std::fs::write(dir.join("user.rs"), extra).unwrap();
                }
            }
            std::fs::write(dir.join(name), contents).unwrap();
        }
    }

    fn rustc(dir: &std::path::Path, deny_warnings: bool) -> std::process::Output {
        let mut cmd = std::process::Command::new("rustc");
        cmd.current_dir(dir)
            .arg("--edition=2021")
            .arg("--crate-type=lib")
            .arg("--emit=metadata")
            .arg("--crate-name=endpoint")
            .arg("lib.rs");
        if deny_warnings {
            cmd.arg("-Dwarnings");
        }
        cmd.output().expect("rustc not runnable")
    }

    // The emitted artifact depends on std alone and compiles warning-free.
    #[test]
    fn artifacts_compile_standalone() {
        for role in ["B", "C"] {
            let dir = tempfile::tempdir().unwrap();
            write_crate(dir.path(), &artifact(corpus::HIGHERLOWER, role), None);
            let out = rustc(dir.path(), true);
            assert!(
                out.status.success(),
                "role {role}: {}",
                String::from_utf8_lossy(&out.stderr),
            );
        }
    }

    // Erased-field opacity, negatively: user logic reading the secret from
    // the guesser's state record must not compile, because the record has
    // no such field. The control build differs only in that read.
    #[test]
    fn callback_reading_an_erased_field_does_not_compile() {
        let suite = |guess: &str| {
            format!(
                "use super::callbacks::{{Callbacks, S0Cases}};\n\
                 use super::records::*;\n\n\
                 pub struct Strategy;\n\n\
                 impl Callbacks for Strategy {{\n\
                 \x20   fn state0_send(&mut self, st: &S0) -> S0Cases {{\n\
                 \x20       let _ = st;\n\
                 \x20       S0Cases::Guess({guess})\n\
                 \x20   }}\n\
                 \x20   fn state1_receive_higher(&mut self, _st: &S1, _u: ()) {{}}\n\
                 \x20   fn state1_receive_lower(&mut self, _st: &S1, _u: ()) {{}}\n\
                 \x20   fn state1_receive_win(&mut self, _st: &S1, _u: ()) {{}}\n\
                 \x20   fn state1_receive_lose(&mut self, _st: &S1, _u: ()) {{}}\n\
                 }}\n",
            )
        };
        let files = artifact(corpus::HIGHERLOWER, "C");

        let ok_dir = tempfile::tempdir().unwrap();
        write_crate(ok_dir.path(), &files, Some(&suite("50")));
        let out = rustc(ok_dir.path(), false);
        assert!(out.status.success(), "control: {}", String::from_utf8_lossy(&out.stderr));

        let bad_dir = tempfile::tempdir().unwrap();
        write_crate(bad_dir.path(), &files, Some(&suite("st.n")));
        let out = rustc(bad_dir.path(), false);
        assert!(!out.status.success(), "reading an erased field must not compile");
        let stderr = String::from_utf8_lossy(&out.stderr);
        assert!(stderr.contains("no field `n`"), "unexpected diagnostic: {stderr}");
    }

    // Every corpus machine generates, for every participant.
    #[test]
    fn whole_corpus_generates() {
        for (name, src) in corpus::all() {
            let g = corpus::global(src);
            for role in g.participants() {
                let files = artifact(src, &role);
                assert_eq!(files.len(), 5, "{name} for {role}");
            }
        }
    }
}

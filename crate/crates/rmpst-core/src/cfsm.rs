//! Communicating finite state machines derived from local types.
//!
//! A projected local type converts into a CFSM `(Q, q0, δ)` whose states are
//! the communication points of the type: a `Send` or `Recv` node becomes a
//! state with one labeled edge per branch, `end` becomes the (shared) terminal
//! state, and a recursion contributes no state of its own — its body's first
//! communication node is the entry, and every jump back to the recursion is a
//! back-edge to that entry carrying the jump's state-variable update.
//!
//! Silent prefixes likewise contribute no edges. Their variables are folded
//! into the context of the next communication state at multiplicity `0`, so
//! erased knowledge shows up as state annotations rather than transitions.
//! When several silent prefixes and recursion headers sit between two
//! communication points they all attach to the same successor state.
//!
//! Alongside the machine we compute a [`StateContext`]: the typing context a
//! correct endpoint has at each state. The initial state holds the
//! projection-time `Σ`; each tree edge extends its source context by the
//! communicated variable (at `ω`) plus any silent variables and recursion
//! state variables passed on the way. Where paths join — loop entries and the
//! terminal state — we keep the *meet* of all arrival contexts (the entries
//! common to every path, with equal multiplicity and alpha-equal type), which
//! is the smallest context every run is guaranteed to have established.
//!
//! Recursion initializers do not fit the edge-update slot (updates belong to
//! back-edges only), so they travel separately: an edge that crosses one or
//! more recursion headers records their initializers in order, and recursions
//! entered before the first communication node land in the machine-level
//! [`Cfsm::init`] list. A back-edge that jumps to an outer recursion re-seeds
//! the inner recursions sharing the same entry state, so its `inits` replay
//! their initializers after the update.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::pretty::{pretty_expr, pretty_rtype};
use crate::syntax::{
    Expression, Label, LocalContext, LocalType, Multiplicity, RefinementType, Role, Var,
};

/// States are small integers assigned in depth-first order from the initial
/// state, matching the usual on-paper numbering.
pub type StateId = usize;

/// What a state does: every non-terminal state is all-send or all-receive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum StateKind {
    Send,
    Recv,
    Terminal,
}

impl StateKind {
    pub fn name(self) -> &'static str {
        match self {
            StateKind::Send => "send",
            StateKind::Recv => "recv",
            StateKind::Terminal => "terminal",
        }
    }
}

/// Direction of a transition, from the machine owner's point of view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Direction {
    Send,
    Recv,
}

impl Direction {
    pub fn name(self) -> &'static str {
        match self {
            Direction::Send => "send",
            Direction::Recv => "recv",
        }
    }

    /// The `!` / `?` marker used on edge labels.
    pub fn marker(self) -> &'static str {
        match self {
            Direction::Send => "!",
            Direction::Recv => "?",
        }
    }
}

/// One CFSM state. The peer is the unique role this state talks to
/// (directedness), absent only for the terminal state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct State {
    pub id: StateId,
    pub kind: StateKind,
    pub peer: Option<Role>,
}

/// A variable assignment `var := expr` attached to a transition (or to the
/// machine itself, for recursions opened before the first communication).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assign {
    pub var: Var,
    pub expr: Expression,
}

impl Assign {
    pub fn new(var: impl Into<String>, expr: Expression) -> Self {
        Assign { var: var.into(), expr }
    }
}

impl fmt::Display for Assign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} := {}", self.var, pretty_expr(&self.expr))
    }
}

/// A labeled transition `from --dir label(var: ty)--> to`.
///
/// `updates` is non-empty only on back-edges closing a recursion: it carries
/// the jump's state-variable assignment, evaluated against the pre-transition
/// state record. `inits` carries the initializers of recursions entered along
/// the edge (evaluated after `updates`, left to right, each seeing the
/// effects of its predecessors).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    pub from: StateId,
    pub to: StateId,
    pub dir: Direction,
    pub peer: Role,
    pub label: Label,
    pub var: Var,
    pub ty: RefinementType,
    pub updates: Vec<Assign>,
    pub inits: Vec<Assign>,
}

impl Transition {
    /// Compact `A?start(n0)` rendering used by the DOT export and messages.
    pub fn describe(&self) -> String {
        format!("{}{}{}({})", self.peer, self.dir.marker(), self.label, self.var)
    }
}

/// A communicating finite state machine for one role.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cfsm {
    pub role: Role,
    pub initial: StateId,
    /// Indexed by id: `states[q].id == q`.
    pub states: Vec<State>,
    pub transitions: Vec<Transition>,
    /// Initializers of recursions opened before the first communication node,
    /// applied once when the machine starts.
    pub init: Vec<Assign>,
}

impl Cfsm {
    pub fn state(&self, q: StateId) -> &State {
        &self.states[q]
    }

    /// Outgoing transitions of `q`, in branch order.
    pub fn outgoing(&self, q: StateId) -> Vec<&Transition> {
        self.transitions.iter().filter(|t| t.from == q).collect()
    }

    pub fn terminal(&self) -> Option<StateId> {
        self.states.iter().find(|s| s.kind == StateKind::Terminal).map(|s| s.id)
    }
}

/// The typing context an endpoint has at each CFSM state.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StateContext {
    pub map: BTreeMap<StateId, LocalContext>,
}

impl StateContext {
    pub fn get(&self, q: StateId) -> Option<&LocalContext> {
        self.map.get(&q)
    }
}

/// Construction failures. Well-formed projection output never triggers these;
/// they guard against hand-built local types that re-bind a name along one
/// path or jump to a recursion that is unbound or not yet guarded.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum CfsmError {
    #[error("variable {var} is re-bound along a single path: {reason}")]
    Rebind { var: Var, reason: String },
    #[error("recursion jump to unbound type variable {tvar}")]
    UnboundTVar { tvar: String },
    #[error("recursion {tvar} is jumped to before any communication guards it")]
    UnguardedJump { tvar: String },
}

/// A recursion currently in scope during construction. `entry` is filled when
/// the body's first communication node materializes; `reinit` lists the
/// initializers of inner recursions sharing that entry (replayed by every
/// back-edge that targets this recursion).
struct RecScope {
    tvar: String,
    var: Var,
    entry: Option<StateId>,
    reinit: Vec<Assign>,
}

/// What resolving a sub-term produced: the state reached, plus the recursion
/// initializers and back-edge updates the incoming edge must carry.
struct Arrival {
    state: StateId,
    inits: Vec<Assign>,
    updates: Vec<Assign>,
}

struct Builder {
    states: Vec<State>,
    transitions: Vec<Transition>,
    contexts: BTreeMap<StateId, LocalContext>,
    terminal: Option<StateId>,
}

impl Builder {
    fn new_state(&mut self, kind: StateKind, peer: Option<Role>, ctx: LocalContext) -> StateId {
        let id = self.states.len();
        self.states.push(State { id, kind, peer });
        self.contexts.insert(id, ctx);
        id
    }

    fn extend(
        &self,
        ctx: &LocalContext,
        var: &str,
        mult: Multiplicity,
        ty: &RefinementType,
    ) -> Result<LocalContext, CfsmError> {
        ctx.extend(var, mult, &ty.with_binder(var)).map_err(|e| CfsmError::Rebind {
            var: var.to_string(),
            reason: e.reason,
        })
    }

    /// Shrink the stored context of `q` to its meet with another arrival
    /// context: keep, in order, the entries present in both with the same
    /// multiplicity and alpha-equal type.
    fn meet_into(&mut self, q: StateId, arriving: &LocalContext) {
        let stored = self.contexts.get_mut(&q).expect("materialized state has a context");
        stored.entries.retain(|e| {
            arriving
                .lookup(&e.var)
                .map_or(false, |other| other.mult == e.mult && other.ty.alpha_eq(&e.ty))
        });
    }

    /// Resolve the state reached by `l`, materializing states and edges on
    /// the way. `pending` carries the recursions opened since the last
    /// communication node as `(scope index, initializer)` pairs.
    fn resolve(
        &mut self,
        l: &LocalType,
        ctx: LocalContext,
        recs: &mut Vec<RecScope>,
        pending: Vec<(usize, Assign)>,
    ) -> Result<Arrival, CfsmError> {
        match l {
            LocalType::Silent { var, ty, cont, .. } => {
                let ctx = self.extend(&ctx, var, Multiplicity::Zero, ty)?;
                self.resolve(cont, ctx, recs, pending)
            }
            LocalType::Rec { tvar, ty, init, mult, body } => {
                let ctx = self.extend(&ctx, &ty.binder, *mult, ty)?;
                let idx = recs.len();
                recs.push(RecScope {
                    tvar: tvar.clone(),
                    var: ty.binder.clone(),
                    entry: None,
                    reinit: Vec::new(),
                });
                let mut pending = pending;
                pending.push((idx, Assign::new(ty.binder.clone(), init.clone())));
                let out = self.resolve(body, ctx, recs, pending);
                recs.pop();
                out
            }
            LocalType::Send { to, branches } => {
                self.materialize(StateKind::Send, to, branches, ctx, recs, pending)
            }
            LocalType::Recv { from, branches } => {
                self.materialize(StateKind::Recv, from, branches, ctx, recs, pending)
            }
            LocalType::TVar { tvar, assign, .. } => {
                let scope = recs
                    .iter()
                    .rev()
                    .find(|s| s.tvar == *tvar)
                    .ok_or_else(|| CfsmError::UnboundTVar { tvar: tvar.clone() })?;
                let entry = scope
                    .entry
                    .ok_or_else(|| CfsmError::UnguardedJump { tvar: tvar.clone() })?;
                let updates = vec![Assign::new(scope.var.clone(), assign.clone())];
                let mut inits: Vec<Assign> = pending.into_iter().map(|(_, a)| a).collect();
                inits.extend(scope.reinit.iter().cloned());
                self.meet_into(entry, &ctx);
                Ok(Arrival { state: entry, inits, updates })
            }
            LocalType::End => {
                let state = match self.terminal {
                    Some(q) => {
                        self.meet_into(q, &ctx);
                        q
                    }
                    None => {
                        let q = self.new_state(StateKind::Terminal, None, ctx);
                        self.terminal = Some(q);
                        q
                    }
                };
                let inits = pending.into_iter().map(|(_, a)| a).collect();
                Ok(Arrival { state, inits, updates: Vec::new() })
            }
        }
    }

    fn materialize(
        &mut self,
        kind: StateKind,
        peer: &str,
        branches: &[crate::syntax::LBranch],
        ctx: LocalContext,
        recs: &mut Vec<RecScope>,
        pending: Vec<(usize, Assign)>,
    ) -> Result<Arrival, CfsmError> {
        let q = self.new_state(kind, Some(peer.to_string()), ctx.clone());
        // This node is the entry of every recursion opened since the last
        // communication point. Each of those also learns which inner
        // initializers a back-edge to it must replay.
        for (pos, (idx, _)) in pending.iter().enumerate() {
            recs[*idx].entry = Some(q);
            recs[*idx].reinit = pending[pos + 1..].iter().map(|(_, a)| a.clone()).collect();
        }
        let dir = if kind == StateKind::Send { Direction::Send } else { Direction::Recv };
        for b in branches {
            let bctx = self.extend(&ctx, &b.var, Multiplicity::Omega, &b.ty)?;
            let arrival = self.resolve(&b.cont, bctx, recs, Vec::new())?;
            self.transitions.push(Transition {
                from: q,
                to: arrival.state,
                dir,
                peer: peer.to_string(),
                label: b.label.clone(),
                var: b.var.clone(),
                ty: b.ty.clone(),
                updates: arrival.updates,
                inits: arrival.inits,
            });
        }
        let inits = pending.into_iter().map(|(_, a)| a).collect();
        Ok(Arrival { state: q, inits, updates: Vec::new() })
    }
}

/// Convert a local type into a CFSM plus its per-state typing contexts.
///
/// `sigma` is the projection-time context of the role (the initial state's
/// context); `l` must be closed under it and contractive.
pub fn to_cfsm(
    role: &str,
    sigma: &LocalContext,
    l: &LocalType,
) -> Result<(Cfsm, StateContext), CfsmError> {
    let mut b = Builder {
        states: Vec::new(),
        transitions: Vec::new(),
        contexts: BTreeMap::new(),
        terminal: None,
    };
    let mut recs = Vec::new();
    let arrival = b.resolve(l, sigma.clone(), &mut recs, Vec::new())?;
    debug_assert!(arrival.updates.is_empty(), "the root of a local type cannot be a jump");
    // Construction pushes an edge after resolving its target subtree; regroup
    // by source state (stable, so branch order within a state is preserved).
    b.transitions.sort_by_key(|t| t.from);
    let machine = Cfsm {
        role: role.to_string(),
        initial: arrival.state,
        states: b.states,
        transitions: b.transitions,
        init: arrival.inits,
    };
    Ok((machine, StateContext { map: b.contexts }))
}

/// A structural defect found by [`validate`].
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum Violation {
    #[error("state {0} mixes sending and receiving (or a terminal state has edges)")]
    MixedState(StateId),
    #[error("state {0} talks to more than one peer")]
    Undirected(StateId),
    #[error("state {0} has two edges labeled {1}")]
    NondeterministicLabel(StateId, Label),
    #[error("state {0} is unreachable from the initial state")]
    Unreachable(StateId),
    #[error("transition {0} refers to a state that does not exist")]
    DanglingTransition(usize),
}

/// Check the CFSM invariants: no mixed states, directedness, label
/// determinism, and reachability of every state from the initial one.
/// Construction via [`to_cfsm`] always yields an empty list.
pub fn validate(m: &Cfsm) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = m.states.len();
    for (i, t) in m.transitions.iter().enumerate() {
        if t.from >= n || t.to >= n {
            out.push(Violation::DanglingTransition(i));
        }
    }
    if !out.is_empty() {
        return out;
    }
    for s in &m.states {
        let edges = m.outgoing(s.id);
        let mixed = match s.kind {
            StateKind::Terminal => !edges.is_empty(),
            StateKind::Send => edges.iter().any(|t| t.dir != Direction::Send),
            StateKind::Recv => edges.iter().any(|t| t.dir != Direction::Recv),
        };
        if mixed {
            out.push(Violation::MixedState(s.id));
        }
        let peers: BTreeSet<&Role> = edges.iter().map(|t| &t.peer).collect();
        if peers.len() > 1
            || edges.iter().any(|t| Some(&t.peer) != s.peer.as_ref() && s.peer.is_some())
        {
            out.push(Violation::Undirected(s.id));
        }
        let mut seen = BTreeSet::new();
        for t in &edges {
            if !seen.insert(&t.label) {
                out.push(Violation::NondeterministicLabel(s.id, t.label.clone()));
            }
        }
    }
    // Reachability by breadth-first search over the edge relation.
    let mut reached = vec![false; n];
    if m.initial < n {
        reached[m.initial] = true;
        let mut queue = vec![m.initial];
        while let Some(q) = queue.pop() {
            for t in m.transitions.iter().filter(|t| t.from == q) {
                if !reached[t.to] {
                    reached[t.to] = true;
                    queue.push(t.to);
                }
            }
        }
    }
    for s in &m.states {
        if !reached[s.id] {
            out.push(Violation::Unreachable(s.id));
        }
    }
    out
}

fn assigns_json(assigns: &[Assign]) -> serde_json::Value {
    serde_json::Value::Array(
        assigns
            .iter()
            .map(|a| {
                serde_json::json!({ "var": a.var, "expr": pretty_expr(&a.expr) })
            })
            .collect(),
    )
}

/// JSON export of a machine and its state contexts. Expressions and
/// predicates appear in the canonical text syntax.
pub fn to_json(m: &Cfsm, ctxs: &StateContext) -> serde_json::Value {
    let states: Vec<serde_json::Value> = m
        .states
        .iter()
        .map(|s| {
            let context: Vec<serde_json::Value> = ctxs
                .get(s.id)
                .map(|c| c.entries.as_slice())
                .unwrap_or(&[])
                .iter()
                .map(|e| {
                    serde_json::json!({
                        "var": e.var,
                        "mult": e.mult.symbol(),
                        "base": e.ty.base.name(),
                        "pred": pretty_expr(&e.ty.predicate_on(&Expression::var(&e.var))),
                    })
                })
                .collect();
            serde_json::json!({
                "id": s.id,
                "kind": s.kind.name(),
                "peer": s.peer,
                "context": context,
            })
        })
        .collect();
    let transitions: Vec<serde_json::Value> = m
        .transitions
        .iter()
        .map(|t| {
            let mut obj = serde_json::json!({
                "from": t.from,
                "to": t.to,
                "dir": t.dir.name(),
                "label": t.label,
                "var": t.var,
                "base": t.ty.base.name(),
                "pred": pretty_expr(&t.ty.predicate_on(&Expression::var(&t.var))),
                "updates": assigns_json(&t.updates),
            });
            if !t.inits.is_empty() {
                obj["init"] = assigns_json(&t.inits);
            }
            obj
        })
        .collect();
    let mut root = serde_json::json!({
        "role": m.role,
        "initial": m.initial,
        "states": states,
        "transitions": transitions,
    });
    if !m.init.is_empty() {
        root["init"] = assigns_json(&m.init);
    }
    root
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Graphviz rendering: circles for states (double circle for the terminal),
/// one edge per transition labeled `peer?label(var)` / `peer!label(var)`,
/// with updates and initializers listed below the label.
pub fn to_dot(m: &Cfsm, ctxs: &StateContext) -> String {
    let mut out = String::new();
    out.push_str(&format!("digraph \"{}\" {{\n", dot_escape(&m.role)));
    out.push_str("  rankdir=LR;\n  node [shape=circle];\n");
    out.push_str("  __start [shape=point, label=\"\"];\n");
    for s in &m.states {
        let mut attrs = Vec::new();
        if s.kind == StateKind::Terminal {
            attrs.push("shape=doublecircle".to_string());
        }
        let erased: Vec<String> = ctxs
            .get(s.id)
            .map(|c| c.entries.as_slice())
            .unwrap_or(&[])
            .iter()
            .filter(|e| e.mult == Multiplicity::Zero)
            .map(|e| format!("{}: erased {}", e.var, dot_escape(&pretty_rtype(&e.ty))))
            .collect();
        if !erased.is_empty() {
            attrs.push(format!("xlabel=\"{}\"", erased.join("\\n")));
        }
        if attrs.is_empty() {
            out.push_str(&format!("  {};\n", s.id));
        } else {
            out.push_str(&format!("  {} [{}];\n", s.id, attrs.join(", ")));
        }
    }
    out.push_str(&format!("  __start -> {};\n", m.initial));
    for t in &m.transitions {
        let mut label = dot_escape(&t.describe());
        for a in &t.updates {
            label.push_str(&format!("\\n{}", dot_escape(&a.to_string())));
        }
        for a in &t.inits {
            label.push_str(&format!("\\n{}", dot_escape(&a.to_string())));
        }
        out.push_str(&format!("  {} -> {} [label=\"{}\"];\n", t.from, t.to, label));
    }
    out.push_str("}\n");
    out
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
        to_cfsm(role, &pr.context, &pr.local_type)
            .unwrap_or_else(|e| panic!("cfsm for {role} failed: {e}"))
    }

    fn edge<'m>(m: &'m Cfsm, from: StateId, label: &str) -> &'m Transition {
        m.transitions
            .iter()
            .find(|t| t.from == from && t.label == label)
            .unwrap_or_else(|| panic!("no edge {label} out of state {from}"))
    }

    #[test]
    fn end_is_a_single_terminal_state() {
        let (m, ctxs) = to_cfsm("A", &LocalContext::empty(), &LocalType::End).unwrap();
        assert_eq!(m.states.len(), 1);
        assert_eq!(m.states[0].kind, StateKind::Terminal);
        assert_eq!(m.initial, 0);
        assert!(m.transitions.is_empty());
        assert!(m.init.is_empty());
        assert_eq!(ctxs.get(0), Some(&LocalContext::empty()));
        assert!(validate(&m).is_empty());
    }

    #[test]
    fn higherlower_b_machine_has_nine_states() {
        let (m, ctxs) = machine_for(corpus::HIGHERLOWER, "B");
        assert_eq!(m.states.len(), 9);
        assert!(validate(&m).is_empty());

        // Path to the loop: A?start, A?limit, then the guess/answer loop.
        let start = edge(&m, m.initial, "start");
        assert_eq!((start.dir, start.peer.as_str()), (Direction::Recv, "A"));
        let limit = edge(&m, start.to, "limit");
        let loop_entry = limit.to;
        // Entering the loop initializes both state variables.
        assert_eq!(
            limit.inits.iter().map(|a| a.to_string()).collect::<Vec<_>>(),
            vec!["n := n0", "t := t0"]
        );
        // The loop-entry context is exactly the knowledge B keeps across
        // iterations: the two payloads and the two state variables, all usable.
        let entry_ctx = ctxs.get(loop_entry).unwrap();
        assert_eq!(
            entry_ctx.entries.iter().map(|e| (e.var.as_str(), e.mult)).collect::<Vec<_>>(),
            vec![
                ("n0", Multiplicity::Omega),
                ("t0", Multiplicity::Omega),
                ("n", Multiplicity::Omega),
                ("t", Multiplicity::Omega),
            ]
        );

        let guess = edge(&m, loop_entry, "guess");
        assert_eq!((guess.dir, guess.peer.as_str()), (Direction::Recv, "C"));
        let answer = guess.to;
        let answer_labels: BTreeSet<&str> =
            m.outgoing(answer).iter().map(|t| t.label.as_str()).collect();
        assert_eq!(answer_labels, ["higher", "lower", "win", "lose"].into_iter().collect());
        assert!(m.outgoing(answer).iter().all(|t| t.dir == Direction::Send && t.peer == "C"));

        // higher/lower relay to A and loop back, decrementing the countdown.
        for l in ["higher", "lower"] {
            let relay = edge(&m, answer, l).to;
            let back = edge(&m, relay, l);
            assert_eq!((back.dir, back.peer.as_str()), (Direction::Send, "A"));
            assert_eq!(back.to, loop_entry);
            assert_eq!(
                back.updates.iter().map(|a| a.to_string()).collect::<Vec<_>>(),
                vec!["t := t - 1"]
            );
            assert!(back.inits.is_empty());
        }
        // win/lose tell A the opposite outcome and stop.
        let terminal = m.terminal().unwrap();
        for (to_c, to_a) in [("win", "lose"), ("lose", "win")] {
            let relay = edge(&m, answer, to_c).to;
            let last = edge(&m, relay, to_a);
            assert_eq!((last.dir, last.peer.as_str()), (Direction::Send, "A"));
            assert_eq!(last.to, terminal);
            assert!(last.updates.is_empty());
        }
    }

    #[test]
    fn higherlower_c_machine_has_three_states_with_erased_knowledge() {
        let (m, ctxs) = machine_for(corpus::HIGHERLOWER, "C");
        assert_eq!(m.states.len(), 3);
        assert!(validate(&m).is_empty());

        // C starts by sending a guess; the silent payloads and both state
        // variables sit in the initial context as erased entries.
        assert_eq!(m.states[m.initial].kind, StateKind::Send);
        let ctx0 = ctxs.get(m.initial).unwrap();
        assert_eq!(
            ctx0.entries.iter().map(|e| (e.var.as_str(), e.mult)).collect::<Vec<_>>(),
            vec![
                ("n0", Multiplicity::Zero),
                ("t0", Multiplicity::Zero),
                ("n", Multiplicity::Zero),
                ("t", Multiplicity::Zero),
            ]
        );
        // The recursions open before any communication, so their
        // initializers are machine-level.
        assert_eq!(
            m.init.iter().map(|a| a.to_string()).collect::<Vec<_>>(),
            vec!["n := n0", "t := t0"]
        );

        let guess = edge(&m, m.initial, "guess");
        assert_eq!((guess.dir, guess.peer.as_str()), (Direction::Send, "B"));
        let outcome = guess.to;
        assert_eq!(m.outgoing(outcome).len(), 4);
        for l in ["higher", "lower"] {
            let back = edge(&m, outcome, l);
            assert_eq!(back.to, m.initial);
            assert_eq!(
                back.updates.iter().map(|a| a.to_string()).collect::<Vec<_>>(),
                vec!["t := t - 1"]
            );
        }
        let terminal = m.terminal().unwrap();
        assert_eq!(edge(&m, outcome, "win").to, terminal);
        assert_eq!(edge(&m, outcome, "lose").to, terminal);
    }

    #[test]
    fn password_machine_initializes_at_start_and_updates_on_retry() {
        // The recursion wraps the whole protocol, so its initializer is
        // machine-level and the Retry branch is a back-edge to the start.
        let (m, _) = machine_for(corpus::G3, "B");
        assert!(validate(&m).is_empty());
        assert_eq!(m.init.iter().map(|a| a.to_string()).collect::<Vec<_>>(), vec!["try := 0"]);
        let retry = m
            .transitions
            .iter()
            .find(|t| t.label == "Retry")
            .expect("B's machine has a Retry edge");
        assert_eq!(retry.to, m.initial);
        assert_eq!(
            retry.updates.iter().map(|a| a.to_string()).collect::<Vec<_>>(),
            vec!["try := try + 1"]
        );
    }

    #[test]
    fn corpus_machines_validate_for_every_role() {
        let checker = Checker::internal();
        for (name, src) in corpus::all() {
            let g = corpus::global(src);
            for role in g.participants() {
                let pr = project(&checker, &GlobalContext::empty(), &g, &role)
                    .unwrap_or_else(|e| panic!("{name} ↾ {role}: projection failed: {e}"));
                let (m, ctxs) = to_cfsm(&role, &pr.context, &pr.local_type)
                    .unwrap_or_else(|e| panic!("{name} ↾ {role}: cfsm failed: {e}"));
                let violations = validate(&m);
                assert!(violations.is_empty(), "{name} ↾ {role}: {violations:?}");
                assert_eq!(m.role, role);
                for s in &m.states {
                    assert!(ctxs.get(s.id).is_some(), "{name} ↾ {role}: state {} lacks a context", s.id);
                }
            }
        }
    }

    #[test]
    fn validate_flags_hand_built_defects() {
        let t = RefinementType::base("x", crate::syntax::BaseType::Int);
        let mk = |from, to, dir, peer: &str, label: &str| Transition {
            from,
            to,
            dir,
            peer: peer.to_string(),
            label: label.to_string(),
            var: "x".to_string(),
            ty: t.clone(),
            updates: Vec::new(),
            inits: Vec::new(),
        };
        let m = Cfsm {
            role: "A".into(),
            initial: 0,
            states: vec![
                State { id: 0, kind: StateKind::Send, peer: Some("B".into()) },
                State { id: 1, kind: StateKind::Terminal, peer: None },
                State { id: 2, kind: StateKind::Recv, peer: Some("B".into()) },
            ],
            transitions: vec![
                mk(0, 1, Direction::Send, "B", "a"),
                mk(0, 1, Direction::Recv, "B", "b"),
                mk(0, 1, Direction::Send, "C", "a"),
            ],
            init: Vec::new(),
        };
        let vs = validate(&m);
        assert!(vs.contains(&Violation::MixedState(0)), "{vs:?}");
        assert!(vs.contains(&Violation::Undirected(0)), "{vs:?}");
        assert!(vs.contains(&Violation::NondeterministicLabel(0, "a".into())), "{vs:?}");
        assert!(vs.contains(&Violation::Unreachable(2)), "{vs:?}");
    }

    #[test]
    fn json_export_follows_the_documented_schema() {
        let (m, ctxs) = machine_for(corpus::HIGHERLOWER, "B");
        let v = to_json(&m, &ctxs);
        assert_eq!(v["role"], "B");
        assert_eq!(v["initial"], 0);
        assert_eq!(v["states"].as_array().unwrap().len(), 9);
        let s0 = &v["states"][0];
        assert_eq!(s0["kind"], "recv");
        assert_eq!(s0["peer"], "A");
        assert!(s0["context"].as_array().unwrap().is_empty());
        let t0 = &v["transitions"][0];
        for key in ["from", "to", "dir", "label", "var", "base", "pred", "updates"] {
            assert!(!t0[key].is_null(), "transition lacks {key}");
        }
        assert_eq!(t0["label"], "start");
        assert_eq!(t0["pred"], "0 <= n0 && n0 < 100");
        // The limit → loop-entry edge carries the recursion initializers.
        let with_init = v["transitions"]
            .as_array()
            .unwrap()
            .iter()
            .find(|t| t["label"] == "limit")
            .unwrap();
        assert_eq!(with_init["init"][0]["var"], "n");
        assert_eq!(with_init["init"][0]["expr"], "n0");
        // Loop-entry context entries render multiplicity, base, predicate.
        let entry_state = &v["states"][with_init["to"].as_u64().unwrap() as usize];
        let entry_ctx = entry_state["context"].as_array().unwrap();
        assert_eq!(entry_ctx.len(), 4);
        assert_eq!(entry_ctx[2]["var"], "n");
        assert_eq!(entry_ctx[2]["mult"], "w");
        assert_eq!(entry_ctx[2]["base"], "int");
        assert_eq!(entry_ctx[2]["pred"], "0 <= n && n < 100");

        // C's machine: erased entries render with multiplicity "0", and the
        // machine-level initializers appear under the top-level "init" key.
        let (mc, cctxs) = machine_for(corpus::HIGHERLOWER, "C");
        let vc = to_json(&mc, &cctxs);
        assert_eq!(vc["states"][0]["context"][2]["var"], "n");
        assert_eq!(vc["states"][0]["context"][2]["mult"], "0");
        assert_eq!(vc["init"][0]["var"], "n");
        assert_eq!(vc["init"][1]["var"], "t");
        assert!(v.get("init").is_none(), "B's machine has no machine-level init");
    }

    #[test]
    fn dot_export_draws_every_edge() {
        let (m, ctxs) = machine_for(corpus::HIGHERLOWER, "C");
        let dot = to_dot(&m, &ctxs);
        assert!(dot.starts_with("digraph \"C\""));
        assert!(dot.contains("B!guess(x)"));
        assert!(dot.contains("B?higher("));
        assert!(dot.contains("t := t - 1"));
        assert!(dot.contains("doublecircle"));
        assert!(dot.contains("erased"));
    }

    #[test]
    fn hand_built_jump_before_any_message_is_rejected() {
        // rec t(x := 0). t[x := x + 1] is not contractive; the builder
        // refuses it rather than producing a machine with no entry state.
        let l = LocalType::Rec {
            tvar: "t".into(),
            ty: RefinementType::base("x", crate::syntax::BaseType::Int),
            init: Expression::int(0),
            mult: Multiplicity::Omega,
            body: Box::new(LocalType::TVar {
                tvar: "t".into(),
                var: "x".into(),
                assign: Expression::int(1),
            }),
        };
        let err = to_cfsm("A", &LocalContext::empty(), &l).unwrap_err();
        assert_eq!(err, CfsmError::UnguardedJump { tvar: "t".into() });
    }
}

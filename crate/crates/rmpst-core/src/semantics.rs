//! Executable labelled-transition semantics.
//!
//! Three step relations, mirroring the typing artifacts:
//!
//! - **Global**: `Γ ⊢ G —α→ Γ′ ⊢ G′` ([`gsteps`]). A prefix fires directly
//!   (G-Pfx, one step per branch, binding the payload to the two subjects); a
//!   causally independent action under a prefix fires by G-Cnt when every
//!   branch can take it to the *same* context (branch payloads join the
//!   context with an empty knower set so latent information survives); a
//!   recursion steps through one unfolding (G-Rec), binding its state
//!   variable to every participant of the body.
//! - **Local**: silent steps `Σ ⊢ L —ε→ Σ′ ⊢ L′` ([`lsteps_silent`]) consume
//!   a silent prefix at multiplicity `0` (E-Phi), unfold a recursion at `ω`
//!   (E-Rec), or push a silent step uniformly under a communication prefix
//!   (E-Cnt); concrete steps ([`lsteps`]) fire a send or receive branch after
//!   any finite silent prefix (L-Send/L-Recv closed under L-Eps).
//! - **Configurations**: a role-indexed collection of local states steps
//!   synchronously ([`config_steps`]): sender and receiver both take the
//!   action, every other role takes any finite sequence of silent steps.
//!
//! On top of the relations sit bounded checkers: [`traces_global`] /
//! [`traces_config`] enumerate action sequences to a depth, and
//! [`check_trace_equivalence`], [`check_progress`], and
//! [`check_preservation`] compare or scan them. Recursion makes the full
//! relations infinite, so every checker is depth-bounded with a node budget;
//! the reports say so explicitly — they are bounded corollaries of the
//! unbounded statements, not proofs of them.
//!
//! Termination device: silent closure and the search for causally
//! independent steps may unfold each recursion identity at most once per
//! query. A second unfolding of the same `rec` inside one derivation could
//! only reveal steps requiring an infinite derivation tree, which the
//! inductive rules do not admit; the cap is noted here and in reports.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use thiserror::Error;

use crate::pretty::{
    pretty_action, pretty_expr, pretty_global, pretty_global_context, pretty_local,
    pretty_local_context,
};
use crate::project::{project, ProjectionError};
use crate::refine::Checker;
use crate::syntax::{
    Action, Expression, GBranch, GlobalContext, GlobalType, LocalContext, LocalType, Multiplicity,
    RefinementType, Role, Var,
};

/// A global type paired with the context that closes it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GlobalState {
    pub ctx: GlobalContext,
    pub ty: GlobalType,
}

impl GlobalState {
    pub fn new(ctx: GlobalContext, ty: GlobalType) -> Self {
        GlobalState { ctx, ty }
    }

    /// Canonical rendering, used as a visited-set key.
    pub fn key(&self) -> String {
        format!("{} |- {}", pretty_global_context(&self.ctx), pretty_global(&self.ty))
    }
}

/// One role's share of a configuration.
pub type LocalState = (LocalContext, LocalType);

/// A collection of local states, indexable by participant.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Configuration {
    pub roles: BTreeMap<Role, LocalState>,
}

impl Configuration {
    /// Canonical rendering, used as a visited-set key.
    pub fn key(&self) -> String {
        self.roles
            .iter()
            .map(|(r, (sigma, l))| {
                format!("{r}: {} |- {}", pretty_local_context(sigma), pretty_local(l))
            })
            .collect::<Vec<_>>()
            .join("; ")
    }

    /// A configuration is terminal when every role can silently reach `end`.
    pub fn is_terminal(&self) -> bool {
        self.roles.values().all(|(sigma, l)| {
            matches!(l, LocalType::End)
                || silent_closure(sigma, l).iter().any(|(_, l2)| matches!(l2, LocalType::End))
        })
    }
}

/// A finite sequence of actions.
pub type Trace = Vec<Action>;

/// Exploration limits: `depth` bounds trace length, `budget` bounds the
/// number of expanded nodes across one checker invocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bounds {
    pub depth: usize,
    pub budget: usize,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds { depth: 10, budget: 50_000 }
    }
}

impl Bounds {
    pub fn depth(depth: usize) -> Self {
        Bounds { depth, ..Bounds::default() }
    }
}

/// The node budget ran out before the bounded exploration finished.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("exploration exceeded the node budget of {budget} (deepen in steps or raise --budget)")]
pub struct ExplorationBudgetExceeded {
    pub budget: usize,
}

// ---------------------------------------------------------------------------
// Action comparison
// ---------------------------------------------------------------------------

/// Actions are compared by subjects, label, and payload type up to
/// alpha-renaming of the payload binder; the binder name itself is not
/// significant.
pub fn actions_match(a: &Action, b: &Action) -> bool {
    a.from == b.from && a.to == b.to && a.label == b.label && a.ty.alpha_eq(&b.ty)
}

/// Canonical key of an action under [`actions_match`]: the binder is renamed
/// to a symbol no source identifier can use.
pub fn action_key(a: &Action) -> String {
    let canon = a.ty.predicate_on(&Expression::var("#"));
    format!("{}->{}:{}:{}{{{}}}", a.from, a.to, a.label, a.ty.base.name(), pretty_expr(&canon))
}

fn trace_key(tr: &[Action]) -> String {
    tr.iter().map(action_key).collect::<Vec<_>>().join(" | ")
}

/// A set of traces, deduplicated by [`action_key`] sequences; one
/// representative trace is kept per key for witness reporting.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TraceSet {
    map: BTreeMap<String, Trace>,
}

impl TraceSet {
    pub fn insert(&mut self, tr: Trace) {
        self.map.entry(trace_key(&tr)).or_insert(tr);
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn contains(&self, tr: &[Action]) -> bool {
        self.map.contains_key(&trace_key(tr))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Trace> {
        self.map.values()
    }

    /// The traces present here but absent from `other`, smallest key first.
    pub fn missing_from<'a>(&'a self, other: &TraceSet) -> Vec<&'a Trace> {
        self.map.iter().filter(|(k, _)| !other.map.contains_key(*k)).map(|(_, t)| t).collect()
    }

    /// Label sequences (space-joined), convenient for compact assertions.
    pub fn label_sequences(&self) -> BTreeSet<String> {
        self.map
            .values()
            .map(|tr| tr.iter().map(|a| a.label.as_str()).collect::<Vec<_>>().join(" "))
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Global LTS (G-Pfx, G-Cnt, G-Rec)
// ---------------------------------------------------------------------------

/// Contexts agree when they bind the same variables in the same order with
/// the same knowers and alpha-equal types.
fn gctx_agree(a: &GlobalContext, b: &GlobalContext) -> bool {
    a.entries.len() == b.entries.len()
        && a.entries.iter().zip(&b.entries).all(|(x, y)| {
            x.var == y.var && x.knowers == y.knowers && x.ty.alpha_eq(&y.ty)
        })
}

fn lctx_agree(a: &LocalContext, b: &LocalContext) -> bool {
    a.entries.len() == b.entries.len()
        && a.entries.iter().zip(&b.entries).all(|(x, y)| {
            x.var == y.var && x.mult == y.mult && x.ty.alpha_eq(&y.ty)
        })
}

/// Context extension as the step relations use it. Where extension is
/// defined it proceeds as defined; a name already bound with an alpha-equal
/// type is reused as-is — re-traversing a binder of an unfolded recursion
/// keeps its original name, and neither knowers nor multiplicities gate
/// steps; a genuine type clash is a second binding site that reuses the
/// name, and the binder is renamed apart. The same discipline on both the
/// global and the local side keeps the two name spaces aligned.
fn step_extend_g(
    ctx: &GlobalContext,
    var: &str,
    knowers: &BTreeSet<Role>,
    ty: &RefinementType,
    cont: &GlobalType,
) -> (GlobalContext, Var, RefinementType, GlobalType) {
    let ty0 = ty.with_binder(var);
    if let Ok(c2) = ctx.extend(var, knowers, &ty0) {
        return (c2, var.to_string(), ty0, cont.clone());
    }
    if ctx.lookup(var).is_some_and(|e| e.ty.alpha_eq(&ty0)) {
        return (ctx.clone(), var.to_string(), ty0, cont.clone());
    }
    ctx.extend_fresh(var, knowers, ty, cont)
}

fn step_extend_l(
    sigma: &LocalContext,
    var: &str,
    mult: Multiplicity,
    ty: &RefinementType,
    cont: &LocalType,
) -> (LocalContext, Var, RefinementType, LocalType) {
    let ty0 = ty.with_binder(var);
    if let Ok(s2) = sigma.extend(var, mult, &ty0) {
        return (s2, var.to_string(), ty0, cont.clone());
    }
    if sigma.lookup(var).is_some_and(|e| e.ty.alpha_eq(&ty0)) {
        return (sigma.clone(), var.to_string(), ty0, cont.clone());
    }
    sigma.extend_fresh(var, mult, ty, cont)
}

/// Every step `Γ ⊢ G —α→ Γ′ ⊢ G′` derivable by the global rules.
pub fn gsteps(s: &GlobalState) -> Vec<(Action, GlobalState)> {
    gsteps_under(s, &BTreeSet::new(), &BTreeSet::new())
}

/// `forbidden` holds the subjects of every prefix this call sits under (the
/// G-Cnt disjointness premise, pushed down as a generation filter);
/// `unfolded` caps each recursion identity at one unfolding per derivation
/// path.
fn gsteps_under(
    s: &GlobalState,
    forbidden: &BTreeSet<Role>,
    unfolded: &BTreeSet<String>,
) -> Vec<(Action, GlobalState)> {
    match &s.ty {
        GlobalType::End | GlobalType::TVar { .. } => Vec::new(),
        GlobalType::Rec { tvar, ty, body, .. } => {
            if unfolded.contains(tvar) {
                return Vec::new();
            }
            let knowers = body.participants();
            let Ok(ctx) = s.ctx.extend(&ty.binder, &knowers, ty) else {
                return Vec::new();
            };
            let mut unfolded = unfolded.clone();
            unfolded.insert(tvar.clone());
            gsteps_under(&GlobalState::new(ctx, s.ty.unfold()), forbidden, &unfolded)
        }
        GlobalType::Message { from, to, branches } => {
            let mut out: Vec<(Action, GlobalState)> = Vec::new();
            // G-Pfx: fire the prefix itself, one step per branch. Blocked
            // when an enclosing prefix shares a subject. Binders are renamed
            // apart on a clash, never dropped.
            if !forbidden.contains(from) && !forbidden.contains(to) {
                for b in branches {
                    let knowers: BTreeSet<Role> = [from.clone(), to.clone()].into();
                    let (ctx, var, ty, cont) =
                        step_extend_g(&s.ctx, &b.var, &knowers, &b.ty, &b.cont);
                    let action = Action {
                        from: from.clone(),
                        to: to.clone(),
                        label: b.label.clone(),
                        var,
                        ty,
                    };
                    out.push((action, GlobalState::new(ctx, cont)));
                }
            }
            // G-Cnt: an action with subjects disjoint from the prefix fires
            // when every branch derives it to the same context (pending
            // payloads join with an empty knower set).
            let mut deeper = forbidden.clone();
            deeper.insert(from.clone());
            deeper.insert(to.clone());
            let views: Vec<(Var, RefinementType, Vec<(Action, GlobalState)>)> = branches
                .iter()
                .map(|b| {
                    let (ctx, var, ty, cont) =
                        step_extend_g(&s.ctx, &b.var, &BTreeSet::new(), &b.ty, &b.cont);
                    let steps =
                        gsteps_under(&GlobalState::new(ctx, cont), &deeper, unfolded);
                    (var, ty, steps)
                })
                .collect();
            'cand: for (a0, s0) in &views[0].2 {
                let mut conts = vec![s0.ty.clone()];
                for (_, _, others) in &views[1..] {
                    match others
                        .iter()
                        .find(|(a, s2)| actions_match(a0, a) && gctx_agree(&s0.ctx, &s2.ctx))
                    {
                        Some((_, s2)) => conts.push(s2.ty.clone()),
                        None => continue 'cand,
                    }
                }
                let rebuilt = GlobalType::Message {
                    from: from.clone(),
                    to: to.clone(),
                    branches: branches
                        .iter()
                        .zip(&views)
                        .zip(conts)
                        .map(|((b, (var, ty, _)), cont)| GBranch {
                            label: b.label.clone(),
                            var: var.clone(),
                            ty: ty.clone(),
                            cont,
                        })
                        .collect(),
                };
                out.push((a0.clone(), GlobalState::new(s0.ctx.clone(), rebuilt)));
            }
            out
        }
    }
}

// ---------------------------------------------------------------------------
// Local LTS (E-Phi, E-Rec, E-Cnt; L-Send, L-Recv, L-Eps)
// ---------------------------------------------------------------------------

/// One silent step `Σ ⊢ L —ε→ Σ′ ⊢ L′`.
pub fn lsteps_silent(sigma: &LocalContext, l: &LocalType) -> Vec<LocalState> {
    lsteps_silent_capped(sigma, l, &BTreeSet::new()).into_iter().map(|(s, l, _)| (s, l)).collect()
}

/// Silent steps with the recursion cap; each result reports which recursion
/// identities the step unfolded so closures can enforce once-per-path.
fn lsteps_silent_capped(
    sigma: &LocalContext,
    l: &LocalType,
    blocked: &BTreeSet<String>,
) -> Vec<(LocalContext, LocalType, BTreeSet<String>)> {
    match l {
        // E-Phi: silent knowledge enters the context in irrelevant form.
        LocalType::Silent { var, ty, cont, .. } => {
            let (sigma2, _, _, cont2) =
                step_extend_l(sigma, var, Multiplicity::Zero, ty, cont);
            vec![(sigma2, cont2, BTreeSet::new())]
        }
        // E-Rec: unfold once, binding the state variable as usable.
        LocalType::Rec { tvar, ty, .. } => {
            if blocked.contains(tvar) {
                return Vec::new();
            }
            match sigma.extend(&ty.binder, Multiplicity::Omega, ty) {
                Ok(sigma2) => vec![(sigma2, l.unfold(), [tvar.clone()].into())],
                Err(_) => Vec::new(),
            }
        }
        // E-Cnt: push a silent step under the prefix, uniformly across
        // branches (each premise binds its payload at 0, and all branches
        // must reach the same context).
        LocalType::Send { to: peer, branches } | LocalType::Recv { from: peer, branches } => {
            let is_send = matches!(l, LocalType::Send { .. });
            let views: Vec<(Var, RefinementType, Vec<(LocalContext, LocalType, BTreeSet<String>)>)> =
                branches
                    .iter()
                    .map(|b| {
                        let (s, var, ty, cont) =
                            step_extend_l(sigma, &b.var, Multiplicity::Zero, &b.ty, &b.cont);
                        (var, ty, lsteps_silent_capped(&s, &cont, blocked))
                    })
                    .collect();
            let mut out = Vec::new();
            'cand: for (s0, l0, u0) in &views[0].2 {
                let mut conts = vec![l0.clone()];
                let mut used = u0.clone();
                for (_, _, others) in &views[1..] {
                    match others.iter().find(|(s2, _, _)| lctx_agree(s0, s2)) {
                        Some((_, l2, u2)) => {
                            conts.push(l2.clone());
                            used.extend(u2.iter().cloned());
                        }
                        None => continue 'cand,
                    }
                }
                let rebuilt_branches: Vec<crate::syntax::LBranch> = branches
                    .iter()
                    .zip(&views)
                    .zip(conts)
                    .map(|((b, (var, ty, _)), cont)| crate::syntax::LBranch {
                        label: b.label.clone(),
                        var: var.clone(),
                        ty: ty.clone(),
                        cont,
                    })
                    .collect();
                let rebuilt = if is_send {
                    LocalType::Send { to: peer.clone(), branches: rebuilt_branches }
                } else {
                    LocalType::Recv { from: peer.clone(), branches: rebuilt_branches }
                };
                out.push((s0.clone(), rebuilt, used));
            }
            out
        }
        LocalType::TVar { .. } | LocalType::End => Vec::new(),
    }
}

/// Cap on the states one silent closure may visit; corpus protocols stay two
/// orders of magnitude below it.
const SILENT_CLOSURE_CAP: usize = 4_096;

/// The reflexive-transitive silent closure `—ε→*` of one local state, with
/// each recursion identity unfolded at most once per path.
pub fn silent_closure(sigma: &LocalContext, l: &LocalType) -> Vec<LocalState> {
    let mut seen: BTreeMap<String, ()> = BTreeMap::new();
    let mut out: Vec<LocalState> = Vec::new();
    let mut frontier: Vec<(LocalContext, LocalType, BTreeSet<String>)> =
        vec![(sigma.clone(), l.clone(), BTreeSet::new())];
    while let Some((s, t, used)) = frontier.pop() {
        let key = format!("{} |- {}", pretty_local_context(&s), pretty_local(&t));
        if seen.insert(key, ()).is_some() {
            continue;
        }
        out.push((s.clone(), t.clone()));
        if out.len() >= SILENT_CLOSURE_CAP {
            break;
        }
        for (s2, t2, u2) in lsteps_silent_capped(&s, &t, &used) {
            let mut used2 = used.clone();
            used2.extend(u2);
            frontier.push((s2, t2, used2));
        }
    }
    out
}

/// Every concrete step `Σ ⊢ L —α→ Σ′ ⊢ L′` of `role`, closed under silent
/// prefixes (L-Eps).
pub fn lsteps(role: &str, sigma: &LocalContext, l: &LocalType) -> Vec<(Action, LocalState)> {
    let mut out: Vec<(Action, LocalState)> = Vec::new();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    for (s, t) in silent_closure(sigma, l) {
        let (peer, branches, sending) = match &t {
            LocalType::Send { to, branches } => (to, branches, true),
            LocalType::Recv { from, branches } => (from, branches, false),
            _ => continue,
        };
        for b in branches {
            let (s2, var, ty, cont) =
                step_extend_l(&s, &b.var, Multiplicity::Omega, &b.ty, &b.cont);
            let action = Action {
                from: if sending { role.to_string() } else { peer.clone() },
                to: if sending { peer.clone() } else { role.to_string() },
                label: b.label.clone(),
                var,
                ty,
            };
            let succ = (s2, cont);
            let key = format!(
                "{}@{} |- {}",
                action_key(&action),
                pretty_local_context(&succ.0),
                pretty_local(&succ.1)
            );
            if seen.insert(key) {
                out.push((action, succ));
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Configurations (Def. of the collection LTS)
// ---------------------------------------------------------------------------

/// Projection failed for one participant while building a configuration.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("cannot associate a configuration: projection for {role} failed: {source}")]
pub struct NotProjectable {
    pub role: Role,
    #[source]
    pub source: ProjectionError,
}

/// The configuration associated to a well-formed global type: every
/// participant mapped to its projection.
pub fn associate(
    checker: &Checker,
    ctx: &GlobalContext,
    g: &GlobalType,
) -> Result<Configuration, NotProjectable> {
    let mut roles = BTreeMap::new();
    for role in g.participants() {
        let pr = project(checker, ctx, g, &role)
            .map_err(|source| NotProjectable { role: role.clone(), source })?;
        roles.insert(role, (pr.context, pr.local_type));
    }
    Ok(Configuration { roles })
}

/// Every synchronous step of a configuration: sender and receiver both take
/// `α`, every other role takes any finite silent sequence. Successors are
/// deduplicated structurally.
pub fn config_steps(c: &Configuration) -> Vec<(Action, Configuration)> {
    let mut out: Vec<(Action, Configuration)> = Vec::new();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    for (p, (sigma_p, l_p)) in &c.roles {
        for (alpha, succ_p) in lsteps(p, sigma_p, l_p) {
            if alpha.from != *p {
                continue; // consider each action from its sender's side
            }
            let q = &alpha.to;
            let Some((sigma_q, l_q)) = c.roles.get(q) else {
                continue;
            };
            for (beta, succ_q) in lsteps(q, sigma_q, l_q) {
                if !actions_match(&alpha, &beta) {
                    continue;
                }
                // Bystanders: any state in their silent closure.
                let bystanders: Vec<(&Role, Vec<LocalState>)> = c
                    .roles
                    .iter()
                    .filter(|(r, _)| *r != p && *r != q)
                    .map(|(r, (s, l))| (r, silent_closure(s, l)))
                    .collect();
                let mut combos: Vec<BTreeMap<Role, LocalState>> = vec![BTreeMap::new()];
                for (r, states) in &bystanders {
                    let mut next = Vec::with_capacity(combos.len() * states.len());
                    for combo in &combos {
                        for st in states {
                            let mut c2 = combo.clone();
                            c2.insert((*r).clone(), st.clone());
                            next.push(c2);
                        }
                    }
                    combos = next;
                }
                for combo in combos {
                    let mut roles = c.roles.clone();
                    roles.insert(p.clone(), succ_p.clone());
                    roles.insert(q.clone(), succ_q.clone());
                    for (r, st) in combo {
                        roles.insert(r, st);
                    }
                    let succ = Configuration { roles };
                    let key = format!("{} => {}", action_key(&alpha), succ.key());
                    if seen.insert(key) {
                        out.push((alpha.clone(), succ));
                    }
                }
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Bounded trace enumeration
// ---------------------------------------------------------------------------

fn traces_from<S: Clone, FS, FK>(
    start: S,
    mut steps: FS,
    key: FK,
    bounds: Bounds,
) -> Result<TraceSet, ExplorationBudgetExceeded>
where
    FS: FnMut(&S) -> Vec<(Action, S)>,
    FK: Fn(&S) -> String,
{
    let mut out = TraceSet::default();
    out.insert(Vec::new());
    let mut frontier: Vec<(S, Trace)> = vec![(start, Vec::new())];
    let mut seen: BTreeSet<String> = BTreeSet::new();
    let mut expanded = 0usize;
    for _ in 0..bounds.depth {
        let mut next = Vec::new();
        for (s, tr) in frontier {
            expanded += 1;
            if expanded > bounds.budget {
                return Err(ExplorationBudgetExceeded { budget: bounds.budget });
            }
            for (a, s2) in steps(&s) {
                let mut tr2 = tr.clone();
                tr2.push(a);
                out.insert(tr2.clone());
                let dedup = format!("{} @ {}", trace_key(&tr2), key(&s2));
                if seen.insert(dedup) {
                    next.push((s2, tr2));
                }
            }
        }
        frontier = next;
        if frontier.is_empty() {
            break;
        }
    }
    Ok(out)
}

/// All global traces of length ≤ `bounds.depth`.
pub fn traces_global(
    s: &GlobalState,
    bounds: Bounds,
) -> Result<TraceSet, ExplorationBudgetExceeded> {
    traces_from(s.clone(), |s| gsteps(s), GlobalState::key, bounds)
}

/// All configuration traces of length ≤ `bounds.depth`.
pub fn traces_config(
    c: &Configuration,
    bounds: Bounds,
) -> Result<TraceSet, ExplorationBudgetExceeded> {
    traces_from(c.clone(), |c| config_steps(c), Configuration::key, bounds)
}

// ---------------------------------------------------------------------------
// Checkers
// ---------------------------------------------------------------------------

fn bounded_note(what: &str, bounds: Bounds) -> String {
    format!(
        "bounded check: {what} explored to depth {} (budget {} nodes); \
         the unbounded statement is not established by this run",
        bounds.depth, bounds.budget
    )
}

/// A trace present on one side and absent from the other.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Divergence {
    /// Which side lacks the trace: `"global"` or `"configuration"`.
    pub missing_from: String,
    pub trace: Trace,
}

impl Divergence {
    pub fn rendered_trace(&self) -> Vec<String> {
        self.trace.iter().map(pretty_action).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEqReport {
    pub equal: bool,
    pub depth: usize,
    pub global_traces: usize,
    pub config_traces: usize,
    pub divergence: Option<Divergence>,
    pub note: String,
}

/// The first witness (smallest canonical key) that the two sets differ.
pub fn compare_traces(global: &TraceSet, config: &TraceSet) -> Option<Divergence> {
    if let Some(tr) = global.missing_from(config).first() {
        return Some(Divergence { missing_from: "configuration".into(), trace: (*tr).clone() });
    }
    if let Some(tr) = config.missing_from(global).first() {
        return Some(Divergence { missing_from: "global".into(), trace: (*tr).clone() });
    }
    None
}

/// Compare the bounded traces of `Γ ⊢ G` with those of its associated
/// configuration.
pub fn check_trace_equivalence(
    checker: &Checker,
    ctx: &GlobalContext,
    g: &GlobalType,
    bounds: Bounds,
) -> Result<TraceEqReport, TraceEqError> {
    let cfg = associate(checker, ctx, g)?;
    let gt = traces_global(&GlobalState::new(ctx.clone(), g.clone()), bounds)?;
    let ct = traces_config(&cfg, bounds)?;
    let divergence = compare_traces(&gt, &ct);
    Ok(TraceEqReport {
        equal: divergence.is_none(),
        depth: bounds.depth,
        global_traces: gt.len(),
        config_traces: ct.len(),
        divergence,
        note: bounded_note("trace equivalence", bounds),
    })
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum TraceEqError {
    #[error(transparent)]
    NotProjectable(#[from] NotProjectable),
    #[error(transparent)]
    Budget(#[from] ExplorationBudgetExceeded),
}

/// A reachable configuration with no step that is not terminal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StuckWitness {
    /// Actions leading from the initial configuration to the stuck one.
    pub trace: Trace,
    /// Per-role rendering of the stuck configuration.
    pub states: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProgressReport {
    pub ok: bool,
    pub depth: usize,
    pub explored: usize,
    pub stuck: Option<StuckWitness>,
    pub note: String,
}

/// Scan every configuration reachable within the bounds: each must be
/// terminal or have at least one step. Refinement emptiness does not block
/// steps (empty session types are considered reducible), so on well-formed
/// input a stuck state indicates an implementation bug.
pub fn check_progress(
    checker: &Checker,
    ctx: &GlobalContext,
    g: &GlobalType,
    bounds: Bounds,
) -> Result<ProgressReport, TraceEqError> {
    let cfg = associate(checker, ctx, g)?;
    check_progress_config(&cfg, bounds).map_err(Into::into)
}

/// Progress scan over an explicit configuration (used directly by tests that
/// hand-build defective configurations).
pub fn check_progress_config(
    c: &Configuration,
    bounds: Bounds,
) -> Result<ProgressReport, ExplorationBudgetExceeded> {
    let mut frontier: Vec<(Configuration, Trace)> = vec![(c.clone(), Vec::new())];
    let mut seen: BTreeSet<String> = BTreeSet::new();
    seen.insert(c.key());
    let mut explored = 0usize;
    for depth in 0..=bounds.depth {
        let mut next = Vec::new();
        for (cfg, tr) in frontier {
            explored += 1;
            if explored > bounds.budget {
                return Err(ExplorationBudgetExceeded { budget: bounds.budget });
            }
            let steps = config_steps(&cfg);
            if steps.is_empty() && !cfg.is_terminal() {
                return Ok(ProgressReport {
                    ok: false,
                    depth: bounds.depth,
                    explored,
                    stuck: Some(StuckWitness {
                        trace: tr,
                        states: cfg
                            .roles
                            .iter()
                            .map(|(r, (s, l))| {
                                format!(
                                    "{r}: {} |- {}",
                                    pretty_local_context(s),
                                    pretty_local(l)
                                )
                            })
                            .collect(),
                    }),
                    note: bounded_note("progress", bounds),
                });
            }
            if depth < bounds.depth {
                for (a, c2) in steps {
                    if seen.insert(c2.key()) {
                        let mut tr2 = tr.clone();
                        tr2.push(a);
                        next.push((c2, tr2));
                    }
                }
            }
        }
        frontier = next;
        if frontier.is_empty() {
            break;
        }
    }
    Ok(ProgressReport {
        ok: true,
        depth: bounds.depth,
        explored,
        stuck: None,
        note: bounded_note("progress", bounds),
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreservationFailure {
    /// Actions leading to the offending state.
    pub trace: Trace,
    /// Well-formedness failures reported there.
    pub details: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreservationReport {
    pub ok: bool,
    pub depth: usize,
    pub explored: usize,
    pub failure: Option<PreservationFailure>,
    pub note: String,
}

/// Walk the global step relation and re-check well-formedness at every
/// reachable state.
pub fn check_preservation(
    checker: &Checker,
    ctx: &GlobalContext,
    g: &GlobalType,
    bounds: Bounds,
) -> Result<PreservationReport, ExplorationBudgetExceeded> {
    let mut frontier: Vec<(GlobalState, Trace)> =
        vec![(GlobalState::new(ctx.clone(), g.clone()), Vec::new())];
    let mut seen: BTreeSet<String> = BTreeSet::new();
    seen.insert(frontier[0].0.key());
    let mut explored = 0usize;
    for depth in 0..=bounds.depth {
        let mut next = Vec::new();
        for (gs, tr) in frontier {
            explored += 1;
            if explored > bounds.budget {
                return Err(ExplorationBudgetExceeded { budget: bounds.budget });
            }
            let report = crate::project::well_formed(checker, &gs.ctx, &gs.ty);
            if !report.ok {
                return Ok(PreservationReport {
                    ok: false,
                    depth: bounds.depth,
                    explored,
                    failure: Some(PreservationFailure {
                        trace: tr,
                        details: report
                            .failures
                            .iter()
                            .map(|f| format!("{} at {}: {}", f.role, f.path, f.detail))
                            .collect(),
                    }),
                    note: bounded_note("well-formedness preservation", bounds),
                });
            }
            if depth < bounds.depth {
                for (a, gs2) in gsteps(&gs) {
                    if seen.insert(gs2.key()) {
                        let mut tr2 = tr.clone();
                        tr2.push(a);
                        next.push((gs2, tr2));
                    }
                }
            }
        }
        frontier = next;
        if frontier.is_empty() {
            break;
        }
    }
    Ok(PreservationReport {
        ok: true,
        depth: bounds.depth,
        explored,
        failure: None,
        note: bounded_note("well-formedness preservation", bounds),
    })
}

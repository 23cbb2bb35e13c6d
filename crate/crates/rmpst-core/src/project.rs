//! Endpoint projection: from global types to local types.
//!
//! Projection of a message keeps the sender's and receiver's views as
//! send/receive nodes; every other role records the exchange as a *silent
//! prefix* `⟨l⟩(x:T)` — the variable is erased (multiplicity 0) but its
//! refinement remains available to later reasoning. Branches a role does not
//! witness directly are reconciled with [`merge`].
//!
//! Global contexts project pointwise: a role that belongs to an entry's
//! knower set sees the variable at multiplicity ω, every other role at 0.
//!
//! Recursion headers `μt(x:T)⟨x:=E⟩` determine who tracks the state
//! variable: the roles that can type the initializer from their own
//! knowledge. Everyone else keeps an erased copy and justifies recursion
//! assignments under the promoted context, leaning on latent refinements
//! gathered from silent prefixes.

use crate::refine::{self, Checker, TypeError};
use crate::syntax::{
    GBranch, GlobalContext, GlobalType, LBranch, Label, LocalContext, LocalType,
    Multiplicity, RefinementType, Role, Var,
};
use std::collections::BTreeSet;

/// A successful projection: the role's starting context and local type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProjectionResult {
    pub context: LocalContext,
    pub local_type: LocalType,
}

/// Why a projection failed. Paths are breadcrumb trails of branch labels and
/// recursion names from the root of the global type.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProjectionError {
    #[error("merge failure at {path}: {detail}")]
    MergeFailure { path: String, detail: String },
    #[error("expression typing failed at {path}: {detail}")]
    ExprTypeFailure { path: String, detail: String },
    #[error("irrelevant variable '{var}' used in an expression at {path}")]
    IrrelevantVariableUse { path: String, var: Var },
}

fn type_fail(path: &[String], e: TypeError) -> ProjectionError {
    match e {
        TypeError::IrrelevantVariableUse(var) => {
            ProjectionError::IrrelevantVariableUse { path: path_str(path), var }
        }
        other => ProjectionError::ExprTypeFailure {
            path: path_str(path),
            detail: other.to_string(),
        },
    }
}

fn path_str(path: &[String]) -> String {
    if path.is_empty() {
        "<root>".to_string()
    } else {
        path.join("/")
    }
}

/// Fig. 8: project a global context onto one role, pointwise.
pub fn project_ctx(ctx: &GlobalContext, role: &str) -> LocalContext {
    let mut out = LocalContext::empty();
    for e in &ctx.entries {
        let mult = if e.knowers.contains(role) {
            Multiplicity::Omega
        } else {
            Multiplicity::Zero
        };
        out = out
            .extend(&e.var, mult, &e.ty)
            .expect("global context has unique names");
    }
    out
}

/// The knower set of a recursion header: participants of the body that can
/// type the initializer strictly from their own (unpromoted) view of `ctx`.
fn rec_knowers(
    checker: &Checker,
    ctx: &GlobalContext,
    body: &GlobalType,
    ty: &RefinementType,
    init: &crate::syntax::Expression,
) -> BTreeSet<Role> {
    let mut out = BTreeSet::new();
    for r in body.participants() {
        let sigma = project_ctx(ctx, &r);
        if let Ok(true) = refine::check_type(checker, &sigma, init, ty) {
            out.insert(r);
        }
    }
    out
}

struct Projector<'a> {
    checker: &'a Checker,
    role: String,
    full_merge: bool,
}

/// An in-scope recursion binder, as seen by the projecting role.
struct RecScope {
    tvar: String,
    ty: RefinementType,
    mult: Multiplicity,
}

impl Projector<'_> {
    fn go(
        &self,
        ctx: &GlobalContext,
        g: &GlobalType,
        recs: &mut Vec<RecScope>,
        path: &mut Vec<String>,
    ) -> Result<LocalType, ProjectionError> {
        match g {
            GlobalType::End => Ok(LocalType::End),
            GlobalType::Message { from, to, branches } => {
                self.message(ctx, from, to, branches, recs, path)
            }
            GlobalType::Rec { tvar, ty, init, body } => {
                let sigma = project_ctx(ctx, &self.role);
                if !body.participants().contains(&self.role) {
                    // P-Rec-Out: the role never takes part in the loop.
                    return Ok(LocalType::End);
                }
                path.push(format!("rec {tvar}"));
                if !refine::wf_type(&sigma, ty) {
                    let err = ProjectionError::ExprTypeFailure {
                        path: path_str(path),
                        detail: format!(
                            "state type of '{tvar}' is not well-formed"
                        ),
                    };
                    path.pop();
                    return Err(err);
                }
                let knowers = rec_knowers(self.checker, ctx, body, ty, init);
                let mult = if knowers.contains(&self.role) {
                    Multiplicity::Omega
                } else {
                    Multiplicity::Zero
                };
                if mult == Multiplicity::Zero {
                    // The role keeps an erased copy; the initializer must
                    // still be justifiable with full (promoted) knowledge.
                    let ok = refine::check_type(
                        self.checker,
                        &refine::promote(&sigma),
                        init,
                        ty,
                    )
                    .map_err(|e| type_fail(path, e))?;
                    if !ok {
                        let err = ProjectionError::ExprTypeFailure {
                            path: path_str(path),
                            detail: format!(
                                "initializer of '{tvar}' does not satisfy the state type"
                            ),
                        };
                        path.pop();
                        return Err(err);
                    }
                }
                let extended = ctx
                    .extend(&ty.binder, &knowers, ty)
                    .map_err(|e| ProjectionError::ExprTypeFailure {
                        path: path_str(path),
                        detail: e.to_string(),
                    })?;
                recs.push(RecScope { tvar: tvar.clone(), ty: ty.clone(), mult });
                let body_l = self.go(&extended, body, recs, path);
                recs.pop();
                path.pop();
                Ok(LocalType::Rec {
                    tvar: tvar.clone(),
                    ty: ty.clone(),
                    init: init.clone(),
                    mult,
                    body: Box::new(body_l?),
                })
            }
            GlobalType::TVar { tvar, var, assign } => {
                let Some(rec) = recs.iter().rev().find(|r| r.tvar == *tvar) else {
                    return Err(ProjectionError::ExprTypeFailure {
                        path: path_str(path),
                        detail: format!("unbound type variable '{tvar}'"),
                    });
                };
                let sigma = project_ctx(ctx, &self.role);
                let checked = match rec.mult {
                    Multiplicity::Omega => {
                        refine::check_type(self.checker, &sigma, assign, &rec.ty)
                    }
                    Multiplicity::Zero => refine::check_type(
                        self.checker,
                        &refine::promote(&sigma),
                        assign,
                        &rec.ty,
                    ),
                };
                match checked {
                    Ok(true) => Ok(LocalType::TVar {
                        tvar: tvar.clone(),
                        var: var.clone(),
                        assign: assign.clone(),
                    }),
                    Ok(false) => Err(ProjectionError::ExprTypeFailure {
                        path: path_str(path),
                        detail: format!(
                            "assignment to '{var}' does not satisfy the state type of '{tvar}'"
                        ),
                    }),
                    Err(e) => Err(type_fail(path, e)),
                }
            }
        }
    }

    fn message(
        &self,
        ctx: &GlobalContext,
        from: &str,
        to: &str,
        branches: &[GBranch],
        recs: &mut Vec<RecScope>,
        path: &mut Vec<String>,
    ) -> Result<LocalType, ProjectionError> {
        let sigma = project_ctx(ctx, &self.role);
        // Every payload type must be well-formed from this role's view.
        for b in branches {
            if !refine::wf_type(&sigma, &b.ty.with_binder(b.var.clone())) {
                path.push(b.label.clone());
                let err = ProjectionError::ExprTypeFailure {
                    path: path_str(path),
                    detail: format!("payload type of '{}' is not well-formed", b.label),
                };
                path.pop();
                return Err(err);
            }
        }
        let mut locals = Vec::with_capacity(branches.len());
        for b in branches {
            path.push(b.label.clone());
            let knowers: BTreeSet<Role> =
                [from.to_string(), to.to_string()].into_iter().collect();
            // Binders that clash with an incompatible entry in scope (e.g.
            // after a surrounding recursion was unfolded) are renamed apart.
            let (extended, var, ty, cont_g) =
                ctx.extend_fresh(&b.var, &knowers, &b.ty, &b.cont);
            let cont = self.go(&extended, &cont_g, recs, path);
            path.pop();
            locals.push(LBranch { label: b.label.clone(), var, ty, cont: cont? });
        }
        if self.role == from {
            Ok(LocalType::Send { to: to.to_string(), branches: locals })
        } else if self.role == to {
            Ok(LocalType::Recv { from: from.to_string(), branches: locals })
        } else {
            // P-Phi: wrap each branch in a silent prefix, then merge.
            let alts: Vec<LocalType> = locals
                .into_iter()
                .map(|b| LocalType::Silent {
                    label: b.label,
                    var: b.var,
                    ty: b.ty,
                    cont: Box::new(b.cont),
                })
                .collect();
            merge_alternatives(&sigma, alts, self.full_merge, path)
        }
    }
}

/// Project `g` onto `role` under `ctx` with the plain merge operator.
pub fn project(
    checker: &Checker,
    ctx: &GlobalContext,
    g: &GlobalType,
    role: &str,
) -> Result<ProjectionResult, ProjectionError> {
    project_with(checker, ctx, g, role, false)
}

/// Project with an explicit merge mode (`full_merge` enables the permissive
/// receive-union merge).
pub fn project_with(
    checker: &Checker,
    ctx: &GlobalContext,
    g: &GlobalType,
    role: &str,
    full_merge: bool,
) -> Result<ProjectionResult, ProjectionError> {
    let projector =
        Projector { checker, role: role.to_string(), full_merge };
    let local_type = projector.go(ctx, g, &mut Vec::new(), &mut Vec::new())?;
    Ok(ProjectionResult { context: project_ctx(ctx, role), local_type })
}

// ---- merge -----------------------------------------------------------------

/// A compact head description, for merge diagnostics.
fn head(l: &LocalType) -> String {
    match l {
        LocalType::Recv { from, branches } => format!(
            "{from}?{{{}}}",
            branches.iter().map(|b| b.label.as_str()).collect::<Vec<_>>().join(", ")
        ),
        LocalType::Send { to, branches } => format!(
            "{to}!{{{}}}",
            branches.iter().map(|b| b.label.as_str()).collect::<Vec<_>>().join(", ")
        ),
        LocalType::Silent { label, .. } => format!("<{label}>(..)"),
        LocalType::Rec { tvar, .. } => format!("rec {tvar}"),
        LocalType::TVar { tvar, .. } => format!("{tvar}[..]"),
        LocalType::End => "end".to_string(),
    }
}

/// Plain merge: succeeds when the two types are structurally reconcilable.
/// Silent prefixes over the same label merge pointwise; silent alternatives
/// from different branches follow the projection merge (see
/// [`merge_alternatives`]).
pub fn merge(
    ctx: &LocalContext,
    l1: &LocalType,
    l2: &LocalType,
) -> Result<LocalType, ProjectionError> {
    merge_with(ctx, l1, l2, false)
}

/// Merge with an explicit mode: `full` additionally unites receive nodes
/// from the same sender over disjoint label sets.
pub fn merge_with(
    ctx: &LocalContext,
    l1: &LocalType,
    l2: &LocalType,
    full: bool,
) -> Result<LocalType, ProjectionError> {
    merge_alternatives(ctx, vec![l1.clone(), l2.clone()], full, &mut Vec::new())
}

/// Leading silent prefixes of a local type, and the first non-silent node.
fn strip_chain(l: &LocalType) -> (Vec<(Label, Var, RefinementType)>, LocalType) {
    let mut chain = Vec::new();
    let mut cur = l;
    while let LocalType::Silent { label, var, ty, cont } = cur {
        chain.push((label.clone(), var.clone(), ty.clone()));
        cur = cont;
    }
    (chain, cur.clone())
}

fn wrap_chain(chain: &[(Label, Var, RefinementType)], l: LocalType) -> LocalType {
    chain.iter().rev().fold(l, |acc, (label, var, ty)| LocalType::Silent {
        label: label.clone(),
        var: var.clone(),
        ty: ty.clone(),
        cont: Box::new(acc),
    })
}

fn merge_failure(path: &[String], detail: impl Into<String>) -> ProjectionError {
    ProjectionError::MergeFailure { path: path_str(path), detail: detail.into() }
}

/// Merge the local views of several global branches.
///
/// Structurally identical alternatives collapse; silent prefixes over the
/// same label merge pointwise. Alternatives that diverge are reconciled in
/// two stages: if the types below the silent prefixes merge on their own and
/// never mention the erased variables, the prefixes are dropped; otherwise,
/// when every alternative continues with a receive from the same peer, the
/// prefixes are pushed into the receive branches and the label sets united —
/// the incoming label tells the role which branch was taken, and the erased
/// refinements ride along with it. A union over receives *without* silent
/// prefixes is the permissive footnote-style merge and requires `full`.
fn merge_alternatives(
    ctx: &LocalContext,
    alts: Vec<LocalType>,
    full: bool,
    path: &mut Vec<String>,
) -> Result<LocalType, ProjectionError> {
    let mut uniq: Vec<LocalType> = Vec::new();
    for a in alts {
        if !uniq.contains(&a) {
            uniq.push(a);
        }
    }
    assert!(!uniq.is_empty(), "merge of zero alternatives");
    if uniq.len() == 1 {
        return Ok(uniq.pop().unwrap());
    }

    // Same-constructor structural merges.
    if let Some(merged) = merge_homogeneous(ctx, &uniq, full, path)? {
        return Ok(merged);
    }

    // Silent-alternative reconciliation.
    let split: Vec<(Vec<(Label, Var, RefinementType)>, LocalType)> =
        uniq.iter().map(strip_chain).collect();

    // Drop the chains when the cores merge on their own and are closed
    // without the erased variables.
    let cores_closed = split.iter().all(|(chain, core)| {
        let fv = core.free_vars();
        chain.iter().all(|(_, v, _)| !fv.contains(v))
    });
    if cores_closed && split.iter().any(|(chain, _)| !chain.is_empty()) {
        let cores: Vec<LocalType> = split.iter().map(|(_, c)| c.clone()).collect();
        if let Ok(merged) = merge_alternatives(ctx, cores, full, path) {
            return Ok(merged);
        }
    }

    // Push the chains into a united receive.
    let all_recv = split.iter().all(|(_, c)| matches!(c, LocalType::Recv { .. }));
    let union_allowed = full || split.iter().all(|(chain, _)| !chain.is_empty());
    if all_recv && union_allowed {
        let froms: BTreeSet<&str> = split
            .iter()
            .map(|(_, c)| match c {
                LocalType::Recv { from, .. } => from.as_str(),
                _ => unreachable!(),
            })
            .collect();
        if froms.len() != 1 {
            return Err(merge_failure(
                path,
                format!(
                    "cannot merge receives from different peers: {}",
                    froms.into_iter().collect::<Vec<_>>().join(" vs ")
                ),
            ));
        }
        let from = froms.into_iter().next().unwrap().to_string();
        // The receive binder must not capture or depend on chain variables.
        for (chain, core) in &split {
            let LocalType::Recv { branches, .. } = core else { unreachable!() };
            for b in branches {
                let clash = chain.iter().any(|(_, v, _)| {
                    b.ty.free_vars().contains(v) || b.var == *v
                });
                if clash {
                    return Err(merge_failure(
                        path,
                        format!(
                            "silent variables of '{}' cross the receive binder",
                            b.label
                        ),
                    ));
                }
            }
        }
        // Unite, pushing each alternative's chain inside its own branches.
        let mut labels: Vec<Label> = Vec::new();
        let mut collected: Vec<(Label, Var, RefinementType, Vec<LocalType>)> = Vec::new();
        for (chain, core) in &split {
            let LocalType::Recv { branches, .. } = core else { unreachable!() };
            for b in branches {
                let pushed = wrap_chain(chain, b.cont.clone());
                match collected.iter_mut().find(|(l, ..)| l == &b.label) {
                    None => {
                        labels.push(b.label.clone());
                        collected.push((
                            b.label.clone(),
                            b.var.clone(),
                            b.ty.clone(),
                            vec![pushed],
                        ));
                    }
                    Some((_, var, ty, conts)) => {
                        if *var != b.var || !ty.alpha_eq(&b.ty) {
                            return Err(merge_failure(
                                path,
                                format!(
                                    "branch '{}' binds incompatible payloads",
                                    b.label
                                ),
                            ));
                        }
                        conts.push(pushed);
                    }
                }
            }
        }
        let mut branches = Vec::with_capacity(collected.len());
        for (label, var, ty, conts) in collected {
            path.push(label.clone());
            let cont = merge_alternatives(ctx, conts, full, path);
            path.pop();
            branches.push(LBranch { label, var, ty, cont: cont? });
        }
        return Ok(LocalType::Recv { from, branches });
    }

    let heads: Vec<String> = uniq.iter().map(head).collect();
    Err(merge_failure(
        path,
        format!("incompatible alternatives: {}", heads.join(" vs ")),
    ))
}

/// Merge alternatives that all share the same top constructor; `Ok(None)`
/// means the shapes are heterogeneous and the caller should reconcile them.
fn merge_homogeneous(
    ctx: &LocalContext,
    alts: &[LocalType],
    full: bool,
    path: &mut Vec<String>,
) -> Result<Option<LocalType>, ProjectionError> {
    match &alts[0] {
        LocalType::Silent { label, var, ty, .. } => {
            let same = alts.iter().all(|a| match a {
                LocalType::Silent { label: l2, var: v2, ty: t2, .. } => {
                    l2 == label && v2 == var && t2.alpha_eq(ty)
                }
                _ => false,
            });
            if !same {
                return Ok(None);
            }
            let conts: Vec<LocalType> = alts
                .iter()
                .map(|a| match a {
                    LocalType::Silent { cont, .. } => (**cont).clone(),
                    _ => unreachable!(),
                })
                .collect();
            path.push(format!("<{label}>"));
            let cont = merge_alternatives(ctx, conts, full, path);
            path.pop();
            Ok(Some(LocalType::Silent {
                label: label.clone(),
                var: var.clone(),
                ty: ty.clone(),
                cont: Box::new(cont?),
            }))
        }
        LocalType::Send { to, branches } => {
            // Internal choice merges only pointwise: same peer, same labels.
            let mut all_branches = Vec::new();
            for a in alts {
                match a {
                    LocalType::Send { to: t2, branches: b2 } if t2 == to => {
                        all_branches.push(b2)
                    }
                    _ => return Ok(None),
                }
            }
            let labels: Vec<&Label> = branches.iter().map(|b| &b.label).collect();
            for b2 in &all_branches {
                let l2: Vec<&Label> = b2.iter().map(|b| &b.label).collect();
                if l2 != labels {
                    return Err(merge_failure(
                        path,
                        "send nodes with different label sets cannot merge",
                    ));
                }
            }
            let branches = merge_branch_lists(ctx, &all_branches, full, path)?;
            Ok(Some(LocalType::Send { to: to.clone(), branches }))
        }
        LocalType::Recv { from, branches } => {
            let mut all_branches = Vec::new();
            for a in alts {
                match a {
                    LocalType::Recv { from: f2, branches: b2 } if f2 == from => {
                        all_branches.push(b2)
                    }
                    _ => return Ok(None),
                }
            }
            let labels: Vec<&Label> = branches.iter().map(|b| &b.label).collect();
            let same_labels = all_branches.iter().all(|b2| {
                b2.iter().map(|b| &b.label).collect::<Vec<_>>() == labels
            });
            if !same_labels {
                // Differing label sets: handled by the union path (requires
                // silent prefixes or `full`).
                return Ok(None);
            }
            let branches = merge_branch_lists(ctx, &all_branches, full, path)?;
            Ok(Some(LocalType::Recv { from: from.clone(), branches }))
        }
        LocalType::Rec { tvar, ty, init, mult, .. } => {
            let mut bodies = Vec::new();
            for a in alts {
                match a {
                    LocalType::Rec { tvar: t2, ty: ty2, init: i2, mult: m2, body }
                        if t2 == tvar
                            && ty2.binder == ty.binder
                            && ty2.alpha_eq(ty)
                            && i2 == init
                            && m2 == mult =>
                    {
                        bodies.push((**body).clone())
                    }
                    _ => return Ok(None),
                }
            }
            path.push(format!("rec {tvar}"));
            let body = merge_alternatives(ctx, bodies, full, path);
            path.pop();
            Ok(Some(LocalType::Rec {
                tvar: tvar.clone(),
                ty: ty.clone(),
                init: init.clone(),
                mult: *mult,
                body: Box::new(body?),
            }))
        }
        // End/TVar are fully compared by the dedup pass; reaching here means
        // a genuine mismatch.
        LocalType::End | LocalType::TVar { .. } => Ok(None),
    }
}

/// Pointwise merge of aligned branch lists (same labels in the same order).
fn merge_branch_lists(
    ctx: &LocalContext,
    lists: &[&Vec<LBranch>],
    full: bool,
    path: &mut Vec<String>,
) -> Result<Vec<LBranch>, ProjectionError> {
    let n = lists[0].len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let first = &lists[0][i];
        for l in lists.iter().skip(1) {
            let b = &l[i];
            if b.var != first.var || !b.ty.alpha_eq(&first.ty) {
                return Err(merge_failure(
                    path,
                    format!("branch '{}' binds incompatible payloads", first.label),
                ));
            }
        }
        let conts: Vec<LocalType> = lists.iter().map(|l| l[i].cont.clone()).collect();
        path.push(first.label.clone());
        let cont = merge_alternatives(ctx, conts, full, path);
        path.pop();
        out.push(LBranch {
            label: first.label.clone(),
            var: first.var.clone(),
            ty: first.ty.clone(),
            cont: cont?,
        });
    }
    Ok(out)
}

// ---- well-formedness -------------------------------------------------------

/// Reason part of a well-formedness failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WfReason {
    MergeFailure,
    ExprTypeFailure,
    FreeTypeVar,
    NonContractive,
}

impl std::fmt::Display for WfReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            WfReason::MergeFailure => "merge failure",
            WfReason::ExprTypeFailure => "expression typing failure",
            WfReason::FreeTypeVar => "free type variable",
            WfReason::NonContractive => "non-contractive recursion",
        };
        write!(f, "{s}")
    }
}

/// One well-formedness failure. Failures of whole-protocol clauses (free
/// type variables, contractiveness) use the pseudo-role `"*"`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WfFailure {
    pub role: Role,
    pub reason: WfReason,
    pub path: String,
    pub detail: String,
}

/// The outcome of checking Def.-style well-formedness: no free type
/// variables, contractive recursion, and a defined projection for every
/// participant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WellFormednessReport {
    pub ok: bool,
    pub failures: Vec<WfFailure>,
    /// Non-fatal notes, e.g. payload types with unsatisfiable refinements.
    pub warnings: Vec<String>,
}

/// Check global well-formedness under plain merge.
pub fn well_formed(
    checker: &Checker,
    ctx: &GlobalContext,
    g: &GlobalType,
) -> WellFormednessReport {
    well_formed_with(checker, ctx, g, false)
}

/// Check global well-formedness with an explicit merge mode.
pub fn well_formed_with(
    checker: &Checker,
    ctx: &GlobalContext,
    g: &GlobalType,
    full_merge: bool,
) -> WellFormednessReport {
    let mut failures = Vec::new();
    let free = g.free_tvars();
    if !free.is_empty() {
        failures.push(WfFailure {
            role: "*".to_string(),
            reason: WfReason::FreeTypeVar,
            path: "<root>".to_string(),
            detail: format!(
                "free type variable(s): {}",
                free.into_iter().collect::<Vec<_>>().join(", ")
            ),
        });
    }
    if !g.contractive() {
        failures.push(WfFailure {
            role: "*".to_string(),
            reason: WfReason::NonContractive,
            path: "<root>".to_string(),
            detail: "recursion reaches its type variable without a message".to_string(),
        });
    }
    if failures.is_empty() {
        for role in g.participants() {
            if let Err(e) = project_with(checker, ctx, g, &role, full_merge) {
                let (reason, path, detail) = match &e {
                    ProjectionError::MergeFailure { path, detail } => {
                        (WfReason::MergeFailure, path.clone(), detail.clone())
                    }
                    ProjectionError::ExprTypeFailure { path, detail } => {
                        (WfReason::ExprTypeFailure, path.clone(), detail.clone())
                    }
                    ProjectionError::IrrelevantVariableUse { path, var } => (
                        WfReason::ExprTypeFailure,
                        path.clone(),
                        format!("irrelevant variable '{var}' used in an expression"),
                    ),
                };
                failures.push(WfFailure { role, reason, path, detail });
            }
        }
    }
    let warnings = if failures.is_empty() {
        empty_type_warnings(checker, ctx, g)
    } else {
        Vec::new()
    };
    WellFormednessReport { ok: failures.is_empty(), failures, warnings }
}

/// Flag payload and state types whose refinements are unsatisfiable under
/// the accumulated context — legal, but unfulfillable at runtime.
fn empty_type_warnings(
    checker: &Checker,
    ctx: &GlobalContext,
    g: &GlobalType,
) -> Vec<String> {
    let mut out = Vec::new();
    let mut path = Vec::new();
    walk_empty(checker, ctx, g, &mut path, &mut out);
    out
}

fn walk_empty(
    checker: &Checker,
    ctx: &GlobalContext,
    g: &GlobalType,
    path: &mut Vec<String>,
    out: &mut Vec<String>,
) {
    match g {
        GlobalType::End | GlobalType::TVar { .. } => {}
        GlobalType::Message { from, to, branches } => {
            for b in branches {
                let ty = b.ty.with_binder(b.var.clone());
                if type_is_empty(checker, ctx, &ty) {
                    path.push(b.label.clone());
                    out.push(format!(
                        "payload type of '{}' at {} admits no values",
                        b.label,
                        path_str(path)
                    ));
                    path.pop();
                }
                let knowers: BTreeSet<Role> =
                    [from.to_string(), to.to_string()].into_iter().collect();
                let (extended, _, _, cont) = ctx.extend_fresh(&b.var, &knowers, &ty, &b.cont);
                path.push(b.label.clone());
                walk_empty(checker, &extended, &cont, path, out);
                path.pop();
            }
        }
        GlobalType::Rec { tvar, ty, init, body } => {
            if type_is_empty(checker, ctx, ty) {
                out.push(format!(
                    "state type of 'rec {}' at {} admits no values",
                    tvar,
                    path_str(path)
                ));
            }
            let knowers = rec_knowers(checker, ctx, body, ty, init);
            if let Ok(extended) = ctx.extend(&ty.binder, &knowers, ty) {
                path.push(format!("rec {tvar}"));
                walk_empty(checker, &extended, body, path, out);
                path.pop();
            }
        }
    }
}

/// A type is empty under Γ when `⟦Γ⟧ ⟹ ¬E[binder := v]` is valid.
fn type_is_empty(checker: &Checker, ctx: &GlobalContext, ty: &RefinementType) -> bool {
    if ty.predicate.is_truth() {
        return false;
    }
    let assumptions = refine::encode_context(ctx);
    let mut vars = assumptions.vars.clone();
    if !vars.iter().any(|(v, _)| *v == ty.binder) {
        vars.push((ty.binder.clone(), ty.base));
    }
    let body = crate::syntax::Expression::implies(
        assumptions.body,
        crate::syntax::Expression::not(ty.predicate.clone()),
    );
    checker.check_validity(&refine::Formula { vars, body }).is_valid()
}

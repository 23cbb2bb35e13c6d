//! Core abstract syntax: expressions, refinement types, global and local
//! session types, typing contexts, and actions.
//!
//! Naming follows the formal presentation: a global type `G` describes the
//! whole protocol, a local type `L` one role's view of it. Refinement types
//! `x:S{E}` pair a base sort with a boolean predicate over the binder and any
//! variables already in scope. Global contexts `Γ` annotate each variable with
//! the set of roles that know its value; local contexts `Σ` annotate each
//! variable with a multiplicity — `ω` for values the role holds concretely,
//! `0` for latent knowledge usable only inside refinement predicates.

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicU64, Ordering};
use thiserror::Error;

/// A protocol participant. Role names are plain identifiers, unique within a
/// protocol declaration.
pub type Role = String;

/// A message or branch label.
pub type Label = String;

/// Variable names in expressions, payloads and contexts.
pub type Var = String;

/// Base sorts of payload and state values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BaseType {
    Int,
    Bool,
    Str,
    Unit,
}

impl BaseType {
    pub fn name(self) -> &'static str {
        match self {
            BaseType::Int => "int",
            BaseType::Bool => "bool",
            BaseType::Str => "string",
            BaseType::Unit => "unit",
        }
    }
}

/// Unary expression operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnOp {
    /// Boolean negation `!e`.
    Not,
    /// Integer negation `-e`.
    Neg,
}

/// Binary expression operators.
///
/// Division is deliberately absent to keep the validity fragment decidable;
/// implication exists for internally-built verification conditions and is
/// printable/parsable as `==>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
    Imp,
}

impl BinOp {
    /// Does this operator take integer operands?
    pub fn arithmetic(self) -> bool {
        matches!(self, BinOp::Add | BinOp::Sub | BinOp::Mul)
    }

    /// Does this operator compare the magnitude of integers?
    pub fn ordering(self) -> bool {
        matches!(self, BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge)
    }

    pub fn logical(self) -> bool {
        matches!(self, BinOp::And | BinOp::Or | BinOp::Imp)
    }
}

/// Pure, total expressions: the refinement predicate and state-update
/// language. No calls, effects or recursion, so `free_vars` is finite and
/// evaluation always terminates.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expression {
    Var(Var),
    IntLit(i64),
    BoolLit(bool),
    StrLit(String),
    Unary(UnOp, Box<Expression>),
    Binary(BinOp, Box<Expression>, Box<Expression>),
}

impl Expression {
    pub fn var(name: impl Into<String>) -> Self {
        Expression::Var(name.into())
    }

    pub fn int(n: i64) -> Self {
        Expression::IntLit(n)
    }

    pub fn truth() -> Self {
        Expression::BoolLit(true)
    }

    pub fn bin(op: BinOp, lhs: Expression, rhs: Expression) -> Self {
        Expression::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn and(lhs: Expression, rhs: Expression) -> Self {
        Expression::bin(BinOp::And, lhs, rhs)
    }

    pub fn implies(lhs: Expression, rhs: Expression) -> Self {
        Expression::bin(BinOp::Imp, lhs, rhs)
    }

    pub fn not(e: Expression) -> Self {
        Expression::Unary(UnOp::Not, Box::new(e))
    }

    /// Conjunction of a list, with `true` for the empty list.
    pub fn conj(es: impl IntoIterator<Item = Expression>) -> Self {
        let mut it = es.into_iter();
        match it.next() {
            None => Expression::truth(),
            Some(first) => it.fold(first, Expression::and),
        }
    }

    pub fn is_truth(&self) -> bool {
        matches!(self, Expression::BoolLit(true))
    }

    /// Free variables of the expression (expressions bind nothing).
    pub fn free_vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut out);
        out
    }

    fn collect_free(&self, out: &mut BTreeSet<Var>) {
        match self {
            Expression::Var(x) => {
                out.insert(x.clone());
            }
            Expression::IntLit(_) | Expression::BoolLit(_) | Expression::StrLit(_) => {}
            Expression::Unary(_, e) => e.collect_free(out),
            Expression::Binary(_, l, r) => {
                l.collect_free(out);
                r.collect_free(out);
            }
        }
    }

    /// Capture-free substitution of variables (expressions have no binders).
    pub fn subst(&self, from: &str, to: &Expression) -> Expression {
        match self {
            Expression::Var(x) if x == from => to.clone(),
            Expression::Var(_)
            | Expression::IntLit(_)
            | Expression::BoolLit(_)
            | Expression::StrLit(_) => self.clone(),
            Expression::Unary(op, e) => Expression::Unary(*op, Box::new(e.subst(from, to))),
            Expression::Binary(op, l, r) => {
                Expression::bin(*op, l.subst(from, to), r.subst(from, to))
            }
        }
    }

    /// Simultaneously rename variables.
    pub fn rename(&self, map: &dyn Fn(&str) -> Option<String>) -> Expression {
        match self {
            Expression::Var(x) => match map(x) {
                Some(y) => Expression::Var(y),
                None => self.clone(),
            },
            Expression::IntLit(_) | Expression::BoolLit(_) | Expression::StrLit(_) => self.clone(),
            Expression::Unary(op, e) => Expression::Unary(*op, Box::new(e.rename(map))),
            Expression::Binary(op, l, r) => Expression::bin(*op, l.rename(map), r.rename(map)),
        }
    }
}

/// A runtime value of one of the base sorts.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Int(i64),
    Bool(bool),
    Str(String),
    Unit,
}

impl Value {
    pub fn base_type(&self) -> BaseType {
        match self {
            Value::Int(_) => BaseType::Int,
            Value::Bool(_) => BaseType::Bool,
            Value::Str(_) => BaseType::Str,
            Value::Unit => BaseType::Unit,
        }
    }
}

impl std::fmt::Display for Value {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Value::Int(n) => write!(f, "{n}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Str(s) => write!(f, "{s:?}"),
            Value::Unit => write!(f, "unit"),
        }
    }
}

/// Failures of expression evaluation under an environment.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("unbound variable {0}")]
    UnboundVar(Var),
    #[error("sort mismatch: {0}")]
    Sort(String),
}

impl Expression {
    /// Evaluate under an environment. Integer arithmetic wraps on overflow
    /// (two's complement), which keeps evaluation total.
    pub fn eval(
        &self,
        env: &std::collections::BTreeMap<Var, Value>,
    ) -> Result<Value, EvalError> {
        match self {
            Expression::Var(x) => {
                env.get(x).cloned().ok_or_else(|| EvalError::UnboundVar(x.clone()))
            }
            Expression::IntLit(n) => Ok(Value::Int(*n)),
            Expression::BoolLit(b) => Ok(Value::Bool(*b)),
            Expression::StrLit(s) => Ok(Value::Str(s.clone())),
            Expression::Unary(op, e) => match (op, e.eval(env)?) {
                (UnOp::Not, Value::Bool(b)) => Ok(Value::Bool(!b)),
                (UnOp::Neg, Value::Int(n)) => Ok(Value::Int(n.wrapping_neg())),
                (op, v) => Err(EvalError::Sort(format!("{op:?} applied to {v}"))),
            },
            Expression::Binary(op, l, r) => {
                let lv = l.eval(env)?;
                let rv = r.eval(env)?;
                match (op, lv, rv) {
                    (BinOp::Add, Value::Int(a), Value::Int(b)) => {
                        Ok(Value::Int(a.wrapping_add(b)))
                    }
                    (BinOp::Sub, Value::Int(a), Value::Int(b)) => {
                        Ok(Value::Int(a.wrapping_sub(b)))
                    }
                    (BinOp::Mul, Value::Int(a), Value::Int(b)) => {
                        Ok(Value::Int(a.wrapping_mul(b)))
                    }
                    (BinOp::Lt, Value::Int(a), Value::Int(b)) => Ok(Value::Bool(a < b)),
                    (BinOp::Le, Value::Int(a), Value::Int(b)) => Ok(Value::Bool(a <= b)),
                    (BinOp::Gt, Value::Int(a), Value::Int(b)) => Ok(Value::Bool(a > b)),
                    (BinOp::Ge, Value::Int(a), Value::Int(b)) => Ok(Value::Bool(a >= b)),
                    (BinOp::Eq, a, b) if a.base_type() == b.base_type() => {
                        Ok(Value::Bool(a == b))
                    }
                    (BinOp::Ne, a, b) if a.base_type() == b.base_type() => {
                        Ok(Value::Bool(a != b))
                    }
                    (BinOp::And, Value::Bool(a), Value::Bool(b)) => Ok(Value::Bool(a && b)),
                    (BinOp::Or, Value::Bool(a), Value::Bool(b)) => Ok(Value::Bool(a || b)),
                    (BinOp::Imp, Value::Bool(a), Value::Bool(b)) => Ok(Value::Bool(!a || b)),
                    (op, a, b) => {
                        Err(EvalError::Sort(format!("{op:?} applied to {a} and {b}")))
                    }
                }
            }
        }
    }
}

/// A refinement type `x:S{E}`: base sort `S` restricted by predicate `E`, in
/// which `binder` is bound. A bare base type is represented as `x:S{true}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RefinementType {
    pub binder: Var,
    pub base: BaseType,
    pub predicate: Expression,
}

impl RefinementType {
    pub fn new(binder: impl Into<String>, base: BaseType, predicate: Expression) -> Self {
        RefinementType { binder: binder.into(), base, predicate }
    }

    /// `x:S{true}` — the trivial refinement of a base sort.
    pub fn base(binder: impl Into<String>, base: BaseType) -> Self {
        RefinementType::new(binder, base, Expression::truth())
    }

    /// free_vars(x:S{E}) = fv(E) \ {x}.
    pub fn free_vars(&self) -> BTreeSet<Var> {
        let mut fv = self.predicate.free_vars();
        fv.remove(&self.binder);
        fv
    }

    /// The predicate with the binder replaced by `subject`.
    pub fn predicate_on(&self, subject: &Expression) -> Expression {
        self.predicate.subst(&self.binder, subject)
    }

    /// Alpha-rename this type so its binder becomes `new`.
    pub fn with_binder(&self, new: impl Into<String>) -> RefinementType {
        let new = new.into();
        if new == self.binder {
            return self.clone();
        }
        let pred = self.predicate.subst(&self.binder, &Expression::var(new.clone()));
        RefinementType { binder: new, base: self.base, predicate: pred }
    }

    pub fn alpha_eq(&self, other: &RefinementType) -> bool {
        if self.base != other.base {
            return false;
        }
        if self.binder == other.binder {
            return self.predicate == other.predicate;
        }
        self.predicate == other.with_binder(self.binder.clone()).predicate
    }
}

/// One branch of a global message: `l(x:T). G`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GBranch {
    pub label: Label,
    /// Payload variable; identified with `ty.binder`.
    pub var: Var,
    pub ty: RefinementType,
    pub cont: GlobalType,
}

/// Global session types.
///
/// `Message` is the interaction `p→q{lᵢ(xᵢ:Tᵢ).Gᵢ}` with pairwise-distinct
/// labels; `Rec`/`TVar` form recursion with a refined state variable that is
/// initialised on entry (`μt(x:T)⟨x:=E⟩.G`) and updated at each back-jump
/// (`t⟨x:=E⟩`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GlobalType {
    Message { from: Role, to: Role, branches: Vec<GBranch> },
    Rec { tvar: String, ty: RefinementType, init: Expression, body: Box<GlobalType> },
    TVar { tvar: String, var: Var, assign: Expression },
    End,
}

/// One branch of a local send/receive: `l(x:T). L`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LBranch {
    pub label: Label,
    pub var: Var,
    pub ty: RefinementType,
    pub cont: LocalType,
}

/// Multiplicity of a local-context entry: `ω` (value held concretely) or `0`
/// (latent knowledge, usable only inside refinement predicates).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Multiplicity {
    Zero,
    Omega,
}

impl Multiplicity {
    pub fn symbol(self) -> &'static str {
        match self {
            Multiplicity::Zero => "0",
            Multiplicity::Omega => "w",
        }
    }
}

/// Local session types: one role's view of the protocol.
///
/// `Silent` is the silent prefix `⟨l⟩(x:T).L` — the role learns that some
/// third-party message bound `x` at type `T` without communicating. A local
/// `Rec` additionally records the multiplicity at which this role tracks the
/// state variable: `ω` when it can compute the initialiser/updates itself,
/// `0` when the variable is erased for it (types only).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LocalType {
    Recv { from: Role, branches: Vec<LBranch> },
    Send { to: Role, branches: Vec<LBranch> },
    Silent { label: Label, var: Var, ty: RefinementType, cont: Box<LocalType> },
    Rec {
        tvar: String,
        ty: RefinementType,
        init: Expression,
        mult: Multiplicity,
        body: Box<LocalType>,
    },
    TVar { tvar: String, var: Var, assign: Expression },
    End,
}

/// A communication action `p→q : l(x:T)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Action {
    pub from: Role,
    pub to: Role,
    pub label: Label,
    pub var: Var,
    pub ty: RefinementType,
}

impl Action {
    /// `subj(α) = {p, q}` — the two distinct subjects of the action.
    pub fn subjects(&self) -> [&Role; 2] {
        [&self.from, &self.to]
    }

    pub fn involves(&self, r: &str) -> bool {
        self.from == r || self.to == r
    }
}

/// A global-context entry `x^P : T` (value known to the roles in `knowers`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GEntry {
    pub var: Var,
    pub knowers: BTreeSet<Role>,
    pub ty: RefinementType,
}

/// Global typing context `Γ ::= ∅ | Γ, x^P : T` — ordered, unique names.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GlobalContext {
    pub entries: Vec<GEntry>,
}

/// A local-context entry `x^θ : T`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LEntry {
    pub var: Var,
    pub mult: Multiplicity,
    pub ty: RefinementType,
}

/// Local typing context `Σ ::= ∅ | Σ, x^θ : T` — ordered, unique names.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LocalContext {
    pub entries: Vec<LEntry>,
}

/// Extension of a typing context is partial: at most one of the defining
/// cases applies, and conflicting re-bindings are rejected.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("undefined context extension for {var}: {reason}")]
pub struct UndefinedExtension {
    pub var: Var,
    pub reason: String,
}

impl GlobalContext {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn lookup(&self, var: &str) -> Option<&GEntry> {
        self.entries.iter().find(|e| e.var == var)
    }

    pub fn domain(&self) -> BTreeSet<Var> {
        self.entries.iter().map(|e| e.var.clone()).collect()
    }

    /// `Γ ⊳ x^P : T` — append when fresh; upgrade an `x^∅` entry to `P`;
    /// idempotent when the entry already carries the same knower set and an
    /// alpha-equal type; undefined otherwise.
    pub fn extend(
        &self,
        var: &str,
        knowers: &BTreeSet<Role>,
        ty: &RefinementType,
    ) -> Result<GlobalContext, UndefinedExtension> {
        let mut out = self.clone();
        match out.entries.iter_mut().find(|e| e.var == var) {
            None => {
                out.entries.push(GEntry {
                    var: var.to_string(),
                    knowers: knowers.clone(),
                    ty: ty.clone(),
                });
                Ok(out)
            }
            Some(existing) => {
                if !existing.ty.alpha_eq(ty) {
                    return Err(UndefinedExtension {
                        var: var.to_string(),
                        reason: "existing entry has a different type".into(),
                    });
                }
                if existing.knowers.is_empty() {
                    existing.knowers = knowers.clone();
                    Ok(out)
                } else if &existing.knowers == knowers {
                    Ok(out)
                } else {
                    Err(UndefinedExtension {
                        var: var.to_string(),
                        reason: "existing entry has a different non-empty knower set".into(),
                    })
                }
            }
        }
    }

    /// [`extend`](Self::extend) up to alpha-conversion: when the extension
    /// is undefined because `var` clashes with an incompatible entry — a
    /// second binding site that happens to reuse the name, typically exposed
    /// by unfolding a recursion — the binder is renamed apart and the
    /// extension retried. Returns the extended context together with the
    /// binder, type, and continuation actually used. Renaming is
    /// deterministic ([`numbered_fresh`]) so that independent walks over the
    /// same scope agree on the chosen names.
    pub fn extend_fresh(
        &self,
        var: &str,
        knowers: &BTreeSet<Role>,
        ty: &RefinementType,
        cont: &GlobalType,
    ) -> (GlobalContext, Var, RefinementType, GlobalType) {
        let ty = ty.with_binder(var);
        if let Ok(ctx) = self.extend(var, knowers, &ty) {
            return (ctx, var.to_string(), ty, cont.clone());
        }
        let mut avoid = self.domain();
        avoid.extend(cont.var_names());
        avoid.extend(ty.free_vars());
        avoid.insert(var.to_string());
        let nv = numbered_fresh(var, &avoid);
        let ty2 = ty.with_binder(nv.clone());
        let cont2 = rename_free_global(cont, var, &nv);
        let ctx = self
            .extend(&nv, knowers, &ty2)
            .expect("renamed-apart binder is fresh in the context");
        (ctx, nv, ty2, cont2)
    }
}

impl LocalContext {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn lookup(&self, var: &str) -> Option<&LEntry> {
        self.entries.iter().find(|e| e.var == var)
    }

    pub fn domain(&self) -> BTreeSet<Var> {
        self.entries.iter().map(|e| e.var.clone()).collect()
    }

    /// `Σ ⊳ x^θ : T` — append when fresh; upgrade an `x^0` entry to `θ`;
    /// idempotent for `ω`/`ω`; undefined otherwise (in particular, an
    /// existing `ω` entry cannot be re-bound at `0`).
    pub fn extend(
        &self,
        var: &str,
        mult: Multiplicity,
        ty: &RefinementType,
    ) -> Result<LocalContext, UndefinedExtension> {
        let mut out = self.clone();
        match out.entries.iter_mut().find(|e| e.var == var) {
            None => {
                out.entries.push(LEntry { var: var.to_string(), mult, ty: ty.clone() });
                Ok(out)
            }
            Some(existing) => {
                if !existing.ty.alpha_eq(ty) {
                    return Err(UndefinedExtension {
                        var: var.to_string(),
                        reason: "existing entry has a different type".into(),
                    });
                }
                match (existing.mult, mult) {
                    (Multiplicity::Zero, m) => {
                        existing.mult = m;
                        Ok(out)
                    }
                    (Multiplicity::Omega, Multiplicity::Omega) => Ok(out),
                    (Multiplicity::Omega, Multiplicity::Zero) => Err(UndefinedExtension {
                        var: var.to_string(),
                        reason: "existing unrestricted entry cannot be re-bound as irrelevant"
                            .into(),
                    }),
                }
            }
        }
    }

    /// Local twin of [`GlobalContext::extend_fresh`]: on an incompatible
    /// clash the binder is renamed apart in the type and continuation and the
    /// extension retried.
    pub fn extend_fresh(
        &self,
        var: &str,
        mult: Multiplicity,
        ty: &RefinementType,
        cont: &LocalType,
    ) -> (LocalContext, Var, RefinementType, LocalType) {
        let ty = ty.with_binder(var);
        if let Ok(ctx) = self.extend(var, mult, &ty) {
            return (ctx, var.to_string(), ty, cont.clone());
        }
        let mut avoid = self.domain();
        avoid.extend(cont.var_names());
        avoid.extend(ty.free_vars());
        avoid.insert(var.to_string());
        let nv = numbered_fresh(var, &avoid);
        let ty2 = ty.with_binder(nv.clone());
        let cont2 = rename_free_local(cont, var, &nv);
        let ctx = self
            .extend(&nv, mult, &ty2)
            .expect("renamed-apart binder is fresh in the context");
        (ctx, nv, ty2, cont2)
    }
}

/// Violations of the structural invariants of the core syntax.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum CoreError {
    #[error("message has no branches")]
    EmptyBranches,
    #[error("duplicate branch label {0}")]
    DuplicateLabel(Label),
    #[error("message from {0} to itself")]
    SelfMessage(Role),
    #[error("recursion {0} is not contractive (no message before a recursive jump)")]
    NonContractive(String),
    #[error("unbound type variable {0}")]
    UnboundTVar(String),
    #[error("recursion jump {tvar} names variable {found}, binder is {bound}")]
    TVarBinderMismatch { tvar: String, found: Var, bound: Var },
}

static FRESH: AtomicU64 = AtomicU64::new(0);

/// A fresh variable name starting from `hint`, avoiding every name in
/// `avoid`. Source names are preserved as display hints (`hint_1`, ...).
pub fn fresh_var(hint: &str, avoid: &BTreeSet<Var>) -> Var {
    let base = if hint.is_empty() { "v" } else { hint };
    if !avoid.contains(base) {
        return base.to_string();
    }
    loop {
        let n = FRESH.fetch_add(1, Ordering::Relaxed);
        let cand = format!("{base}_{n}");
        if !avoid.contains(&cand) {
            return cand;
        }
    }
}

/// Deterministic variant of [`fresh_var`]: the first of `hint`, `hint_1`,
/// `hint_2`, … not contained in `avoid`. Renamings that must agree across
/// independent walks of the same scope (global stepping on one side,
/// per-role views on the other) use this, so the chosen name depends only
/// on the visible name set.
pub fn numbered_fresh(hint: &str, avoid: &BTreeSet<Var>) -> Var {
    let base = if hint.is_empty() { "v" } else { hint };
    if !avoid.contains(base) {
        return base.to_string();
    }
    (1u64..)
        .map(|k| format!("{base}_{k}"))
        .find(|cand| !avoid.contains(cand))
        .expect("unbounded candidate stream")
}

impl GlobalType {
    pub fn msg(from: impl Into<String>, to: impl Into<String>, branches: Vec<GBranch>) -> Self {
        GlobalType::Message { from: from.into(), to: to.into(), branches }
    }

    /// Single-branch message `from→to l(x:T). cont`.
    pub fn msg1(
        from: impl Into<String>,
        to: impl Into<String>,
        label: impl Into<String>,
        ty: RefinementType,
        cont: GlobalType,
    ) -> Self {
        let var = ty.binder.clone();
        GlobalType::msg(from, to, vec![GBranch { label: label.into(), var, ty, cont }])
    }

    /// Free expression variables, per the binding conventions: a payload
    /// variable binds its branch continuation, a Rec state variable binds the
    /// body (but not the initialiser), a refinement binder binds its
    /// predicate.
    pub fn free_vars(&self) -> BTreeSet<Var> {
        match self {
            GlobalType::Message { branches, .. } => {
                let mut out = BTreeSet::new();
                for b in branches {
                    out.extend(b.ty.free_vars());
                    let mut cont = b.cont.free_vars();
                    cont.remove(&b.var);
                    out.extend(cont);
                }
                out
            }
            GlobalType::Rec { ty, init, body, .. } => {
                let mut out = ty.free_vars();
                out.extend(init.free_vars());
                let mut b = body.free_vars();
                b.remove(&ty.binder);
                out.extend(b);
                out
            }
            GlobalType::TVar { assign, .. } => assign.free_vars(),
            GlobalType::End => BTreeSet::new(),
        }
    }

    /// Every variable name occurring anywhere in the type — binders and
    /// expression occurrences alike. Used to choose capture-free fresh names.
    pub fn var_names(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        match self {
            GlobalType::Message { branches, .. } => {
                for b in branches {
                    out.insert(b.var.clone());
                    out.insert(b.ty.binder.clone());
                    out.extend(b.ty.predicate.free_vars());
                    out.extend(b.cont.var_names());
                }
            }
            GlobalType::Rec { ty, init, body, .. } => {
                out.insert(ty.binder.clone());
                out.extend(ty.predicate.free_vars());
                out.extend(init.free_vars());
                out.extend(body.var_names());
            }
            GlobalType::TVar { var, assign, .. } => {
                out.insert(var.clone());
                out.extend(assign.free_vars());
            }
            GlobalType::End => {}
        }
        out
    }

    /// Free type variables (unbound recursion names).
    pub fn free_tvars(&self) -> BTreeSet<String> {
        fn walk(g: &GlobalType, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
            match g {
                GlobalType::Message { branches, .. } => {
                    for b in branches {
                        walk(&b.cont, bound, out);
                    }
                }
                GlobalType::Rec { tvar, body, .. } => {
                    bound.push(tvar.clone());
                    walk(body, bound, out);
                    bound.pop();
                }
                GlobalType::TVar { tvar, .. } => {
                    if !bound.contains(tvar) {
                        out.insert(tvar.clone());
                    }
                }
                GlobalType::End => {}
            }
        }
        let mut out = BTreeSet::new();
        walk(self, &mut Vec::new(), &mut out);
        out
    }

    /// Roles occurring as message endpoints (`r ∈ G`). Roles mentioned only
    /// inside refinements do not count as participants.
    pub fn participants(&self) -> BTreeSet<Role> {
        fn walk(g: &GlobalType, out: &mut BTreeSet<Role>) {
            match g {
                GlobalType::Message { from, to, branches } => {
                    out.insert(from.clone());
                    out.insert(to.clone());
                    for b in branches {
                        walk(&b.cont, out);
                    }
                }
                GlobalType::Rec { body, .. } => walk(body, out),
                GlobalType::TVar { .. } | GlobalType::End => {}
            }
        }
        let mut out = BTreeSet::new();
        walk(self, &mut out);
        out
    }

    /// Is every recursion contractive, i.e. guarded by at least one message
    /// before any jump back to its own type variable?
    pub fn contractive(&self) -> bool {
        match self {
            GlobalType::Message { branches, .. } => {
                branches.iter().all(|b| b.cont.contractive())
            }
            GlobalType::Rec { tvar, body, .. } => {
                guarded_global(tvar, body) && body.contractive()
            }
            GlobalType::TVar { .. } | GlobalType::End => true,
        }
    }

    /// Structural validity: non-empty messages, distinct labels, `from ≠ to`,
    /// contractiveness, bound type variables with matching binder names.
    pub fn validate(&self) -> Result<(), CoreError> {
        fn walk(g: &GlobalType, recs: &mut Vec<(String, Var)>) -> Result<(), CoreError> {
            match g {
                GlobalType::Message { from, to, branches } => {
                    if branches.is_empty() {
                        return Err(CoreError::EmptyBranches);
                    }
                    if from == to {
                        return Err(CoreError::SelfMessage(from.clone()));
                    }
                    let mut seen = BTreeSet::new();
                    for b in branches {
                        if !seen.insert(b.label.clone()) {
                            return Err(CoreError::DuplicateLabel(b.label.clone()));
                        }
                        walk(&b.cont, recs)?;
                    }
                    Ok(())
                }
                GlobalType::Rec { tvar, ty, body, .. } => {
                    if !guarded_global(tvar, body) {
                        return Err(CoreError::NonContractive(tvar.clone()));
                    }
                    recs.push((tvar.clone(), ty.binder.clone()));
                    let r = walk(body, recs);
                    recs.pop();
                    r
                }
                GlobalType::TVar { tvar, var, .. } => {
                    match recs.iter().rev().find(|(t, _)| t == tvar) {
                        None => Err(CoreError::UnboundTVar(tvar.clone())),
                        Some((_, bound)) if bound != var => Err(CoreError::TVarBinderMismatch {
                            tvar: tvar.clone(),
                            found: var.clone(),
                            bound: bound.clone(),
                        }),
                        Some(_) => Ok(()),
                    }
                }
                GlobalType::End => Ok(()),
            }
        }
        walk(self, &mut Vec::new())
    }

    /// One unfolding of a `Rec` node: the body with every `t⟨x:=E'⟩` replaced
    /// by the whole recursion re-seeded with `E'`. Capture-avoiding: binders
    /// in the body that clash with the recursion's free variables are
    /// alpha-renamed first.
    pub fn unfold(&self) -> GlobalType {
        let GlobalType::Rec { tvar, ty, body, .. } = self else {
            panic!("unfold: argument must be a Rec node");
        };
        let mut fvs = self.free_vars();
        fvs.insert(ty.binder.clone());
        let safe_body = rename_clashing_binders_global(body, &fvs);
        subst_tvar_global(&safe_body, tvar, ty, &safe_body)
    }
}

/// Does every path from the body of `rec t` to a `t⟨…⟩` pass a message?
fn guarded_global(tvar: &str, g: &GlobalType) -> bool {
    fn walk(tvar: &str, g: &GlobalType, guarded: bool) -> bool {
        match g {
            GlobalType::Message { branches, .. } => {
                branches.iter().all(|b| walk(tvar, &b.cont, true))
            }
            GlobalType::Rec { tvar: inner, body, .. } => {
                if inner == tvar {
                    true // shadowed: inner occurrences refer to the inner rec
                } else {
                    walk(tvar, body, guarded)
                }
            }
            GlobalType::TVar { tvar: t, .. } => t != tvar || guarded,
            GlobalType::End => true,
        }
    }
    walk(tvar, g, false)
}

/// Alpha-rename every binder in `g` whose name clashes with `avoid`.
fn rename_clashing_binders_global(g: &GlobalType, avoid: &BTreeSet<Var>) -> GlobalType {
    match g {
        GlobalType::Message { from, to, branches } => GlobalType::Message {
            from: from.clone(),
            to: to.clone(),
            branches: branches
                .iter()
                .map(|b| {
                    let cont = rename_clashing_binders_global(&b.cont, avoid);
                    if avoid.contains(&b.var) {
                        let mut all = avoid.clone();
                        all.extend(cont.free_vars());
                        all.extend(b.ty.free_vars());
                        let nv = numbered_fresh(&b.var, &all);
                        let cont = rename_free_global(&cont, &b.var, &nv);
                        GBranch {
                            label: b.label.clone(),
                            var: nv.clone(),
                            ty: b.ty.with_binder(nv),
                            cont,
                        }
                    } else {
                        GBranch { label: b.label.clone(), var: b.var.clone(), ty: b.ty.clone(), cont }
                    }
                })
                .collect(),
        },
        GlobalType::Rec { tvar, ty, init, body } => {
            let body2 = rename_clashing_binders_global(body, avoid);
            if avoid.contains(&ty.binder) {
                let mut all = avoid.clone();
                all.extend(body2.free_vars());
                all.extend(ty.free_vars());
                let nv = numbered_fresh(&ty.binder, &all);
                let body2 = rename_free_global(&body2, &ty.binder, &nv);
                GlobalType::Rec {
                    tvar: tvar.clone(),
                    ty: ty.with_binder(nv),
                    init: init.clone(),
                    body: Box::new(body2),
                }
            } else {
                GlobalType::Rec {
                    tvar: tvar.clone(),
                    ty: ty.clone(),
                    init: init.clone(),
                    body: Box::new(body2),
                }
            }
        }
        GlobalType::TVar { .. } | GlobalType::End => g.clone(),
    }
}

/// Rename free occurrences of expression variable `from` to `to` in `g`.
fn rename_free_global(g: &GlobalType, from: &str, to: &str) -> GlobalType {
    let map = |x: &str| if x == from { Some(to.to_string()) } else { None };
    match g {
        GlobalType::Message { from: f, to: t, branches } => GlobalType::Message {
            from: f.clone(),
            to: t.clone(),
            branches: branches
                .iter()
                .map(|b| {
                    let ty = RefinementType {
                        binder: b.ty.binder.clone(),
                        base: b.ty.base,
                        predicate: if b.ty.binder == from {
                            b.ty.predicate.clone()
                        } else {
                            b.ty.predicate.rename(&map)
                        },
                    };
                    let cont = if b.var == from {
                        b.cont.clone()
                    } else {
                        rename_free_global(&b.cont, from, to)
                    };
                    GBranch { label: b.label.clone(), var: b.var.clone(), ty, cont }
                })
                .collect(),
        },
        GlobalType::Rec { tvar, ty, init, body } => {
            let nty = RefinementType {
                binder: ty.binder.clone(),
                base: ty.base,
                predicate: if ty.binder == from {
                    ty.predicate.clone()
                } else {
                    ty.predicate.rename(&map)
                },
            };
            let nbody = if ty.binder == from {
                body.as_ref().clone()
            } else {
                rename_free_global(body, from, to)
            };
            GlobalType::Rec {
                tvar: tvar.clone(),
                ty: nty,
                init: init.rename(&map),
                body: Box::new(nbody),
            }
        }
        GlobalType::TVar { tvar, var, assign } => GlobalType::TVar {
            tvar: tvar.clone(),
            var: var.clone(),
            assign: assign.rename(&map),
        },
        GlobalType::End => GlobalType::End,
    }
}

/// Replace `tvar⟨x:=E'⟩` by `μtvar(x:T)⟨x:=E'⟩. body` throughout, stopping at
/// shadowing Recs of the same name.
fn subst_tvar_global(
    g: &GlobalType,
    tvar: &str,
    ty: &RefinementType,
    rec_body: &GlobalType,
) -> GlobalType {
    match g {
        GlobalType::Message { from, to, branches } => GlobalType::Message {
            from: from.clone(),
            to: to.clone(),
            branches: branches
                .iter()
                .map(|b| GBranch {
                    label: b.label.clone(),
                    var: b.var.clone(),
                    ty: b.ty.clone(),
                    cont: subst_tvar_global(&b.cont, tvar, ty, rec_body),
                })
                .collect(),
        },
        GlobalType::Rec { tvar: inner, ty: ity, init, body } => {
            if inner == tvar {
                g.clone()
            } else {
                GlobalType::Rec {
                    tvar: inner.clone(),
                    ty: ity.clone(),
                    init: init.clone(),
                    body: Box::new(subst_tvar_global(body, tvar, ty, rec_body)),
                }
            }
        }
        GlobalType::TVar { tvar: t, assign, .. } if t == tvar => GlobalType::Rec {
            tvar: tvar.to_string(),
            ty: ty.clone(),
            init: assign.clone(),
            body: Box::new(rec_body.clone()),
        },
        GlobalType::TVar { .. } | GlobalType::End => g.clone(),
    }
}

impl LocalType {
    pub fn send1(
        to: impl Into<String>,
        label: impl Into<String>,
        ty: RefinementType,
        cont: LocalType,
    ) -> Self {
        let var = ty.binder.clone();
        LocalType::Send {
            to: to.into(),
            branches: vec![LBranch { label: label.into(), var, ty, cont }],
        }
    }

    pub fn recv1(
        from: impl Into<String>,
        label: impl Into<String>,
        ty: RefinementType,
        cont: LocalType,
    ) -> Self {
        let var = ty.binder.clone();
        LocalType::Recv {
            from: from.into(),
            branches: vec![LBranch { label: label.into(), var, ty, cont }],
        }
    }

    pub fn silent(label: impl Into<String>, ty: RefinementType, cont: LocalType) -> Self {
        let var = ty.binder.clone();
        LocalType::Silent { label: label.into(), var, ty, cont: Box::new(cont) }
    }

    pub fn free_vars(&self) -> BTreeSet<Var> {
        match self {
            LocalType::Recv { branches, .. } | LocalType::Send { branches, .. } => {
                let mut out = BTreeSet::new();
                for b in branches {
                    out.extend(b.ty.free_vars());
                    let mut cont = b.cont.free_vars();
                    cont.remove(&b.var);
                    out.extend(cont);
                }
                out
            }
            LocalType::Silent { var, ty, cont, .. } => {
                let mut out = ty.free_vars();
                let mut c = cont.free_vars();
                c.remove(var);
                out.extend(c);
                out
            }
            LocalType::Rec { ty, init, body, .. } => {
                let mut out = ty.free_vars();
                out.extend(init.free_vars());
                let mut b = body.free_vars();
                b.remove(&ty.binder);
                out.extend(b);
                out
            }
            LocalType::TVar { assign, .. } => assign.free_vars(),
            LocalType::End => BTreeSet::new(),
        }
    }

    /// Every variable name occurring anywhere in the type — binders and
    /// expression occurrences alike. Used to choose capture-free fresh names.
    pub fn var_names(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        match self {
            LocalType::Recv { branches, .. } | LocalType::Send { branches, .. } => {
                for b in branches {
                    out.insert(b.var.clone());
                    out.insert(b.ty.binder.clone());
                    out.extend(b.ty.predicate.free_vars());
                    out.extend(b.cont.var_names());
                }
            }
            LocalType::Silent { var, ty, cont, .. } => {
                out.insert(var.clone());
                out.insert(ty.binder.clone());
                out.extend(ty.predicate.free_vars());
                out.extend(cont.var_names());
            }
            LocalType::Rec { ty, init, body, .. } => {
                out.insert(ty.binder.clone());
                out.extend(ty.predicate.free_vars());
                out.extend(init.free_vars());
                out.extend(body.var_names());
            }
            LocalType::TVar { var, assign, .. } => {
                out.insert(var.clone());
                out.extend(assign.free_vars());
            }
            LocalType::End => {}
        }
        out
    }

    pub fn free_tvars(&self) -> BTreeSet<String> {
        fn walk(l: &LocalType, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
            match l {
                LocalType::Recv { branches, .. } | LocalType::Send { branches, .. } => {
                    for b in branches {
                        walk(&b.cont, bound, out);
                    }
                }
                LocalType::Silent { cont, .. } => walk(cont, bound, out),
                LocalType::Rec { tvar, body, .. } => {
                    bound.push(tvar.clone());
                    walk(body, bound, out);
                    bound.pop();
                }
                LocalType::TVar { tvar, .. } => {
                    if !bound.contains(tvar) {
                        out.insert(tvar.clone());
                    }
                }
                LocalType::End => {}
            }
        }
        let mut out = BTreeSet::new();
        walk(self, &mut Vec::new(), &mut out);
        out
    }

    /// One unfolding of a local `Rec` node (see [`GlobalType::unfold`]).
    pub fn unfold(&self) -> LocalType {
        let LocalType::Rec { tvar, ty, mult, body, .. } = self else {
            panic!("unfold: argument must be a Rec node");
        };
        let mut fvs = self.free_vars();
        fvs.insert(ty.binder.clone());
        let safe_body = rename_clashing_binders_local(body, &fvs);
        subst_tvar_local(&safe_body, tvar, ty, *mult, &safe_body)
    }
}

fn rename_clashing_binders_local(l: &LocalType, avoid: &BTreeSet<Var>) -> LocalType {
    match l {
        LocalType::Recv { from, branches } => LocalType::Recv {
            from: from.clone(),
            branches: rename_clashing_branches(branches, avoid),
        },
        LocalType::Send { to, branches } => LocalType::Send {
            to: to.clone(),
            branches: rename_clashing_branches(branches, avoid),
        },
        LocalType::Silent { label, var, ty, cont } => {
            let cont2 = rename_clashing_binders_local(cont, avoid);
            if avoid.contains(var) {
                let mut all = avoid.clone();
                all.extend(cont2.free_vars());
                all.extend(ty.free_vars());
                let nv = numbered_fresh(var, &all);
                let cont2 = rename_free_local(&cont2, var, &nv);
                LocalType::Silent {
                    label: label.clone(),
                    var: nv.clone(),
                    ty: ty.with_binder(nv),
                    cont: Box::new(cont2),
                }
            } else {
                LocalType::Silent {
                    label: label.clone(),
                    var: var.clone(),
                    ty: ty.clone(),
                    cont: Box::new(cont2),
                }
            }
        }
        LocalType::Rec { tvar, ty, init, mult, body } => {
            let body2 = rename_clashing_binders_local(body, avoid);
            if avoid.contains(&ty.binder) {
                let mut all = avoid.clone();
                all.extend(body2.free_vars());
                all.extend(ty.free_vars());
                let nv = numbered_fresh(&ty.binder, &all);
                let body2 = rename_free_local(&body2, &ty.binder, &nv);
                LocalType::Rec {
                    tvar: tvar.clone(),
                    ty: ty.with_binder(nv),
                    init: init.clone(),
                    mult: *mult,
                    body: Box::new(body2),
                }
            } else {
                LocalType::Rec {
                    tvar: tvar.clone(),
                    ty: ty.clone(),
                    init: init.clone(),
                    mult: *mult,
                    body: Box::new(body2),
                }
            }
        }
        LocalType::TVar { .. } | LocalType::End => l.clone(),
    }
}

fn rename_clashing_branches(branches: &[LBranch], avoid: &BTreeSet<Var>) -> Vec<LBranch> {
    branches
        .iter()
        .map(|b| {
            let cont = rename_clashing_binders_local(&b.cont, avoid);
            if avoid.contains(&b.var) {
                let mut all = avoid.clone();
                all.extend(cont.free_vars());
                all.extend(b.ty.free_vars());
                let nv = numbered_fresh(&b.var, &all);
                let cont = rename_free_local(&cont, &b.var, &nv);
                LBranch { label: b.label.clone(), var: nv.clone(), ty: b.ty.with_binder(nv), cont }
            } else {
                LBranch { label: b.label.clone(), var: b.var.clone(), ty: b.ty.clone(), cont }
            }
        })
        .collect()
}

fn rename_free_local(l: &LocalType, from: &str, to: &str) -> LocalType {
    let map = |x: &str| if x == from { Some(to.to_string()) } else { None };
    let rename_ty = |ty: &RefinementType| RefinementType {
        binder: ty.binder.clone(),
        base: ty.base,
        predicate: if ty.binder == from { ty.predicate.clone() } else { ty.predicate.rename(&map) },
    };
    let rename_branches = |branches: &[LBranch]| {
        branches
            .iter()
            .map(|b| LBranch {
                label: b.label.clone(),
                var: b.var.clone(),
                ty: rename_ty(&b.ty),
                cont: if b.var == from { b.cont.clone() } else { rename_free_local(&b.cont, from, to) },
            })
            .collect()
    };
    match l {
        LocalType::Recv { from: f, branches } => {
            LocalType::Recv { from: f.clone(), branches: rename_branches(branches) }
        }
        LocalType::Send { to: t, branches } => {
            LocalType::Send { to: t.clone(), branches: rename_branches(branches) }
        }
        LocalType::Silent { label, var, ty, cont } => LocalType::Silent {
            label: label.clone(),
            var: var.clone(),
            ty: rename_ty(ty),
            cont: Box::new(if var == from {
                cont.as_ref().clone()
            } else {
                rename_free_local(cont, from, to)
            }),
        },
        LocalType::Rec { tvar, ty, init, mult, body } => LocalType::Rec {
            tvar: tvar.clone(),
            ty: rename_ty(ty),
            init: init.rename(&map),
            mult: *mult,
            body: Box::new(if ty.binder == from {
                body.as_ref().clone()
            } else {
                rename_free_local(body, from, to)
            }),
        },
        LocalType::TVar { tvar, var, assign } => LocalType::TVar {
            tvar: tvar.clone(),
            var: var.clone(),
            assign: assign.rename(&map),
        },
        LocalType::End => LocalType::End,
    }
}

fn subst_tvar_local(
    l: &LocalType,
    tvar: &str,
    ty: &RefinementType,
    mult: Multiplicity,
    rec_body: &LocalType,
) -> LocalType {
    match l {
        LocalType::Recv { from, branches } => LocalType::Recv {
            from: from.clone(),
            branches: branches
                .iter()
                .map(|b| LBranch {
                    label: b.label.clone(),
                    var: b.var.clone(),
                    ty: b.ty.clone(),
                    cont: subst_tvar_local(&b.cont, tvar, ty, mult, rec_body),
                })
                .collect(),
        },
        LocalType::Send { to, branches } => LocalType::Send {
            to: to.clone(),
            branches: branches
                .iter()
                .map(|b| LBranch {
                    label: b.label.clone(),
                    var: b.var.clone(),
                    ty: b.ty.clone(),
                    cont: subst_tvar_local(&b.cont, tvar, ty, mult, rec_body),
                })
                .collect(),
        },
        LocalType::Silent { label, var, ty: sty, cont } => LocalType::Silent {
            label: label.clone(),
            var: var.clone(),
            ty: sty.clone(),
            cont: Box::new(subst_tvar_local(cont, tvar, ty, mult, rec_body)),
        },
        LocalType::Rec { tvar: inner, ty: ity, init, mult: imult, body } => {
            if inner == tvar {
                l.clone()
            } else {
                LocalType::Rec {
                    tvar: inner.clone(),
                    ty: ity.clone(),
                    init: init.clone(),
                    mult: *imult,
                    body: Box::new(subst_tvar_local(body, tvar, ty, mult, rec_body)),
                }
            }
        }
        LocalType::TVar { tvar: t, assign, .. } if t == tvar => LocalType::Rec {
            tvar: tvar.to_string(),
            ty: ty.clone(),
            init: assign.clone(),
            mult,
            body: Box::new(rec_body.clone()),
        },
        LocalType::TVar { .. } | LocalType::End => l.clone(),
    }
}

/// `free_vars` over every syntax sort, mirroring the formal `fv(·)`.
pub fn free_vars_refinement(t: &RefinementType) -> BTreeSet<Var> {
    t.free_vars()
}

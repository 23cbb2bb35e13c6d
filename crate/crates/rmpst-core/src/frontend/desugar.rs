//! Desugaring of parsed surface protocols into core global types.
//!
//! Multi-variable loop state (a `rec` with several variables, or an aux
//! protocol's `R[x1, x2]` annotation) flattens into consecutive single
//! variable `Rec` nestings; a recursive `do`/`continue` then becomes a jump
//! to the innermost nesting, which is why only the innermost (last) state
//! variable may change across iterations. Aux protocols are inlined at their
//! call sites.

use super::lexer::Span;
use super::parser::{AuxProtocol, ProtocolDecl, Stmt, StmtKind};
use super::Diagnostic;
use crate::syntax::{BaseType, Expression, GBranch, GlobalType, RefinementType, Role, Var};
use std::collections::BTreeSet;
use thiserror::Error;

/// Desugaring failures.
#[derive(Debug, Clone, Error)]
pub enum DesugarError {
    /// The branches of one `choice` do not all start with a message from the
    /// deciding role to one receiver.
    #[error("non-directed choice: {detail}")]
    NonDirectedChoice { span: Span, detail: String },
    /// A recursion pattern outside the supported flattened-state fragment.
    #[error("unsupported nesting: {detail}")]
    UnsupportedNesting { span: Span, detail: String },
    /// Anything else that prevents building a valid core type.
    #[error("{detail}")]
    Invalid { span: Span, detail: String },
}

impl DesugarError {
    pub fn span(&self) -> Span {
        match self {
            DesugarError::NonDirectedChoice { span, .. }
            | DesugarError::UnsupportedNesting { span, .. }
            | DesugarError::Invalid { span, .. } => *span,
        }
    }

    pub fn into_diagnostic(self) -> Diagnostic {
        let span = self.span();
        Diagnostic::error(self.to_string(), span)
    }
}

/// One enclosing recursion: its surface name (aux protocol or rec label),
/// the role tagged in the state annotation (aux only) and the state
/// variables in declaration order paired with their core recursion names.
struct ScopeEntry {
    name: String,
    role_tag: Option<Role>,
    vars: Vec<(Var, String)>,
}

fn core_tvar(name: &str, var: &str, arity: usize) -> String {
    if arity == 1 {
        name.to_string()
    } else {
        format!("{name}_{var}")
    }
}

/// Jump back to an enclosing recursion given the full positional argument
/// list. All state variables except possibly the innermost must be passed
/// through unchanged.
fn make_jump(
    scope: &ScopeEntry,
    args: &[Expression],
    span: Span,
) -> Result<GlobalType, DesugarError> {
    let n = scope.vars.len();
    if args.len() != n {
        return Err(DesugarError::Invalid {
            span,
            detail: format!("recursion `{}` takes {n} state argument(s), {} given", scope.name, args.len()),
        });
    }
    let mut prefix = 0;
    while prefix < n && args[prefix] == Expression::var(scope.vars[prefix].0.clone()) {
        prefix += 1;
    }
    let (var, tvar) = &scope.vars[n - 1];
    let assign = if prefix >= n {
        Expression::var(var.clone())
    } else if prefix == n - 1 {
        args[n - 1].clone()
    } else {
        return Err(DesugarError::UnsupportedNesting {
            span,
            detail: format!(
                "recursive call into `{}` may only update the innermost state variable `{var}`; \
                 earlier state variables must be passed through unchanged",
                scope.name
            ),
        });
    };
    Ok(GlobalType::TVar { tvar: tvar.clone(), var: var.clone(), assign })
}

/// Names used anywhere in a statement tree, for synthesizing fresh ones.
fn stmt_names(stmts: &[Stmt], out: &mut BTreeSet<Var>) {
    for s in stmts {
        match &s.kind {
            StmtKind::Message { var, ty, .. } => {
                if let Some(v) = var {
                    out.insert(v.clone());
                }
                out.insert(ty.binder.clone());
                out.extend(ty.predicate.free_vars());
            }
            StmtKind::Choice { blocks, .. } => {
                for b in blocks {
                    stmt_names(b, out);
                }
            }
            StmtKind::Do { args, .. } => {
                for a in args {
                    out.extend(a.free_vars());
                }
            }
            StmtKind::Rec { vars, body, .. } => {
                for (v, ty, init) in vars {
                    out.insert(v.clone());
                    out.insert(ty.binder.clone());
                    out.extend(ty.predicate.free_vars());
                    out.extend(init.free_vars());
                }
                stmt_names(body, out);
            }
            StmtKind::Continue { args, .. } => {
                for (v, e) in args {
                    out.insert(v.clone());
                    out.extend(e.free_vars());
                }
            }
        }
    }
}

fn guard_capture(
    state_vars: &[(Var, RefinementType)],
    acc: &GlobalType,
    span: Span,
) -> Result<(), DesugarError> {
    if matches!(acc, GlobalType::End) {
        return Ok(());
    }
    let fv = acc.free_vars();
    for (v, _) in state_vars {
        if fv.contains(v) {
            return Err(DesugarError::UnsupportedNesting {
                span,
                detail: format!(
                    "state variable `{v}` would capture a variable of the continuation \
                     following the loop"
                ),
            });
        }
    }
    Ok(())
}

fn seq(
    stmts: &[Stmt],
    tail: GlobalType,
    scopes: &mut Vec<ScopeEntry>,
    aux: &[AuxProtocol],
) -> Result<GlobalType, DesugarError> {
    let mut acc = tail;
    for s in stmts.iter().rev() {
        acc = step(s, acc, scopes, aux)?;
    }
    Ok(acc)
}

fn step(
    s: &Stmt,
    acc: GlobalType,
    scopes: &mut Vec<ScopeEntry>,
    aux: &[AuxProtocol],
) -> Result<GlobalType, DesugarError> {
    match &s.kind {
        StmtKind::Message { label, var, ty, from, to } => {
            let v = var.clone().unwrap_or_else(|| ty.binder.clone());
            let ty = ty.with_binder(v.clone());
            Ok(GlobalType::Message {
                from: from.clone(),
                to: to.clone(),
                branches: vec![GBranch { label: label.clone(), var: v, ty, cont: acc }],
            })
        }
        StmtKind::Choice { at, blocks } => {
            let mut receiver: Option<Role> = None;
            let mut branches: Vec<GBranch> = Vec::new();
            for b in blocks {
                let g = seq(b, acc.clone(), scopes, aux)?;
                match g {
                    GlobalType::Message { from, to, branches: bs } if &from == at => {
                        match &receiver {
                            None => receiver = Some(to.clone()),
                            Some(r) if r == &to => {}
                            Some(r) => {
                                return Err(DesugarError::NonDirectedChoice {
                                    span: s.span,
                                    detail: format!(
                                        "branches address different receivers `{r}` and `{to}`"
                                    ),
                                })
                            }
                        }
                        branches.extend(bs);
                    }
                    GlobalType::Message { from, .. } => {
                        return Err(DesugarError::NonDirectedChoice {
                            span: s.span,
                            detail: format!(
                                "branch starts with sender `{from}`, but the choice is at `{at}`"
                            ),
                        })
                    }
                    _ => {
                        return Err(DesugarError::NonDirectedChoice {
                            span: s.span,
                            detail: "branch does not start with a message".into(),
                        })
                    }
                }
            }
            let mut seen = BTreeSet::new();
            for b in &branches {
                if !seen.insert(b.label.clone()) {
                    return Err(DesugarError::Invalid {
                        span: s.span,
                        detail: format!("duplicate label `{}` across choice branches", b.label),
                    });
                }
            }
            let from = at.clone();
            let to = receiver.expect("parser guarantees at least one choice block");
            Ok(GlobalType::Message { from, to, branches })
        }
        StmtKind::Do { name, state_role, args } => {
            if let Some(pos) = scopes.iter().rposition(|sc| &sc.name == name) {
                let scope = &scopes[pos];
                if scope.role_tag.as_deref() != Some(state_role.as_str()) {
                    return Err(DesugarError::Invalid {
                        span: s.span,
                        detail: format!(
                            "`do {name}` tags role `{state_role}`, but the protocol's state \
                             annotation names a different role"
                        ),
                    });
                }
                return make_jump(scope, args, s.span);
            }
            let a = aux
                .iter()
                .find(|a| &a.name == name)
                .expect("parser checked do targets");
            if &a.state_role != state_role {
                return Err(DesugarError::Invalid {
                    span: s.span,
                    detail: format!(
                        "`do {name}` tags role `{state_role}`, but `{name}` annotates `{}`",
                        a.state_role
                    ),
                });
            }
            guard_capture(&a.state_vars, &acc, s.span)?;
            let vars: Vec<(Var, String)> = a
                .state_vars
                .iter()
                .map(|(v, _)| (v.clone(), core_tvar(name, v, a.state_vars.len())))
                .collect();
            scopes.push(ScopeEntry {
                name: name.clone(),
                role_tag: Some(a.state_role.clone()),
                vars: vars.clone(),
            });
            let body = seq(&a.body, acc, scopes, aux);
            scopes.pop();
            let mut g = body?;
            for (i, (_, ty)) in a.state_vars.iter().enumerate().rev() {
                g = GlobalType::Rec {
                    tvar: vars[i].1.clone(),
                    ty: ty.clone(),
                    init: args[i].clone(),
                    body: Box::new(g),
                };
            }
            Ok(g)
        }
        StmtKind::Rec { tvar, vars, body } => {
            let vlist: Vec<(Var, RefinementType, Expression)> = if vars.is_empty() {
                // A stateless `rec t { ... }` still needs a core state
                // variable; use a constant that every role can track.
                let mut taken = BTreeSet::new();
                stmt_names(body, &mut taken);
                let v = crate::syntax::fresh_var("st", &taken);
                vec![(v.clone(), RefinementType::base(v, BaseType::Int), Expression::int(0))]
            } else {
                vars.clone()
            };
            let only_tys: Vec<(Var, RefinementType)> =
                vlist.iter().map(|(v, t, _)| (v.clone(), t.clone())).collect();
            guard_capture(&only_tys, &acc, s.span)?;
            let corevars: Vec<(Var, String)> = vlist
                .iter()
                .map(|(v, _, _)| (v.clone(), core_tvar(tvar, v, vlist.len())))
                .collect();
            scopes.push(ScopeEntry { name: tvar.clone(), role_tag: None, vars: corevars.clone() });
            let b = seq(body, acc, scopes, aux);
            scopes.pop();
            let mut g = b?;
            for (i, (_, ty, init)) in vlist.iter().enumerate().rev() {
                g = GlobalType::Rec {
                    tvar: corevars[i].1.clone(),
                    ty: ty.clone(),
                    init: init.clone(),
                    body: Box::new(g),
                };
            }
            Ok(g)
        }
        StmtKind::Continue { tvar, args } => {
            let Some(pos) = scopes.iter().rposition(|sc| &sc.name == tvar) else {
                return Err(DesugarError::Invalid {
                    span: s.span,
                    detail: format!("`continue {tvar}` outside of `rec {tvar}`"),
                });
            };
            let scope = &scopes[pos];
            let mut full: Vec<Expression> =
                scope.vars.iter().map(|(v, _)| Expression::var(v.clone())).collect();
            for (v, e) in args {
                let Some(idx) = scope.vars.iter().position(|(sv, _)| sv == v) else {
                    return Err(DesugarError::Invalid {
                        span: s.span,
                        detail: format!("unknown state variable `{v}` of recursion `{tvar}`"),
                    });
                };
                full[idx] = e.clone();
            }
            make_jump(scope, &full, s.span)
        }
    }
}

/// Desugar a diagnostic-free protocol declaration into a core global type.
pub fn desugar(decl: &ProtocolDecl) -> Result<GlobalType, DesugarError> {
    if let Some(g) = &decl.core {
        return Ok(g.clone());
    }
    let mut scopes = Vec::new();
    let g = seq(&decl.body, GlobalType::End, &mut scopes, &decl.aux_protocols)?;
    g.validate().map_err(|e| DesugarError::Invalid {
        span: Span::start(),
        detail: e.to_string(),
    })?;
    let fv = g.free_vars();
    if !fv.is_empty() {
        let names: Vec<&str> = fv.iter().map(String::as_str).collect();
        return Err(DesugarError::Invalid {
            span: Span::start(),
            detail: format!("unbound variable(s) in refinements: {}", names.join(", ")),
        });
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::super::corpus::{self, G2 as G2_SRC, G3 as G3_SRC, HIGHERLOWER, PINGPONG1};
    use super::super::{load_global, parse_global_type, parse_protocol};
    use super::*;
    use crate::pretty::pretty_global;

    fn corpus() -> Vec<(&'static str, &'static str)> {
        corpus::all()
    }

    #[test]
    fn minimal_protocol() {
        let decl =
            parse_protocol("global protocol P(role A, role B){ m(x:int) from A to B; }").unwrap();
        assert_eq!(decl.roles, vec!["A".to_string(), "B".to_string()]);
        let g = desugar(&decl).unwrap();
        let GlobalType::Message { from, to, branches } = &g else {
            panic!("expected single message");
        };
        assert_eq!((from.as_str(), to.as_str()), ("A", "B"));
        assert_eq!(branches.len(), 1);
        assert_eq!(branches[0].label, "m");
        assert!(matches!(branches[0].cont, GlobalType::End));
    }

    #[test]
    fn unknown_role_diagnostic() {
        let r = parse_protocol("global protocol P(role A, role B){ m(x:int) from A to C; }");
        let errs = r.err().expect("must be rejected");
        assert!(errs.iter().any(|d| d.message.contains("unknown role `C`")));
    }

    #[test]
    fn higherlower_shape() {
        let decl = parse_protocol(HIGHERLOWER).unwrap();
        assert_eq!(decl.roles.len(), 3);
        assert_eq!(decl.aux_protocols.len(), 1);
        let g = desugar(&decl).unwrap();
        // start, limit, then the two-variable recursion.
        let GlobalType::Message { branches: b1, .. } = &g else { panic!() };
        assert_eq!(b1[0].label, "start");
        let GlobalType::Message { branches: b2, .. } = &b1[0].cont else { panic!() };
        assert_eq!(b2[0].label, "limit");
        let GlobalType::Rec { tvar: t_n, init: i_n, body, .. } = &b2[0].cont else {
            panic!("expected outer Rec");
        };
        assert_eq!(t_n, "Game_n");
        assert_eq!(i_n, &Expression::var("n0"));
        let GlobalType::Rec { tvar: t_t, init: i_t, body: inner, .. } = body.as_ref() else {
            panic!("expected inner Rec");
        };
        assert_eq!(t_t, "Game_t");
        assert_eq!(i_t, &Expression::var("t0"));
        // guess, then the four-way choice at B.
        let GlobalType::Message { from, to, branches } = inner.as_ref() else { panic!() };
        assert_eq!((from.as_str(), to.as_str()), ("C", "B"));
        assert_eq!(branches[0].label, "guess");
        let GlobalType::Message { from, to, branches } = &branches[0].cont else { panic!() };
        assert_eq!((from.as_str(), to.as_str()), ("B", "C"));
        let labels: Vec<&str> = branches.iter().map(|b| b.label.as_str()).collect();
        assert_eq!(labels, vec!["higher", "lower", "win", "lose"]);
        // The win branch reports lose to A and ends.
        let GlobalType::Message { to, branches: wb, .. } = &branches[2].cont else { panic!() };
        assert_eq!(to, "A");
        assert_eq!(wb[0].label, "lose");
        assert!(matches!(wb[0].cont, GlobalType::End));
        // The higher branch loops with t decremented.
        let GlobalType::Message { branches: hb, .. } = &branches[0].cont else { panic!() };
        let GlobalType::TVar { tvar, var, assign } = &hb[0].cont else {
            panic!("expected jump in higher branch");
        };
        assert_eq!(tvar, "Game_t");
        assert_eq!(var, "t");
        assert_eq!(
            assign,
            &Expression::bin(
                crate::syntax::BinOp::Sub,
                Expression::var("t"),
                Expression::int(1)
            )
        );
    }

    #[test]
    fn pingpong_shape() {
        let g = load_global(PINGPONG1).unwrap();
        let GlobalType::Rec { tvar, body, .. } = &g else { panic!("expected Rec at top") };
        assert_eq!(tvar, "t");
        let GlobalType::Message { branches, .. } = body.as_ref() else { panic!() };
        assert_eq!(branches[0].label, "Ping");
        let GlobalType::Message { branches: b2, .. } = &branches[0].cont else { panic!() };
        assert_eq!(b2[0].label, "Pong");
        assert!(matches!(&b2[0].cont, GlobalType::TVar { tvar, .. } if tvar == "t"));
    }

    #[test]
    fn g2_branches() {
        let g = load_global(G2_SRC).unwrap();
        let GlobalType::Message { branches, .. } = &g else { panic!() };
        assert_eq!(branches[0].label, "Number");
        let GlobalType::Message { from, to, branches } = &branches[0].cont else { panic!() };
        assert_eq!((from.as_str(), to.as_str()), ("B", "C"));
        let labels: Vec<&str> = branches.iter().map(|b| b.label.as_str()).collect();
        assert_eq!(labels, vec!["Positive", "Zero", "Negative"]);
        assert_eq!(branches[0].ty.base, BaseType::Unit);
    }

    #[test]
    fn g3_unfold_has_password_head() {
        let g = load_global(G3_SRC).unwrap();
        assert!(matches!(&g, GlobalType::Rec { .. }));
        let u = g.unfold();
        let GlobalType::Message { branches, .. } = &u else { panic!("expected message head") };
        assert_eq!(branches[0].label, "Password");
    }

    #[test]
    fn nondirected_choice_rejected() {
        let src = "global protocol P(role A, role B, role C){\
                   choice at B { a() from B to C; } or { b() from C to B; } }";
        let decl = parse_protocol(src).unwrap();
        let err = desugar(&decl).unwrap_err();
        assert!(matches!(err, DesugarError::NonDirectedChoice { .. }));
    }

    #[test]
    fn unsupported_nesting_rejected() {
        let src = "aux global protocol X(role A, role B) @ B[n: int, t: int] {\
                     m(x: int) from A to B;\
                     do X(B[n - 1, t]);\
                   }\
                   global protocol P(role A, role B){ do X(B[0, 0]); }";
        let decl = parse_protocol(src).unwrap();
        let err = desugar(&decl).unwrap_err();
        assert!(matches!(err, DesugarError::UnsupportedNesting { .. }));
    }

    #[test]
    fn corpus_desugars_and_validates() {
        for (name, src) in corpus() {
            let g = load_global(src).unwrap_or_else(|e| panic!("{name}: {e:?}"));
            g.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
            assert!(g.free_vars().is_empty(), "{name} has free variables");
        }
    }

    #[test]
    fn roundtrip_print_parse_fixpoint() {
        for (name, src) in corpus() {
            let g = load_global(src).unwrap();
            let p1 = pretty_global(&g);
            let g2 = parse_global_type(&p1).unwrap_or_else(|e| panic!("{name}: {e:?}\n{p1}"));
            assert_eq!(g2, g, "{name}: parse of printed text differs");
            let p2 = pretty_global(&g2);
            assert_eq!(p1, p2, "{name}: print not stable");
        }
    }

    #[test]
    fn direct_core_syntax_accepted() {
        let g = load_global("A -> B m(x: int{x > 0}). end").unwrap();
        let GlobalType::Message { branches, .. } = &g else { panic!() };
        assert_eq!(branches[0].label, "m");
    }
}

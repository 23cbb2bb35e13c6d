//! Canonical ASCII pretty-printer for the core syntax.
//!
//! The printer is the inverse of the core-syntax reader: `parse . print` is
//! the identity on ASTs, and `print . parse . print` equals `print` on any
//! accepted text. Trivial refinements `{true}` are omitted, equality prints
//! as `=`, conjunction as `&&`, and silent prefixes as `<label>(x: T)`.

use crate::syntax::{
    Action, BinOp, Expression, GlobalContext, GlobalType, LBranch, LocalContext, LocalType,
    Multiplicity, RefinementType, UnOp,
};
use std::fmt::Write as _;

pub fn binop_str(op: BinOp) -> &'static str {
    match op {
        BinOp::Add => "+",
        BinOp::Sub => "-",
        BinOp::Mul => "*",
        BinOp::Eq => "=",
        BinOp::Ne => "!=",
        BinOp::Lt => "<",
        BinOp::Le => "<=",
        BinOp::Gt => ">",
        BinOp::Ge => ">=",
        BinOp::And => "&&",
        BinOp::Or => "||",
        BinOp::Imp => "==>",
    }
}

/// Binding strength; higher binds tighter.
fn prec(op: BinOp) -> u8 {
    match op {
        BinOp::Imp => 1,
        BinOp::Or => 2,
        BinOp::And => 3,
        BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 4,
        BinOp::Add | BinOp::Sub => 5,
        BinOp::Mul => 6,
    }
}

fn expr_prec(e: &Expression, out: &mut String, min: u8) {
    match e {
        Expression::Var(x) => out.push_str(x),
        Expression::IntLit(n) => {
            let _ = write!(out, "{n}");
        }
        Expression::BoolLit(b) => out.push_str(if *b { "true" } else { "false" }),
        Expression::StrLit(s) => {
            out.push('"');
            for c in s.chars() {
                match c {
                    '"' => out.push_str("\\\""),
                    '\\' => out.push_str("\\\\"),
                    '\n' => out.push_str("\\n"),
                    '\t' => out.push_str("\\t"),
                    c => out.push(c),
                }
            }
            out.push('"');
        }
        Expression::Unary(op, inner) => {
            out.push(match op {
                UnOp::Not => '!',
                UnOp::Neg => '-',
            });
            // Unary operators bind tighter than any binary operator.
            expr_prec(inner, out, 7);
        }
        Expression::Binary(op, l, r) => {
            let p = prec(*op);
            let paren = p < min;
            if paren {
                out.push('(');
            }
            // Left-associative except Imp (right-associative); comparisons
            // are non-associative, so nested comparisons get parentheses.
            let (lmin, rmin) = match op {
                BinOp::Imp => (p + 1, p),
                BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
                    (p + 1, p + 1)
                }
                _ => (p, p + 1),
            };
            expr_prec(l, out, lmin);
            let _ = write!(out, " {} ", binop_str(*op));
            expr_prec(r, out, rmin);
            if paren {
                out.push(')');
            }
        }
    }
}

/// Render an expression in canonical form.
pub fn pretty_expr(e: &Expression) -> String {
    let mut out = String::new();
    expr_prec(e, &mut out, 0);
    out
}

/// Render `x: S{E}`, eliding a `true` predicate.
pub fn pretty_rtype(t: &RefinementType) -> String {
    if t.predicate.is_truth() {
        format!("{}: {}", t.binder, t.base.name())
    } else {
        format!("{}: {}{{{}}}", t.binder, t.base.name(), pretty_expr(&t.predicate))
    }
}

fn indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str("  ");
    }
}

fn global_at(g: &GlobalType, out: &mut String, depth: usize) {
    match g {
        GlobalType::Message { from, to, branches } => {
            let _ = write!(out, "{from} -> {to} ");
            if branches.len() == 1 {
                let b = &branches[0];
                let _ = write!(out, "{}({}). ", b.label, pretty_rtype(&b.ty));
                global_at(&b.cont, out, depth);
            } else {
                out.push_str("{\n");
                for (i, b) in branches.iter().enumerate() {
                    indent(out, depth + 1);
                    let _ = write!(out, "{}({}). ", b.label, pretty_rtype(&b.ty));
                    global_at(&b.cont, out, depth + 1);
                    if i + 1 < branches.len() {
                        out.push(',');
                    }
                    out.push('\n');
                }
                indent(out, depth);
                out.push('}');
            }
        }
        GlobalType::Rec { tvar, ty, init, body } => {
            let _ = write!(out, "rec {tvar}({} := {}). ", pretty_rtype(ty), pretty_expr(init));
            global_at(body, out, depth);
        }
        GlobalType::TVar { tvar, var, assign } => {
            let _ = write!(out, "{tvar}[{var} := {}]", pretty_expr(assign));
        }
        GlobalType::End => out.push_str("end"),
    }
}

/// Render a global type in canonical core syntax.
pub fn pretty_global(g: &GlobalType) -> String {
    let mut out = String::new();
    global_at(g, &mut out, 0);
    out
}

fn local_branches(prefix: &str, branches: &[LBranch], out: &mut String, depth: usize) {
    out.push_str(prefix);
    if branches.len() == 1 {
        let b = &branches[0];
        let _ = write!(out, "{}({}). ", b.label, pretty_rtype(&b.ty));
        local_at(&b.cont, out, depth);
    } else {
        out.push_str("{\n");
        for (i, b) in branches.iter().enumerate() {
            indent(out, depth + 1);
            let _ = write!(out, "{}({}). ", b.label, pretty_rtype(&b.ty));
            local_at(&b.cont, out, depth + 1);
            if i + 1 < branches.len() {
                out.push(',');
            }
            out.push('\n');
        }
        indent(out, depth);
        out.push('}');
    }
}

fn local_at(l: &LocalType, out: &mut String, depth: usize) {
    match l {
        LocalType::Recv { from, branches } => {
            local_branches(&format!("{from}?"), branches, out, depth)
        }
        LocalType::Send { to, branches } => local_branches(&format!("{to}!"), branches, out, depth),
        LocalType::Silent { label, ty, cont, .. } => {
            let _ = write!(out, "<{label}>({}). ", pretty_rtype(ty));
            local_at(cont, out, depth);
        }
        LocalType::Rec { tvar, ty, init, mult, body } => {
            let erased = match mult {
                Multiplicity::Zero => "erased ",
                Multiplicity::Omega => "",
            };
            let _ = write!(
                out,
                "rec {tvar}({erased}{} := {}). ",
                pretty_rtype(ty),
                pretty_expr(init)
            );
            local_at(body, out, depth);
        }
        LocalType::TVar { tvar, var, assign } => {
            let _ = write!(out, "{tvar}[{var} := {}]", pretty_expr(assign));
        }
        LocalType::End => out.push_str("end"),
    }
}

/// Render a local type in canonical core syntax.
pub fn pretty_local(l: &LocalType) -> String {
    let mut out = String::new();
    local_at(l, &mut out, 0);
    out
}

/// Render a global context: `x^{A, B}: int{...}, y^{}: int`.
pub fn pretty_global_context(ctx: &GlobalContext) -> String {
    if ctx.entries.is_empty() {
        return "(empty)".to_string();
    }
    ctx.entries
        .iter()
        .map(|e| {
            let roles: Vec<&str> = e.knowers.iter().map(String::as_str).collect();
            format!("{}^{{{}}}: {}", e.var, roles.join(", "), pretty_rtype_anon(&e.ty, &e.var))
        })
        .collect::<Vec<_>>()
        .join(", ")
}

/// Render a local context: `x^w: int{...}, y^0: int`.
pub fn pretty_local_context(ctx: &LocalContext) -> String {
    if ctx.entries.is_empty() {
        return "(empty)".to_string();
    }
    ctx.entries
        .iter()
        .map(|e| {
            format!("{}^{}: {}", e.var, e.mult.symbol(), pretty_rtype_anon(&e.ty, &e.var))
        })
        .collect::<Vec<_>>()
        .join(", ")
}

/// Render a context entry's type with its binder aligned to the entry name,
/// without repeating the name: `int{x >= 0}` for entry `x`.
fn pretty_rtype_anon(t: &RefinementType, var: &str) -> String {
    let t = t.with_binder(var.to_string());
    if t.predicate.is_truth() {
        t.base.name().to_string()
    } else {
        format!("{}{{{}}}", t.base.name(), pretty_expr(&t.predicate))
    }
}

/// Render an action: `A -> B: l(x: int{x > 0})`.
pub fn pretty_action(a: &Action) -> String {
    format!("{} -> {}: {}({})", a.from, a.to, a.label, pretty_rtype(&a.ty))
}

impl std::fmt::Display for Expression {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&pretty_expr(self))
    }
}

impl std::fmt::Display for RefinementType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&pretty_rtype(self))
    }
}

impl std::fmt::Display for GlobalType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&pretty_global(self))
    }
}

impl std::fmt::Display for LocalType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&pretty_local(self))
    }
}

impl std::fmt::Display for GlobalContext {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&pretty_global_context(self))
    }
}

impl std::fmt::Display for LocalContext {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&pretty_local_context(self))
    }
}

impl std::fmt::Display for Action {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&pretty_action(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::{BaseType, BinOp, Expression, GlobalType, LocalType, RefinementType};

    #[test]
    fn expr_precedence_round_shape() {
        let e = Expression::and(
            Expression::bin(
                BinOp::Gt,
                Expression::var("n"),
                Expression::var("x"),
            ),
            Expression::bin(BinOp::Gt, Expression::var("t"), Expression::int(1)),
        );
        assert_eq!(pretty_expr(&e), "n > x && t > 1");
        let f = Expression::bin(
            BinOp::Mul,
            Expression::bin(BinOp::Add, Expression::var("a"), Expression::var("b")),
            Expression::int(2),
        );
        assert_eq!(pretty_expr(&f), "(a + b) * 2");
        let g = Expression::bin(
            BinOp::Sub,
            Expression::var("a"),
            Expression::bin(BinOp::Sub, Expression::var("b"), Expression::var("c")),
        );
        assert_eq!(pretty_expr(&g), "a - (b - c)");
    }

    #[test]
    fn trivial_refinement_elided() {
        let t = RefinementType::base("x", BaseType::Int);
        assert_eq!(pretty_rtype(&t), "x: int");
    }

    #[test]
    fn single_branch_message_inline() {
        let g = GlobalType::msg1(
            "A",
            "B",
            "Fst",
            RefinementType::base("x", BaseType::Int),
            GlobalType::End,
        );
        assert_eq!(pretty_global(&g), "A -> B Fst(x: int). end");
    }

    #[test]
    fn silent_prefix_prints_angle() {
        let l = LocalType::silent(
            "Fst",
            RefinementType::base("x", BaseType::Int),
            LocalType::End,
        );
        assert_eq!(pretty_local(&l), "<Fst>(x: int). end");
    }
}

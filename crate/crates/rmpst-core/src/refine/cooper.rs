//! Exact decision procedure for the refinement logic: quantifier-free linear
//! integer arithmetic combined with boolean variables and string equalities.
//!
//! Integer variables are eliminated with Cooper's algorithm, boolean
//! variables by case splitting, and string variables by a small-model
//! argument (equality logic only needs the literals of the formula plus one
//! fresh value per variable). Satisfying assignments are reconstructed by
//! instantiating the variables one at a time against the original formula.
//!
//! Nonlinear multiplication is outside the decidable fragment and reported
//! as such, as are formulas whose elimination blows past the node budget.

use crate::syntax::{BaseType, BinOp, Expression, UnOp, Value, Var};
use std::collections::{BTreeMap, BTreeSet};

/// Why the procedure could not decide a formula.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Hard {
    /// A product of two non-constant terms.
    Nonlinear,
    /// Quantifier elimination exceeded the node budget.
    TooLarge,
    /// Coefficient arithmetic overflowed.
    Overflow,
}

impl std::fmt::Display for Hard {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Hard::Nonlinear => write!(f, "nonlinear arithmetic"),
            Hard::TooLarge => write!(f, "quantifier elimination exceeded the node budget"),
            Hard::Overflow => write!(f, "coefficient overflow"),
        }
    }
}

/// A linear term `Σ aᵢ·xᵢ + k` with integer coefficients.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinTerm {
    coeffs: BTreeMap<Var, i64>,
    k: i64,
}

fn chk(v: Option<i64>) -> Result<i64, Hard> {
    v.ok_or(Hard::Overflow)
}

impl LinTerm {
    fn constant(k: i64) -> Self {
        LinTerm { coeffs: BTreeMap::new(), k }
    }

    fn var(x: &str) -> Self {
        LinTerm { coeffs: BTreeMap::from([(x.to_string(), 1)]), k: 0 }
    }

    fn add(&self, o: &LinTerm) -> Result<LinTerm, Hard> {
        let mut coeffs = self.coeffs.clone();
        for (v, c) in &o.coeffs {
            let n = chk(coeffs.get(v).copied().unwrap_or(0).checked_add(*c))?;
            if n == 0 {
                coeffs.remove(v);
            } else {
                coeffs.insert(v.clone(), n);
            }
        }
        Ok(LinTerm { coeffs, k: chk(self.k.checked_add(o.k))? })
    }

    fn scale(&self, f: i64) -> Result<LinTerm, Hard> {
        if f == 0 {
            return Ok(LinTerm::constant(0));
        }
        let mut coeffs = BTreeMap::new();
        for (v, c) in &self.coeffs {
            coeffs.insert(v.clone(), chk(c.checked_mul(f))?);
        }
        Ok(LinTerm { coeffs, k: chk(self.k.checked_mul(f))? })
    }

    fn sub(&self, o: &LinTerm) -> Result<LinTerm, Hard> {
        self.add(&o.scale(-1)?)
    }

    fn offset(&self, d: i64) -> Result<LinTerm, Hard> {
        Ok(LinTerm { coeffs: self.coeffs.clone(), k: chk(self.k.checked_add(d))? })
    }

    fn coeff(&self, x: &str) -> i64 {
        self.coeffs.get(x).copied().unwrap_or(0)
    }

    /// Drop `x` from the term (used after substituting for it).
    fn without(&self, x: &str) -> LinTerm {
        let mut t = self.clone();
        t.coeffs.remove(x);
        t
    }

    /// Replace `x` by the term `r`: `self[x := r]`.
    fn subst(&self, x: &str, r: &LinTerm) -> Result<LinTerm, Hard> {
        let c = self.coeff(x);
        if c == 0 {
            return Ok(self.clone());
        }
        self.without(x).add(&r.scale(c)?)
    }

    fn is_ground(&self) -> bool {
        self.coeffs.is_empty()
    }

    fn eval(&self, model: &BTreeMap<Var, Value>) -> Option<i64> {
        let mut acc: i64 = self.k;
        for (v, c) in &self.coeffs {
            match model.get(v) {
                Some(Value::Int(n)) => acc = acc.checked_add(c.checked_mul(*n)?)?,
                _ => return None,
            }
        }
        Some(acc)
    }
}

/// One side of a string equality atom.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SAtom {
    SVar(Var),
    SLit(String),
}

/// Negation-normal formulas. `Lt0(t)` is `0 < t`, which is closed under
/// negation over the integers (`¬(0 < t) ⟺ 0 < 1 − t`), so only equality,
/// divisibility, boolean and string atoms carry a polarity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Nnf {
    True,
    False,
    And(Vec<Nnf>),
    Or(Vec<Nnf>),
    Lt0(LinTerm),
    /// `t = 0` when `pos`, `t ≠ 0` otherwise.
    Eq0(LinTerm, bool),
    /// `d | t` when `pos`; `d ≥ 1`.
    Dvd(i64, LinTerm, bool),
    BVar(Var, bool),
    SEq(SAtom, SAtom, bool),
}

impl Nnf {
    fn and(items: Vec<Nnf>) -> Nnf {
        let mut out = Vec::new();
        for i in items {
            match i {
                Nnf::False => return Nnf::False,
                Nnf::True => {}
                Nnf::And(inner) => out.extend(inner),
                other => out.push(other),
            }
        }
        match out.len() {
            0 => Nnf::True,
            1 => out.pop().unwrap(),
            _ => Nnf::And(out),
        }
    }

    fn or(items: Vec<Nnf>) -> Nnf {
        let mut out = Vec::new();
        for i in items {
            match i {
                Nnf::True => return Nnf::True,
                Nnf::False => {}
                Nnf::Or(inner) => out.extend(inner),
                other => out.push(other),
            }
        }
        match out.len() {
            0 => Nnf::False,
            1 => out.pop().unwrap(),
            _ => Nnf::Or(out),
        }
    }

    fn size(&self) -> usize {
        match self {
            Nnf::And(xs) | Nnf::Or(xs) => 1 + xs.iter().map(Nnf::size).sum::<usize>(),
            _ => 1,
        }
    }

    /// Fold ground atoms to truth values.
    fn fold_ground(&self) -> Nnf {
        match self {
            Nnf::And(xs) => Nnf::and(xs.iter().map(Nnf::fold_ground).collect()),
            Nnf::Or(xs) => Nnf::or(xs.iter().map(Nnf::fold_ground).collect()),
            Nnf::Lt0(t) if t.is_ground() => {
                if 0 < t.k {
                    Nnf::True
                } else {
                    Nnf::False
                }
            }
            Nnf::Eq0(t, pos) if t.is_ground() => {
                if (t.k == 0) == *pos {
                    Nnf::True
                } else {
                    Nnf::False
                }
            }
            Nnf::Dvd(d, t, pos) if t.is_ground() => {
                if (t.k.rem_euclid(*d) == 0) == *pos {
                    Nnf::True
                } else {
                    Nnf::False
                }
            }
            Nnf::SEq(SAtom::SLit(a), SAtom::SLit(b), pos) => {
                if (a == b) == *pos {
                    Nnf::True
                } else {
                    Nnf::False
                }
            }
            Nnf::SEq(SAtom::SVar(a), SAtom::SVar(b), pos) if a == b => {
                if *pos {
                    Nnf::True
                } else {
                    Nnf::False
                }
            }
            other => other.clone(),
        }
    }

    fn eval(&self, model: &BTreeMap<Var, Value>) -> Option<bool> {
        match self {
            Nnf::True => Some(true),
            Nnf::False => Some(false),
            Nnf::And(xs) => {
                for x in xs {
                    if !x.eval(model)? {
                        return Some(false);
                    }
                }
                Some(true)
            }
            Nnf::Or(xs) => {
                for x in xs {
                    if x.eval(model)? {
                        return Some(true);
                    }
                }
                Some(false)
            }
            Nnf::Lt0(t) => Some(0 < t.eval(model)?),
            Nnf::Eq0(t, pos) => Some((t.eval(model)? == 0) == *pos),
            Nnf::Dvd(d, t, pos) => Some((t.eval(model)?.rem_euclid(*d) == 0) == *pos),
            Nnf::BVar(v, pos) => match model.get(v) {
                Some(Value::Bool(b)) => Some(*b == *pos),
                _ => None,
            },
            Nnf::SEq(a, b, pos) => {
                let get = |s: &SAtom| -> Option<String> {
                    match s {
                        SAtom::SLit(l) => Some(l.clone()),
                        SAtom::SVar(v) => match model.get(v) {
                            Some(Value::Str(s)) => Some(s.clone()),
                            _ => None,
                        },
                    }
                };
                Some((get(a)? == get(b)?) == *pos)
            }
        }
    }

    /// Substitute an integer variable by a linear term.
    fn subst_int(&self, x: &str, r: &LinTerm) -> Result<Nnf, Hard> {
        Ok(match self {
            Nnf::And(xs) => Nnf::and(
                xs.iter().map(|f| f.subst_int(x, r)).collect::<Result<Vec<_>, _>>()?,
            ),
            Nnf::Or(xs) => Nnf::or(
                xs.iter().map(|f| f.subst_int(x, r)).collect::<Result<Vec<_>, _>>()?,
            ),
            Nnf::Lt0(t) => Nnf::Lt0(t.subst(x, r)?),
            Nnf::Eq0(t, pos) => Nnf::Eq0(t.subst(x, r)?, *pos),
            Nnf::Dvd(d, t, pos) => Nnf::Dvd(*d, t.subst(x, r)?, *pos),
            other => other.clone(),
        })
    }

    fn subst_bool(&self, x: &str, v: bool) -> Nnf {
        match self {
            Nnf::And(xs) => Nnf::and(xs.iter().map(|f| f.subst_bool(x, v)).collect()),
            Nnf::Or(xs) => Nnf::or(xs.iter().map(|f| f.subst_bool(x, v)).collect()),
            Nnf::BVar(y, pos) if y == x => {
                if v == *pos {
                    Nnf::True
                } else {
                    Nnf::False
                }
            }
            other => other.clone(),
        }
    }

    fn subst_str(&self, x: &str, v: &str) -> Nnf {
        let sub = |s: &SAtom| match s {
            SAtom::SVar(y) if y == x => SAtom::SLit(v.to_string()),
            other => other.clone(),
        };
        match self {
            Nnf::And(xs) => Nnf::and(xs.iter().map(|f| f.subst_str(x, v)).collect()),
            Nnf::Or(xs) => Nnf::or(xs.iter().map(|f| f.subst_str(x, v)).collect()),
            Nnf::SEq(a, b, pos) => Nnf::SEq(sub(a), sub(b), *pos).fold_ground(),
            other => other.clone(),
        }
    }

    fn string_literals(&self, out: &mut BTreeSet<String>) {
        match self {
            Nnf::And(xs) | Nnf::Or(xs) => {
                for x in xs {
                    x.string_literals(out);
                }
            }
            Nnf::SEq(a, b, _) => {
                for s in [a, b] {
                    if let SAtom::SLit(l) = s {
                        out.insert(l.clone());
                    }
                }
            }
            _ => {}
        }
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn lcm(a: i64, b: i64) -> Result<i64, Hard> {
    if a == 0 || b == 0 {
        return Ok(a.abs().max(b.abs()).max(1));
    }
    chk((a / gcd(a, b)).checked_mul(b)).map(i64::abs)
}

// ---- conversion from expressions ------------------------------------------

fn to_lin(e: &Expression, env: &BTreeMap<Var, BaseType>) -> Result<LinTerm, Hard> {
    match e {
        Expression::Var(x) => Ok(LinTerm::var(x)),
        Expression::IntLit(n) => Ok(LinTerm::constant(*n)),
        Expression::Unary(UnOp::Neg, i) => to_lin(i, env)?.scale(-1),
        Expression::Binary(BinOp::Add, a, b) => to_lin(a, env)?.add(&to_lin(b, env)?),
        Expression::Binary(BinOp::Sub, a, b) => to_lin(a, env)?.sub(&to_lin(b, env)?),
        Expression::Binary(BinOp::Mul, a, b) => {
            let la = to_lin(a, env)?;
            let lb = to_lin(b, env)?;
            if la.is_ground() {
                lb.scale(la.k)
            } else if lb.is_ground() {
                la.scale(lb.k)
            } else {
                Err(Hard::Nonlinear)
            }
        }
        _ => Err(Hard::Nonlinear),
    }
}

fn sort_of_operand(e: &Expression, env: &BTreeMap<Var, BaseType>) -> BaseType {
    match e {
        Expression::Var(x) => env.get(x).copied().unwrap_or(BaseType::Int),
        Expression::IntLit(_) => BaseType::Int,
        Expression::BoolLit(_) => BaseType::Bool,
        Expression::StrLit(_) => BaseType::Str,
        Expression::Unary(UnOp::Not, _) => BaseType::Bool,
        Expression::Unary(UnOp::Neg, _) => BaseType::Int,
        Expression::Binary(op, _, _) => {
            if op.arithmetic() {
                BaseType::Int
            } else {
                BaseType::Bool
            }
        }
    }
}

fn to_satom(e: &Expression) -> Result<SAtom, Hard> {
    match e {
        Expression::Var(x) => Ok(SAtom::SVar(x.clone())),
        Expression::StrLit(s) => Ok(SAtom::SLit(s.clone())),
        _ => Err(Hard::Nonlinear),
    }
}

/// Convert a (sort-correct) boolean expression to NNF; `pos == false`
/// converts the negation.
pub fn to_nnf(
    e: &Expression,
    env: &BTreeMap<Var, BaseType>,
    pos: bool,
) -> Result<Nnf, Hard> {
    Ok(match e {
        Expression::BoolLit(b) => {
            if *b == pos {
                Nnf::True
            } else {
                Nnf::False
            }
        }
        Expression::Var(x) => Nnf::BVar(x.clone(), pos),
        Expression::Unary(UnOp::Not, i) => to_nnf(i, env, !pos)?,
        Expression::Binary(BinOp::And, a, b) => {
            let (ca, cb) = (to_nnf(a, env, pos)?, to_nnf(b, env, pos)?);
            if pos {
                Nnf::and(vec![ca, cb])
            } else {
                Nnf::or(vec![ca, cb])
            }
        }
        Expression::Binary(BinOp::Or, a, b) => {
            let (ca, cb) = (to_nnf(a, env, pos)?, to_nnf(b, env, pos)?);
            if pos {
                Nnf::or(vec![ca, cb])
            } else {
                Nnf::and(vec![ca, cb])
            }
        }
        Expression::Binary(BinOp::Imp, a, b) => {
            if pos {
                Nnf::or(vec![to_nnf(a, env, false)?, to_nnf(b, env, true)?])
            } else {
                Nnf::and(vec![to_nnf(a, env, true)?, to_nnf(b, env, false)?])
            }
        }
        Expression::Binary(op @ (BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge), a, b) => {
            let (l, r) = (to_lin(a, env)?, to_lin(b, env)?);
            // Normalize to 0 < t; over the integers ¬(0 < t) ⟺ 0 < 1 − t.
            let t = match op {
                BinOp::Lt => r.sub(&l)?,
                BinOp::Le => r.sub(&l)?.offset(1)?,
                BinOp::Gt => l.sub(&r)?,
                BinOp::Ge => l.sub(&r)?.offset(1)?,
                _ => unreachable!(),
            };
            let t = if pos { t } else { t.scale(-1)?.offset(1)? };
            Nnf::Lt0(t).fold_ground()
        }
        Expression::Binary(op @ (BinOp::Eq | BinOp::Ne), a, b) => {
            let want_eq = (*op == BinOp::Eq) == pos;
            match sort_of_operand(a, env) {
                BaseType::Int => {
                    Nnf::Eq0(to_lin(a, env)?.sub(&to_lin(b, env)?)?, want_eq).fold_ground()
                }
                BaseType::Bool => {
                    // b₁ = b₂ ⟺ (b₁∧b₂) ∨ (¬b₁∧¬b₂); the disequality dually.
                    let (at, af) = (to_nnf(a, env, true)?, to_nnf(a, env, false)?);
                    let (bt, bf) = (to_nnf(b, env, true)?, to_nnf(b, env, false)?);
                    if want_eq {
                        Nnf::or(vec![Nnf::and(vec![at, bt]), Nnf::and(vec![af, bf])])
                    } else {
                        Nnf::or(vec![Nnf::and(vec![at, bf]), Nnf::and(vec![af, bt])])
                    }
                }
                BaseType::Str => Nnf::SEq(to_satom(a)?, to_satom(b)?, want_eq).fold_ground(),
                BaseType::Unit => {
                    if want_eq {
                        Nnf::True
                    } else {
                        Nnf::False
                    }
                }
            }
        }
        _ => return Err(Hard::Nonlinear),
    })
}

// ---- Cooper elimination ----------------------------------------------------

/// Atom classification relative to one unit-coefficient variable.
fn classify(t: &LinTerm, x: &str) -> Option<(i64, LinTerm)> {
    let c = t.coeff(x);
    if c == 0 {
        None
    } else {
        Some((c, t.without(x)))
    }
}

/// `φ_{-∞}`: the formula for `x` arbitrarily small.
fn minusinf(f: &Nnf, x: &str) -> Nnf {
    match f {
        Nnf::And(xs) => Nnf::and(xs.iter().map(|g| minusinf(g, x)).collect()),
        Nnf::Or(xs) => Nnf::or(xs.iter().map(|g| minusinf(g, x)).collect()),
        Nnf::Lt0(t) => match classify(t, x) {
            None => f.clone(),
            // 0 < x + r: false for x → −∞; 0 < −x + r: true.
            Some((1, _)) => Nnf::False,
            Some((-1, _)) => Nnf::True,
            Some(_) => unreachable!("unitized"),
        },
        Nnf::Eq0(t, pos) => match classify(t, x) {
            None => f.clone(),
            Some(_) => {
                if *pos {
                    Nnf::False
                } else {
                    Nnf::True
                }
            }
        },
        other => other.clone(),
    }
}

/// Boundary terms: values of `x` just after which some atom flips.
fn bset(f: &Nnf, x: &str, out: &mut Vec<LinTerm>) -> Result<(), Hard> {
    match f {
        Nnf::And(xs) | Nnf::Or(xs) => {
            for g in xs {
                bset(g, x, out)?;
            }
            Ok(())
        }
        Nnf::Lt0(t) => {
            // 0 < x + r becomes true just above x = −r.
            if let Some((1, r)) = classify(t, x) {
                out.push(r.scale(-1)?);
            }
            Ok(())
        }
        Nnf::Eq0(t, pos) => {
            if let Some((c, r)) = classify(t, x) {
                // c·x + r = 0 with c = ±1: x = ∓r.
                let sol = if c == 1 { r.scale(-1)? } else { r };
                if *pos {
                    out.push(sol.offset(-1)?);
                } else {
                    out.push(sol);
                }
            }
            Ok(())
        }
        _ => Ok(()),
    }
}

/// Multiply through so every occurrence of `x` has coefficient ±1, adding the
/// divisibility constraint for the change of variable.
fn unitize(f: &Nnf, x: &str) -> Result<(Nnf, i64), Hard> {
    fn coeffs(f: &Nnf, x: &str, out: &mut Vec<i64>) {
        match f {
            Nnf::And(xs) | Nnf::Or(xs) => {
                for g in xs {
                    coeffs(g, x, out);
                }
            }
            Nnf::Lt0(t) | Nnf::Eq0(t, _) | Nnf::Dvd(_, t, _) => {
                let c = t.coeff(x);
                if c != 0 {
                    out.push(c);
                }
            }
            _ => {}
        }
    }
    let mut cs = Vec::new();
    coeffs(f, x, &mut cs);
    let mut m = 1i64;
    for c in &cs {
        m = lcm(m, *c)?;
    }
    fn scale_atoms(f: &Nnf, x: &str, m: i64) -> Result<Nnf, Hard> {
        Ok(match f {
            Nnf::And(xs) => Nnf::and(
                xs.iter().map(|g| scale_atoms(g, x, m)).collect::<Result<Vec<_>, _>>()?,
            ),
            Nnf::Or(xs) => Nnf::or(
                xs.iter().map(|g| scale_atoms(g, x, m)).collect::<Result<Vec<_>, _>>()?,
            ),
            Nnf::Lt0(t) => {
                let c = t.coeff(x);
                if c == 0 {
                    f.clone()
                } else {
                    // Scale by m/|c| > 0, preserving the inequality.
                    Nnf::Lt0(t.scale(m / c.abs())?)
                }
            }
            Nnf::Eq0(t, pos) => {
                let c = t.coeff(x);
                if c == 0 {
                    f.clone()
                } else {
                    Nnf::Eq0(t.scale(m / c.abs())?, *pos)
                }
            }
            Nnf::Dvd(d, t, pos) => {
                let c = t.coeff(x);
                if c == 0 {
                    f.clone()
                } else {
                    let s = m / c.abs();
                    Nnf::Dvd(chk(d.checked_mul(s.abs()))?, t.scale(s)?, *pos)
                }
            }
            other => other.clone(),
        })
    }
    let scaled = scale_atoms(f, x, m)?;
    // Every coefficient of x is now ±m; read it as a unit variable x' = m·x.
    fn to_unit(f: &Nnf, x: &str, m: i64) -> Nnf {
        match f {
            Nnf::And(xs) => Nnf::and(xs.iter().map(|g| to_unit(g, x, m)).collect()),
            Nnf::Or(xs) => Nnf::or(xs.iter().map(|g| to_unit(g, x, m)).collect()),
            Nnf::Lt0(t) => Nnf::Lt0(unit_term(t, x, m)),
            Nnf::Eq0(t, pos) => Nnf::Eq0(unit_term(t, x, m), *pos),
            Nnf::Dvd(d, t, pos) => Nnf::Dvd(*d, unit_term(t, x, m), *pos),
            other => other.clone(),
        }
    }
    fn unit_term(t: &LinTerm, x: &str, m: i64) -> LinTerm {
        let c = t.coeff(x);
        if c == 0 {
            return t.clone();
        }
        debug_assert!(c == m || c == -m);
        let mut out = t.clone();
        out.coeffs.insert(x.to_string(), c.signum());
        out
    }
    let unit = to_unit(&scaled, x, m);
    let with_div = if m == 1 {
        unit
    } else {
        Nnf::and(vec![unit, Nnf::Dvd(m, LinTerm::var(x), true)])
    };
    Ok((with_div, m))
}

fn divisors_lcm(f: &Nnf, x: &str) -> Result<i64, Hard> {
    match f {
        Nnf::And(xs) | Nnf::Or(xs) => {
            let mut d = 1;
            for g in xs {
                d = lcm(d, divisors_lcm(g, x)?)?;
            }
            Ok(d)
        }
        Nnf::Dvd(d, t, _) if t.coeff(x) != 0 => Ok(*d),
        _ => Ok(1),
    }
}

/// Eliminate `∃x` from an NNF formula with only unit occurrences of `x`.
fn cooper_unit(f: &Nnf, x: &str, budget: usize) -> Result<Nnf, Hard> {
    let d = divisors_lcm(f, x)?;
    let mut bs: Vec<LinTerm> = Vec::new();
    bset(f, x, &mut bs)?;
    bs.dedup();
    let minf = minusinf(f, x);
    let mut disjuncts = Vec::new();
    let mut total = 0usize;
    for j in 1..=d {
        let inst = minf.subst_int(x, &LinTerm::constant(j))?.fold_ground();
        total += inst.size();
        disjuncts.push(inst);
        for b in &bs {
            let inst = f.subst_int(x, &b.offset(j)?)?.fold_ground();
            total += inst.size();
            if total > budget {
                return Err(Hard::TooLarge);
            }
            disjuncts.push(inst);
        }
        if total > budget {
            return Err(Hard::TooLarge);
        }
    }
    Ok(Nnf::or(disjuncts))
}

/// Eliminate `∃x` (integer) from an arbitrary NNF formula.
pub fn eliminate_int(f: &Nnf, x: &str, budget: usize) -> Result<Nnf, Hard> {
    let (unit, _m) = unitize(f, x)?;
    cooper_unit(&unit, x, budget)
}

// ---- satisfiability with model construction --------------------------------

/// Decide `∃ vars. f`, producing a witness model if satisfiable. Variables
/// are eliminated right to left; witnesses are reconstructed left to right
/// by direct evaluation against the partially instantiated formula.
pub fn solve_exists(
    f: &Nnf,
    vars: &[(Var, BaseType)],
    budget: usize,
) -> Result<Option<BTreeMap<Var, Value>>, Hard> {
    let f = f.fold_ground();
    match f {
        Nnf::True => {
            // Any assignment works; complete with defaults.
            let mut model = BTreeMap::new();
            for (v, s) in vars {
                model.insert(v.clone(), default_value(*s));
            }
            return Ok(Some(model));
        }
        Nnf::False => return Ok(None),
        _ => {}
    }
    let Some(((x, sort), rest)) = vars.split_last() else {
        // No variables left; a non-ground residue here would be a bug.
        return match f.eval(&BTreeMap::new()) {
            Some(true) => Ok(Some(BTreeMap::new())),
            Some(false) => Ok(None),
            None => Err(Hard::Nonlinear),
        };
    };

    let (reduced, candidates): (Nnf, Vec<Value>) = match sort {
        BaseType::Int => {
            let red = eliminate_int(&f, x, budget)?.fold_ground();
            (red, Vec::new()) // integer candidates are found from f below
        }
        BaseType::Bool => {
            let red = Nnf::or(vec![f.subst_bool(x, true), f.subst_bool(x, false)]);
            (red, vec![Value::Bool(true), Value::Bool(false)])
        }
        BaseType::Str => {
            let mut lits = BTreeSet::new();
            f.string_literals(&mut lits);
            let fresh = make_fresh_string(&lits);
            let mut cands: Vec<Value> =
                lits.iter().map(|l| Value::Str(l.clone())).collect();
            cands.push(Value::Str(fresh));
            let red = Nnf::or(
                cands
                    .iter()
                    .map(|c| match c {
                        Value::Str(s) => f.subst_str(x, s),
                        _ => unreachable!(),
                    })
                    .collect(),
            );
            (red, cands)
        }
        BaseType::Unit => (f.clone(), vec![Value::Unit]),
    };

    if reduced.size() > budget {
        return Err(Hard::TooLarge);
    }
    let Some(mut model) = solve_exists(&reduced, rest, budget)? else {
        return Ok(None);
    };

    // Reconstruct a witness for x against the original formula.
    match sort {
        BaseType::Int => {
            let v = int_witness(&f, x, &model, budget)?;
            model.insert(x.clone(), Value::Int(v));
        }
        _ => {
            let mut found = false;
            for c in candidates {
                model.insert(x.clone(), c.clone());
                if f.eval(&model) == Some(true) {
                    found = true;
                    break;
                }
            }
            if !found {
                // The elimination said satisfiable; candidate sets for
                // bool/str/unit are exhaustive, so this cannot happen.
                return Err(Hard::TooLarge);
            }
        }
    }
    Ok(Some(model))
}

fn default_value(s: BaseType) -> Value {
    match s {
        BaseType::Int => Value::Int(0),
        BaseType::Bool => Value::Bool(false),
        BaseType::Str => Value::Str(String::new()),
        BaseType::Unit => Value::Unit,
    }
}

fn make_fresh_string(lits: &BTreeSet<String>) -> String {
    let mut s = String::from("fresh");
    while lits.contains(&s) {
        s.push('\'');
    }
    s
}

/// Find a concrete integer witness for `x` in `f` under `model` (which
/// instantiates every other variable of `f`).
fn int_witness(
    f: &Nnf,
    x: &str,
    model: &BTreeMap<Var, Value>,
    budget: usize,
) -> Result<i64, Hard> {
    let (unit, m) = unitize(f, x)?;
    // Witness search happens over x' = m·x; only multiples of m translate
    // back, and the added Dvd(m, x') constraint in `unit` enforces exactly
    // that.
    let d = divisors_lcm(&unit, x)?;
    let mut bs: Vec<LinTerm> = Vec::new();
    bset(&unit, x, &mut bs)?;
    let mut ground_bs = Vec::new();
    for b in &bs {
        match b.eval(model) {
            Some(v) => ground_bs.push(v),
            None => return Err(Hard::Nonlinear),
        }
    }
    let try_val = |xv: i64| -> Option<bool> {
        let mut m2 = model.clone();
        m2.insert(x.to_string(), Value::Int(xv));
        unit.eval(&m2)
    };
    let mut checked = 0usize;
    for j in 1..=d {
        for b in &ground_bs {
            if let Some(xv) = b.checked_add(j) {
                if try_val(xv) == Some(true) && xv % m == 0 {
                    return Ok(xv / m);
                }
            }
            checked += 1;
            if checked > budget {
                return Err(Hard::TooLarge);
            }
        }
    }
    // The φ_{-∞} disjunct: some x below every boundary, in the right residue
    // class mod d.
    let low = ground_bs.iter().copied().min().unwrap_or(0);
    for j in 1..=d {
        let base = chk(low.checked_sub(2 * d))?;
        // Snap downward onto base + ((j - base) mod d).
        let xv = base + (j - base).rem_euclid(d);
        if try_val(xv) == Some(true) && xv % m == 0 {
            return Ok(xv / m);
        }
    }
    // Defensive fallback: small spiral around zero.
    for a in 0..=1000i64 {
        for xv in [a, -a] {
            if try_val(xv) == Some(true) && xv % m == 0 {
                return Ok(xv / m);
            }
        }
    }
    Err(Hard::TooLarge)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::BinOp;

    fn env(vars: &[(&str, BaseType)]) -> BTreeMap<Var, BaseType> {
        vars.iter().map(|(v, s)| (v.to_string(), *s)).collect()
    }

    fn sat(e: &Expression, vars: &[(&str, BaseType)]) -> Option<BTreeMap<Var, Value>> {
        let en = env(vars);
        let n = to_nnf(e, &en, true).unwrap();
        let vs: Vec<(Var, BaseType)> =
            vars.iter().map(|(v, s)| (v.to_string(), *s)).collect();
        solve_exists(&n, &vs, 100_000).unwrap()
    }

    #[test]
    fn simple_sat_unsat() {
        let x = Expression::var("x");
        // x > 0 ∧ x < 3 — satisfiable with x ∈ {1, 2}.
        let f = Expression::and(
            Expression::bin(BinOp::Gt, x.clone(), Expression::int(0)),
            Expression::bin(BinOp::Lt, x.clone(), Expression::int(3)),
        );
        let m = sat(&f, &[("x", BaseType::Int)]).expect("sat");
        let Value::Int(v) = m["x"] else { panic!() };
        assert!(v == 1 || v == 2);
        // x > 0 ∧ x < 1 — no integer strictly between.
        let g = Expression::and(
            Expression::bin(BinOp::Gt, x.clone(), Expression::int(0)),
            Expression::bin(BinOp::Lt, x, Expression::int(1)),
        );
        assert!(sat(&g, &[("x", BaseType::Int)]).is_none());
    }

    #[test]
    fn coefficients_and_parity() {
        // 2x = 7 — unsat over the integers.
        let f = Expression::bin(
            BinOp::Eq,
            Expression::bin(BinOp::Mul, Expression::int(2), Expression::var("x")),
            Expression::int(7),
        );
        assert!(sat(&f, &[("x", BaseType::Int)]).is_none());
        // 2x = 10 — x = 5.
        let g = Expression::bin(
            BinOp::Eq,
            Expression::bin(BinOp::Mul, Expression::int(2), Expression::var("x")),
            Expression::int(10),
        );
        let m = sat(&g, &[("x", BaseType::Int)]).expect("sat");
        assert_eq!(m["x"], Value::Int(5));
    }

    #[test]
    fn two_variables() {
        // x > y ∧ y > 5 ∧ x < 8 → x=7, y=6.
        let f = Expression::conj(vec![
            Expression::bin(BinOp::Gt, Expression::var("x"), Expression::var("y")),
            Expression::bin(BinOp::Gt, Expression::var("y"), Expression::int(5)),
            Expression::bin(BinOp::Lt, Expression::var("x"), Expression::int(8)),
        ]);
        let m = sat(&f, &[("x", BaseType::Int), ("y", BaseType::Int)]).expect("sat");
        assert_eq!(m["x"], Value::Int(7));
        assert_eq!(m["y"], Value::Int(6));
    }

    #[test]
    fn booleans_and_strings() {
        // b ∧ (s = "a") ∧ (s ≠ t)
        let f = Expression::conj(vec![
            Expression::var("b"),
            Expression::bin(
                BinOp::Eq,
                Expression::var("s"),
                Expression::StrLit("a".into()),
            ),
            Expression::bin(BinOp::Ne, Expression::var("s"), Expression::var("t")),
        ]);
        let m = sat(
            &f,
            &[("b", BaseType::Bool), ("s", BaseType::Str), ("t", BaseType::Str)],
        )
        .expect("sat");
        assert_eq!(m["b"], Value::Bool(true));
        assert_eq!(m["s"], Value::Str("a".into()));
        assert_ne!(m["t"], Value::Str("a".into()));
    }

    #[test]
    fn nonlinear_reported() {
        let f = Expression::bin(
            BinOp::Eq,
            Expression::bin(BinOp::Mul, Expression::var("x"), Expression::var("y")),
            Expression::int(6),
        );
        let en = env(&[("x", BaseType::Int), ("y", BaseType::Int)]);
        assert_eq!(to_nnf(&f, &en, true), Err(Hard::Nonlinear));
    }

    #[test]
    fn negative_witness() {
        // x < -10 is satisfiable via the φ_{-∞} branch.
        let f = Expression::bin(BinOp::Lt, Expression::var("x"), Expression::int(-10));
        let m = sat(&f, &[("x", BaseType::Int)]).expect("sat");
        let Value::Int(v) = m["x"] else { panic!() };
        assert!(v < -10);
    }
}

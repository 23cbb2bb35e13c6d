//! Bounded enumeration of variable assignments.
//!
//! Integers range over `[-bound, bound]`, booleans over both truth values,
//! strings over the literals appearing in the formula plus one fresh string
//! per variable, and unit over its single value. A formula is reported
//! `Valid` when no assignment in this grid falsifies it — a verdict that is
//! exact for falsification (a returned counterexample always evaluates to
//! false) but bound-relative for validity.

use super::{Formula, ValidityResult};
use crate::syntax::{BaseType, Expression, Value, Var};
use std::collections::BTreeMap;

fn string_literals(e: &Expression, out: &mut Vec<String>) {
    match e {
        Expression::StrLit(s) => {
            if !out.contains(s) {
                out.push(s.clone());
            }
        }
        Expression::Unary(_, i) => string_literals(i, out),
        Expression::Binary(_, a, b) => {
            string_literals(a, out);
            string_literals(b, out);
        }
        _ => {}
    }
}

/// All candidate values for one variable of the given sort.
fn domain(sort: BaseType, bound: i64, lits: &[String], idx: usize) -> Vec<Value> {
    match sort {
        BaseType::Int => (-bound..=bound).map(Value::Int).collect(),
        BaseType::Bool => vec![Value::Bool(false), Value::Bool(true)],
        BaseType::Str => {
            let mut vs: Vec<Value> = lits.iter().cloned().map(Value::Str).collect();
            // One distinct fresh string per variable position covers every
            // pattern of equalities among variables and literals.
            vs.push(Value::Str(format!("fresh_{idx}")));
            vs
        }
        BaseType::Unit => vec![Value::Unit],
    }
}

/// Exhaustively check `f` over the bounded grid. Returns the first falsifying
/// assignment found, `Valid` if none exists within the bound.
pub fn check(f: &Formula, bound: i64) -> ValidityResult {
    let mut lits = Vec::new();
    string_literals(&f.body, &mut lits);
    let domains: Vec<Vec<Value>> = f
        .vars
        .iter()
        .enumerate()
        .map(|(i, (_, s))| domain(*s, bound, &lits, i))
        .collect();
    let mut idx = vec![0usize; domains.len()];
    loop {
        let env: BTreeMap<Var, Value> = f
            .vars
            .iter()
            .enumerate()
            .map(|(pos, (v, _))| (v.clone(), domains[pos][idx[pos]].clone()))
            .collect();
        match f.body.eval(&env) {
            Ok(Value::Bool(true)) => {}
            Ok(Value::Bool(false)) => return ValidityResult::Invalid(env),
            Ok(_) => {
                return ValidityResult::Unknown(
                    "predicate did not evaluate to a boolean".to_string(),
                )
            }
            Err(e) => return ValidityResult::Unknown(format!("evaluation failed: {e}")),
        }
        // Odometer increment.
        let mut pos = 0;
        loop {
            if pos == idx.len() {
                return ValidityResult::Valid;
            }
            idx[pos] += 1;
            if idx[pos] < domains[pos].len() {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

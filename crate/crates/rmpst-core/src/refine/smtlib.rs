//! External solver support over the SMT-LIB 2 text format.
//!
//! A validity query for `f` is posed as a satisfiability query for `¬f`: an
//! `unsat` answer means valid, a `sat` answer yields a counterexample via
//! `get-value`. The solver executable (e.g. `z3 -in` or `cvc5`) is run as a
//! subprocess reading SMT-LIB from stdin; anything that fails to launch or
//! answer in time is reported as unavailable rather than guessed at.

use super::{Formula, ValidityResult};
use crate::syntax::{BaseType, BinOp, Expression, UnOp, Value, Var};
use std::collections::BTreeMap;
use std::io::Write as _;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

fn sort_name(s: BaseType) -> &'static str {
    match s {
        BaseType::Int => "Int",
        BaseType::Bool => "Bool",
        BaseType::Str => "String",
        // Unit equalities are scrubbed before encoding; encode the sort as a
        // one-value stand-in just in case a bare unit variable remains.
        BaseType::Unit => "Int",
    }
}

fn escape_string(s: &str) -> String {
    // SMT-LIB string literals double the quote character.
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        if c == '"' {
            out.push('"');
        }
        out.push(c);
    }
    out.push('"');
    out
}

fn emit_expr(e: &Expression, out: &mut String) {
    match e {
        Expression::Var(x) => out.push_str(x),
        Expression::IntLit(n) => {
            if *n < 0 {
                out.push_str(&format!("(- {})", n.unsigned_abs()));
            } else {
                out.push_str(&n.to_string());
            }
        }
        Expression::BoolLit(b) => out.push_str(if *b { "true" } else { "false" }),
        Expression::StrLit(s) => out.push_str(&escape_string(s)),
        Expression::Unary(op, i) => {
            out.push_str(match op {
                UnOp::Not => "(not ",
                UnOp::Neg => "(- ",
            });
            emit_expr(i, out);
            out.push(')');
        }
        Expression::Binary(BinOp::Ne, a, b) => {
            out.push_str("(not (= ");
            emit_expr(a, out);
            out.push(' ');
            emit_expr(b, out);
            out.push_str("))");
        }
        Expression::Binary(op, a, b) => {
            let name = match op {
                BinOp::Add => "+",
                BinOp::Sub => "-",
                BinOp::Mul => "*",
                BinOp::Eq => "=",
                BinOp::Lt => "<",
                BinOp::Le => "<=",
                BinOp::Gt => ">",
                BinOp::Ge => ">=",
                BinOp::And => "and",
                BinOp::Or => "or",
                BinOp::Imp => "=>",
                BinOp::Ne => unreachable!(),
            };
            out.push('(');
            out.push_str(name);
            out.push(' ');
            emit_expr(a, out);
            out.push(' ');
            emit_expr(b, out);
            out.push(')');
        }
    }
}

/// Render the full SMT-LIB script asking whether `¬body` is satisfiable.
pub fn render_script(f: &Formula) -> String {
    let mut s = String::new();
    s.push_str("(set-logic ALL)\n");
    for (v, sort) in &f.vars {
        s.push_str(&format!("(declare-const {v} {})\n", sort_name(*sort)));
    }
    s.push_str("(assert (not ");
    emit_expr(&f.body, &mut s);
    s.push_str("))\n(check-sat)\n");
    if !f.vars.is_empty() {
        s.push_str("(get-value (");
        s.push_str(
            &f.vars.iter().map(|(v, _)| v.as_str()).collect::<Vec<_>>().join(" "),
        );
        s.push_str("))\n");
    }
    s
}

/// Parse one value out of a `get-value` response line like `((x 5))` or
/// `((x (- 3)))`.
fn parse_value(tok: &str, sort: BaseType) -> Option<Value> {
    let tok = tok.trim();
    match sort {
        BaseType::Int | BaseType::Unit => {
            let cleaned = tok.trim_start_matches("(-").trim_end_matches(')').trim();
            let neg = tok.starts_with("(-");
            let n: i64 = cleaned.parse().ok()?;
            Some(Value::Int(if neg { -n } else { n }))
        }
        BaseType::Bool => match tok {
            "true" => Some(Value::Bool(true)),
            "false" => Some(Value::Bool(false)),
            _ => None,
        },
        BaseType::Str => {
            let inner = tok.strip_prefix('"')?.strip_suffix('"')?;
            Some(Value::Str(inner.replace("\"\"", "\"")))
        }
    }
}

fn parse_model(output: &str, vars: &[(Var, BaseType)]) -> BTreeMap<Var, Value> {
    let mut model = BTreeMap::new();
    // get-value answers have the shape ((x 5) (y (- 2)) (b true) (s "v")).
    for (v, sort) in vars {
        // Find "(v " and take the balanced-paren remainder of the pair.
        let needle = format!("({v} ");
        if let Some(start) = output.find(&needle) {
            let rest = &output[start + needle.len()..];
            let mut depth = 0i32;
            let mut end = rest.len();
            for (i, c) in rest.char_indices() {
                match c {
                    '(' => depth += 1,
                    ')' => {
                        if depth == 0 {
                            end = i;
                            break;
                        }
                        depth -= 1;
                    }
                    _ => {}
                }
            }
            if let Some(val) = parse_value(&rest[..end], *sort) {
                model.insert(v.clone(), val);
            }
        }
    }
    model
}

/// Run the solver at `path` on the query for `f`, waiting at most
/// `timeout_ms` for the answer.
pub fn check(path: &str, timeout_ms: u64, f: &Formula) -> ValidityResult {
    let script = render_script(f);
    let mut parts = path.split_whitespace();
    let Some(exe) = parts.next() else {
        return ValidityResult::Unknown("SolverUnavailable: empty solver path".into());
    };
    let mut cmd = Command::new(exe);
    cmd.args(parts)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null());
    let mut child = match cmd.spawn() {
        Ok(c) => c,
        Err(e) => {
            return ValidityResult::Unknown(format!(
                "SolverUnavailable: failed to launch '{path}': {e}"
            ))
        }
    };
    if let Some(mut stdin) = child.stdin.take() {
        // The solver may exit before reading everything; ignore pipe errors.
        let _ = stdin.write_all(script.as_bytes());
    }
    let deadline = Instant::now() + Duration::from_millis(timeout_ms);
    loop {
        match child.try_wait() {
            Ok(Some(_status)) => break,
            Ok(None) => {
                if Instant::now() >= deadline {
                    let _ = child.kill();
                    let _ = child.wait();
                    return ValidityResult::Unknown(format!(
                        "solver timed out after {timeout_ms} ms"
                    ));
                }
                std::thread::sleep(Duration::from_millis(10));
            }
            Err(e) => {
                return ValidityResult::Unknown(format!(
                    "SolverUnavailable: wait failed: {e}"
                ))
            }
        }
    }
    let mut output = String::new();
    if let Some(mut stdout) = child.stdout.take() {
        use std::io::Read as _;
        let _ = stdout.read_to_string(&mut output);
    }
    let verdict = output
        .lines()
        .map(str::trim)
        .find(|l| matches!(*l, "sat" | "unsat" | "unknown"));
    match verdict {
        Some("unsat") => ValidityResult::Valid,
        Some("sat") => ValidityResult::Invalid(parse_model(&output, &f.vars)),
        Some("unknown") => ValidityResult::Unknown("solver answered unknown".into()),
        _ => ValidityResult::Unknown(format!(
            "SolverUnavailable: unrecognized solver output: {}",
            output.lines().next().unwrap_or("<empty>")
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_expression;

    #[test]
    fn script_shape() {
        let f = Formula {
            vars: vec![
                ("x".to_string(), BaseType::Int),
                ("b".to_string(), BaseType::Bool),
            ],
            body: parse_expression("x > 0 ==> b").unwrap(),
        };
        let s = render_script(&f);
        assert!(s.starts_with("(set-logic ALL)\n"));
        assert!(s.contains("(declare-const x Int)"));
        assert!(s.contains("(declare-const b Bool)"));
        assert!(s.contains("(assert (not (=> (> x 0) b)))"));
        assert!(s.contains("(check-sat)"));
        assert!(s.contains("(get-value (x b))"));
    }

    #[test]
    fn negative_literals_wrapped() {
        let f = Formula {
            vars: vec![("x".to_string(), BaseType::Int)],
            body: parse_expression("x > -5").unwrap(),
        };
        assert!(render_script(&f).contains("(> x (- 5))"));
    }

    #[test]
    fn model_parsing() {
        let vars = vec![
            ("x".to_string(), BaseType::Int),
            ("y".to_string(), BaseType::Int),
            ("b".to_string(), BaseType::Bool),
            ("s".to_string(), BaseType::Str),
        ];
        let out = "sat\n((x 5)\n (y (- 3))\n (b true)\n (s \"hi\"))\n";
        let m = parse_model(out, &vars);
        assert_eq!(m["x"], Value::Int(5));
        assert_eq!(m["y"], Value::Int(-3));
        assert_eq!(m["b"], Value::Bool(true));
        assert_eq!(m["s"], Value::Str("hi".into()));
    }

    #[test]
    fn missing_solver_reports_unavailable() {
        let f = Formula {
            vars: vec![],
            body: parse_expression("true").unwrap(),
        };
        let r = check("/nonexistent/solver/binary", 500, &f);
        match r {
            ValidityResult::Unknown(msg) => assert!(msg.contains("SolverUnavailable")),
            other => panic!("expected unknown, got {other:?}"),
        }
    }
}

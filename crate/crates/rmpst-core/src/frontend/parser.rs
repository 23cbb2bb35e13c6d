//! Recursive-descent parsers for the surface protocol language and for the
//! core global/local type syntax.

use super::lexer::{lex, Span, SpannedTok, Tok};
use super::Diagnostic;
use crate::syntax::{
    BaseType, BinOp, Expression, GBranch, GlobalType, LBranch, LocalType, Multiplicity,
    RefinementType, Role, UnOp, Var,
};
use std::collections::BTreeSet;

/// A parsed surface protocol: header roles, auxiliary sub-protocols and the
/// statement tree of the main body. When the input was written directly in
/// core syntax, `core` holds the parsed type and `body` is empty.
#[derive(Debug, Clone)]
pub struct ProtocolDecl {
    pub name: String,
    pub roles: Vec<Role>,
    pub aux_protocols: Vec<AuxProtocol>,
    pub body: Vec<Stmt>,
    pub core: Option<GlobalType>,
}

/// A recursive `aux global protocol` with its per-role state annotation
/// `@ R[x1: T1, ...]`.
#[derive(Debug, Clone)]
pub struct AuxProtocol {
    pub name: String,
    pub roles: Vec<Role>,
    pub state_role: Role,
    pub state_vars: Vec<(Var, RefinementType)>,
    pub body: Vec<Stmt>,
    pub span: Span,
}

/// Surface statements.
#[derive(Debug, Clone)]
pub struct Stmt {
    pub kind: StmtKind,
    pub span: Span,
}

#[derive(Debug, Clone)]
pub enum StmtKind {
    /// `l(x: S{E}) from A to B;`
    Message { label: String, var: Option<Var>, ty: RefinementType, from: Role, to: Role },
    /// `choice at R { ... } or { ... }`
    Choice { at: Role, blocks: Vec<Vec<Stmt>> },
    /// `do Name(R[e1, ...]);`
    Do { name: String, state_role: Role, args: Vec<Expression> },
    /// `rec t(x: T := e, ...) { ... }` — stateful loop; the bare `rec t {..}`
    /// form is sugar for a single constant state variable.
    Rec { tvar: String, vars: Vec<(Var, RefinementType, Expression)>, body: Vec<Stmt> },
    /// `continue t;` or `continue t[x := e, ...];`
    Continue { tvar: String, args: Vec<(Var, Expression)> },
}

struct P {
    toks: Vec<SpannedTok>,
    pos: usize,
}

type PResult<T> = Result<T, Diagnostic>;

impl P {
    fn new(toks: Vec<SpannedTok>) -> Self {
        P { toks, pos: 0 }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn peek2(&self) -> Option<&Tok> {
        self.toks.get(self.pos + 1).map(|t| &t.tok)
    }

    fn span(&self) -> Span {
        self.toks
            .get(self.pos)
            .map(|t| t.span)
            .unwrap_or_else(|| self.toks.last().map(|t| t.span).unwrap_or(Span::start()))
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|t| t.tok.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == Some(t) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, t: &Tok) -> PResult<()> {
        if self.eat(t) {
            Ok(())
        } else {
            Err(self.err(format!(
                "expected {}, found {}",
                t.describe(),
                self.found_describe()
            )))
        }
    }

    fn found_describe(&self) -> String {
        match self.peek() {
            Some(t) => t.describe(),
            None => "end of input".into(),
        }
    }

    fn err(&self, msg: impl Into<String>) -> Diagnostic {
        Diagnostic::error(msg, self.span())
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.err(format!("expected identifier, found {}", self.found_describe()))),
        }
    }

    fn keyword(&mut self, kw: &str) -> PResult<()> {
        match self.peek() {
            Some(Tok::Ident(s)) if s == kw => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.err(format!("expected `{kw}`, found {}", self.found_describe()))),
        }
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s == kw)
    }

    fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    // ---- expressions -----------------------------------------------------

    fn expr(&mut self) -> PResult<Expression> {
        self.expr_imp()
    }

    fn expr_imp(&mut self) -> PResult<Expression> {
        let lhs = self.expr_or()?;
        if self.eat(&Tok::Imp) {
            let rhs = self.expr_imp()?;
            Ok(Expression::bin(BinOp::Imp, lhs, rhs))
        } else {
            Ok(lhs)
        }
    }

    fn expr_or(&mut self) -> PResult<Expression> {
        let mut lhs = self.expr_and()?;
        while self.eat(&Tok::OrOr) {
            let rhs = self.expr_and()?;
            lhs = Expression::bin(BinOp::Or, lhs, rhs);
        }
        Ok(lhs)
    }

    fn expr_and(&mut self) -> PResult<Expression> {
        let mut lhs = self.expr_cmp()?;
        while self.eat(&Tok::AndAnd) {
            let rhs = self.expr_cmp()?;
            lhs = Expression::bin(BinOp::And, lhs, rhs);
        }
        Ok(lhs)
    }

    fn expr_cmp(&mut self) -> PResult<Expression> {
        let lhs = self.expr_add()?;
        let op = match self.peek() {
            Some(Tok::Eq) => Some(BinOp::Eq),
            Some(Tok::Ne) => Some(BinOp::Ne),
            Some(Tok::Lt) => Some(BinOp::Lt),
            Some(Tok::Le) => Some(BinOp::Le),
            Some(Tok::Gt) => Some(BinOp::Gt),
            Some(Tok::Ge) => Some(BinOp::Ge),
            _ => None,
        };
        match op {
            None => Ok(lhs),
            Some(op) => {
                self.pos += 1;
                let rhs = self.expr_add()?;
                Ok(Expression::bin(op, lhs, rhs))
            }
        }
    }

    fn expr_add(&mut self) -> PResult<Expression> {
        let mut lhs = self.expr_mul()?;
        loop {
            if self.eat(&Tok::Plus) {
                let rhs = self.expr_mul()?;
                lhs = Expression::bin(BinOp::Add, lhs, rhs);
            } else if self.eat(&Tok::Minus) {
                let rhs = self.expr_mul()?;
                lhs = Expression::bin(BinOp::Sub, lhs, rhs);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn expr_mul(&mut self) -> PResult<Expression> {
        let mut lhs = self.expr_unary()?;
        while self.eat(&Tok::Star) {
            let rhs = self.expr_unary()?;
            lhs = Expression::bin(BinOp::Mul, lhs, rhs);
        }
        Ok(lhs)
    }

    fn expr_unary(&mut self) -> PResult<Expression> {
        if self.eat(&Tok::Bang) {
            let e = self.expr_unary()?;
            return Ok(Expression::Unary(UnOp::Not, Box::new(e)));
        }
        if self.eat(&Tok::Minus) {
            let e = self.expr_unary()?;
            // Fold unary minus into negative literals for a stable canon.
            if let Expression::IntLit(n) = e {
                return Ok(Expression::IntLit(-n));
            }
            return Ok(Expression::Unary(UnOp::Neg, Box::new(e)));
        }
        self.expr_atom()
    }

    fn expr_atom(&mut self) -> PResult<Expression> {
        match self.next() {
            Some(Tok::Int(n)) => Ok(Expression::IntLit(n)),
            Some(Tok::Str(s)) => Ok(Expression::StrLit(s)),
            Some(Tok::Ident(s)) if s == "true" => Ok(Expression::BoolLit(true)),
            Some(Tok::Ident(s)) if s == "false" => Ok(Expression::BoolLit(false)),
            Some(Tok::Ident(s)) => Ok(Expression::Var(s)),
            Some(Tok::LParen) => {
                let e = self.expr()?;
                self.expect(&Tok::RParen)?;
                Ok(e)
            }
            other => {
                self.pos = self.pos.saturating_sub(usize::from(other.is_some()));
                Err(self.err(format!("expected expression, found {}", self.found_describe())))
            }
        }
    }

    // ---- refinement types ------------------------------------------------

    fn base_type(&mut self) -> PResult<BaseType> {
        let span = self.span();
        let s = self.ident()?;
        match s.as_str() {
            "int" => Ok(BaseType::Int),
            "bool" => Ok(BaseType::Bool),
            "string" => Ok(BaseType::Str),
            "unit" => Ok(BaseType::Unit),
            other => Err(Diagnostic::error(
                format!("unknown base type `{other}` (expected int, bool, string or unit)"),
                span,
            )),
        }
    }

    /// `S` or `S{E}` for the given binder name.
    fn refinement_for(&mut self, binder: &str) -> PResult<RefinementType> {
        let base = self.base_type()?;
        if self.eat(&Tok::LBrace) {
            let pred = self.expr()?;
            self.expect(&Tok::RBrace)?;
            Ok(RefinementType::new(binder, base, pred))
        } else {
            Ok(RefinementType::base(binder, base))
        }
    }

    /// Payload inside `(...)`: empty (fresh unit), `S{E}?` anonymous, or
    /// `x: S{E}?` named. Returns (declared name if any, type).
    fn payload(&mut self, taken: &BTreeSet<Var>) -> PResult<(Option<Var>, RefinementType)> {
        self.expect(&Tok::LParen)?;
        if self.eat(&Tok::RParen) {
            let v = crate::syntax::fresh_var("p", taken);
            return Ok((None, RefinementType::base(v, BaseType::Unit)));
        }
        // Named form is IDENT ':' ...; otherwise an anonymous base type.
        let named = matches!((self.peek(), self.peek2()), (Some(Tok::Ident(_)), Some(Tok::Colon)));
        let (var, ty) = if named {
            let v = self.ident()?;
            self.expect(&Tok::Colon)?;
            let ty = self.refinement_for(&v)?;
            (Some(v), ty)
        } else {
            let v = crate::syntax::fresh_var("p", taken);
            let ty = self.refinement_for(&v)?;
            (None, ty)
        };
        self.expect(&Tok::RParen)?;
        Ok((var, ty))
    }

    // ---- surface protocol ------------------------------------------------

    fn role_list(&mut self) -> PResult<Vec<Role>> {
        self.expect(&Tok::LParen)?;
        let mut roles = Vec::new();
        loop {
            self.keyword("role")?;
            roles.push(self.ident()?);
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        self.expect(&Tok::RParen)?;
        Ok(roles)
    }

    fn stmt_block(&mut self) -> PResult<Vec<Stmt>> {
        self.expect(&Tok::LBrace)?;
        let mut out = Vec::new();
        while !self.eat(&Tok::RBrace) {
            if self.at_end() {
                return Err(self.err("unclosed `{` in protocol body"));
            }
            out.push(self.stmt()?);
        }
        Ok(out)
    }

    fn stmt(&mut self) -> PResult<Stmt> {
        let span = self.span();
        if self.at_keyword("choice") {
            self.keyword("choice")?;
            self.keyword("at")?;
            let at = self.ident()?;
            let mut blocks = vec![self.stmt_block()?];
            while self.at_keyword("or") {
                self.keyword("or")?;
                blocks.push(self.stmt_block()?);
            }
            return Ok(Stmt { kind: StmtKind::Choice { at, blocks }, span });
        }
        if self.at_keyword("do") {
            self.keyword("do")?;
            let name = self.ident()?;
            self.expect(&Tok::LParen)?;
            let state_role = self.ident()?;
            self.expect(&Tok::LBracket)?;
            let mut args = Vec::new();
            if self.peek() != Some(&Tok::RBracket) {
                loop {
                    args.push(self.expr()?);
                    if !self.eat(&Tok::Comma) {
                        break;
                    }
                }
            }
            self.expect(&Tok::RBracket)?;
            self.expect(&Tok::RParen)?;
            self.expect(&Tok::Semi)?;
            return Ok(Stmt { kind: StmtKind::Do { name, state_role, args }, span });
        }
        if self.at_keyword("rec") {
            self.keyword("rec")?;
            let tvar = self.ident()?;
            let mut vars = Vec::new();
            if self.eat(&Tok::LParen) {
                loop {
                    let v = self.ident()?;
                    self.expect(&Tok::Colon)?;
                    let ty = self.refinement_for(&v)?;
                    self.expect(&Tok::Assign)?;
                    let init = self.expr()?;
                    vars.push((v, ty, init));
                    if !self.eat(&Tok::Comma) {
                        break;
                    }
                }
                self.expect(&Tok::RParen)?;
            }
            let body = self.stmt_block()?;
            return Ok(Stmt { kind: StmtKind::Rec { tvar, vars, body }, span });
        }
        if self.at_keyword("continue") {
            self.keyword("continue")?;
            let tvar = self.ident()?;
            let mut args = Vec::new();
            if self.eat(&Tok::LBracket) {
                loop {
                    let v = self.ident()?;
                    self.expect(&Tok::Assign)?;
                    args.push((v, self.expr()?));
                    if !self.eat(&Tok::Comma) {
                        break;
                    }
                }
                self.expect(&Tok::RBracket)?;
            }
            self.expect(&Tok::Semi)?;
            return Ok(Stmt { kind: StmtKind::Continue { tvar, args }, span });
        }
        // Message: LABEL '(' ... ')' from A to B ';'
        let label = self.ident()?;
        let (var, ty) = self.payload(&BTreeSet::new())?;
        self.keyword("from")?;
        let from = self.ident()?;
        self.keyword("to")?;
        let to = self.ident()?;
        self.expect(&Tok::Semi)?;
        Ok(Stmt { kind: StmtKind::Message { label, var, ty, from, to }, span })
    }

    fn protocol_header(&mut self) -> PResult<(String, Vec<Role>)> {
        self.keyword("global")?;
        self.keyword("protocol")?;
        let name = self.ident()?;
        let roles = self.role_list()?;
        Ok((name, roles))
    }

    fn aux_protocol(&mut self) -> PResult<AuxProtocol> {
        let span = self.span();
        self.keyword("aux")?;
        let (name, roles) = self.protocol_header()?;
        self.expect(&Tok::At)?;
        let state_role = self.ident()?;
        self.expect(&Tok::LBracket)?;
        let mut state_vars = Vec::new();
        loop {
            let v = self.ident()?;
            self.expect(&Tok::Colon)?;
            let ty = self.refinement_for(&v)?;
            state_vars.push((v, ty));
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        self.expect(&Tok::RBracket)?;
        let body = self.stmt_block()?;
        Ok(AuxProtocol { name, roles, state_role, state_vars, body, span })
    }

    // ---- core global types -----------------------------------------------

    fn core_global(&mut self) -> PResult<GlobalType> {
        if self.at_keyword("end") {
            self.keyword("end")?;
            return Ok(GlobalType::End);
        }
        if self.at_keyword("rec") {
            self.keyword("rec")?;
            let tvar = self.ident()?;
            self.expect(&Tok::LParen)?;
            let v = self.ident()?;
            self.expect(&Tok::Colon)?;
            let ty = self.refinement_for(&v)?;
            self.expect(&Tok::Assign)?;
            let init = self.expr()?;
            self.expect(&Tok::RParen)?;
            self.expect(&Tok::Dot)?;
            let body = self.core_global()?;
            return Ok(GlobalType::Rec { tvar, ty, init, body: Box::new(body) });
        }
        let name = self.ident()?;
        if self.eat(&Tok::LBracket) {
            // TVar jump: t[x := e]
            let var = self.ident()?;
            self.expect(&Tok::Assign)?;
            let assign = self.expr()?;
            self.expect(&Tok::RBracket)?;
            return Ok(GlobalType::TVar { tvar: name, var, assign });
        }
        self.expect(&Tok::Arrow)?;
        let to = self.ident()?;
        let branches = if self.peek() == Some(&Tok::LBrace) {
            self.expect(&Tok::LBrace)?;
            let mut bs = Vec::new();
            loop {
                bs.push(self.core_gbranch()?);
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
            self.expect(&Tok::RBrace)?;
            bs
        } else {
            vec![self.core_gbranch()?]
        };
        Ok(GlobalType::Message { from: name, to, branches })
    }

    fn core_gbranch(&mut self) -> PResult<GBranch> {
        let label = self.ident()?;
        let (var, ty) = self.payload(&BTreeSet::new())?;
        self.expect(&Tok::Dot)?;
        let cont = self.core_global()?;
        let var = var.unwrap_or_else(|| ty.binder.clone());
        Ok(GBranch { label, var, ty, cont })
    }

    // ---- core local types ------------------------------------------------

    fn core_local(&mut self) -> PResult<LocalType> {
        if self.at_keyword("end") {
            self.keyword("end")?;
            return Ok(LocalType::End);
        }
        if self.at_keyword("rec") {
            self.keyword("rec")?;
            let tvar = self.ident()?;
            self.expect(&Tok::LParen)?;
            let mult = if self.at_keyword("erased") {
                self.keyword("erased")?;
                Multiplicity::Zero
            } else {
                Multiplicity::Omega
            };
            let v = self.ident()?;
            self.expect(&Tok::Colon)?;
            let ty = self.refinement_for(&v)?;
            self.expect(&Tok::Assign)?;
            let init = self.expr()?;
            self.expect(&Tok::RParen)?;
            self.expect(&Tok::Dot)?;
            let body = self.core_local()?;
            return Ok(LocalType::Rec { tvar, ty, init, mult, body: Box::new(body) });
        }
        if self.eat(&Tok::Lt) {
            // Silent prefix <label>(x: T). L
            let label = self.ident()?;
            self.expect(&Tok::Gt)?;
            let (var, ty) = self.payload(&BTreeSet::new())?;
            self.expect(&Tok::Dot)?;
            let cont = self.core_local()?;
            let var = var.unwrap_or_else(|| ty.binder.clone());
            return Ok(LocalType::Silent { label, var, ty, cont: Box::new(cont) });
        }
        let name = self.ident()?;
        if self.eat(&Tok::LBracket) {
            let var = self.ident()?;
            self.expect(&Tok::Assign)?;
            let assign = self.expr()?;
            self.expect(&Tok::RBracket)?;
            return Ok(LocalType::TVar { tvar: name, var, assign });
        }
        let send = if self.eat(&Tok::Bang) {
            true
        } else if self.eat(&Tok::Question) {
            false
        } else {
            return Err(self.err(format!(
                "expected `!`, `?` or `[` after `{name}`, found {}",
                self.found_describe()
            )));
        };
        let branches = if self.peek() == Some(&Tok::LBrace) {
            self.expect(&Tok::LBrace)?;
            let mut bs = Vec::new();
            loop {
                bs.push(self.core_lbranch()?);
                if !self.eat(&Tok::Comma) {
                    break;
                }
            }
            self.expect(&Tok::RBrace)?;
            bs
        } else {
            vec![self.core_lbranch()?]
        };
        Ok(if send {
            LocalType::Send { to: name, branches }
        } else {
            LocalType::Recv { from: name, branches }
        })
    }

    fn core_lbranch(&mut self) -> PResult<LBranch> {
        let label = self.ident()?;
        let (var, ty) = self.payload(&BTreeSet::new())?;
        self.expect(&Tok::Dot)?;
        let cont = self.core_local()?;
        let var = var.unwrap_or_else(|| ty.binder.clone());
        Ok(LBranch { label, var, ty, cont })
    }
}

/// Check that every role mentioned in `stmts` is in `declared`, recording a
/// diagnostic for each unknown role.
fn check_roles(stmts: &[Stmt], declared: &BTreeSet<Role>, errs: &mut Vec<Diagnostic>) {
    for s in stmts {
        match &s.kind {
            StmtKind::Message { from, to, .. } => {
                for r in [from, to] {
                    if !declared.contains(r) {
                        errs.push(Diagnostic::error(format!("unknown role `{r}`"), s.span));
                    }
                }
            }
            StmtKind::Choice { at, blocks } => {
                if !declared.contains(at) {
                    errs.push(Diagnostic::error(format!("unknown role `{at}`"), s.span));
                }
                for b in blocks {
                    check_roles(b, declared, errs);
                }
            }
            StmtKind::Do { state_role, .. } => {
                if !declared.contains(state_role) {
                    errs.push(Diagnostic::error(
                        format!("unknown role `{state_role}`"),
                        s.span,
                    ));
                }
            }
            StmtKind::Rec { body, .. } => check_roles(body, declared, errs),
            StmtKind::Continue { .. } => {}
        }
    }
}

/// Statements after which control cannot resume within the same block.
fn check_tail_position(stmts: &[Stmt], errs: &mut Vec<Diagnostic>) {
    for (i, s) in stmts.iter().enumerate() {
        match &s.kind {
            StmtKind::Do { .. } | StmtKind::Continue { .. } => {
                if i + 1 < stmts.len() {
                    errs.push(Diagnostic::error(
                        "unreachable statement after `do`/`continue`",
                        stmts[i + 1].span,
                    ));
                }
            }
            StmtKind::Choice { blocks, .. } => {
                for b in blocks {
                    check_tail_position(b, errs);
                }
            }
            StmtKind::Rec { body, .. } => check_tail_position(body, errs),
            _ => {}
        }
    }
}

/// Parse a protocol source text. Accepts the surface language (`global
/// protocol ...`, optionally with `aux` sub-protocols) and, as a fallback, a
/// global type written directly in core syntax.
pub fn parse_protocol(text: &str) -> Result<ProtocolDecl, Vec<Diagnostic>> {
    let toks = lex(text)?;
    let mut p = P::new(toks);
    let surface = p.at_keyword("global") || p.at_keyword("aux");
    if !surface {
        let g = p.core_global().map_err(|d| vec![d])?;
        if !p.at_end() {
            return Err(vec![p.err(format!(
                "unexpected {} after global type",
                p.found_describe()
            ))]);
        }
        let roles = g.participants().into_iter().collect();
        return Ok(ProtocolDecl {
            name: "Protocol".into(),
            roles,
            aux_protocols: Vec::new(),
            body: Vec::new(),
            core: Some(g),
        });
    }

    let mut aux_protocols = Vec::new();
    let mut main: Option<(String, Vec<Role>, Vec<Stmt>)> = None;
    let mut errs = Vec::new();
    while !p.at_end() {
        if p.at_keyword("aux") {
            match p.aux_protocol() {
                Ok(a) => aux_protocols.push(a),
                Err(d) => return Err(vec![d]),
            }
        } else if p.at_keyword("global") {
            let r: PResult<(String, Vec<Role>, Vec<Stmt>)> = (|| {
                let (name, roles) = p.protocol_header()?;
                let body = p.stmt_block()?;
                Ok((name, roles, body))
            })();
            match r {
                Ok(m) => {
                    if main.is_some() {
                        errs.push(p.err("multiple `global protocol` declarations"));
                    }
                    main = Some(m);
                }
                Err(d) => return Err(vec![d]),
            }
        } else {
            return Err(vec![p.err(format!(
                "expected `global protocol` or `aux global protocol`, found {}",
                p.found_describe()
            ))]);
        }
    }
    let Some((name, roles, body)) = main else {
        errs.push(Diagnostic::error("no `global protocol` declaration", Span::start()));
        return Err(errs);
    };

    let declared: BTreeSet<Role> = roles.iter().cloned().collect();
    check_roles(&body, &declared, &mut errs);
    check_tail_position(&body, &mut errs);
    for a in &aux_protocols {
        let aux_declared: BTreeSet<Role> = a.roles.iter().cloned().collect();
        check_roles(&a.body, &aux_declared, &mut errs);
        check_tail_position(&a.body, &mut errs);
        if !aux_declared.contains(&a.state_role) {
            errs.push(Diagnostic::error(
                format!("unknown role `{}` in state annotation", a.state_role),
                a.span,
            ));
        }
        for r in &a.roles {
            if !declared.contains(r) {
                errs.push(Diagnostic::error(
                    format!("aux protocol `{}` declares role `{r}` not in the main protocol", a.name),
                    a.span,
                ));
            }
        }
    }
    // `do` targets must name a declared aux protocol with matching arity.
    fn check_dos(stmts: &[Stmt], aux: &[AuxProtocol], errs: &mut Vec<Diagnostic>) {
        for s in stmts {
            match &s.kind {
                StmtKind::Do { name, args, .. } => match aux.iter().find(|a| &a.name == name) {
                    None => errs.push(Diagnostic::error(
                        format!("unknown aux protocol `{name}`"),
                        s.span,
                    )),
                    Some(a) if a.state_vars.len() != args.len() => errs.push(Diagnostic::error(
                        format!(
                            "aux protocol `{name}` takes {} state argument(s), {} given",
                            a.state_vars.len(),
                            args.len()
                        ),
                        s.span,
                    )),
                    Some(_) => {}
                },
                StmtKind::Choice { blocks, .. } => {
                    for b in blocks {
                        check_dos(b, aux, errs);
                    }
                }
                StmtKind::Rec { body, .. } => check_dos(body, aux, errs),
                _ => {}
            }
        }
    }
    check_dos(&body, &aux_protocols, &mut errs);
    for a in &aux_protocols {
        check_dos(&a.body, &aux_protocols, &mut errs);
    }

    if errs.is_empty() {
        Ok(ProtocolDecl { name, roles, aux_protocols, body, core: None })
    } else {
        Err(errs)
    }
}

/// Parse a global type in core syntax.
pub fn parse_global_type(text: &str) -> Result<GlobalType, Vec<Diagnostic>> {
    let toks = lex(text)?;
    let mut p = P::new(toks);
    let g = p.core_global().map_err(|d| vec![d])?;
    if !p.at_end() {
        return Err(vec![p.err(format!("unexpected {} after global type", p.found_describe()))]);
    }
    Ok(g)
}

/// Parse a local type in core syntax.
pub fn parse_local_type(text: &str) -> Result<LocalType, Vec<Diagnostic>> {
    let toks = lex(text)?;
    let mut p = P::new(toks);
    let l = p.core_local().map_err(|d| vec![d])?;
    if !p.at_end() {
        return Err(vec![p.err(format!("unexpected {} after local type", p.found_describe()))]);
    }
    Ok(l)
}

/// Parse an expression in core syntax.
pub fn parse_expression(text: &str) -> Result<Expression, Vec<Diagnostic>> {
    let toks = lex(text)?;
    let mut p = P::new(toks);
    let e = p.expr().map_err(|d| vec![d])?;
    if !p.at_end() {
        return Err(vec![p.err(format!("unexpected {} after expression", p.found_describe()))]);
    }
    Ok(e)
}

//! Tokenizer shared by the surface-language and core-syntax parsers.
//!
//! Whitespace-insensitive; `//` starts a comment to end of line. Multi-byte
//! operators are matched longest-first so `:=`, `==>` and `<=` never split.

use super::Diagnostic;

/// A source position (1-based line and column).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl Span {
    pub fn start() -> Self {
        Span { line: 1, col: 1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    Str(String),
    LParen,
    RParen,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Comma,
    Semi,
    Colon,
    Dot,
    At,
    Arrow,  // ->
    Assign, // :=
    Imp,    // ==>
    Eq,     // = or ==
    Ne,     // !=
    Le,     // <=
    Ge,     // >=
    Lt,     // <
    Gt,     // >
    AndAnd, // &&
    OrOr,   // ||
    Bang,   // !
    Plus,
    Minus,
    Star,
    Question, // ?
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Int(n) => format!("integer `{n}`"),
            Tok::Str(_) => "string literal".into(),
            t => format!("`{}`", t.text()),
        }
    }

    fn text(&self) -> &'static str {
        match self {
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBrace => "{",
            Tok::RBrace => "}",
            Tok::LBracket => "[",
            Tok::RBracket => "]",
            Tok::Comma => ",",
            Tok::Semi => ";",
            Tok::Colon => ":",
            Tok::Dot => ".",
            Tok::At => "@",
            Tok::Arrow => "->",
            Tok::Assign => ":=",
            Tok::Imp => "==>",
            Tok::Eq => "=",
            Tok::Ne => "!=",
            Tok::Le => "<=",
            Tok::Ge => ">=",
            Tok::Lt => "<",
            Tok::Gt => ">",
            Tok::AndAnd => "&&",
            Tok::OrOr => "||",
            Tok::Bang => "!",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::Question => "?",
            _ => "",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SpannedTok {
    pub tok: Tok,
    pub span: Span,
}

/// Tokenize the whole input, reporting every lexical error with its span.
pub fn lex(text: &str) -> Result<Vec<SpannedTok>, Vec<Diagnostic>> {
    let mut out = Vec::new();
    let mut errs = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0usize;
    let mut line = 1u32;
    let mut col = 1u32;

    macro_rules! bump {
        () => {{
            if chars[i] == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            i += 1;
        }};
    }

    while i < chars.len() {
        let c = chars[i];
        let span = Span { line, col };
        if c.is_whitespace() {
            bump!();
            continue;
        }
        if c == '/' && i + 1 < chars.len() && chars[i + 1] == '/' {
            while i < chars.len() && chars[i] != '\n' {
                bump!();
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let mut s = String::new();
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                s.push(chars[i]);
                bump!();
            }
            out.push(SpannedTok { tok: Tok::Ident(s), span });
            continue;
        }
        if c.is_ascii_digit() {
            let mut s = String::new();
            while i < chars.len() && chars[i].is_ascii_digit() {
                s.push(chars[i]);
                bump!();
            }
            match s.parse::<i64>() {
                Ok(n) => out.push(SpannedTok { tok: Tok::Int(n), span }),
                Err(_) => errs.push(Diagnostic::error(
                    format!("integer literal `{s}` out of range"),
                    span,
                )),
            }
            continue;
        }
        if c == '"' {
            bump!();
            let mut s = String::new();
            let mut closed = false;
            while i < chars.len() {
                let d = chars[i];
                if d == '"' {
                    bump!();
                    closed = true;
                    break;
                }
                if d == '\\' && i + 1 < chars.len() {
                    bump!();
                    let e = chars[i];
                    s.push(match e {
                        'n' => '\n',
                        't' => '\t',
                        other => other,
                    });
                    bump!();
                } else {
                    s.push(d);
                    bump!();
                }
            }
            if closed {
                out.push(SpannedTok { tok: Tok::Str(s), span });
            } else {
                errs.push(Diagnostic::error("unterminated string literal", span));
            }
            continue;
        }
        // Operators, longest first.
        let rest: String = chars[i..chars.len().min(i + 3)].iter().collect();
        let (tok, len) = if rest.starts_with("==>") {
            (Some(Tok::Imp), 3)
        } else if rest.starts_with(":=") {
            (Some(Tok::Assign), 2)
        } else if rest.starts_with("->") {
            (Some(Tok::Arrow), 2)
        } else if rest.starts_with("==") {
            (Some(Tok::Eq), 2)
        } else if rest.starts_with("!=") {
            (Some(Tok::Ne), 2)
        } else if rest.starts_with("<=") {
            (Some(Tok::Le), 2)
        } else if rest.starts_with(">=") {
            (Some(Tok::Ge), 2)
        } else if rest.starts_with("&&") {
            (Some(Tok::AndAnd), 2)
        } else if rest.starts_with("||") {
            (Some(Tok::OrOr), 2)
        } else {
            let t = match c {
                '(' => Some(Tok::LParen),
                ')' => Some(Tok::RParen),
                '{' => Some(Tok::LBrace),
                '}' => Some(Tok::RBrace),
                '[' => Some(Tok::LBracket),
                ']' => Some(Tok::RBracket),
                ',' => Some(Tok::Comma),
                ';' => Some(Tok::Semi),
                ':' => Some(Tok::Colon),
                '.' => Some(Tok::Dot),
                '@' => Some(Tok::At),
                '=' => Some(Tok::Eq),
                '<' => Some(Tok::Lt),
                '>' => Some(Tok::Gt),
                '!' => Some(Tok::Bang),
                '+' => Some(Tok::Plus),
                '-' => Some(Tok::Minus),
                '*' => Some(Tok::Star),
                '?' => Some(Tok::Question),
                _ => None,
            };
            (t, 1)
        };
        match tok {
            Some(t) => {
                out.push(SpannedTok { tok: t, span });
                for _ in 0..len {
                    bump!();
                }
            }
            None => {
                errs.push(Diagnostic::error(format!("unexpected character `{c}`"), span));
                bump!();
            }
        }
    }
    if errs.is_empty() {
        Ok(out)
    } else {
        Err(errs)
    }
}

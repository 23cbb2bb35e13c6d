//! Frontend for the protocol surface language and the core-type syntax.
//!
//! The surface language is a refined-Scribble dialect: `global protocol`
//! declarations with `l(x: S{E}) from A to B;` interactions, `choice at R`
//! alternatives, recursion via `rec`/`continue` or recursive `aux` protocols
//! entered with `do Name(R[e1, ...]);`. Files conventionally use the `.rscr`
//! extension. The same entry point also accepts a global type written
//! directly in core syntax (the pretty-printer's language).

mod desugar;
mod lexer;
mod parser;

pub use desugar::{desugar, DesugarError};
pub use lexer::Span;
pub use parser::{
    parse_expression, parse_global_type, parse_local_type, parse_protocol, AuxProtocol,
    ProtocolDecl, Stmt, StmtKind,
};

use crate::syntax::GlobalType;

/// Severity of a frontend diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

/// A located message about the input text.
#[derive(Debug, Clone)]
pub struct Diagnostic {
    pub severity: Severity,
    pub message: String,
    pub span: Span,
}

impl Diagnostic {
    pub fn error(message: impl Into<String>, span: Span) -> Self {
        Diagnostic { severity: Severity::Error, message: message.into(), span }
    }
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{}:{}: {sev}: {}", self.span.line, self.span.col, self.message)
    }
}

/// Parse and desugar in one step: accepts either a surface protocol or a
/// direct core global type and returns the core form.
pub fn load_global(text: &str) -> Result<GlobalType, Vec<Diagnostic>> {
    let decl = parse_protocol(text)?;
    desugar(&decl).map_err(|e| vec![e.into_diagnostic()])
}

/// The example protocol corpus, shared across the crate's test suites.
#[cfg(test)]
pub(crate) mod corpus {
    use crate::syntax::GlobalType;

    pub(crate) const HIGHERLOWER: &str =
        include_str!("../../../../protocols/higherlower.rscr");
    pub(crate) const PINGPONG1: &str =
        include_str!("../../../../protocols/pingpong1.rscr");
    pub(crate) const PINGPONG2: &str =
        include_str!("../../../../protocols/pingpong2.rscr");
    pub(crate) const PINGPONG3: &str =
        include_str!("../../../../protocols/pingpong3.rscr");
    pub(crate) const G1: &str = include_str!("../../../../protocols/g1.rscr");
    pub(crate) const G2: &str = include_str!("../../../../protocols/g2.rscr");
    pub(crate) const G3: &str = include_str!("../../../../protocols/g3.rscr");
    pub(crate) const TWOBUYER: &str = include_str!("../../../../protocols/twobuyer.rscr");
    pub(crate) const NEGOTIATION: &str =
        include_str!("../../../../protocols/negotiation.rscr");
    pub(crate) const FIBONACCI: &str =
        include_str!("../../../../protocols/fibonacci.rscr");
    pub(crate) const CALCULATOR: &str =
        include_str!("../../../../protocols/calculator.rscr");

    pub(crate) fn all() -> Vec<(&'static str, &'static str)> {
        vec![
            ("higherlower", HIGHERLOWER),
            ("pingpong1", PINGPONG1),
            ("pingpong2", PINGPONG2),
            ("pingpong3", PINGPONG3),
            ("g1", G1),
            ("g2", G2),
            ("g3", G3),
            ("twobuyer", TWOBUYER),
            ("negotiation", NEGOTIATION),
            ("fibonacci", FIBONACCI),
            ("calculator", CALCULATOR),
        ]
    }

    /// Load a corpus source into its core global type, panicking on errors —
    /// the corpus is expected to be well-formed.
    pub(crate) fn global(src: &str) -> GlobalType {
        match super::load_global(src) {
            Ok(g) => g,
            Err(ds) => panic!(
                "corpus protocol failed to load: {}",
                ds.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
            ),
        }
    }
}

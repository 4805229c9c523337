//! Text grammar: expressions, equations and problem bundles.

mod bundle;
mod expr;
mod lexer;
mod print;

use thiserror::Error;

pub use bundle::{
    parse_problem, CheckMode, NamedAnsatz, NamedBacklund, NamedNovelty, NamedOperator,
    NamedOverdetermined, NamedReduced, NamedSolution, NamedSystem, ProblemBundle, MAIN_SPACE,
};
pub use expr::{parse_equation, parse_expression, Scope};
pub use print::print_expression;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at {line}:{col}: {message}")]
    SyntaxError {
        line: usize,
        col: usize,
        message: String,
    },
    #[error("undeclared symbol `{name}` at {line}:{col}")]
    UndeclaredSymbol { name: String, line: usize, col: usize },
    #[error("duplicate name `{name}` at line {line}")]
    DuplicateName { name: String, line: usize },
    #[error("malformed section{}: {message}", .section.as_ref().map(|s| format!(" [{s}]")).unwrap_or_default())]
    MalformedSection {
        section: Option<String>,
        message: String,
    },
}

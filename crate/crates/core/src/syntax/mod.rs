//! Concrete syntax: lexer, parser, pretty-printer and the semantic checker
//! that turns a parsed [`Program`] into a [`CheckedProgram`](crate::program::CheckedProgram).

pub mod ast;
mod check;
mod lexer;
mod parser;
mod pretty;

use thiserror::Error;

pub use ast::{Pos, Program};
pub use check::resolve_and_check;
pub use parser::{parse_expr, parse_program};
pub use pretty::{print_expr, print_program};

/// Parse and semantic errors. `Display` renders `line:col: message`.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("{pos}: {msg}")]
    Parse { pos: Pos, msg: String },
    #[error("{pos}: duplicate name `{name}`")]
    DuplicateName { pos: Pos, name: String },
    #[error("{pos}: unknown identifier `{name}`")]
    UnknownIdentifier { pos: Pos, name: String },
    #[error("{pos}: cycle among derived reactives: {}", cycle.join(" -> "))]
    Cycle { pos: Pos, cycle: Vec<String> },
    #[error("{pos}: {msg}")]
    Arity { pos: Pos, msg: String },
    #[error("{pos}: type error: {msg}")]
    Type { pos: Pos, msg: String },
}

impl Error {
    pub(crate) fn parse(pos: Pos, msg: impl Into<String>) -> Error {
        Error::Parse {
            pos,
            msg: msg.into(),
        }
    }

    pub fn pos(&self) -> Pos {
        match self {
            Error::Parse { pos, .. }
            | Error::DuplicateName { pos, .. }
            | Error::UnknownIdentifier { pos, .. }
            | Error::Cycle { pos, .. }
            | Error::Arity { pos, .. }
            | Error::Type { pos, .. } => *pos,
        }
    }
}

/// Parse and check in one go.
pub fn compile(src: &str) -> Result<crate::program::CheckedProgram, Error> {
    resolve_and_check(&parse_program(src)?)
}

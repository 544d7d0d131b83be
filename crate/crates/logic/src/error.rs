use std::fmt;

use crate::ast::Pos;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ParseErrorKind {
    UnexpectedChar(char),
    Unexpected { expected: String, found: String },
    UnterminatedRule,
    NestedTerm,
    AnonymousEntity,
    IllFormedAnnotation(String),
    NegatedHead,
}

/// A syntax error at a 1-based line:column.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub kind: ParseErrorKind,
}

impl ParseError {
    pub fn new(pos: Pos, kind: ParseErrorKind) -> Self {
        ParseError { line: pos.line, col: pos.col, kind }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: ", self.line, self.col)?;
        match &self.kind {
            ParseErrorKind::UnexpectedChar(c) => write!(f, "unexpected character `{c}`"),
            ParseErrorKind::Unexpected { expected, found } => write!(f, "expected {expected}, found {found}"),
            ParseErrorKind::UnterminatedRule => f.write_str("unterminated rule: missing `.`"),
            ParseErrorKind::NestedTerm => f.write_str("nested terms are not allowed; arguments must be constants or variables"),
            ParseErrorKind::AnonymousEntity => {
                f.write_str("`*` (anonymous entity creation) is an unsupported extension")
            }
            ParseErrorKind::IllFormedAnnotation(why) => write!(f, "ill-formed annotation: {why}"),
            ParseErrorKind::NegatedHead => f.write_str("`!` on a head is only allowed in `<-` rules"),
        }
    }
}

/// A program that parses but is not a legal program.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ValidationError {
    #[error("{pos}: rule {rule}: variable {variable} is not range-restricted (it must occur in a non-negated body atom)")]
    RangeRestrictionViolation { rule: usize, pos: Pos, variable: String },
    #[error("cyclic deduction: {}", cycle.join(" -> "))]
    CyclicDeduction { cycle: Vec<String> },
    #[error("{pos}: rule {rule}: negation of `{functor}` is not stratified")]
    UnstratifiedNegation { rule: usize, pos: Pos, functor: String },
    #[error("{pos}: functor `{functor}` is declared more than once")]
    DuplicateDeclaration { pos: Pos, functor: String },
    #[error("cyclic highway definitions: {}", cycle.join(" -> "))]
    CyclicHighway { cycle: Vec<String> },
    #[error("{pos}: rule {rule}: {message}")]
    IllFormedRule { rule: usize, pos: Pos, message: String },
    #[error("{pos}: rule {rule}: pooling-exponent name `{name}` uses variable {variable}, which is not in the head")]
    BetaVariableNotInHead { rule: usize, pos: Pos, name: String, variable: String },
    #[error("parameter `{name}` is used with shapes {first:?} and {second:?}")]
    ParameterShapeConflict { name: String, first: (usize, usize), second: (usize, usize) },
}

/// Failures while maintaining a database state.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum EngineError {
    #[error("cyclic deduction: {} participates in its own proof", cycle.join(" -> "))]
    CyclicDeduction { cycle: Vec<String> },
}

/// Parse or validation failure.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ProgramError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Validation(#[from] ValidationError),
}

//! Crate-wide error type.
//!
//! Every fallible operation returns [`Result`]. Faults carry enough
//! context to be reported verbatim by the command-line frontend.

use crate::model::Value;

pub type Result<T> = std::result::Result<T, Error>;

/// A parse-time error with source position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceError {
    /// 1-based line of the offending token.
    pub line: usize,
    /// 1-based column of the offending token.
    pub column: usize,
    /// Human-readable description of the problem.
    pub message: String,
    /// The token that triggered the error, if any.
    pub token: Option<String>,
}

impl std::fmt::Display for SourceError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.column, self.message)?;
        if let Some(tok) = &self.token {
            write!(f, " (at `{tok}`)")?;
        }
        Ok(())
    }
}

/// A single anchoring violation: a predicate that does not reference any
/// attribute of a table quantified in its own scope head.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnchorViolation {
    /// Path of child-scope indices from the root scope to the scope that
    /// holds the predicate (empty = root scope).
    pub scope_path: Vec<usize>,
    /// The offending predicate, pretty-printed.
    pub predicate: String,
}

impl std::fmt::Display for AnchorViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "predicate `{}` at scope path {:?} references no table of its own scope head",
            self.predicate, self.scope_path
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(SourceError),

    #[error("unknown relation `{name}`")]
    UnknownRelation { name: String },

    #[error("relation `{relation}` has no attribute `{attr}`")]
    UnknownAttribute { relation: String, attr: String },

    #[error("relation `{relation}` expects {expected} values, got {got}")]
    Arity {
        relation: String,
        expected: usize,
        got: usize,
    },

    #[error("type fault: cannot compare {left} with {right}")]
    TypeFault { left: Value, right: Value },

    #[error("capacity fault: {needed} instances exceed the ceiling of {ceiling}")]
    Capacity { needed: u128, ceiling: u128 },

    #[error("safety fault: {detail}")]
    Safety { detail: String },

    #[error("recursion fault: IDB predicate `{idb}` depends on itself")]
    Recursion { idb: String },

    #[error("IDB predicate `{idb}` heads more than one rule")]
    MultipleRules { idb: String },

    #[error("scope fault: {detail}")]
    Scope { detail: String },

    #[error("unsupported in this mode: {detail}")]
    Unsupported { detail: String },

    #[error("anchoring fault: {} violation(s); first: {}", .0.len(), .0[0])]
    Anchoring(Vec<AnchorViolation>),

    #[error("diagram validity fault: {} violation(s); first: {}", .0.len(), .0[0])]
    Validity(Vec<crate::diagram::Violation>),

    #[error("disjunctive normal form exceeds bound: {size} disjuncts > {bound}")]
    DnfBound { size: usize, bound: usize },

    #[error("malformed diagram JSON at {path}: {detail}")]
    Json { path: String, detail: String },
}

impl From<SourceError> for Error {
    fn from(e: SourceError) -> Self {
        Error::Parse(e)
    }
}

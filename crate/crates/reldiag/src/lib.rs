//! A toolkit for relational queries in the non-disjunctive fragments of
//! SQL, tuple relational calculus (TRC), non-recursive Datalog with
//! negation, and relational algebra (RA).
//!
//! The crate parses each language, canonicalizes queries, translates
//! between the four languages, evaluates them over explicit database
//! instances, decides bounded equivalence and pattern isomorphism, and
//! round-trips queries through a validated diagram representation with
//! JSON and SVG emitters.
//!
//! Module map:
//!
//! * [`model`] — values, comparison operators, schemas, database
//!   instances, and deterministic instance enumeration.
//! * [`ast`] — abstract syntax for the four query languages plus shared
//!   occurrence bookkeeping.
//! * [`parse`] — text parsers and pretty printers.
//! * [`canon`] — anchoring checks, SQL canonicalization, and quantifier
//!   pull-up.
//! * [`translate`] — the six language-to-language translations and
//!   disjunction elimination.
//! * [`eval`] — evaluators for all four languages and the bounded
//!   equivalence oracle.
//! * [`pattern`] — query shattering, pattern isomorphism, and pattern
//!   classes.
//! * [`diagram`] — the diagram intermediate representation, validity
//!   checking, and the JSON/SVG emitters.

pub mod ast;
pub mod canon;
pub mod diagram;
pub mod error;
pub mod eval;
pub mod model;
pub mod parse;
pub mod pattern;
pub mod translate;

pub use error::{Error, Result};

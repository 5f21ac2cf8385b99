//! Abstract syntax for the four query languages.
//!
//! Each language lives in its own submodule; [`LangQuery`] wraps one query
//! of any language for the operations that are language-generic
//! (extensional table listing, shattering, evaluation dispatch).

pub mod datalog;
pub mod ra;
pub mod sql;
pub mod trc;

pub use datalog::{Atom, DatalogProgram, Literal, Rule, Term};
pub use ra::{RaColumn, RaExpr, RaPred};
pub use sql::{Scalar, SelectCols, SqlFromItem, SqlPred, SqlQuery, SqlSelect};
pub use trc::{AttrRef, Formula, OutputSpec, TrcFullQuery, TrcFullScope, TrcPred, TrcQuery, TrcScope, TrcVar};

use crate::model::Schema;

/// A column reference in SQL or RA source text: an attribute name with an
/// optional qualifier (`R.B` versus bare `B`).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ColRef {
    pub qualifier: Option<String>,
    pub attr: String,
}

impl ColRef {
    pub fn bare(attr: &str) -> ColRef {
        ColRef {
            qualifier: None,
            attr: attr.to_string(),
        }
    }

    pub fn qualified(qualifier: &str, attr: &str) -> ColRef {
        ColRef {
            qualifier: Some(qualifier.to_string()),
            attr: attr.to_string(),
        }
    }
}

impl std::fmt::Display for ColRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.qualifier {
            Some(q) => write!(f, "{}.{}", q, self.attr),
            None => f.write_str(&self.attr),
        }
    }
}

/// The four query languages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lang {
    Sql,
    Trc,
    Datalog,
    Ra,
}

impl Lang {
    pub fn name(self) -> &'static str {
        match self {
            Lang::Sql => "sql",
            Lang::Trc => "trc",
            Lang::Datalog => "datalog",
            Lang::Ra => "ra",
        }
    }

    /// Map a file extension (`sql`, `trc`, `dlg`, `ra`) to a language.
    pub fn from_extension(ext: &str) -> Option<Lang> {
        Some(match ext {
            "sql" => Lang::Sql,
            "trc" => Lang::Trc,
            "dlg" => Lang::Datalog,
            "ra" => Lang::Ra,
            _ => return None,
        })
    }
}

/// One query in any of the four languages.
#[derive(Debug, Clone, PartialEq)]
pub enum LangQuery {
    Sql(SqlQuery),
    Trc(TrcQuery),
    Datalog(DatalogProgram),
    Ra(RaExpr),
}

impl LangQuery {
    pub fn lang(&self) -> Lang {
        match self {
            LangQuery::Sql(_) => Lang::Sql,
            LangQuery::Trc(_) => Lang::Trc,
            LangQuery::Datalog(_) => Lang::Datalog,
            LangQuery::Ra(_) => Lang::Ra,
        }
    }

    /// The ordered list of extensional table occurrences: one entry per
    /// syntactic occurrence of a base relation of `schema`. Intermediate
    /// results (Datalog IDB references) are not extensional.
    ///
    /// Occurrence order follows the order of quantification:
    /// * TRC — scope heads in pre-order, variables in quantification order;
    /// * SQL — `FROM` lists in pre-order over the subquery tree;
    /// * Datalog — rules in program order, then positive and negated EDB
    ///   atoms in body position order;
    /// * RA — leaves of the operator tree from left to right.
    pub fn extensional_tables(&self, schema: &Schema) -> Vec<String> {
        match self {
            LangQuery::Sql(q) => sql::extensional_tables(q),
            LangQuery::Trc(q) => trc::extensional_tables(q),
            LangQuery::Datalog(p) => datalog::extensional_tables(p, schema),
            LangQuery::Ra(e) => ra::extensional_tables(e),
        }
    }
}

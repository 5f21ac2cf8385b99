//! SQL under set semantics with `SELECT DISTINCT`.
//!
//! The fragment admits conjunctions of simple comparisons plus `EXISTS`,
//! `IN`, and quantified (`ALL`/`ANY`) subqueries, with `NOT` only in the
//! grammar positions `NOT (P)`, `NOT EXISTS`, and `NOT IN`. `OR` is full
//! mode only. Sentences are written `SELECT NOT (P)` or
//! `SELECT [NOT] EXISTS (S)` and have no `FROM` clause of their own.

use crate::ast::ColRef;
use crate::error::{Error, Result};
use crate::model::{CompOp, Schema, Value};

/// `FROM table [[AS] alias]`. A missing alias defaults to the table name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SqlFromItem {
    pub table: String,
    pub alias: String,
}

impl SqlFromItem {
    pub fn plain(table: &str) -> SqlFromItem {
        SqlFromItem {
            table: table.to_string(),
            alias: table.to_string(),
        }
    }

    pub fn aliased(table: &str, alias: &str) -> SqlFromItem {
        SqlFromItem {
            table: table.to_string(),
            alias: alias.to_string(),
        }
    }
}

/// The select list of a subquery: `*` or explicit columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SelectCols {
    Star,
    Cols(Vec<ColRef>),
}

/// A scalar operand: a column or a constant.
#[derive(Debug, Clone, PartialEq)]
pub enum Scalar {
    Col(ColRef),
    Val(Value),
}

/// A predicate.
#[derive(Debug, Clone, PartialEq)]
pub enum SqlPred {
    /// `C op C` or `C op constant`.
    Cmp {
        left: ColRef,
        op: CompOp,
        right: Scalar,
    },
    /// `NOT ( P )` — the parenthesized body may be a conjunction.
    Not(Box<SqlPred>),
    /// An explicit conjunction (arises inside `NOT (...)` groups).
    And(Vec<SqlPred>),
    /// Disjunction — full mode only.
    Or(Vec<SqlPred>),
    /// `[NOT] EXISTS ( S )`.
    Exists { negated: bool, sub: Box<SqlSelect> },
    /// `C [NOT] IN ( S )` or the row-value form `(C, C) [NOT] IN ( S )`.
    In {
        negated: bool,
        cols: Vec<ColRef>,
        sub: Box<SqlSelect>,
    },
    /// `C op ALL ( S )` or `C op ANY ( S )`.
    Quant {
        left: ColRef,
        op: CompOp,
        all: bool,
        sub: Box<SqlSelect>,
    },
}

/// A select block: the shared body of queries and subqueries.
#[derive(Debug, Clone, PartialEq)]
pub struct SqlSelect {
    pub cols: SelectCols,
    pub from: Vec<SqlFromItem>,
    /// The `WHERE` clause as a conjunction; empty = no `WHERE`.
    pub preds: Vec<SqlPred>,
}

/// A query or sentence.
#[derive(Debug, Clone, PartialEq)]
pub enum SqlQuery {
    /// `SELECT DISTINCT cols FROM ... [WHERE ...]`.
    Select(SqlSelect),
    /// `SELECT NOT ( P )` — a sentence.
    SentenceNot(Box<SqlPred>),
    /// `SELECT [NOT] EXISTS ( S )` — a sentence.
    SentenceExists { negated: bool, sub: Box<SqlSelect> },
}

/// A full-mode query: one or more cells joined by `UNION`.
#[derive(Debug, Clone, PartialEq)]
pub struct SqlUnion {
    pub cells: Vec<SqlQuery>,
}

/// Extensional table occurrences: `FROM` lists in pre-order over the
/// subquery tree, predicates visited in clause order.
pub fn extensional_tables(q: &SqlQuery) -> Vec<String> {
    let mut out = Vec::new();
    match q {
        SqlQuery::Select(s) => collect_select(s, &mut out),
        SqlQuery::SentenceNot(p) => collect_pred(p, &mut out),
        SqlQuery::SentenceExists { sub, .. } => collect_select(sub, &mut out),
    }
    out
}

fn collect_select(s: &SqlSelect, out: &mut Vec<String>) {
    for f in &s.from {
        out.push(f.table.clone());
    }
    for p in &s.preds {
        collect_pred(p, out);
    }
}

fn collect_pred(p: &SqlPred, out: &mut Vec<String>) {
    match p {
        SqlPred::Cmp { .. } => {}
        SqlPred::Not(inner) => collect_pred(inner, out),
        SqlPred::And(ps) | SqlPred::Or(ps) => {
            for p in ps {
                collect_pred(p, out);
            }
        }
        SqlPred::Exists { sub, .. } | SqlPred::In { sub, .. } | SqlPred::Quant { sub, .. } => {
            collect_select(sub, out)
        }
    }
}

/// Does any predicate contain `OR` (full mode only)?
pub fn contains_or(q: &SqlQuery) -> bool {
    fn pred(p: &SqlPred) -> bool {
        match p {
            SqlPred::Or(_) => true,
            SqlPred::Cmp { .. } => false,
            SqlPred::Not(inner) => pred(inner),
            SqlPred::And(ps) => ps.iter().any(pred),
            SqlPred::Exists { sub, .. } | SqlPred::In { sub, .. } | SqlPred::Quant { sub, .. } => select(sub),
        }
    }
    fn select(s: &SqlSelect) -> bool {
        s.preds.iter().any(pred)
    }
    match q {
        SqlQuery::Select(s) => select(s),
        SqlQuery::SentenceNot(p) => pred(p),
        SqlQuery::SentenceExists { sub, .. } => select(sub),
    }
}

/// Resolve a column reference against a stack of visible `FROM` lists
/// (outermost first, innermost last), returning the table entry it refers
/// to. A qualified reference must name a visible alias; a bare attribute
/// resolves against the innermost `FROM` list declaring it, and must be
/// unambiguous there.
pub fn resolve_column<'a>(
    stack: &[&'a [SqlFromItem]],
    schema: &Schema,
    r: &ColRef,
) -> Result<&'a SqlFromItem> {
    match &r.qualifier {
        Some(q) => {
            for level in stack.iter().rev() {
                if let Some(item) = level.iter().find(|i| &i.alias == q) {
                    schema.attr_index(&item.table, &r.attr)?;
                    return Ok(item);
                }
            }
            Err(Error::Scope {
                detail: format!("unknown table alias `{q}`"),
            })
        }
        None => {
            for level in stack.iter().rev() {
                let matches: Vec<&SqlFromItem> = level
                    .iter()
                    .filter(|i| {
                        schema
                            .attrs(&i.table)
                            .is_ok_and(|attrs| attrs.iter().any(|a| a == &r.attr))
                    })
                    .collect();
                match matches.len() {
                    0 => continue,
                    1 => return Ok(matches[0]),
                    _ => {
                        return Err(Error::Scope {
                            detail: format!("column `{}` is ambiguous here", r.attr),
                        })
                    }
                }
            }
            Err(Error::Scope {
                detail: format!("column `{}` does not resolve to any visible table", r.attr),
            })
        }
    }
}

/// Number of output columns of a select block.
pub fn select_arity(s: &SqlSelect, schema: &Schema) -> Result<usize> {
    match &s.cols {
        SelectCols::Star => {
            let mut n = 0;
            for item in &s.from {
                n += schema.arity(&item.table)?;
            }
            Ok(n)
        }
        SelectCols::Cols(cols) => Ok(cols.len()),
    }
}

/// Check static semantics against a schema: tables exist, aliases are
/// unique and never shadow an enclosing alias, every column reference
/// resolves, `IN` arities match, `ALL`/`ANY` subqueries produce exactly
/// one column, and the main query's output column names are distinct.
pub fn validate(q: &SqlQuery, schema: &Schema) -> Result<()> {
    let mut stack: Vec<&[SqlFromItem]> = Vec::new();
    match q {
        SqlQuery::Select(s) => {
            if let SelectCols::Cols(cols) = &s.cols {
                for (i, c) in cols.iter().enumerate() {
                    if cols[..i].iter().any(|d| d.attr == c.attr) {
                        return Err(Error::Scope {
                            detail: format!(
                                "output column `{}` appears twice; output attribute names must be distinct",
                                c.attr
                            ),
                        });
                    }
                }
            }
            check_select(s, schema, &mut stack)
        }
        SqlQuery::SentenceNot(p) => check_pred(p, schema, &mut stack),
        SqlQuery::SentenceExists { sub, .. } => check_select(sub, schema, &mut stack),
    }
}

fn check_select<'a>(
    s: &'a SqlSelect,
    schema: &Schema,
    stack: &mut Vec<&'a [SqlFromItem]>,
) -> Result<()> {
    if s.from.is_empty() {
        return Err(Error::Scope {
            detail: "FROM must list at least one table".into(),
        });
    }
    for (i, item) in s.from.iter().enumerate() {
        if !schema.contains(&item.table) {
            return Err(Error::UnknownRelation {
                name: item.table.clone(),
            });
        }
        if s.from[..i].iter().any(|o| o.alias == item.alias) {
            return Err(Error::Scope {
                detail: format!("alias `{}` declared twice in one FROM", item.alias),
            });
        }
        if stack.iter().any(|lvl| lvl.iter().any(|o| o.alias == item.alias)) {
            return Err(Error::Scope {
                detail: format!("alias `{}` shadows an enclosing alias", item.alias),
            });
        }
    }
    stack.push(&s.from);
    let result = (|| {
        if let SelectCols::Cols(cols) = &s.cols {
            for c in cols {
                resolve_column(stack, schema, c)?;
            }
        }
        for p in &s.preds {
            check_pred(p, schema, stack)?;
        }
        Ok(())
    })();
    stack.pop();
    result
}

fn check_pred<'a>(p: &'a SqlPred, schema: &Schema, stack: &mut Vec<&'a [SqlFromItem]>) -> Result<()> {
    match p {
        SqlPred::Cmp { left, right, .. } => {
            resolve_column(stack, schema, left)?;
            if let Scalar::Col(c) = right {
                resolve_column(stack, schema, c)?;
            }
            Ok(())
        }
        SqlPred::Not(inner) => check_pred(inner, schema, stack),
        SqlPred::And(ps) | SqlPred::Or(ps) => {
            for p in ps {
                check_pred(p, schema, stack)?;
            }
            Ok(())
        }
        SqlPred::Exists { sub, .. } => check_select(sub, schema, stack),
        SqlPred::In { cols, sub, .. } => {
            for c in cols {
                resolve_column(stack, schema, c)?;
            }
            check_select(sub, schema, stack)?;
            let sub_arity = select_arity(sub, schema)?;
            if cols.len() != sub_arity {
                return Err(Error::Scope {
                    detail: format!(
                        "IN compares {} column(s) with a subquery producing {}",
                        cols.len(),
                        sub_arity
                    ),
                });
            }
            Ok(())
        }
        SqlPred::Quant { left, sub, .. } => {
            resolve_column(stack, schema, left)?;
            check_select(sub, schema, stack)?;
            if select_arity(sub, schema)? != 1 {
                return Err(Error::Scope {
                    detail: "ALL/ANY subquery must produce exactly one column".into(),
                });
            }
            Ok(())
        }
    }
}
